"""Uniform Cartesian grid, quadrature and finite-difference operators.

Everything downstream works in Hartree atomic units: lengths in bohr (a0),
energies in Ha. Fields live on the grid as plain numpy arrays with shape
``GridSpec.dims``; this module owns the geometry and the differential
operators acting on them.

Quadrature uses plain sequential cell-sum (numpy's pairwise reduction on a
fixed array layout), so results are deterministic for a fixed grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

MODE_3D = "full-3d"
MODE_1D = "soft-coulomb-1d"

# 4th-order central second-derivative stencil, in units of 1/h^2.
_LAP_C0 = -5.0 / 2.0
_LAP_C1 = 4.0 / 3.0
_LAP_C2 = -1.0 / 12.0


class GridError(ValueError):
    """Invalid grid geometry or a field/grid mismatch."""


@dataclass(frozen=True)
class GridSpec:
    """Equidistant Cartesian mesh on a finite box.

    dims     -- points per axis; axes of extent 1 are inert (1D mode).
    spacing  -- mesh size per axis in a0.
    origin   -- coordinates of the grid *center* in a0.
    mode     -- "full-3d" or "soft-coulomb-1d"; the latter keeps exactly one
                active axis and replaces 1/r by 1/sqrt(x^2 + a^2) everywhere.
    soft_core -- the softening length a of the 1D interaction kernel.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mode: str = MODE_3D
    soft_core: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if self.mode not in (MODE_3D, MODE_1D):
            raise GridError(f"unknown grid mode {self.mode!r}")
        if len(self.dims) != 3 or len(self.spacing) != 3:
            raise GridError("dims and spacing must be triples")
        if any(h <= 0 for h in self.spacing):
            raise GridError("grid spacings must be positive")
        if self.mode == MODE_3D:
            if any(n < 8 for n in self.dims):
                raise GridError("full-3d grids need at least 8 points per axis")
        else:
            inert = sum(1 for n in self.dims if n == 1)
            if inert != 2:
                raise GridError("soft-coulomb-1d grids need exactly two axes of extent 1")
            if max(self.dims) < 8:
                raise GridError("the active 1D axis needs at least 8 points")
            if self.soft_core <= 0:
                raise GridError("soft-core length must be positive")

    # -- geometry ----------------------------------------------------------

    @property
    def npoints(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        # Inert axes contribute their unit spacing, so 1D integrals come out
        # as plain line integrals times the transverse cell area.
        return float(np.prod(self.spacing))

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(i for i in range(3) if self.dims[i] > 1)

    @property
    def box_lengths(self) -> tuple[float, float, float]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        n, h = self.dims[axis], self.spacing[axis]
        return (np.arange(n) - (n - 1) / 2.0) * h + self.origin[axis]

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (sparse meshgrid)."""
        return tuple(np.meshgrid(*(self.axis_coords(i) for i in range(3)),
                                 indexing="ij", sparse=True))

    def radius_from(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        x, y, z = self.coords()
        return np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2
                       + (z - center[2]) ** 2)

    def check_field(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if values.shape != self.dims:
            raise GridError(f"field shape {values.shape} does not match grid dims {self.dims}")
        return values

    # -- quadrature and operators ------------------------------------------

    def integrate(self, values: np.ndarray) -> float | complex:
        """Cell-sum quadrature: sum(values) * cell volume."""
        values = self.check_field(values)
        return values.sum() * self.cell_volume

    def inner(self, bra: np.ndarray, ket: np.ndarray) -> float | complex:
        """<bra|ket> = integral of conj(bra) * ket."""
        return (np.conj(bra) * ket).sum() * self.cell_volume

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """4th-order central finite-difference Laplacian, zero outside the box."""
        values = self.check_field(values)
        out = np.zeros_like(values)
        for axis in self.active_axes:
            h2 = self.spacing[axis] ** 2
            padded = np.pad(values, [(2, 2) if a == axis else (0, 0)
                                     for a in range(3)])
            sl = [slice(None)] * 3

            def shifted(k, sl=sl, axis=axis, padded=padded):
                s = list(sl)
                s[axis] = slice(2 + k, 2 + k + self.dims[axis])
                return padded[tuple(s)]

            out += (_LAP_C2 * (shifted(-2) + shifted(2))
                    + _LAP_C1 * (shifted(-1) + shifted(1))
                    + _LAP_C0 * values) / h2
        return out

    def kinetic_energy(self, psi: np.ndarray) -> float:
        """-1/2 <psi|lap|psi>, real by construction for the FD stencil."""
        return float(np.real(-0.5 * self.inner(psi, self.laplacian(psi))))


class KineticPreconditioner:
    """Approximate (T + E0)^-1 in the sine basis of the zero-boundary box.

    DST-I diagonalizes functions pinned to zero one step outside the box, so
    dividing by (k^2/2 + E0) there is an exact inverse of the *continuum*
    kinetic operator with those boundary conditions -- good enough as a
    damping kernel for gradient iterations.
    """

    def __init__(self, grid: GridSpec, e0: float = 1.0):
        if e0 <= 0:
            raise ValueError("preconditioner energy shift must be positive")
        self.grid = grid
        self.e0 = e0
        ksq = np.zeros(grid.dims)
        for axis in grid.active_axes:
            n, h = grid.dims[axis], grid.spacing[axis]
            k = np.pi * np.arange(1, n + 1) / ((n + 1) * h)
            shape = [1, 1, 1]
            shape[axis] = n
            ksq = ksq + (k ** 2).reshape(shape)
        self._scale = 1.0 / (0.5 * ksq + e0)
        self._axes = grid.active_axes

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to one field or to a stacked block (N, *dims)."""
        if np.iscomplexobj(values):
            return self.apply(values.real) + 1j * self.apply(values.imag)
        offset = values.ndim - 3
        axes = tuple(a + offset for a in self._axes)
        t = scipy.fft.dstn(values, type=1, axes=axes, norm="ortho")
        t *= self._scale
        return scipy.fft.idstn(t, type=1, axes=axes, norm="ortho")


def grid_for_box(box: tuple[float, float, float], spacing: float,
                 mode: str = MODE_3D, soft_core: float = 1.0,
                 origin=(0.0, 0.0, 0.0)) -> GridSpec:
    """Grid covering a box of the given side lengths at a uniform spacing.

    Point counts are rounded up so the realized box is never smaller than
    requested. In 1D mode only the z axis is active.
    """
    if mode == MODE_1D:
        nz = int(np.ceil(box[2] / spacing)) + 1
        return GridSpec((1, 1, nz), (1.0, 1.0, spacing), origin,
                        mode=mode, soft_core=soft_core)
    dims = tuple(int(np.ceil(side / spacing)) + 1 for side in box)
    return GridSpec(dims, (spacing,) * 3, origin, mode=mode)
