"""Free-space Hartree potential by zero-padded fast convolution.

3D mode uses the spherically truncated Coulomb kernel in reciprocal space:
the kernel 1/r cut off at R_c has the analytic transform
4*pi*(1 - cos(G*R_c))/G^2, and with R_c at least the box diagonal plus
padding of R_c per axis the circular convolution reproduces open boundary
conditions exactly. Accuracy is then limited only by how well the grid
resolves the density (spectral in the density smoothness).

In soft-coulomb-1d mode the kernel 1/sqrt(x^2 + a^2) is smooth, so a
real-space sampled kernel on the doubled axis is already accurate.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .grid import MODE_1D, GridSpec


class PoissonSolver:
    """Cached-kernel convolution solver for one grid.

    The kernel transform is computed once per instance; ``solve`` is two
    FFTs per call. Instances are immutable after construction and safe to
    share across threads for read-only use.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        if grid.mode == MODE_1D:
            self._init_1d(grid)
        else:
            self._init_3d(grid)

    def _init_1d(self, grid: GridSpec):
        axis = grid.active_axes[0]
        n, h = grid.dims[axis], grid.spacing[axis]
        M = scipy.fft.next_fast_len(2 * n)
        d = ((np.arange(M) + M // 2) % M - M // 2) * h
        kernel = 1.0 / np.sqrt(d * d + grid.soft_core ** 2)
        # Sampled-kernel convolution carries the quadrature weight.
        self._kernel_hat = scipy.fft.rfft(kernel) * grid.cell_volume
        self._padded = tuple(M if i == axis else 1 for i in range(3))
        self._axis = axis

    def _init_3d(self, grid: GridSpec):
        lengths = grid.box_lengths
        r_cut = float(np.sqrt(sum(L * L for L in lengths)))
        padded = []
        for n, h in zip(grid.dims, grid.spacing):
            padded.append(scipy.fft.next_fast_len(n + int(np.ceil(r_cut / h)) + 1))
        self._padded = tuple(padded)
        gs = []
        for M, h in zip(self._padded, grid.spacing):
            g = 2.0 * np.pi * scipy.fft.fftfreq(M, d=h)
            gs.append(g)
        gx, gy, gz = np.meshgrid(*gs, indexing="ij", sparse=True)
        gsq = gx * gx + gy * gy + gz * gz
        gnorm = np.sqrt(gsq)
        with np.errstate(divide="ignore", invalid="ignore"):
            khat = 4.0 * np.pi * (1.0 - np.cos(gnorm * r_cut)) / gsq
        khat[gsq == 0.0] = 2.0 * np.pi * r_cut ** 2
        # Real-input convolution only needs the half-spectrum.
        nz = self._padded[2]
        self._kernel_hat = khat[:, :, : nz // 2 + 1]
        self._axis = None

    def solve(self, rho: np.ndarray) -> np.ndarray:
        """V_H(r) = integral rho(r') k(r - r') dr' on the grid."""
        rho = self.grid.check_field(rho)
        if np.iscomplexobj(rho):
            rho = rho.real
        n = self.grid.dims
        work = np.zeros(self._padded)
        work[: n[0], : n[1], : n[2]] = rho
        conv = scipy.fft.irfftn(scipy.fft.rfftn(work) * self._kernel_hat,
                                s=self._padded)
        return np.ascontiguousarray(conv[: n[0], : n[1], : n[2]])

    def kernel_values(self) -> np.ndarray:
        """Real-space kernel table on the padded lattice (for direct-sum checks).

        Entry [i, j, k] is the effective kernel at displacement
        ((i, j, k) wrapped to the centered window) times one; multiplying by
        cell volume and summing against a density reproduces ``solve``.
        """
        scale = self.grid.cell_volume
        kern = scipy.fft.irfftn(self._kernel_hat, s=self._padded)
        return kern / scale

    def energy(self, rho: np.ndarray, potential: np.ndarray | None = None) -> float:
        """E_H = 1/2 integral rho V_H."""
        if potential is None:
            potential = self.solve(rho)
        return 0.5 * float(self.grid.integrate(rho * potential))


_solver_cache: dict[GridSpec, PoissonSolver] = {}


def poisson_solver(grid: GridSpec) -> PoissonSolver:
    """Memoized per-grid solver; GridSpec is hashable and frozen."""
    solver = _solver_cache.get(grid)
    if solver is None:
        solver = _solver_cache[grid] = PoissonSolver(grid)
    return solver


def hartree_potential(rho: np.ndarray, grid: GridSpec) -> np.ndarray:
    return poisson_solver(grid).solve(rho)
