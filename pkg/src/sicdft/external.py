"""Ionic pseudopotentials, static electric field, and dipole moments.

The ionic background enters through local erf-regularized pseudopotentials
V(r) = -Z erf(r/sigma)/r (+ optional short-range Gaussian), finite at the
ion site with value -2 Z/(sigma sqrt(pi)). In soft-coulomb-1d mode the
electron-ion interaction is -Z/sqrt(x^2 + a^2) with the grid's softening
length, and the pseudopotential width is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .grid import MODE_1D, GridSpec

MAX_FIELD = 1e-2  # a.u.; stronger fields tunnel through the box edge
BOX_MARGIN = 4.0  # a0 clearance required between any ion and every box face


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class PseudopotentialSpec:
    """Local erf-regularized Coulomb pseudopotential.

    sigma is the core smoothing width in a0. The optional Gaussian term
    amplitude*exp(-r^2/(2 width^2)) allows shallow-core corrections; it
    decays fast enough to keep the -Z/r asymptotics.
    """

    form: str = "erf-local"
    sigma: float = 0.4
    gauss_amplitude: float = 0.0
    gauss_width: float = 1.0

    def __post_init__(self):
        if self.form != "erf-local":
            raise ConfigurationError(f"unknown pseudopotential form {self.form!r}")
        if self.sigma <= 0 or self.gauss_width <= 0:
            raise ConfigurationError("pseudopotential widths must be positive")

    def radial(self, r: np.ndarray, z: float) -> np.ndarray:
        """V(r) for valence charge z, finite at r = 0."""
        r = np.asarray(r, dtype=float)
        small = r < 1e-12
        r_safe = np.where(small, 1.0, r)
        v = -z * erf(r_safe / self.sigma) / r_safe
        v = np.where(small, -2.0 * z / (self.sigma * np.sqrt(np.pi)), v)
        if self.gauss_amplitude != 0.0:
            v = v + self.gauss_amplitude * np.exp(-r * r / (2.0 * self.gauss_width ** 2))
        return v


@dataclass(frozen=True)
class Ion:
    position: tuple[float, float, float]
    charge: float  # valence charge Z
    pseudo: PseudopotentialSpec = PseudopotentialSpec()

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        if self.charge <= 0:
            raise ConfigurationError("ion valence charge must be positive")


@dataclass(frozen=True)
class IonicConfiguration:
    ions: tuple[Ion, ...]

    def __post_init__(self):
        object.__setattr__(self, "ions", tuple(self.ions))

    @property
    def total_charge(self) -> float:
        return sum(ion.charge for ion in self.ions)

    def check_inside(self, grid: GridSpec):
        lengths = grid.box_lengths
        for ion in self.ions:
            for axis in grid.active_axes:
                lo = grid.origin[axis] - lengths[axis] / 2.0
                hi = grid.origin[axis] + lengths[axis] / 2.0
                x = ion.position[axis]
                if x - lo < BOX_MARGIN or hi - x < BOX_MARGIN:
                    raise ConfigurationError(
                        f"ion at {ion.position} is within {BOX_MARGIN} a0 of a box face "
                        f"(axis {axis}, box [{lo:.2f}, {hi:.2f}])")

    def repulsion_energy(self, grid: GridSpec) -> float:
        """Point-charge ion-ion repulsion (soft-Coulomb in 1D mode)."""
        e = 0.0
        ions = self.ions
        for i in range(len(ions)):
            for j in range(i + 1, len(ions)):
                d = np.array(ions[i].position) - np.array(ions[j].position)
                if grid.mode == MODE_1D:
                    dz = d[grid.active_axes[0]]
                    e += ions[i].charge * ions[j].charge / np.sqrt(
                        dz * dz + grid.soft_core ** 2)
                else:
                    e += ions[i].charge * ions[j].charge / np.linalg.norm(d)
        return float(e)


def ionic_potential(ions: IonicConfiguration, grid: GridSpec) -> np.ndarray:
    """Superposition of the local pseudopotentials of all ions."""
    ions.check_inside(grid)
    v = np.zeros(grid.dims)
    for ion in ions.ions:
        if grid.mode == MODE_1D:
            axis = grid.active_axes[0]
            dz = grid.axis_coords(axis) - ion.position[axis]
            shape = [1, 1, 1]
            shape[axis] = grid.dims[axis]
            v += (-ion.charge / np.sqrt(dz ** 2 + grid.soft_core ** 2)).reshape(shape)
        else:
            r = grid.radius_from(ion.position)
            v += ion.pseudo.radial(r, ion.charge)
    return v


def field_potential(efield, grid: GridSpec) -> np.ndarray:
    """Static ramp potential +E.r acting on the electrons.

    The sign makes the dipole grow along the field, i.e. alpha > 0 with the
    convention of ``dipole_moment``.
    """
    e = np.asarray(efield, dtype=float)
    if e.shape != (3,):
        raise ConfigurationError("electric field must be a 3-vector")
    if np.linalg.norm(e) > MAX_FIELD:
        raise ConfigurationError(
            f"|E| = {np.linalg.norm(e):.3e} exceeds {MAX_FIELD}; shrink the field "
            "or enlarge the box to avoid edge-tunneling artifacts")
    v = np.zeros(grid.dims)
    if np.all(e == 0.0):
        return v
    x, y, z = grid.coords()
    return e[0] * x + e[1] * y + e[2] * z + v


def dipole_moment(rho_total: np.ndarray, ions: IonicConfiguration,
                  grid: GridSpec) -> np.ndarray:
    """mu_i = sum_a Z_a R_a,i - integral r_i rho(r) dr."""
    x, y, z = grid.coords()
    mu = np.zeros(3)
    for axis, c in enumerate((x, y, z)):
        mu[axis] = -float(np.real(grid.integrate(c * rho_total)))
    for ion in ions.ions:
        mu += ion.charge * np.asarray(ion.position)
    return mu
