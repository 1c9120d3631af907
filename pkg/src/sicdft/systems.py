"""System specifications and the built-in model geometries.

Chains lie along z; "longitudinal" means z and "transverse" means x
throughout. All builtin boxes are centered on the origin. Hydrogen uses an
erf-local pseudopotential of core width 0.4 a0; sodium uses an erf-local
stand-in whose width is tuned so the single-atom LDA eigenvalue sits near
-0.105 Ha. Neither claims to reproduce any published pseudopotential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .external import ConfigurationError, Ion, IonicConfiguration, PseudopotentialSpec
from .grid import MODE_1D, MODE_3D, GridSpec, grid_for_box
from .xc import XCFunctionalSpec

H_PSEUDO = PseudopotentialSpec(sigma=0.4)
# Width tuned against the -0.105 Ha single-atom LDA level (see test suite).
NA_SIGMA = 2.82
NA_PSEUDO = PseudopotentialSpec(sigma=NA_SIGMA)

DEFAULT_SPACING = 0.7


@dataclass(frozen=True)
class SystemSpec:
    """Ions, electron counts and discretization of one calculation."""
    ions: IonicConfiguration
    n_up: int
    n_dn: int
    grid: GridSpec
    xc: XCFunctionalSpec = field(default_factory=XCFunctionalSpec)
    name: str = ""

    def __post_init__(self):
        if self.n_up < 0 or self.n_dn < 0:
            raise ConfigurationError("electron counts must be non-negative")
        if abs(self.ions.total_charge - (self.n_up + self.n_dn)) > 1e-9:
            raise ConfigurationError(
                f"system must be neutral: total valence charge "
                f"{self.ions.total_charge} != n_up + n_dn = {self.n_up + self.n_dn}")

    @property
    def n_electrons(self) -> int:
        return self.n_up + self.n_dn


def _chain_grid(span: float, spacing: float, mode: str,
                transverse: float = 20.0) -> GridSpec:
    # Longitudinal box per the 40-52 a0 guidance, stretched for long chains.
    long = min(60.0, max(40.0, span + 24.0))
    if mode == MODE_1D:
        return grid_for_box((1.0, 1.0, long), spacing, mode=mode)
    return grid_for_box((transverse, transverse, long), spacing)


def h_atom(spacing: float = DEFAULT_SPACING, box: float = 20.0,
           mode: str = MODE_3D) -> SystemSpec:
    grid = (grid_for_box((1.0, 1.0, box), spacing, mode=mode)
            if mode == MODE_1D else grid_for_box((box,) * 3, spacing))
    ions = IonicConfiguration((Ion((0.0, 0.0, 0.0), 1.0, H_PSEUDO),))
    return SystemSpec(ions, 1, 0, grid, name="h-atom")


def h2(bond: float = 1.46, spacing: float = DEFAULT_SPACING,
       mode: str = MODE_3D, transverse: float = 20.0) -> SystemSpec:
    grid = _chain_grid(bond, spacing, mode, transverse)
    ions = IonicConfiguration((
        Ion((0.0, 0.0, -bond / 2.0), 1.0, H_PSEUDO),
        Ion((0.0, 0.0, +bond / 2.0), 1.0, H_PSEUDO)))
    return SystemSpec(ions, 1, 1, grid, name="h2")


def h_chain_positions(n: int) -> np.ndarray:
    """z coordinates of the H_n chain: bonds alternate 2 and 3 a0, recentered."""
    if n < 2 or n % 2:
        raise ConfigurationError("h-chain needs an even atom count >= 2")
    z = [0.0]
    for k in range(1, n):
        z.append(z[-1] + (2.0 if k % 2 else 3.0))
    z = np.array(z)
    return z - z.mean()


def h_chain(n: int, spacing: float = DEFAULT_SPACING, mode: str = MODE_3D,
            transverse: float = 20.0) -> SystemSpec:
    z = h_chain_positions(n)
    grid = _chain_grid(z[-1] - z[0], spacing, mode, transverse)
    ions = IonicConfiguration(tuple(
        Ion((0.0, 0.0, zi), 1.0, H_PSEUDO) for zi in z))
    return SystemSpec(ions, n // 2, n // 2, grid, name=f"h-chain({n})")


def h4_pair(distance: float, bond: float = 1.46,
            spacing: float = DEFAULT_SPACING, mode: str = MODE_3D,
            transverse: float = 20.0) -> SystemSpec:
    """Two H2 units on the z axis with centers of mass `distance` apart."""
    if distance <= bond:
        raise ConfigurationError(
            f"center-of-mass distance {distance} must exceed the bond length {bond}")
    z = np.array([-distance / 2.0 - bond / 2.0, -distance / 2.0 + bond / 2.0,
                  +distance / 2.0 - bond / 2.0, +distance / 2.0 + bond / 2.0])
    grid = _chain_grid(z[-1] - z[0], spacing, mode, transverse)
    ions = IonicConfiguration(tuple(
        Ion((0.0, 0.0, zi), 1.0, H_PSEUDO) for zi in z))
    return SystemSpec(ions, 2, 2, grid, name=f"h4-pair({distance})")


def na_atom(spacing: float = 0.8, box: float = 30.0) -> SystemSpec:
    grid = grid_for_box((box,) * 3, spacing)
    ions = IonicConfiguration((Ion((0.0, 0.0, 0.0), 1.0, NA_PSEUDO),))
    return SystemSpec(ions, 1, 0, grid, name="na-atom")


def na5(spacing: float = 0.8, box: float = 38.0) -> SystemSpec:
    """Planar Na5: a 2.9-a0 half-spacing rectangle plus an apex on the long axis.

    The geometry is a documented model stand-in (planar, C2v, triaxial), not
    a reproduction of any published cluster structure.
    """
    raw = np.array([
        (-2.9, -2.9, 0.0),
        (-2.9, +2.9, 0.0),
        (+2.9, -2.9, 0.0),
        (+2.9, +2.9, 0.0),
        (+5.8, 0.0, 0.0),
    ])
    raw -= raw.mean(axis=0)
    grid = grid_for_box((box,) * 3, spacing)
    ions = IonicConfiguration(tuple(Ion(tuple(p), 1.0, NA_PSEUDO) for p in raw))
    return SystemSpec(ions, 3, 2, grid, name="na5")
