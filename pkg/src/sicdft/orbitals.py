"""Occupied-orbital bookkeeping: the diagonal and localized orbital sets.

An OrbitalSet carries, per spin channel, the "diagonal" orbitals phi_i
(eigenstates of the common mean field) together with a unitary matrix u
linking them to the "localized" set

    psi_a = sum_i conj(u[i, a]) phi_i .

Both sets share the same total spin density by unitarity. All occupations
are 1; spin channels are strictly independent (no cross-spin mixing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .grid import GridSpec

SPIN_UP, SPIN_DOWN = 0, 1
SPIN_NAMES = ("up", "down")

COND_LIMIT = 1e12


class DegeneracyError(ValueError):
    """Overlap matrix numerically singular (duplicate/parallel orbitals)."""


@dataclass
class SpinOrbital:
    """One occupied orbital: spin channel plus its wave function."""
    spin: int
    psi: np.ndarray


class OrbitalSet:
    """Per-spin stacks of diagonal orbitals plus the localization transform."""

    def __init__(self, grid: GridSpec, phi: list[np.ndarray],
                 u: list[np.ndarray] | None = None):
        self.grid = grid
        self.phi = []
        for s, block in enumerate(phi):
            block = np.asarray(block)
            if block.ndim != 4 or block.shape[1:] != grid.dims:
                raise ValueError(f"spin-{SPIN_NAMES[s]} orbital block must have "
                                 f"shape (N, *dims), got {block.shape}")
            self.phi.append(block)
        if len(self.phi) != 2:
            raise ValueError("need exactly two spin channels (either may be empty)")
        if u is None:
            u = [np.eye(self.n_orb(s)) for s in (0, 1)]
        self.u = [np.asarray(m) for m in u]
        for s in (0, 1):
            if self.u[s].shape != (self.n_orb(s), self.n_orb(s)):
                raise ValueError("transform shape does not match orbital count")
        # per-spin localization step memory (see schemes.localize)
        self.loc_steps: dict[int, float] = {}

    # -- structure ----------------------------------------------------------

    def n_orb(self, spin: int) -> int:
        return self.phi[spin].shape[0]

    @property
    def n_electrons(self) -> tuple[int, int]:
        return (self.n_orb(0), self.n_orb(1))

    def copy(self) -> "OrbitalSet":
        dup = OrbitalSet(self.grid, [b.copy() for b in self.phi],
                         [m.copy() for m in self.u])
        dup.loc_steps = dict(self.loc_steps)
        return dup

    def localized(self, spin: int) -> np.ndarray:
        """psi_a = sum_i conj(u[i,a]) phi_i, stacked as (N, *dims)."""
        u = self.u[spin]
        if u.size == 0:
            return self.phi[spin]
        return np.tensordot(u.conj().T, self.phi[spin], axes=1)

    # -- densities and overlaps ---------------------------------------------

    def gram(self, spin: int) -> np.ndarray:
        block = self.phi[spin].reshape(self.n_orb(spin), -1)
        return (block.conj() @ block.T) * self.grid.cell_volume

    def density(self, which: str = "diagonal") -> tuple[np.ndarray, np.ndarray]:
        """Per-spin densities from either orbital set."""
        if which not in ("diagonal", "localized"):
            raise ValueError(f"unknown orbital set {which!r}")
        out = []
        for s in (0, 1):
            block = self.phi[s] if which == "diagonal" else self.localized(s)
            if block.shape[0] == 0:
                out.append(np.zeros(self.grid.dims))
            else:
                out.append(np.einsum("i...,i...->...", block.conj(), block).real)
        return out[0], out[1]

    def total_density(self, which: str = "diagonal") -> np.ndarray:
        up, dn = self.density(which)
        return up + dn

    # -- orthonormalization ---------------------------------------------------

    def orthonormalize(self) -> "OrbitalSet":
        """Loewdin (symmetric) orthonormalization per spin channel.

        Raises DegeneracyError when the overlap matrix condition number
        exceeds COND_LIMIT.
        """
        new_phi = []
        for s in (0, 1):
            n = self.n_orb(s)
            if n == 0:
                new_phi.append(self.phi[s])
                continue
            overlap = self.gram(s)
            evals, evecs = scipy.linalg.eigh(overlap)
            if evals[0] <= 0 or evals[-1] / evals[0] > COND_LIMIT:
                raise DegeneracyError(
                    f"singular overlap in spin-{SPIN_NAMES[s]} channel "
                    f"(eigenvalues {evals})")
            inv_sqrt = evecs @ np.diag(evals ** -0.5) @ evecs.conj().T
            new_phi.append(np.tensordot(inv_sqrt.T, self.phi[s], axes=1))
        out = OrbitalSet(self.grid, new_phi, [m.copy() for m in self.u])
        out.loc_steps = dict(self.loc_steps)
        return out

    def rotate_diagonal(self, spin: int, rotation: np.ndarray) -> None:
        """Replace phi_j <- sum_i phi_i R[i, j], keeping the localized set fixed.

        The stored transform is composed so psi_a is unchanged: with
        phi_new = R^T phi (stacked), conj(u_new) = R^H conj(u), i.e.
        u_new = R^T u.
        """
        r = np.asarray(rotation)
        self.phi[spin] = np.tensordot(r.T, self.phi[spin], axes=1)
        self.u[spin] = r.T @ self.u[spin]

    def set_transform(self, spin: int, u: np.ndarray) -> None:
        u = np.asarray(u)
        n = self.n_orb(spin)
        if u.shape != (n, n):
            raise ValueError("transform shape mismatch")
        self.u[spin] = u
