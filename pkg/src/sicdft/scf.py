"""Damped-gradient self-consistent ground-state solver.

One outer iteration is: rebuild the scheme potential, take a preconditioned
gradient step on every occupied orbital, restore orthonormality (Loewdin),
diagonalize the occupied-space Hamiltonian, and (for the two-set schemes)
re-solve the symmetry condition warm-started from the previous transform.

The gradient step is phi <- phi - eta (T + E0)^(-1) (H - <H>) phi with the
inverse applied exactly in the sine basis of the box. Energies are evaluated
with the plain LDA functional for the LDA scheme and with the SIC-corrected
functional for every other scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .external import field_potential, ionic_potential
from .grid import KineticPreconditioner
from .hartree import poisson_solver
from .orbitals import OrbitalSet
from .schemes import (MeanFieldContext, SchemeId, SchemeState, TWO_SET_SCHEMES,
                      apply_hamiltonian, build_potential, localize,
                      maximize_pair_self_energy, sic_energy, symmetry_residual)
from .systems import SystemSpec

ENERGY_WINDOW = 10  # iterations over which the energy change must stay small

# Occupied levels closer than this (Ha) count as degenerate for the purpose
# of fixing the intra-subspace basis (see _localize_degenerate_pairs).
DEGENERACY_GAP = 0.02


class SCFError(RuntimeError):
    pass


@dataclass
class SCFConfig:
    step: float = 0.4            # eta, inverse-energy units
    e0: float = 1.0              # kinetic damping shift (Ha)
    max_iter: int = 5000
    tol_variance: float = 1e-7   # per-orbital ||(1-P_occ) H phi||^2 (Ha^2)
    tol_energy: float = 1e-9     # total-energy change (Ha)
    localize_every: int = 1
    localize_tol: float = 1e-9
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if self.step <= 0 or self.e0 <= 0:
            raise ValueError("step and damping shift must be positive")
        if self.tol_variance <= 0 or self.tol_energy <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class ConvergenceReport:
    scheme: str
    iterations: int
    converged: bool
    energy: float
    parts: dict
    eigenvalues: list
    max_variance: float
    symmetry_residual: float
    final_step: float
    trace: list = field(default_factory=list)


def build_context(system: SystemSpec, efield=None) -> MeanFieldContext:
    v_ext = ionic_potential(system.ions, system.grid)
    if efield is not None and np.any(np.asarray(efield) != 0.0):
        v_ext = v_ext + field_potential(efield, system.grid)
    return MeanFieldContext(system.grid, poisson_solver(system.grid),
                            system.xc, system.ions, v_ext)


def initial_orbitals(system: SystemSpec, seed: int = 0) -> OrbitalSet:
    """Atom-centered Gaussians with a small deterministic perturbation."""
    grid = system.grid
    rng = np.random.default_rng(seed + 1_000_003)
    positions = [ion.position for ion in system.ions.ions]
    x, y, z = grid.coords()
    blocks = []
    for s, n_s in enumerate((system.n_up, system.n_dn)):
        block = np.zeros((n_s,) + grid.dims)
        for k in range(n_s):
            # spread orbitals over the ions; stagger the two spins
            p = positions[(2 * k + s) % len(positions)]
            width = 1.7
            r2 = (x - p[0]) ** 2 + (y - p[1]) ** 2 + (z - p[2]) ** 2
            block[k] = np.exp(-r2 / (2.0 * width ** 2))
            block[k] += 1e-3 * rng.standard_normal(grid.dims) * block[k]
            block[k] /= np.sqrt(np.real(grid.integrate(np.abs(block[k]) ** 2)))
        blocks.append(block)
    return OrbitalSet(grid, blocks).orthonormalize()


def scf_step(orbset: OrbitalSet, state: SchemeState, ctx: MeanFieldContext,
             precond: KineticPreconditioner, eta: float):
    """One damped-gradient sweep; returns (new_set, eigenvalues, variances).

    Eigenvalues and variances are Rayleigh data of the *input* set, evaluated
    with the input scheme state (the natural self-consistency monitors).
    """
    grid = ctx.grid
    new_blocks = []
    eigenvalues = []
    variances = []
    for s in (0, 1):
        block = orbset.phi[s]
        if block.shape[0] == 0:
            new_blocks.append(block)
            eigenvalues.append(np.zeros(0))
            variances.append(np.zeros(0))
            continue
        hphi = apply_hamiltonian(state, block, s, ctx)
        flat = block.reshape(block.shape[0], -1)
        hflat = hphi.reshape(block.shape[0], -1)
        lam = (flat.conj() @ hflat.T) * grid.cell_volume  # <phi_i|H|phi_j>
        eps = np.real(np.diag(lam))
        # Residual and convergence monitor: the part of H phi outside the
        # occupied span. Intra-span components are excluded on purpose --
        # they are handled exactly by the subspace rotation, and pushing
        # them through the (span-non-invariant) preconditioner reinjects
        # out-of-span noise at the level of the intra-span coupling, which
        # floors the convergence for orbitals localized inside a
        # (near-)degenerate subspace (separated fragments).
        sub = (hflat - lam.T @ flat).reshape(block.shape)
        var = np.real(np.einsum("if,if->i",
                                sub.reshape(block.shape[0], -1).conj(),
                                sub.reshape(block.shape[0], -1))) * grid.cell_volume
        new_blocks.append(block - eta * precond.apply(sub))
        eigenvalues.append(eps)
        variances.append(var)
    new_set = OrbitalSet(grid, new_blocks, [m.copy() for m in orbset.u])
    new_set.loc_steps = dict(orbset.loc_steps)
    return new_set.orthonormalize(), eigenvalues, variances


def _localize_degenerate_pairs(orbset: OrbitalSet, eigenvalues, ctx,
                               gap_tol: float = DEGENERACY_GAP) -> bool:
    """Pick the self-repulsion-maximizing basis inside degenerate subspaces.

    The eigenbasis of a (near-)degenerate occupied subspace is arbitrary up
    to rotations, but a potential built from the diagonal orbital densities
    is not: for well-separated fragments the delocalized even/odd
    combinations smear every orbital density over all fragments and halve
    the local self-interaction correction, while the localized combinations
    reproduce the isolated-fragment potentials. This resolves the ambiguity
    toward the localized choice by Jacobi-rotating each nearly degenerate
    occupied pair to the maximum of its summed orbital self-energy; applied
    together with the endgame rotation protection the choice then sticks.
    Pairs split by more than ``gap_tol`` are left in the eigenbasis.
    Returns True when any pair was rotated.
    """
    moved = False
    for s in (0, 1):
        n = orbset.n_orb(s)
        if n < 2:
            continue
        eps = np.asarray(eigenvalues[s])
        for _ in range(4):  # Jacobi sweeps; clusters here are tiny
            hit_any = False
            for a in range(n):
                for b in range(a + 1, n):
                    if abs(eps[a] - eps[b]) >= gap_tol:
                        continue
                    hit = maximize_pair_self_energy(orbset.phi[s][a],
                                                    orbset.phi[s][b], ctx)
                    if hit is None:
                        continue
                    theta = hit[0]
                    c, si = np.cos(theta), np.sin(theta)
                    r = np.eye(n)
                    r[a, a] = c
                    r[b, b] = c
                    r[b, a] = si
                    r[a, b] = -si
                    orbset.rotate_diagonal(s, r)
                    hit_any = moved = True
            if not hit_any:
                break
    return moved


def subspace_diagonalize(orbset: OrbitalSet, state: SchemeState,
                         ctx: MeanFieldContext, protect_localized: bool = False):
    """Rotate the diagonal set into the eigenbasis of <phi_i|H|phi_j>.

    The localized set is left invariant: the stored transform absorbs the
    inverse rotation. Returns the per-spin eigenvalue arrays.

    With ``protect_localized`` a rotation is applied only when it is a
    near-identity refinement (every eigenvector dominated by one orbital,
    weight >= 0.999); otherwise the orbitals are kept and the sorted
    Rayleigh quotients are reported. Orbitals that have localized onto
    separated fragments stay coupled by a tunneling matrix element
    comparable to their eigenvalue splitting, so the eigenbasis mixes them
    ~50/50 every pass; rotating trades localized densities for delocalized
    ones, changes every orbital-density-dependent potential and locks the
    SCF into a limit cycle (a looser cutoff merely parks the cycle at the
    cutoff angle). The flag is raised only in the convergence endgame,
    when any rotation a well-separated spectrum still needs is
    near-identity anyway.
    """
    eigenvalues = []
    for s in (0, 1):
        block = orbset.phi[s]
        n = block.shape[0]
        if n == 0:
            eigenvalues.append(np.zeros(0))
            continue
        hphi = apply_hamiltonian(state, block, s, ctx)
        lam = (block.reshape(n, -1).conj()
               @ hphi.reshape(n, -1).T) * ctx.grid.cell_volume
        lam = 0.5 * (lam + lam.conj().T)
        evals, evecs = np.linalg.eigh(lam)
        if protect_localized:
            weights = np.max(np.abs(evecs), axis=0)
            cols = np.argmax(np.abs(evecs), axis=0)
            if weights.min() < 0.999 or len(set(cols.tolist())) != n:
                eigenvalues.append(np.sort(np.real(np.diag(lam))))
                continue
        orbset.rotate_diagonal(s, evecs)
        eigenvalues.append(evals)
    return eigenvalues


def solve_ground_state(system: SystemSpec, scheme: SchemeId, cfg: SCFConfig,
                       efield=None, warm_start: OrbitalSet | None = None):
    """Full SCF loop for one scheme; returns (OrbitalSet, SchemeState, report)."""
    scheme = SchemeId(scheme)
    ctx = build_context(system, efield)
    if warm_start is not None:
        orbset = warm_start.copy().orthonormalize()
    else:
        orbset = initial_orbitals(system, cfg.seed)
    precond = KineticPreconditioner(system.grid, cfg.e0)
    two_set = scheme in TWO_SET_SCHEMES
    include_sic = scheme is not SchemeId.LDA

    if two_set:
        localize(orbset, ctx, tol=cfg.localize_tol)

    eta = cfg.step
    energy, parts = sic_energy(orbset, ctx, include_sic)
    history = [energy]
    rises = 0
    trace = []
    eigenvalues = [np.zeros(0), np.zeros(0)]
    max_var = np.inf
    converged = False
    protected = False
    basis_pinned = False
    it = 0

    for it in range(1, cfg.max_iter + 1):
        state = build_potential(scheme, orbset, ctx)
        orbset, eig_in, variances = scf_step(orbset, state, ctx, precond, eta)
        prev_var = max_var
        max_var = max((v.max() for v in variances if v.size), default=0.0)
        protect = basis_pinned or max_var < 100.0 * cfg.tol_variance
        if protect and not protected and scheme is SchemeId.SLATER:
            # Entering the protected endgame: the potential of this scheme
            # depends on the individual diagonal densities, so fix the basis
            # of any degenerate subspace before rotations are frozen. The
            # rotation changes the potential and kicks the residual back up,
            # so once a pair has moved the protection must stay on -- an
            # unprotected pass would simply re-delocalize the pair.
            if _localize_degenerate_pairs(orbset, eig_in, ctx):
                basis_pinned = True
                protect = True
        protected = protect
        eigenvalues = subspace_diagonalize(orbset, state, ctx,
                                           protect_localized=protect)
        if two_set and (it % cfg.localize_every == 0):
            # warm-started, with the tolerance tracking the orbital residual:
            # there is no point solving the unitary to 1e-9 while the
            # orbitals are off by 1e-3. The energy is stationary in the
            # transform, so a residual r only perturbs it by O(r^2). The
            # final deep solve happens after the loop.
            tol_loc = max(cfg.localize_tol, min(1e-3, 0.03 * np.sqrt(max_var)))
            localize(orbset, ctx, tol=tol_loc, max_iter=40)
        new_energy, parts = sic_energy(orbset, ctx, include_sic)

        # step control: eta is too large only when the energy rises AND the
        # orbital variance stops falling. A rise alone is normal here: the
        # approximate-potential fixed points are not energy minima, so the
        # energy legitimately climbs back after a transient overshoot.
        scale = max(abs(new_energy), 1.0)
        rising = new_energy > history[-1] + 10.0 * cfg.tol_energy * scale
        if rising and max_var >= prev_var:
            rises += 1
            if rises >= 5:
                eta *= 0.5
                rises = 0
                if eta < 1e-4:
                    raise SCFError(
                        f"damping step underflow at iteration {it} "
                        f"(energy {new_energy}, variance {max_var})")
        else:
            rises = 0

        history.append(new_energy)
        if cfg.verbose:
            trace.append({"iteration": it, "energy": new_energy,
                          "variance": max_var})
        if len(history) > ENERGY_WINDOW and max_var < cfg.tol_variance:
            window = history[-(ENERGY_WINDOW + 1):]
            if max(window) - min(window) < cfg.tol_energy:
                converged = True
                break

    if two_set:
        loc = localize(orbset, ctx, tol=cfg.localize_tol)
        sym_res = loc.residual
    else:
        sym_res = max((np.linalg.norm(m) for m in symmetry_residual(orbset, ctx)),
                      default=0.0) if include_sic else 0.0
    state = build_potential(scheme, orbset, ctx)
    eigenvalues = subspace_diagonalize(orbset, state, ctx,
                                       protect_localized=True)
    energy, parts = sic_energy(orbset, ctx, include_sic)
    report = ConvergenceReport(
        scheme=scheme.value, iterations=it, converged=converged,
        energy=float(energy), parts={k: float(v) for k, v in parts.items()},
        eigenvalues=[e.tolist() for e in eigenvalues],
        max_variance=float(max_var), symmetry_residual=float(sym_res),
        final_step=eta, trace=trace)
    return orbset, state, report
