"""The hierarchy of self-interaction-corrected mean fields.

Six schemes share one eigenvalue problem h |phi_i> = eps_i |phi_i>:

    LDA        h_LDA[rho]
    ADSIC      h_LDA - U[rho_s / N_s]
    SLATER     h_LDA - sum_j w_j U[|phi_j|^2]          (diagonal orbitals)
    GSLAT      h_LDA - sum_a w_a U[|psi_a|^2]          (localized orbitals)
    LOC_KLI    GSLAT - (1/rho) sum_a |psi_a|^2 c_a     (orbital constants)
    EXACT_SIC  h_LDA - sum_a U[|psi_a|^2] |psi_a><psi_a|   (nonlocal)

with w_a = |psi_a|^2 / rho_s and U[n] the one-orbital (fully spin-polarized)
Hartree + xc potential. The localized set psi_a is fixed by the symmetry
condition <psi_b| U_b - U_a |psi_a> = 0, found by ascent on the
self-interaction energy over the per-spin unitary group.

Spin channels never mix; every construction below acts channel by channel.
"""

from __future__ import annotations

import enum
import hashlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .external import IonicConfiguration
from .grid import GridSpec
from .hartree import PoissonSolver
from .orbitals import OrbitalSet
from .xc import XCFunctionalSpec, xc_potential

RHO_FLOOR = 1e-12


class SchemeId(str, enum.Enum):
    LDA = "LDA"
    ADSIC = "ADSIC"
    SLATER = "SLATER"
    GSLAT = "GSLAT"
    LOC_KLI = "LOC_KLI"
    EXACT_SIC = "EXACT_SIC"


TWO_SET_SCHEMES = frozenset({SchemeId.GSLAT, SchemeId.LOC_KLI, SchemeId.EXACT_SIC})
SIC_SCHEMES = frozenset(s for s in SchemeId if s is not SchemeId.LDA)


@dataclass
class MeanFieldContext:
    """Everything scheme construction needs besides the orbitals."""
    grid: GridSpec
    poisson: PoissonSolver
    xc_spec: XCFunctionalSpec
    ions: IonicConfiguration
    v_ext: np.ndarray  # ionic + static field potential


@dataclass
class SchemeState:
    """Cached potentials of one scheme at one orbital configuration."""
    scheme: SchemeId
    v0: list[np.ndarray]                 # common local potential per spin
    kli_constants: list[np.ndarray] | None = None
    psi: list[np.ndarray] | None = None      # localized set (EXACT_SIC projector)
    u_pot: list[np.ndarray] | None = None    # U[|psi_a|^2] per spin (EXACT_SIC)


class SpinMismatchError(ValueError):
    pass


# ---------------------------------------------------------------------------
# one-orbital potentials
#
# The localization sweeps, the scheme potentials and the energy evaluation
# all need U[n] and E[n] of the same orbital densities within one SCF
# iteration; a small content-addressed memo avoids re-solving the Poisson
# equation for densities seen moments earlier.

_ORBITAL_MEMO: "OrderedDict[tuple, tuple]" = OrderedDict()
_ORBITAL_MEMO_SIZE = 64


def _orbital_terms(density: np.ndarray, ctx: MeanFieldContext) -> tuple:
    """(U[n], E[n]) of one fully polarized orbital density, memoized."""
    key = (ctx.grid.dims, ctx.grid.spacing, ctx.grid.mode, ctx.grid.soft_core,
           ctx.xc_spec.exchange, ctx.xc_spec.correlation,
           hashlib.sha1(density.tobytes()).digest())
    hit = _ORBITAL_MEMO.get(key)
    if hit is not None:
        _ORBITAL_MEMO.move_to_end(key)
        return hit
    v_h = ctx.poisson.solve(density)
    v_up, _, e_xc = xc_potential(density, np.zeros_like(density),
                                 ctx.grid, ctx.xc_spec)
    e = 0.5 * float(ctx.grid.integrate(density * v_h)) + e_xc
    entry = (v_h + v_up, e)
    _ORBITAL_MEMO[key] = entry
    if len(_ORBITAL_MEMO) > _ORBITAL_MEMO_SIZE:
        _ORBITAL_MEMO.popitem(last=False)
    return entry


def orbital_potential(density: np.ndarray, ctx: MeanFieldContext) -> np.ndarray:
    """U[n] = Hartree[n] + v_xc with n fully polarized in one spin channel."""
    return _orbital_terms(density, ctx)[0]


def orbital_energy(density: np.ndarray, ctx: MeanFieldContext) -> float:
    """E_LDA[n] (Hartree + xc) of one fully polarized orbital density."""
    return _orbital_terms(density, ctx)[1]


def orbital_potentials(block: np.ndarray, ctx: MeanFieldContext) -> np.ndarray:
    """Stacked U[|psi_a|^2] for a stacked orbital block (N, *dims)."""
    out = np.empty((block.shape[0],) + ctx.grid.dims)
    for a in range(block.shape[0]):
        out[a] = orbital_potential(np.abs(block[a]) ** 2, ctx)
    return out


# ---------------------------------------------------------------------------
# SIC energy and the symmetry condition

def sic_energy(orbset: OrbitalSet, ctx: MeanFieldContext,
               include_sic: bool = True):
    """Total energy of Eq-style SIC functional; parts broken out.

    E = E_kin + E_ion + E_LDA[rho] - sum_b E_LDA[rho_b], the last sum over
    the localized set (identical to the diagonal set when the transform is
    the identity). With include_sic=False this is the plain LDA energy.
    E_ion contains the electron-ion attraction, the static-field energy and
    the ion-ion repulsion constant.
    """
    grid = ctx.grid
    rho_up, rho_dn = orbset.density("diagonal")
    rho = rho_up + rho_dn
    e_kin = sum(grid.kinetic_energy(orbset.phi[s][i])
                for s in (0, 1) for i in range(orbset.n_orb(s)))
    e_ion = float(grid.integrate(rho * ctx.v_ext)) + ctx.ions.repulsion_energy(grid)
    e_hartree = ctx.poisson.energy(rho)
    _, _, e_xc = xc_potential(rho_up, rho_dn, grid, ctx.xc_spec)
    e_lda = e_hartree + e_xc
    e_sic = 0.0
    if include_sic:
        for s in (0, 1):
            psi = orbset.localized(s)
            for a in range(psi.shape[0]):
                e_sic -= orbital_energy(np.abs(psi[a]) ** 2, ctx)
    total = e_kin + e_ion + e_lda + e_sic
    parts = {"E_kin": e_kin, "E_ion": e_ion, "E_LDA": e_lda,
             "E_SIC_corr": e_sic}
    return total, parts


def _coupling_matrix(psi: np.ndarray, u_pots: np.ndarray,
                     grid: GridSpec) -> np.ndarray:
    """R[b, a] = <psi_b | U_a | psi_a>."""
    n = psi.shape[0]
    flat = psi.reshape(n, -1)
    upsi = (u_pots * psi).reshape(n, -1)
    return (flat.conj() @ upsi.T) * grid.cell_volume


def symmetry_residual(orbset: OrbitalSet, ctx: MeanFieldContext):
    """Per-spin matrices S[b, a] = <psi_b | U_b - U_a | psi_a>.

    S = R^H - R vanishes at the symmetry condition; for real orbitals it is
    antisymmetric by construction.
    """
    out = []
    for s in (0, 1):
        psi = orbset.localized(s)
        if psi.shape[0] == 0:
            out.append(np.zeros((0, 0)))
            continue
        r = _coupling_matrix(psi, orbital_potentials(psi, ctx), ctx.grid)
        out.append(r.conj().T - r)
    return out


@dataclass
class LocalizationResult:
    """Outcome of the symmetry-condition solve for one orbital set."""
    residual: float
    iterations: int
    converged: bool
    sic_energy: float  # sum_a E_LDA[rho_a], the quantity being maximized


def _pair_derivative(psi_a, psi_b, theta, ctx: MeanFieldContext):
    """dJ/dtheta for the planar rotation of one orbital pair.

    With psi_a' = c psi_a + s psi_b, psi_b' = -s psi_a + c psi_b the
    derivative is 2 Re(<psi_b'|U_a'|psi_a'> - <psi_a'|U_b'|psi_b'>), which
    vanishes exactly on the symmetry condition for this pair. This is an
    integral, so it stays accurate down to machine precision where the
    energy difference would drown in rounding noise.
    """
    c, s = np.cos(theta), np.sin(theta)
    pa = c * psi_a + s * psi_b
    pb = -s * psi_a + c * psi_b
    ua = orbital_potential(np.abs(pa) ** 2, ctx)
    ub = orbital_potential(np.abs(pb) ** 2, ctx)
    g = 2.0 * float(np.real(ctx.grid.inner(pb, ua * pa)
                            - ctx.grid.inner(pa, ub * pb)))
    return g, pa, pb, ua, ub


def _solve_pair_angle(psi_a, psi_b, ctx, pair_tol, cold: bool):
    """Descending zero of the pair derivative (a maximizer of J).

    Secant iteration from theta = 0; on a cold start (or when the secant
    walks off) the derivative is scanned over (-pi/2, pi/2) to bracket a
    +to- crossing first. Returns (theta, pa, pb, ua, ub) or None when the
    pair is already stationary.
    """
    g0, *state0 = _pair_derivative(psi_a, psi_b, 0.0, ctx)
    if abs(g0) <= pair_tol:
        return None
    best = (0.0, g0) + tuple(state0)

    def secant(t0, g_t0, t1, g_t1):
        for _ in range(25):
            if g_t1 == g_t0:
                return None
            t2 = t1 - g_t1 * (t1 - t0) / (g_t1 - g_t0)
            if not (-1.7 < t2 < 1.7):
                return None
            g2, *st = _pair_derivative(psi_a, psi_b, t2, ctx)
            if abs(g2) <= pair_tol:
                slope = (g_t1 - g2) / (t1 - t2) if t1 != t2 else -1.0
                if slope < 0 or abs(t1 - t2) < 1e-14:
                    return (t2,) + tuple(st)
                return None
            t0, g_t0, t1, g_t1 = t1, g_t1, t2, g2
        return None

    if not cold:
        t1 = 0.05 * np.sign(g0)
        g1, *_ = _pair_derivative(psi_a, psi_b, t1, ctx)
        hit = secant(0.0, g0, t1, g1)
        if hit is not None:
            return hit
    # bracket scan: find g going + -> - (J maximum) and bisect/secant inside
    thetas = np.linspace(-np.pi / 2 + 0.05, np.pi / 2, 13)
    gs = []
    for t in thetas:
        g, *_ = _pair_derivative(psi_a, psi_b, t, ctx)
        gs.append(g)
    for i in range(len(thetas) - 1):
        if gs[i] > 0 >= gs[i + 1]:
            lo, glo, hi, ghi = thetas[i], gs[i], thetas[i + 1], gs[i + 1]
            for _ in range(60):
                mid = hi - ghi * (hi - lo) / (ghi - glo) if ghi != glo else 0.5 * (lo + hi)
                if not (lo < mid < hi):
                    mid = 0.5 * (lo + hi)
                gm, *st = _pair_derivative(psi_a, psi_b, mid, ctx)
                if abs(gm) <= pair_tol or hi - lo < 1e-15:
                    return (mid,) + tuple(st)
                if gm > 0:
                    lo, glo = mid, gm
                else:
                    hi, ghi = mid, gm
    return None  # flat direction: leave the pair alone


def maximize_pair_self_energy(psi_a, psi_b, ctx: MeanFieldContext,
                              tol: float = 1e-9):
    """Planar rotation angle maximizing J = E[rho_a'] + E[rho_b'] for a pair.

    Unlike the Jacobi step inside ``localize`` this does not treat a
    vanishing derivative at theta = 0 as success: a symmetric delocalized
    even/odd pair sits on a stationary *saddle* there, with the maximum at
    a finite angle. J has period pi/2 in theta, so it is scanned over one
    period and the best bracket is polished with root finding on the
    analytic derivative. Returns (theta, psi_a', psi_b') or None when
    theta = 0 already is the maximum.
    """
    def j_value(pa, pb):
        return (orbital_energy(np.abs(pa) ** 2, ctx)
                + orbital_energy(np.abs(pb) ** 2, ctx))

    thetas = np.linspace(-np.pi / 4, np.pi / 4, 17)
    best = (0.0, psi_a, psi_b)
    g_best = None
    j0 = j_value(psi_a, psi_b)
    j_best = j0
    for t in thetas:
        g, pa, pb, _, _ = _pair_derivative(psi_a, psi_b, t, ctx)
        j = j_value(pa, pb)
        if j > j_best:
            best = (t, pa, pb)
            j_best = j
            g_best = g
    if j_best <= j0 + abs(j0) * 1e-13:
        return None
    # polish: walk the derivative to its descending zero around the best angle
    t1, g1 = best[0], g_best
    step = thetas[1] - thetas[0]
    lo, hi = t1 - step, t1 + step
    glo, *_ = _pair_derivative(psi_a, psi_b, lo, ctx)
    ghi, *_ = _pair_derivative(psi_a, psi_b, hi, ctx)
    if not (glo > 0 >= ghi):
        return best  # flat top; the scanned angle is good enough
    for _ in range(60):
        mid = hi - ghi * (hi - lo) / (ghi - glo) if ghi != glo else 0.5 * (lo + hi)
        if not (lo < mid < hi):
            mid = 0.5 * (lo + hi)
        gm, pa, pb, _, _ = _pair_derivative(psi_a, psi_b, mid, ctx)
        if abs(gm) <= tol or hi - lo < 1e-15:
            return (mid, pa, pb)
        if gm > 0:
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    return (mid, pa, pb)


def localize(orbset: OrbitalSet, ctx: MeanFieldContext, tol: float = 1e-8,
             max_iter: int = 500) -> LocalizationResult:
    """Find the per-spin unitary satisfying the symmetry condition.

    Jacobi sweeps of planar pair rotations: each pair angle is solved by
    root-finding on the analytic derivative of J(u) = sum_a E[|psi_a|^2],
    whose descending zeros are maxima of J. Stationarity of J over the
    unitary group is exactly the symmetry condition. Warm-starts from the
    transform stored in the set; max_iter caps the total number of pair
    solves. Non-convergence is reported, not raised.
    """
    total_res = 0.0
    total_j = 0.0
    solves = 0
    ok = True
    for s in (0, 1):
        n = orbset.n_orb(s)
        if n <= 1:
            # single orbital: any phase is stationary, residual empty
            continue
        cold = s not in orbset.loc_steps
        psi = orbset.localized(s).copy()
        pots = orbital_potentials(psi, ctx)
        u = orbset.u[s].copy()
        pair_tol = tol / (2.0 * n)
        res = np.inf
        while solves < max_iter:
            r = _coupling_matrix(psi, pots, ctx.grid)
            smat = r.conj().T - r
            res = np.linalg.norm(smat)
            if res < tol:
                break
            order = sorted(((a, b) for a in range(n) for b in range(a + 1, n)),
                           key=lambda p: -abs(smat[p[0], p[1]]))
            moved = False
            for a, b in order:
                if solves >= max_iter:
                    break
                if abs(smat[a, b]) <= pair_tol:
                    continue
                solves += 1
                hit = _solve_pair_angle(psi[a], psi[b], ctx, pair_tol, cold)
                if hit is None:
                    continue
                theta, pa, pb, ua, ub = hit
                psi[a], psi[b] = pa, pb
                pots[a], pots[b] = ua, ub
                c, si = np.cos(theta), np.sin(theta)
                w = np.eye(n)
                w[a, a] = c
                w[b, b] = c
                w[a, b] = -si
                w[b, a] = si
                u = u @ np.conj(w)
                moved = True
            cold = False
            if not moved:
                break
        orbset.set_transform(s, u)
        orbset.loc_steps[s] = 1.0  # marks this channel as warm-started
        total_res = max(total_res, res)
        total_j += sum(orbital_energy(np.abs(psi[a]) ** 2, ctx) for a in range(n))
        if res > tol:
            ok = False
    return LocalizationResult(residual=total_res, iterations=solves,
                              converged=ok, sic_energy=total_j)


# ---------------------------------------------------------------------------
# scheme potentials

def _weights(block: np.ndarray, rho_s: np.ndarray) -> np.ndarray:
    """|psi_a|^2 / rho_s with the vacuum floor on rho."""
    return np.abs(block) ** 2 / np.maximum(rho_s, RHO_FLOOR)


def _solve_kli_constants(psi: np.ndarray, rho_s: np.ndarray, w_slater: np.ndarray,
                         u_pots: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Constants c_a of the localized KLI correction.

    M c = b with M = I - overlap(|psi_a|^2, |psi_b|^2 / rho) and
    b_a = <psi_a| V_S - U_a |psi_a>. M is exactly singular (columns sum to
    zero); the minimum-norm solution fixes the gauge sum(c) = 0, which makes
    the density-weighted mean of the correction vanish.
    """
    n = psi.shape[0]
    dens = np.abs(psi) ** 2
    weights = dens / np.maximum(rho_s, RHO_FLOOR)
    m = np.eye(n) - (dens.reshape(n, -1) @ weights.reshape(n, -1).T
                     ) * grid.cell_volume
    b = np.array([
        float(np.real(grid.integrate(dens[a] * (w_slater - u_pots[a]))))
        for a in range(n)])
    # M has an exact null vector (all ones); the density floor turns it into
    # a ~1e-12 singular value that must be dropped, not divided by.  The drop
    # threshold has to be absolute: for a single orbital M itself is the near
    # null value, so a cutoff relative to the largest singular value (lstsq's
    # rcond) would keep it and amplify floor noise into a spurious constant.
    u_svd, sig, vt = np.linalg.svd(m)
    keep = sig > 1e-8
    inv = np.zeros_like(sig)
    inv[keep] = 1.0 / sig[keep]
    return vt.T @ (inv * (u_svd.T @ b))


def build_potential(scheme: SchemeId, orbset: OrbitalSet,
                    ctx: MeanFieldContext) -> SchemeState:
    """Construct the scheme's common local potential (and projector data)."""
    grid = ctx.grid
    rho_up, rho_dn = orbset.density("diagonal")
    rho_spin = (rho_up, rho_dn)
    v_h = ctx.poisson.solve(rho_up + rho_dn)
    vxc_up, vxc_dn, _ = xc_potential(rho_up, rho_dn, grid, ctx.xc_spec)
    v_lda = [v_h + vxc_up, v_h + vxc_dn]

    if scheme is SchemeId.LDA:
        return SchemeState(scheme, v_lda)

    if scheme is SchemeId.ADSIC:
        v0 = []
        for s in (0, 1):
            n_s = orbset.n_orb(s)
            if n_s == 0:
                v0.append(v_lda[s])
                continue
            v0.append(v_lda[s] - orbital_potential(rho_spin[s] / n_s, ctx))
        return SchemeState(scheme, v0)

    if scheme is SchemeId.EXACT_SIC:
        psi = [orbset.localized(s) for s in (0, 1)]
        pots = [orbital_potentials(psi[s], ctx) for s in (0, 1)]
        return SchemeState(scheme, v_lda, psi=psi, u_pot=pots)

    # the three Slater-form schemes
    which = "diagonal" if scheme is SchemeId.SLATER else "localized"
    v0 = []
    kli = []
    for s in (0, 1):
        block = orbset.phi[s] if which == "diagonal" else orbset.localized(s)
        n_s = block.shape[0]
        if n_s == 0:
            v0.append(v_lda[s])
            kli.append(np.zeros(0))
            continue
        u_pots = orbital_potentials(block, ctx)
        w_slater = np.einsum("a...,a...->...", _weights(block, rho_spin[s]), u_pots)
        v_s = v_lda[s] - w_slater
        if scheme is SchemeId.LOC_KLI:
            c = _solve_kli_constants(block, rho_spin[s], w_slater, u_pots, grid)
            kli.append(c)
            corr = np.einsum("a,a...->...", c,
                             _weights(block, rho_spin[s]))
            v_s = v_s - corr
        else:
            kli.append(np.zeros(n_s))
        v0.append(v_s)
    return SchemeState(scheme, v0,
                       kli_constants=kli if scheme is SchemeId.LOC_KLI else None)


def apply_hamiltonian(state: SchemeState, block: np.ndarray, spin: int,
                      ctx: MeanFieldContext) -> np.ndarray:
    """H acting on a stacked orbital block (N, *dims) of one spin channel.

    Kinetic + external + scheme potential; EXACT_SIC adds the nonlocal
    projector -sum_a U_a |psi_a><psi_a|.
    """
    if block.ndim == 3:
        return apply_hamiltonian(state, block[None], spin, ctx)[0]
    if spin not in (0, 1):
        raise SpinMismatchError(f"invalid spin channel {spin}")
    v_loc = ctx.v_ext + state.v0[spin]
    out = np.empty_like(block)
    for i in range(block.shape[0]):
        out[i] = -0.5 * ctx.grid.laplacian(block[i]) + v_loc * block[i]
    if state.scheme is SchemeId.EXACT_SIC and state.psi[spin].shape[0] > 0:
        psi = state.psi[spin]
        upsi = state.u_pot[spin] * psi
        # <psi_a | phi_i> for all pairs
        ov = (psi.reshape(psi.shape[0], -1).conj()
              @ block.reshape(block.shape[0], -1).T) * ctx.grid.cell_volume
        out -= np.tensordot(ov.T, upsi, axes=1)
    return out
