"""LSDA exchange-correlation: Slater exchange and Perdew-Wang-92 correlation.

All routines take the two spin densities separately and return the spin
potentials v_sigma = dE_xc/drho_sigma together with the total energy. The
single-orbital potentials of the SIC machinery reuse these with the orbital
density placed in one spin channel (fully polarized evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec

_TINY = 1e-20

# -(3/4)(6/pi)^(1/3)
_CX = -0.75 * (6.0 / np.pi) ** (1.0 / 3.0)

# PW92 fit parameters: (A, alpha1, beta1, beta2, beta3, beta4) for
# ec(rs, 0), ec(rs, 1) and -alpha_c(rs).
_PW92_UNPOL = (0.031091, 0.21370, 7.5957, 3.5876, 1.6382, 0.49294)
_PW92_POL = (0.015545, 0.20548, 14.1189, 6.1977, 3.3662, 0.62517)
_PW92_ALPHA = (0.016887, 0.11125, 10.357, 3.6231, 0.88026, 0.49671)

_FZ_DEN = 2.0 ** (4.0 / 3.0) - 2.0
_FPP0 = 8.0 / (9.0 * _FZ_DEN)


class XCError(ValueError):
    pass


@dataclass(frozen=True)
class XCFunctionalSpec:
    exchange: str = "lsda-slater"
    correlation: str = "perdew-wang-92"

    def __post_init__(self):
        if self.exchange != "lsda-slater":
            raise XCError(f"unknown exchange functional {self.exchange!r}")
        if self.correlation not in ("none", "perdew-wang-92"):
            raise XCError(f"unknown correlation functional {self.correlation!r}")


def _pw92_g(rs, params):
    """PW92 interpolation function G(rs) and dG/drs."""
    a, a1, b1, b2, b3, b4 = params
    srs = np.sqrt(rs)
    q0 = -2.0 * a * (1.0 + a1 * rs)
    q1 = 2.0 * a * (b1 * srs + b2 * rs + b3 * rs * srs + b4 * rs * rs)
    q1p = a * (b1 / srs + 2.0 * b2 + 3.0 * b3 * srs + 4.0 * b4 * rs)
    log_term = np.log1p(1.0 / q1)
    g = q0 * log_term
    dg = -2.0 * a * a1 * log_term - q0 * q1p / (q1 * q1 + q1)
    return g, dg


def _fzeta(zeta):
    f = ((1.0 + zeta) ** (4.0 / 3.0) + (1.0 - zeta) ** (4.0 / 3.0) - 2.0) / _FZ_DEN
    df = (4.0 / 3.0) * ((1.0 + zeta) ** (1.0 / 3.0)
                        - (1.0 - zeta) ** (1.0 / 3.0)) / _FZ_DEN
    return f, df


def _pw92_ec(rs, zeta):
    """Correlation energy per electron and its rs / zeta derivatives."""
    ec0, dec0 = _pw92_g(rs, _PW92_UNPOL)
    ec1, dec1 = _pw92_g(rs, _PW92_POL)
    mac, dmac = _pw92_g(rs, _PW92_ALPHA)  # fit is for -alpha_c
    alpha, dalpha = -mac, -dmac
    f, df = _fzeta(zeta)
    z3 = zeta ** 3
    z4 = z3 * zeta
    ec = ec0 + alpha * f / _FPP0 * (1.0 - z4) + (ec1 - ec0) * f * z4
    dec_drs = (dec0 + dalpha * f / _FPP0 * (1.0 - z4)
               + (dec1 - dec0) * f * z4)
    dec_dz = (alpha / _FPP0 * (df * (1.0 - z4) - 4.0 * z3 * f)
              + (ec1 - ec0) * (df * z4 + 4.0 * z3 * f))
    return ec, dec_drs, dec_dz


def lsda_exchange(rho_up: np.ndarray, rho_dn: np.ndarray):
    """Slater exchange: (v_up, v_dn, energy density per volume)."""
    nu = np.maximum(rho_up, 0.0)
    nd = np.maximum(rho_dn, 0.0)
    v_up = -((6.0 / np.pi) * nu) ** (1.0 / 3.0)
    v_dn = -((6.0 / np.pi) * nd) ** (1.0 / 3.0)
    e_dens = _CX * (nu ** (4.0 / 3.0) + nd ** (4.0 / 3.0))
    return v_up, v_dn, e_dens


def pw92_correlation(rho_up: np.ndarray, rho_dn: np.ndarray):
    """PW92 correlation: (v_up, v_dn, energy density per volume)."""
    nu = np.maximum(rho_up, 0.0)
    nd = np.maximum(rho_dn, 0.0)
    rho = nu + nd
    live = rho > _TINY
    rho_s = np.where(live, rho, 1.0)
    zeta = np.clip((nu - nd) / rho_s, -1.0, 1.0)
    rs = (3.0 / (4.0 * np.pi * rho_s)) ** (1.0 / 3.0)
    ec, dec_drs, dec_dz = _pw92_ec(rs, zeta)
    # v_sigma = ec - rs/3 dec/drs - (zeta -+ 1) dec/dzeta
    common = ec - (rs / 3.0) * dec_drs
    v_up = np.where(live, common - (zeta - 1.0) * dec_dz, 0.0)
    v_dn = np.where(live, common - (zeta + 1.0) * dec_dz, 0.0)
    e_dens = np.where(live, rho * ec, 0.0)
    return v_up, v_dn, e_dens


def xc_potential(rho_up: np.ndarray, rho_dn: np.ndarray, grid: GridSpec,
                 spec: XCFunctionalSpec = XCFunctionalSpec()):
    """Spin xc potentials and total E_xc for the chosen functional."""
    v_up, v_dn, e_dens = lsda_exchange(rho_up, rho_dn)
    if spec.correlation == "perdew-wang-92":
        cv_up, cv_dn, ce = pw92_correlation(rho_up, rho_dn)
        v_up = v_up + cv_up
        v_dn = v_dn + cv_dn
        e_dens = e_dens + ce
    return v_up, v_dn, float(grid.integrate(e_dens))
