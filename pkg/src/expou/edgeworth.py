"""Large vol-of-vol regime: closed-form cumulants, the approximate exponent
of the characteristic function, and the Edgeworth density built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import Horizon, ModelParams, _elapsed

# Cumulant brackets are linear in the basis
#   zeta, 1 - e^{-zeta}, zeta e^{-zeta}, zeta^2 e^{-zeta}, 1 - e^{-2 zeta}
# with coefficients attached to monomials in (rho^2, y0, gamma).
_K2_TERMS = {"1": (1, 0, 0, 0, 0), "g": (2, -2, 0, 0, 0), "y": (0, 2, 0, 0, 0)}
_K3_TERMS = {"1": (1, -1, 0, 0, 0), "g": (1, -2, 1, 0, 0), "y": (0, 1, -1, 0, 0)}
_K4_TERMS = {
    "1": (2, -4, 0, 0, 1),
    "r": (4, -8, 4, 0, 0),
    "ry": (0, 4, -4, -2, 0),
    "rg": (4, -12, 8, 2, 0),
}
_SERIES_BELOW = 0.5
_N_SERIES = 30


def _basis_series(j: int) -> tuple[Fraction, ...]:
    """Coefficient of zeta^j in each basis function."""
    fact = math.factorial
    return (
        Fraction(1 if j == 1 else 0),
        Fraction(-((-1) ** j), fact(j)) if j >= 1 else Fraction(0),
        Fraction((-1) ** (j - 1), fact(j - 1)) if j >= 1 else Fraction(0),
        Fraction((-1) ** (j - 2), fact(j - 2)) if j >= 2 else Fraction(0),
        Fraction(-((-2) ** j), fact(j)) if j >= 1 else Fraction(0),
    )


def _series_table(terms):
    table = {}
    for key, coefs in terms.items():
        row = []
        for j in range(_N_SERIES + 1):
            s = sum(Fraction(c) * b for c, b in zip(coefs, _basis_series(j)))
            row.append(float(s))
        table[key] = np.array(row)
    return table


_SERIES = {id(t): _series_table(t) for t in (_K2_TERMS, _K3_TERMS, _K4_TERMS)}


def _bracket(terms, weights: dict[str, float], zeta: np.ndarray) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    e = np.exp(-zeta)
    basis = (zeta, -np.expm1(-zeta), zeta * e, zeta * zeta * e, -np.expm1(-2 * zeta))
    series = _SERIES[id(terms)]
    powers = zeta[..., None] ** np.arange(_N_SERIES + 1)
    direct = np.zeros_like(zeta)
    # weight the series before summing so cross-monomial cancellations stay exact
    coef = np.zeros(_N_SERIES + 1)
    for key, coefs in terms.items():
        w = weights[key]
        if w == 0:
            continue
        direct = direct + w * sum(c * b for c, b in zip(coefs, basis))
        coef = coef + w * series[key]
    return np.where(zeta < _SERIES_BELOW, powers @ coef, direct)


@dataclass(frozen=True)
class TheoreticalCumulants:
    k1: float
    k2: float
    k3: float
    k4: float
    degenerate: bool = False

    @property
    def skew(self) -> float:
        return self.k3 / self.k2**1.5 if self.k2 > 0 else math.nan

    @property
    def kurt(self) -> float:
        """Excess kurtosis k4 / k2^2."""
        return self.k4 / self.k2**2 if self.k2 > 0 else math.nan

    sigma_skew = skew
    excess_kurt = kurt

    def as_row(self) -> dict[str, float]:
        return {"k1": self.k1, "k2": self.k2, "k3": self.k3, "k4": self.k4,
                "skew": self.skew, "kurt": self.kurt}


def cumulant_arrays(params: ModelParams, elapsed) -> tuple[np.ndarray, ...]:
    """k1..k4 on an array of elapsed times ``t - t0``."""
    p = params
    zeta = p.alpha * np.asarray(elapsed, dtype=float)
    if np.any(zeta < 0):
        raise ValueError("elapsed time must be nonnegative")
    r2 = p.rho * p.rho
    k1 = -(p.m**2 / (2 * p.alpha)) * zeta
    k2 = p.m**2 / p.alpha * _bracket(_K2_TERMS, {"1": 1.0, "g": p.gamma, "y": p.y0}, zeta)
    k3 = (6 * p.rho * p.m**3 * p.k / p.alpha**2
          * _bracket(_K3_TERMS, {"1": 1.0, "g": p.gamma, "y": p.y0}, zeta))
    k4 = (6 * p.m**4 * p.k**2 / p.alpha**3
          * _bracket(_K4_TERMS, {"1": 1.0, "r": r2, "ry": r2 * p.y0, "rg": r2 * p.gamma}, zeta))
    return k1, k2, k3, k4


def cumulants_closed_form(params: ModelParams, h: Horizon | float) -> TheoreticalCumulants:
    """First four cumulants of X(t) in the large k/m regime.

    ``h`` is a :class:`Horizon` or the elapsed time ``t - t0``.  At ``t == t0`` every cumulant vanishes and the result is flagged
    ``degenerate`` (skew and kurt are NaN).
    """
    elapsed = float(_elapsed(h))
    k1, k2, k3, k4 = (float(v) for v in cumulant_arrays(params, elapsed))
    return TheoreticalCumulants(k1, k2, k3, k4, degenerate=elapsed == 0)


def _theta(params: ModelParams, w):
    return 1.0 / (2.0 * params.beta) - 1j * params.rho * w


def _abc(params: ModelParams, w, tau):
    """A, B, C of the log-characteristic-function ansatz at rescaled frequency ``w``."""
    p = params
    lam = p.lam
    th = _theta(p, w)
    e1 = np.exp(-th * tau)
    one_e1 = -np.expm1(-th * tau)
    one_e2 = -np.expm1(-2 * th * tau)
    drift = p.rho * w - 1j * p.gamma / (2 * p.beta)
    A = lam**2 / (4 * th) * one_e2
    B = lam * (-1j * p.y0 * e1 + 1j * w**2 / (2 * th**2) * one_e1**2
               + drift / th * one_e1)
    C = (1j * w / (2 * lam) * tau + w**2 / 2 * tau
         + 1j * w**2 * (-1j * p.y0 * one_e1 / th
                        + 1j * w**2 / (2 * th**2) * (tau - 2 * one_e1 / th + one_e2 / (2 * th))
                        + drift / th * (tau - one_e1 / th)))
    return A, B, C


def _require_beta(params: ModelParams):
    if not params.k > 0:
        raise ValueError("the exponent needs k > 0 (beta > 0)")


def exponent_C(omega1, params: ModelParams, h: Horizon | float):
    """Approximate minus log characteristic function of X at frequency ``omega1``.

    The marginal characteristic function is ``exp(-exponent_C(omega1, ...))``.
    """
    _require_beta(params)
    w = np.asarray(omega1, dtype=float) / params.lam
    tau = params.k**2 * _elapsed(h)
    return _abc(params, w, tau)[2]


def limit1_ode_check(omega1, params: ModelParams, h: Horizon | float, step: float = 1e-6) -> dict[str, float]:
    """Residuals of the A, B, C ODEs at the closed forms, by central differences in tau.

    Residuals are scaled by ``max(1, |rhs|)``.  Also reports the departure
    from the tau = 0 initial conditions.
    """
    _require_beta(params)
    p = params
    lam = p.lam
    w = float(omega1) / lam
    tau = p.k**2 * _elapsed(h)
    th = _theta(p, w)
    if tau >= step:
        Ap, Bp, Cp = _abc(p, w, tau + step)
        Am, Bm, Cm = _abc(p, w, tau - step)
        dA, dB, dC = ((a - b) / (2 * step) for a, b in ((Ap, Am), (Bp, Bm), (Cp, Cm)))
    else:
        # second-order one-sided stencil at the initial time
        f0, f1, f2 = (_abc(p, w, tau + j * step) for j in range(3))
        dA, dB, dC = ((-3 * a + 4 * b - c) / (2 * step) for a, b, c in zip(f0, f1, f2))
    A, B, C = _abc(p, w, tau)
    rhs_a = -2 * th * A + 0.5 * lam**2
    rhs_b = -th * B + 2j * w**2 / lam * A - 1j * p.alpha * p.gamma * lam / p.k**2 + lam * p.rho * w
    rhs_c = 1j * w**2 / lam * B + 0.5 * w**2 + 1j * w / (2 * lam)
    res = {
        "A": abs(dA - rhs_a) / max(1.0, abs(rhs_a)),
        "B": abs(dB - rhs_b) / max(1.0, abs(rhs_b)),
        "C": abs(dC - rhs_c) / max(1.0, abs(rhs_c)),
    }
    A0, B0, C0 = _abc(p, w, 0.0)
    res["initial"] = max(abs(A0), abs(B0 + 1j * lam * p.y0), abs(C0))
    res["max"] = max(res["A"], res["B"], res["C"])
    return res


def hermite_he3(z):
    return z**3 - 3 * z


def hermite_he4(z):
    return z**4 - 6 * z**2 + 3


def edgeworth_density(x, cum: TheoreticalCumulants):
    """Gaussian(k1, k2) corrected by orthonormal Hermite terms of order 3 and 4.

    The correction weights k3/(sqrt(6) k2^1.5) and k4/(sqrt(24) k2^2)
    multiply He3/sqrt(6) and He4/sqrt(24), so the density reproduces k1..k4
    exactly.  Values may be negative; nothing is clipped.
    """
    if not cum.k2 > 0:
        raise ValueError(f"k2 must be positive, got {cum.k2}")
    sd = math.sqrt(cum.k2)
    z = (np.asarray(x, dtype=float) - cum.k1) / sd
    gauss = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * sd)
    c3 = cum.k3 / (math.sqrt(6) * cum.k2**1.5)
    c4 = cum.k4 / (math.sqrt(24) * cum.k2**2)
    return gauss * (1 + c3 * hermite_he3(z) / math.sqrt(6) + c4 * hermite_he4(z) / math.sqrt(24))


def negative_density_flag(p, rel_floor: float = 1e-3) -> bool:
    """True when some density value is below ``-rel_floor * max(p)``."""
    p = np.asarray(p, dtype=float)
    return bool(np.min(p) < -rel_floor * np.max(p))


def edgeworth_grid(cum: TheoreticalCumulants, x=None, n_sd: float = 8.0, n: int = 2001,
                   rel_floor: float = 1e-3):
    """Edgeworth density on a grid plus the negative-value diagnostic.

    Without ``x`` the grid spans ``k1 +/- n_sd * sqrt(k2)``.
    """
    from .inversion import DensityGrid

    if x is None:
        sd = math.sqrt(cum.k2)
        x = np.linspace(cum.k1 - n_sd * sd, cum.k1 + n_sd * sd, n)
    x = np.asarray(x, dtype=float)
    p = edgeworth_density(x, cum)
    return DensityGrid(x, p, method="edgeworth",
                       meta={"negative": negative_density_flag(p, rel_floor), "rel_floor": rel_floor})
