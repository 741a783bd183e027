"""Measurements behind the published tables and the density figure.

These functions only measure; comparison with published numbers is left to
the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from .edgeworth import cumulants_closed_form
from .inversion import FrequencyGrid, invert_half_axis
from .linear_cf import cf_cumulants, cf_handle
from .mc import Dynamics, SimConfig, simulate
from .model import Horizon, ModelParams
from .stats import build_histogram, estimate_cumulants

BASE = dict(m=0.1, alpha=10.0, gamma=0.0, y0=0.0)
TABLE1_BETAS = (0.005, 0.01, 0.02, 0.05, 0.10, 0.25, 0.50)
TABLE2_TIMES = (0.01, 0.1, 0.2, 0.5, 1.0)
_CHUNK = 250_000


def base_params(beta: float, rho: float = -0.9) -> ModelParams:
    return ModelParams.from_beta(BASE["m"], BASE["alpha"], beta, rho, gamma=BASE["gamma"], y0=BASE["y0"])


def simulate_terminal(params: ModelParams, t_values, n_paths: int, dt: float, seed: int,
                      dynamics: Dynamics = Dynamics.EXPONENTIAL) -> np.ndarray:
    """X at each time in ``t_values`` for ``n_paths`` paths, built in fixed-size chunks.

    Chunking only bounds memory: path i always uses stream i, so the result
    does not depend on the chunk size.
    """
    t_values = np.asarray(t_values, dtype=float)
    n_steps = int(round(t_values.max() / dt))
    out = np.empty((n_paths, t_values.size))
    for start in range(0, n_paths, _CHUNK):
        n = min(_CHUNK, n_paths - start)
        cfg = SimConfig(dt=dt, n_steps=n_steps, n_paths=n, seed=seed, dynamics=dynamics)
        out[start:start + n] = simulate(params, cfg, t_values, path_offset=start).x
    return out


def _cum_row(prefix: str, c) -> dict:
    hw = c.half_widths
    return {f"{prefix}k1": c.k1, f"{prefix}k1_hw": hw["k1"], f"{prefix}k2": c.k2, f"{prefix}k2_hw": hw["k2"],
            f"{prefix}skew": c.skew, f"{prefix}skew_hw": hw["skew"],
            f"{prefix}kurt": c.kurt, f"{prefix}kurt_hw": hw["kurt"]}


def table1(n_paths: int = 500_000, dt: float = 1e-3, seed: int = 0, betas=TABLE1_BETAS,
           rho: float = -0.9, t: float = 1.0, confidence: float = 0.95) -> list[dict]:
    """Closed-form and exponential-dynamics MC cumulants at one horizon for several beta."""
    rows = []
    for beta in betas:
        p = base_params(beta, rho)
        th = cumulants_closed_form(p, Horizon(t))
        x = simulate_terminal(p, [t], n_paths, dt, seed)[:, 0]
        mc = estimate_cumulants(x, confidence, method="delta")
        row = {"beta": beta, "rho": rho, "t": t, "n_paths": n_paths, "dt": dt,
               "th_k1": th.k1, "th_k2": th.k2, "th_skew": th.skew, "th_kurt": th.kurt}
        row.update(_cum_row("mc_", mc))
        rows.append(row)
    return rows


def table2(beta: float = 0.01, n_paths: int = 500_000, dt: float = 1e-3, seed: int = 0,
           times=TABLE2_TIMES, rho: float = -0.9, confidence: float = 0.95) -> list[dict]:
    """Exponential vs linear dynamics cumulants over time, plus the linear CF values.

    The two dynamics use independent streams (seeds ``seed`` and ``seed + 1``).
    """
    p = base_params(beta, rho)
    xe = simulate_terminal(p, times, n_paths, dt, seed, Dynamics.EXPONENTIAL)
    xl = simulate_terminal(p, times, n_paths, dt, seed + 1, Dynamics.LINEAR)
    rows = []
    for j, t in enumerate(times):
        ce = estimate_cumulants(xe[:, j], confidence, method="delta")
        cl = estimate_cumulants(xl[:, j], confidence, method="delta")
        k = cf_cumulants(p, Horizon(t))
        row = {"beta": beta, "rho": rho, "t": t, "n_paths": n_paths, "dt": dt}
        row.update(_cum_row("exp_", ce))
        row.update(_cum_row("lin_", cl))
        row.update({"cf_k1": k[0], "cf_k2": k[1], "cf_skew": k[2] / k[1] ** 1.5, "cf_kurt": k[3] / k[1] ** 2})
        rows.append(row)
    return rows


def fig_density(beta: float = 0.01, rho: float = -0.9, t: float = 1.0, n_paths: int = 5_000_000,
                dt: float = 1e-3, seed: int = 0, phi_max: float = 1e3, n_points: int = 1 << 22,
                min_count: int = 10, with_exponential: bool = False) -> list[dict]:
    """Linear-dynamics MC histogram next to the FFT-inverted density at bin centers."""
    p = base_params(beta, rho)
    xl = simulate_terminal(p, [t], n_paths, dt, seed, Dynamics.LINEAR)[:, 0]
    hist = build_histogram(xl, rule="fd", min_count=min_count)
    dens = invert_half_axis(cf_handle(p, Horizon(t)), FrequencyGrid(phi_max, n_points), hist.centers, "fft")
    se = hist.binomial_se()
    rows = []
    exp_hist = None
    if with_exponential:
        xe = simulate_terminal(p, [t], n_paths, dt, seed + 1, Dynamics.EXPONENTIAL)[:, 0]
        counts, _ = np.histogram(xe, bins=hist.bin_edges)
        exp_hist = counts / (xe.size * hist.widths)
    for i, (lo, hi, c, d) in enumerate(hist.to_rows()):
        row = {"bin_lo": lo, "bin_hi": hi, "center": 0.5 * (lo + hi), "count": c, "mc_density": d,
               "count_se": float(se[i]), "fft_density": float(dens.p[i]),
               "expected_count": float(dens.p[i] * hist.n * (hi - lo))}
        if exp_hist is not None:
            row["exp_mc_density"] = float(exp_hist[i])
        rows.append(row)
    return rows


def table3(series_list, names=None, **calib_kw) -> list[dict]:
    """Calibrated parameters for each price series."""
    from .calibration import calibrate

    rows = []
    for i, s in enumerate(series_list):
        r = calibrate(s, **calib_kw)
        rows.append({"series": names[i] if names else str(i), "mu": r.mu, "y0": r.y0, "gamma": r.gamma,
                     "m_bar": r.m_bar, "beta": r.beta, "alpha": r.alpha, "rho": r.rho,
                     "objective": r.diagnostics["objective"]})
    return rows
