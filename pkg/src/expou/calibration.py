"""Parameter estimation from a daily close-price series.

Pipeline: drift from the mean simple return; (m_bar, beta) from a
log-normal fit to a rolling-RMS volatility proxy, de-biased by simulating
the model and passing the simulated series through the same proxy and fit;
(alpha, rho) by matching multi-horizon skewness and kurtosis against Monte
Carlo with common random numbers.  gamma and y0 are fixed to zero, so the
volatility level is reported as m_bar.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq, curve_fit
from scipy.stats import norm

from .mc import SimConfig, simulate
from .model import ModelParams
from .optimize import OptimizeResult, principal_axis_minimize
from .stats import build_histogram, shape_statistics

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
MIN_CALIBRATION_OBS = 500
MIN_NONOVERLAP = 200


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray
    closes: np.ndarray
    # years per observation; derived from the calendar span when omitted
    dt_override: float | None = None

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        closes = np.asarray(self.closes, dtype=float)
        if dates.shape != closes.shape or dates.ndim != 1:
            raise ValueError("dates and closes must be 1-d arrays of equal length")
        if closes.size < 2:
            raise ValueError("need at least two prices")
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise ValueError("closes must be finite and positive")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "closes", closes)

    @property
    def n(self) -> int:
        return self.closes.size

    @property
    def dt(self) -> float:
        if self.dt_override is not None:
            return float(self.dt_override)
        span = (self.dates[-1] - self.dates[0]).astype(int)
        return span / DAYS_PER_YEAR / (self.n - 1)

    @property
    def simple_returns(self) -> np.ndarray:
        return np.diff(self.closes) / self.closes[:-1]

    @property
    def log_returns(self) -> np.ndarray:
        return np.diff(np.log(self.closes))

    @classmethod
    def from_csv(cls, path: str | Path, dt: float | None = None) -> "PriceSeries":
        dates, closes = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"date", "close"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected a header with columns date,close")
            for i, row in enumerate(reader, start=2):
                try:
                    dates.append(_dt.date.fromisoformat(row["date"].strip()))
                    closes.append(float(row["close"]))
                except (ValueError, AttributeError) as exc:
                    raise ValueError(f"{path}:{i}: {exc}") from exc
        return cls(np.array(dates, dtype="datetime64[D]"), np.array(closes), dt)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "close"])
            for d, c in zip(self.dates.astype(str), self.closes):
                w.writerow([d, repr(float(c))])


def estimate_mu(series: PriceSeries) -> float:
    """Mean simple return per unit time."""
    return float(np.mean(series.simple_returns) / series.dt)


def mu_half_width(series: PriceSeries, confidence: float = 0.95) -> float:
    r = series.simple_returns
    z = norm.ppf(0.5 * (1 + confidence))
    return float(z * np.std(r, ddof=1) / math.sqrt(r.size) / series.dt)


@dataclass
class VolatilityProxySeries:
    sigma_daily: np.ndarray
    window: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.sigma_daily)) or np.any(self.sigma_daily <= 0):
            raise ValueError("volatility proxy must be finite and positive")


def extract_vol_proxy(series: PriceSeries, window: int = 21) -> VolatilityProxySeries:
    """Centered rolling RMS of the demeaned log returns over ``window`` days."""
    if window < 5 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 5, got {window}")
    r = series.log_returns
    if r.size < window:
        raise ValueError(f"series has {r.size} returns, shorter than the window {window}")
    d = r - r.mean()
    ms = sliding_window_view(d * d, window).mean(axis=1)
    return VolatilityProxySeries(np.sqrt(ms), window)


@dataclass
class LognormalFit:
    log_sigma0: float
    s: float
    se_log_sigma0: float
    se_s: float
    fit_range: tuple[float, float]
    n_in_range: int
    n_bins: int

    def m_bar(self, dt: float) -> float:
        return math.exp(self.log_sigma0) / math.sqrt(dt)

    @property
    def beta(self) -> float:
        return self.s**2


def _lognormal_pdf(x, log_sigma0, s):
    return np.exp(-0.5 * ((np.log(x) - log_sigma0) / s) ** 2) / (x * s * math.sqrt(2 * math.pi))


def default_fit_range(values: np.ndarray, coverage: float = 0.9) -> tuple[float, float]:
    lo, hi = np.quantile(values, [0.5 * (1 - coverage), 0.5 * (1 + coverage)])
    return float(lo), float(hi)


def fit_lognormal(proxy: VolatilityProxySeries | np.ndarray,
                  fit_range: tuple[float, float] | None = None,
                  min_points: int = 100) -> LognormalFit:
    """Weighted least-squares fit of a log-normal density to the proxy histogram.

    The histogram is restricted to ``fit_range`` but normalized by the full
    sample, so the fitted curve is the density of the whole distribution.
    Weights are Poisson errors of the bin counts.
    """
    v = np.asarray(getattr(proxy, "sigma_daily", proxy), dtype=float)
    if fit_range is None:
        fit_range = default_fit_range(v)
    lo, hi = map(float, fit_range)
    if not 0 < lo < hi:
        raise ValueError(f"fit range must satisfy 0 < lo < hi, got {fit_range}")
    inside = int(np.count_nonzero((v >= lo) & (v <= hi)))
    if inside == 0:
        raise ValueError(f"no proxy values inside the fit range {fit_range}")
    if inside < min_points:
        raise ValueError(f"only {inside} proxy values inside the fit range, need {min_points}")
    hist = build_histogram(v, rule="fd", min_count=None, range=(lo, hi))
    keep = hist.counts > 0
    x = hist.centers[keep]
    y = hist.densities[keep]
    err = np.sqrt(hist.counts[keep]) / (hist.n * hist.widths[keep])
    lv = np.log(v)
    p0 = (float(np.median(lv)), float(np.std(lv)) or 0.1)
    popt, pcov = curve_fit(_lognormal_pdf, x, y, p0=p0, sigma=err, absolute_sigma=True,
                           bounds=([-np.inf, 1e-6], [np.inf, np.inf]))
    se = np.sqrt(np.diag(pcov))
    return LognormalFit(float(popt[0]), float(popt[1]), float(se[0]), float(se[1]),
                        (lo, hi), inside, int(keep.sum()))


@dataclass
class HorizonCumulants:
    """Skewness and excess kurtosis of i-step returns with 1-sigma errors."""

    horizons: np.ndarray
    skew: np.ndarray
    kurt: np.ndarray
    skew_err: np.ndarray
    kurt_err: np.ndarray
    n_samples: np.ndarray
    overlapping: np.ndarray

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}


def _horizon_stats(xc: np.ndarray, horizons: np.ndarray, min_nonoverlap: int):
    """Shape statistics of i-step increments of each column of ``xc`` (n_obs x n_series)."""
    n_obs, n_ser = xc.shape
    out = {k: np.empty((horizons.size, n_ser)) for k in ("skew", "kurt", "skew_err", "kurt_err")}
    n_s = np.empty(horizons.size, dtype=int)
    over = np.empty(horizons.size, dtype=bool)
    for j, i in enumerate(horizons):
        if i >= n_obs:
            raise ValueError(f"horizon {i} exceeds the series length")
        sub = xc[::i]
        if sub.shape[0] - 1 >= min_nonoverlap:
            x = np.diff(sub, axis=0)
            over[j] = False
        else:
            x = xc[i:] - xc[:-i]
            over[j] = True
        out["skew"][j], out["kurt"][j], out["skew_err"][j], out["kurt_err"][j] = shape_statistics(x)
        n_s[j] = x.shape[0]
    return out, n_s, over


def empirical_horizon_cumulants(series: PriceSeries, horizons=range(1, 101), mu: float | None = None,
                                min_nonoverlap: int = MIN_NONOVERLAP) -> HorizonCumulants:
    """Shape statistics of centered i-day log returns for each horizon i.

    Non-overlapping returns are used while they give at least
    ``min_nonoverlap`` samples; longer horizons fall back to overlapping
    returns (flagged in ``overlapping``).  The reported errors are
    delta-method values that ignore serial dependence, so they understate
    the true sampling spread.
    """
    h = np.asarray(list(horizons), dtype=int)
    if h.size == 0 or np.any(h < 1):
        raise ValueError("horizons must be positive integers")
    mu = estimate_mu(series) if mu is None else mu
    t = np.arange(series.n) * series.dt
    xc = (np.log(series.closes) - mu * t)[:, None]
    out, n_s, over = _horizon_stats(xc, h, min_nonoverlap)
    return HorizonCumulants(h, out["skew"][:, 0], out["kurt"][:, 0], out["skew_err"][:, 0],
                            out["kurt_err"][:, 0], n_s, over)


@dataclass(frozen=True)
class MCSettings:
    n_paths: int = 10_000
    substeps: int = 4
    seed: int = 0


def _model(m_bar: float, beta: float, alpha: float, rho: float, mu: float = 0.0) -> ModelParams:
    return ModelParams.from_beta(m_bar, alpha, beta, rho, gamma=0.0, y0=0.0, mu=mu)


def mc_horizon_cumulants(params: ModelParams, horizons, dt_obs: float,
                         mc: MCSettings = MCSettings()) -> HorizonCumulants:
    """Shape statistics of simulated X at multiples of ``dt_obs``.

    Paths start from the stationary law of Y, matching the averaging over
    starting days in the empirical statistics.
    """
    h = np.asarray(list(horizons), dtype=int)
    cfg = SimConfig(dt=dt_obs / mc.substeps, n_steps=int(h.max()) * mc.substeps,
                    n_paths=mc.n_paths, seed=mc.seed, stationary_start=True)
    ens = simulate(params, cfg, checkpoints=h * mc.substeps * cfg.dt)
    s, k, es, ek = shape_statistics(ens.x)
    return HorizonCumulants(h, s, k, es, ek, np.full(h.size, mc.n_paths), np.zeros(h.size, bool))


def chi2_from_cumulants(data: HorizonCumulants, model: HorizonCumulants) -> float:
    """Sum over horizons of squared skewness and kurtosis gaps over summed variances."""
    if data.horizons.shape != model.horizons.shape or np.any(data.horizons != model.horizons):
        raise ValueError("data and model cumulants must share horizons")
    vs = data.skew_err**2 + model.skew_err**2
    vk = data.kurt_err**2 + model.kurt_err**2
    if np.any(vs <= 0) or np.any(vk <= 0):
        if np.array_equal(data.skew, model.skew) and np.array_equal(data.kurt, model.kurt):
            return 0.0
        raise ValueError("zero combined error at some horizon")
    return float(np.sum((data.skew - model.skew) ** 2 / vs + (data.kurt - model.kurt) ** 2 / vk))


@dataclass
class CumulantObjective:
    """chi^2 between data and simulated shape statistics as a function of (alpha, rho).

    The Monte Carlo seed is fixed, so repeated evaluations share random
    numbers and the objective is a deterministic function of its arguments.
    """

    data: HorizonCumulants
    m_bar: float
    beta: float
    dt_obs: float
    mc: MCSettings = MCSettings()
    n_calls: int = 0

    def __call__(self, alpha: float, rho: float) -> float:
        self.n_calls += 1
        params = _model(self.m_bar, self.beta, alpha, rho)
        model = mc_horizon_cumulants(params, self.data.horizons, self.dt_obs, self.mc)
        return chi2_from_cumulants(self.data, model)


def chi2_objective(alpha: float, rho: float, fixed: dict, data_cums: HorizonCumulants,
                   mc_cfg: MCSettings = MCSettings()) -> float:
    """One evaluation of the cumulant-matching objective against independent paths.

    ``fixed`` holds ``m_bar``, ``beta`` and ``dt`` (years per observation).
    """
    obj = CumulantObjective(data_cums, fixed["m_bar"], fixed["beta"], fixed["dt"], mc_cfg)
    return obj(alpha, rho)


@dataclass
class SeriesDesignObjective:
    """Cumulant matching against replicate series with the data's sampling design.

    Each evaluation simulates ``n_series`` stationary series as long as the
    data and applies the same horizon statistics to each, so the finite-sample
    bias of skewness and kurtosis estimated from one overlapping,
    volatility-clustered series appears on both sides of the comparison.
    The chi^2 weights are the replicate variances of a single-series
    statistic (times 1 + 1/n_series for the noise of the replicate mean),
    taken from ``weights`` when given so that they stay fixed during a
    minimization.  Seeds are fixed: common random numbers across calls.
    """

    data: HorizonCumulants
    m_bar: float
    beta: float
    dt_obs: float
    n_obs: int
    n_series: int = 64
    substeps: int = 4
    seed: int = 0
    min_nonoverlap: int = MIN_NONOVERLAP
    weights: tuple[np.ndarray, np.ndarray] | None = None
    n_calls: int = 0

    def replicate_stats(self, alpha: float, rho: float):
        params = _model(self.m_bar, self.beta, alpha, rho)
        logp = simulate_series(params, self.n_obs, self.dt_obs, self.n_series, self.seed, self.substeps)
        out, _, _ = _horizon_stats(logp.T, self.data.horizons, self.min_nonoverlap)
        return out["skew"], out["kurt"]

    def spread(self, alpha: float, rho: float):
        """Replicate variances of single-series skewness and kurtosis per horizon."""
        sk, ku = self.replicate_stats(alpha, rho)
        return sk.var(axis=1, ddof=1), ku.var(axis=1, ddof=1)

    def __call__(self, alpha: float, rho: float) -> float:
        self.n_calls += 1
        sk, ku = self.replicate_stats(alpha, rho)
        if self.weights is None:
            vs, vk = sk.var(axis=1, ddof=1), ku.var(axis=1, ddof=1)
        else:
            vs, vk = self.weights
        inflate = 1.0 + 1.0 / self.n_series
        return float(np.sum((self.data.skew - sk.mean(axis=1)) ** 2 / (vs * inflate)
                            + (self.data.kurt - ku.mean(axis=1)) ** 2 / (vk * inflate)))


ALPHA_BOUNDS = (0.5, 500.0)
RHO_BOUNDS = (-0.99, 0.99)


def optimize_alpha_rho(objective, bounds=(ALPHA_BOUNDS, RHO_BOUNDS), start=(10.0, 0.0),
                       xtol: float = 1e-3, max_sweeps: int = 30):
    """Principal-axis minimization of ``objective(alpha, rho)``.

    The search runs in (log alpha, rho).  Returns ``(alpha, rho, result)``.
    """
    (alo, ahi), (rlo, rhi) = bounds
    if not (0 < alo < ahi and -1 < rlo < rhi < 1):
        raise ValueError(f"invalid bounds {bounds}")
    x0 = (math.log(min(max(start[0], alo), ahi)), min(max(start[1], rlo), rhi))
    res = principal_axis_minimize(lambda u: objective(math.exp(u[0]), u[1]), x0,
                                  [(math.log(alo), math.log(ahi)), (rlo, rhi)],
                                  xtol=xtol, max_sweeps=max_sweeps, step=0.5)
    return math.exp(res.x[0]), float(res.x[1]), res


def simulate_series(params: ModelParams, n_obs: int, dt: float, n_series: int = 1, seed: int = 0,
                    substeps: int = 4, path_offset: int = 0) -> np.ndarray:
    """Log prices ``mu t + X(t)`` of ``n_series`` independent stationary-start paths.

    Returns an array of shape ``(n_series, n_obs)`` starting at zero.
    """
    cfg = SimConfig(dt=dt / substeps, n_steps=(n_obs - 1) * substeps, n_paths=n_series,
                    seed=seed, stationary_start=True)
    ck = np.arange(n_obs) * substeps * cfg.dt
    ens = simulate(params, cfg, checkpoints=ck, path_offset=path_offset)
    return ens.x + params.mu * np.arange(n_obs) * dt


def synthetic_series(params: ModelParams, n_obs: int, seed: int, substeps: int = 10,
                     start: str = "1970-01-02", s0: float = 100.0) -> PriceSeries:
    """Business-day close prices simulated from the model (stationary start)."""
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_obs), roll="forward")
    probe = PriceSeries(dates, np.ones(n_obs))
    logp = simulate_series(params, n_obs, probe.dt, 1, seed, substeps)[0]
    return PriceSeries(dates, s0 * np.exp(logp))


@dataclass
class ProxyCorrection:
    m_bar: float
    beta: float
    sim_log_sigma0: float
    sim_s: float
    at_floor: bool = False


def _sim_proxy_fit(m_bar, beta, alpha, rho, n_obs, dt, window, levels, n_rep, seed, substeps):
    params = _model(m_bar, beta, alpha, rho)
    logp = simulate_series(params, n_obs, dt, n_rep, seed, substeps)
    prox = []
    for row in logp:
        r = np.diff(row)
        d = r - r.mean()
        prox.append(np.sqrt(sliding_window_view(d * d, window).mean(axis=1)))
    pooled = np.concatenate(prox)
    return fit_lognormal(pooled, tuple(np.quantile(pooled, levels)))


def correct_proxy_bias(target: LognormalFit, n_obs: int, dt: float, window: int,
                       alpha: float, rho: float, levels: tuple[float, float] = (0.05, 0.95),
                       n_rep: int = 8, seed: int = 1,
                       substeps: int = 4, rounds: int = 3,
                       beta_bounds: tuple[float, float] = (1e-4, 4.0)) -> ProxyCorrection:
    """(m_bar, beta) whose simulated proxy fit reproduces ``target``.

    The rolling RMS mixes the volatility distribution with sampling noise
    and smooths it over the window, so the naive mapping m_bar = sigma0/sqrt(dt),
    beta = s^2 is biased.  Series with the data's length and sampling are
    simulated at trial parameters (common random numbers across trials),
    pushed through the same proxy and a fit over the same quantile band
    (``levels``) as the data, and (m_bar, beta) adjusted until
    the fitted (log sigma0, s) match.  When even the smallest beta gives a
    wider fit than the data the result is pinned at the lower bound.
    """
    m_bar = math.exp(target.log_sigma0) / math.sqrt(dt)
    beta = target.s**2
    at_floor = False
    fit = None
    for _ in range(rounds):
        def gap(b):
            f = _sim_proxy_fit(m_bar, b, alpha, rho, n_obs, dt, window, levels, n_rep, seed, substeps)
            return f.s - target.s

        lo, hi = beta_bounds
        g_lo = gap(lo)
        if g_lo >= 0:
            beta, at_floor = lo, True
        else:
            g_hi = gap(hi)
            beta = hi if g_hi <= 0 else brentq(gap, lo, hi, xtol=1e-5, rtol=1e-4)
            at_floor = False
        fit = _sim_proxy_fit(m_bar, beta, alpha, rho, n_obs, dt, window, levels, n_rep, seed, substeps)
        m_bar *= math.exp(target.log_sigma0 - fit.log_sigma0)
    return ProxyCorrection(m_bar, beta, fit.log_sigma0, fit.s, at_floor)


@dataclass
class CalibrationResult:
    mu: float
    m_bar: float
    beta: float
    alpha: float
    rho: float
    y0: float = 0.0
    gamma: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.y0 != 0.0 or self.gamma != 0.0:
            raise ValueError("calibration normalizes y0 = gamma = 0")
        if not (self.m_bar > 0 and self.beta > 0 and self.alpha > 0 and -1 < self.rho < 1):
            raise ValueError(f"calibrated parameters out of range: {self}")

    def to_params(self) -> ModelParams:
        return _model(self.m_bar, self.beta, self.alpha, self.rho, self.mu)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def calibrate(series: PriceSeries, window: int = 21, fit_range: tuple[float, float] | None = None,
              horizons: int = 100, seed: int = 0, n_paths: int = 10_000, substeps: int = 4,
              start: tuple[float, float] = (10.0, 0.0), bias_correction: bool = True,
              max_rounds: int = 3, proxy_reps: int = 8, design: str = "series",
              n_series: int = 64) -> CalibrationResult:
    """Full pipeline from close prices to (mu, m_bar, beta, alpha, rho).

    ``design="series"`` matches the data statistics against replicate series
    of the same length (``SeriesDesignObjective``); ``design="paths"``
    compares them with ``n_paths`` independent paths (``CumulantObjective``).
    Each round re-derives (m_bar, beta) at the current (alpha, rho) and then
    re-optimizes (alpha, rho); rounds stop once both settle.
    """
    if series.n < MIN_CALIBRATION_OBS:
        raise ValueError(f"calibration needs at least {MIN_CALIBRATION_OBS} prices, got {series.n}")
    if design not in ("series", "paths"):
        raise ValueError(f"unknown design {design!r}")
    dt = series.dt
    mu = estimate_mu(series)
    proxy = extract_vol_proxy(series, window)
    fit = fit_lognormal(proxy, fit_range)
    v = proxy.sigma_daily
    levels = (float(np.mean(v < fit.fit_range[0])), float(np.mean(v <= fit.fit_range[1])))
    data = empirical_horizon_cumulants(series, range(1, horizons + 1), mu)
    alpha, rho = start
    m_bar, beta = fit.m_bar(dt), fit.beta
    rounds = []
    for rnd in range(max_rounds if bias_correction else 1):
        if bias_correction:
            corr = correct_proxy_bias(fit, series.n, dt, window, alpha, rho, levels,
                                      n_rep=proxy_reps, seed=seed + 1, substeps=substeps)
            m_bar, beta = corr.m_bar, corr.beta
        if design == "series":
            obj = SeriesDesignObjective(data, m_bar, beta, dt, series.n, n_series=n_series,
                                        substeps=substeps, seed=seed + 2)
            obj.weights = obj.spread(alpha, rho)
        else:
            obj = CumulantObjective(data, m_bar, beta, dt, MCSettings(n_paths, substeps, seed + 2))
        new_alpha, new_rho, res = optimize_alpha_rho(obj, start=(alpha, rho))
        rounds.append({"m_bar": m_bar, "beta": beta, "alpha": new_alpha, "rho": new_rho,
                       "objective": res.fun, "n_eval": res.n_eval})
        log.info("calibration round %d: %s", rnd, rounds[-1])
        done = abs(math.log(new_alpha / alpha)) < 0.02 and abs(new_rho - rho) < 0.01
        alpha, rho = new_alpha, new_rho
        if done and rnd > 0:
            break
    diagnostics = {
        "objective": rounds[-1]["objective"],
        "mu_half_width_95": mu_half_width(series),
        "dt": dt,
        "n_obs": series.n,
        "window": window,
        "fit_range": list(fit.fit_range),
        "log_sigma0": fit.log_sigma0,
        "log_sigma0_se": fit.se_log_sigma0,
        "s": fit.s,
        "s_se": fit.se_s,
        "naive_m_bar": fit.m_bar(dt),
        "naive_beta": fit.beta,
        "bias_correction": bias_correction,
        "design": design,
        "horizons": horizons,
        "first_overlapping_horizon": int(data.horizons[data.overlapping][0]) if data.overlapping.any() else None,
        "seed": seed,
        "n_paths": n_paths if design == "paths" else None,
        "n_series": n_series if design == "series" else None,
        "substeps": substeps,
        "rounds": rounds,
    }
    return CalibrationResult(mu=mu, m_bar=m_bar, beta=beta, alpha=alpha, rho=rho, diagnostics=diagnostics)
