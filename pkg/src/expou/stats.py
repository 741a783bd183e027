"""Cumulant estimation with confidence intervals, and density histograms."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

DELTA_MIN_N = 100
BOOTSTRAP_BELOW = 10_000


class Statistic(str, enum.Enum):
    K1 = "k1"
    K2 = "k2"
    SKEW = "skew"
    KURT = "kurt"


@dataclass
class CumulantSet:
    """k-statistics of a sample plus normalized skewness and excess kurtosis.

    ``half_widths`` maps each of k1, k2, skew, kurt to the half-width of its
    ``confidence`` interval; ``method`` records how they were computed.
    """

    k1: float
    k2: float
    k3: float
    k4: float
    skew: float
    kurt: float
    n: int
    confidence: float
    half_widths: dict[str, float] = field(default_factory=dict)
    method: str = "delta"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_header(self) -> list[str]:
        return ["n", "k1", "k1_hw", "k2", "k2_hw", "k3", "k4", "skew", "skew_hw", "kurt", "kurt_hw",
                "confidence", "ci_method"]

    def csv_row(self) -> list:
        hw = self.half_widths
        return [self.n, self.k1, hw.get("k1"), self.k2, hw.get("k2"), self.k3, self.k4,
                self.skew, hw.get("skew"), self.kurt, hw.get("kurt"), self.confidence, self.method]


def central_moments(x: np.ndarray, orders=range(2, 9)) -> dict[int, float]:
    """Biased sample central moments ``m_r = mean((x - mean)^r)``."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    out = {}
    p = d * d
    for r in range(2, max(orders) + 1):
        if r > 2:
            p = p * d
        if r in orders:
            out[r] = float(np.mean(p))
    return out


def k_statistics(x: np.ndarray) -> tuple[float, float, float, float]:
    """Unbiased cumulant estimators k1..k4 (Fisher's k-statistics)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError(f"k-statistics up to order 4 need n >= 4, got {n}")
    k1 = float(np.mean(x))
    d = x - k1
    d2 = d * d
    s2 = float(np.sum(d2))
    s3 = float(np.sum(d2 * d))
    s4 = float(np.sum(d2 * d2))
    k2 = s2 / (n - 1)
    k3 = n * s3 / ((n - 1) * (n - 2))
    k4 = (n * (n + 1) * s4 - 3 * (n - 1) * s2 * s2) / ((n - 1) * (n - 2) * (n - 3))
    return k1, k2, k3, k4


def _moment_cov(mu: dict[int, float], r: int, s: int) -> float:
    # n * Cov(m_r, m_s), large-sample, with mu[1] = 0
    g = dict(mu)
    g[0], g[1] = 1.0, 0.0
    return (g[r + s] - g[r] * g[s] - r * g[r - 1] * g[s + 1] - s * g[r + 1] * g[s - 1]
            + r * s * g[r - 1] * g[s - 1] * g[2])


def asymptotic_variance(statistic: Statistic | str, mu: dict[int, float], n: int) -> float:
    """Delta-method variance of a sample statistic from central moments (up to order 8)."""
    stat = Statistic(statistic)
    m2 = mu[2]
    if stat is Statistic.K1:
        return m2 / n
    if stat is Statistic.K2:
        return _moment_cov(mu, 2, 2) / n
    if stat is Statistic.SKEW:
        grad = np.array([-1.5 * mu[3] * m2**-2.5, m2**-1.5])
        idx = (2, 3)
    else:
        grad = np.array([-2.0 * mu[4] * m2**-3, m2**-2])
        idx = (2, 4)
    cov = np.array([[_moment_cov(mu, a, b) for b in idx] for a in idx])
    return float(grad @ cov @ grad) / n


def ci_half_width(statistic: Statistic | str, moments: dict[int, float], n: int,
                  confidence: float = 0.95) -> float:
    """Normal-asymptotic CI half-width of ``statistic``.

    ``moments`` are central moments ``{2: m2, ..., 8: m8}`` (only those the
    statistic needs must be present).
    """
    if n < DELTA_MIN_N:
        raise ValueError(f"asymptotic interval needs n >= {DELTA_MIN_N}, got {n}")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    z = norm.ppf(0.5 * (1.0 + confidence))
    return float(z * math.sqrt(max(asymptotic_variance(statistic, moments, n), 0.0)))


def shape_statistics(x: np.ndarray) -> tuple[np.ndarray, ...]:
    """Column-wise skewness k3/k2^1.5 and excess kurtosis k4/k2^2 with 1-sigma errors.

    ``x`` has one column per variable; errors are delta-method standard
    deviations from central moments up to order 8.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-d array (samples x variables)")
    n = x.shape[0]
    if n < 8:
        raise ValueError(f"need at least 8 observations, got {n}")
    d = x - x.mean(axis=0)
    mu = {}
    p = d * d
    for r in range(2, 9):
        if r > 2:
            p = p * d
        mu[r] = p.mean(axis=0)
    if np.any(mu[2] <= 0):
        raise ValueError("degenerate sample: zero variance in some column")
    s2, s3, s4 = n * mu[2], n * mu[3], n * mu[4]
    k2 = s2 / (n - 1)
    k3 = n * s3 / ((n - 1) * (n - 2))
    k4 = (n * (n + 1) * s4 - 3 * (n - 1) * s2 * s2) / ((n - 1) * (n - 2) * (n - 3))
    skew, kurt = k3 / k2**1.5, k4 / k2**2
    m2 = mu[2]
    c = {(a, b): _moment_cov(mu, a, b) for a in (2, 3, 4) for b in (2, 3, 4)}
    ga, gb = -1.5 * mu[3] * m2**-2.5, m2**-1.5
    var_s = (ga * ga * c[2, 2] + 2 * ga * gb * c[2, 3] + gb * gb * c[3, 3]) / n
    ga, gb = -2.0 * mu[4] * m2**-3, m2**-2
    var_k = (ga * ga * c[2, 2] + 2 * ga * gb * c[2, 4] + gb * gb * c[4, 4]) / n
    return skew, kurt, np.sqrt(np.maximum(var_s, 0)), np.sqrt(np.maximum(var_k, 0))


def _normalized(k2, k3, k4):
    if not k2 > 0:
        raise ValueError("degenerate sample: zero variance, skewness/kurtosis undefined")
    return k3 / k2**1.5, k4 / k2**2


def bootstrap_half_widths(x: np.ndarray, confidence: float = 0.95, n_boot: int = 1000,
                          seed: int = 0) -> dict[str, float]:
    """Percentile-bootstrap half-widths, (q_hi - q_lo) / 2, for k1, k2, skew, kurt."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    reps = np.empty((n_boot, 4))
    for b in range(n_boot):
        k1, k2, k3, k4 = k_statistics(x[rng.integers(0, x.size, x.size)])
        if k2 > 0:
            reps[b] = (k1, k2, *_normalized(k2, k3, k4))
        else:
            reps[b] = (k1, k2, 0.0, 0.0)
    lo, hi = np.quantile(reps, [0.5 * (1 - confidence), 0.5 * (1 + confidence)], axis=0)
    return dict(zip(("k1", "k2", "skew", "kurt"), (0.5 * (hi - lo)).tolist()))


def estimate_cumulants(sample, confidence: float = 0.95, method: str = "auto",
                       n_boot: int = 1000, seed: int = 0) -> CumulantSet:
    """k-statistics, skewness k3/k2^1.5, excess kurtosis k4/k2^2 and CI half-widths.

    ``method`` is ``"delta"`` (normal asymptotics), ``"bootstrap"``, or
    ``"auto"``: delta for n >= 10^4, bootstrap below.
    """
    x = np.asarray(sample, dtype=float).ravel()
    n = x.size
    if n < 8:
        raise ValueError(f"need at least 8 observations, got {n}")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    k1, k2, k3, k4 = k_statistics(x)
    skew, kurt = _normalized(k2, k3, k4)
    if method == "auto":
        method = "delta" if n >= BOOTSTRAP_BELOW else "bootstrap"
    if method == "delta":
        mu = central_moments(x)
        hw = {s.value: ci_half_width(s, mu, n, confidence) for s in Statistic}
    elif method == "bootstrap":
        hw = bootstrap_half_widths(x, confidence, n_boot, seed)
    else:
        raise ValueError(f"unknown CI method {method!r}")
    return CumulantSet(k1, k2, k3, k4, skew, kurt, n, confidence, hw, method)


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray
    n: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def binomial_se(self) -> np.ndarray:
        """Standard error of each bin count under a multinomial model."""
        p = self.counts / self.n
        return np.sqrt(self.n * p * (1 - p))

    def to_rows(self):
        for lo, hi, c, d in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts, self.densities):
            yield float(lo), float(hi), int(c), float(d)


def _merge_sparse(edges: list[float], counts: list[int], min_count: int):
    # tails first: fold outermost bins inward
    while len(counts) > 1 and counts[0] < min_count:
        first = counts.pop(0)
        counts[0] += first
        del edges[1]
    while len(counts) > 1 and counts[-1] < min_count:
        last = counts.pop()
        counts[-1] += last
        del edges[-2]
    # interior stragglers join their smaller neighbour
    while len(counts) > 1:
        sparse = [i for i, c in enumerate(counts) if c < min_count]
        if not sparse:
            break
        i = sparse[0]
        j = i - 1 if i == len(counts) - 1 or (i > 0 and counts[i - 1] <= counts[i + 1]) else i + 1
        lo, hi = min(i, j), max(i, j)
        merged = counts.pop(hi)
        counts[lo] += merged
        del edges[hi]
    return edges, counts


def build_histogram(sample, rule="fd", min_count: int | None = 10,
                    range: tuple[float, float] | None = None) -> Histogram:
    """Normalized density histogram.

    ``rule`` is any numpy binning rule (default Freedman-Diaconis), a bin
    count, or explicit edges.  With ``min_count`` set, sparse bins are merged
    (tails inward) until every bin holds at least that many points.
    Densities are normalized by the full sample size, so with ``range``
    they integrate to the fraction of the sample inside it.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    edges = np.histogram_bin_edges(x, bins=rule, range=range)
    counts, edges = np.histogram(x, bins=edges)
    if min_count:
        e, c = _merge_sparse(edges.tolist(), counts.tolist(), min_count)
        edges, counts = np.asarray(e), np.asarray(c, dtype=np.int64)
    n = x.size
    dens = counts / (n * np.diff(edges))
    return Histogram(edges, counts, dens, n)
