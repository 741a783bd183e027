"""Density of X from its characteristic function by Fourier inversion on the
half axis, with a direct trapezoidal sum and an FFT lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_CHUNK = 1 << 20


@dataclass(frozen=True)
class FrequencyGrid:
    phi_max: float = 1e3
    n_points: int = 1 << 22

    def __post_init__(self):
        if not (self.phi_max > 0 and math.isfinite(self.phi_max)):
            raise ValueError("phi_max must be positive and finite")
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 2, got {n}")

    @property
    def spacing(self) -> float:
        return self.phi_max / self.n_points

    @property
    def dx(self) -> float:
        """Spacing of the FFT output lattice."""
        return 2 * math.pi / (self.n_points * self.spacing)

    @property
    def x_period(self) -> float:
        """Span after which the discretized inversion aliases."""
        return 2 * math.pi / self.spacing

    def phi(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        stop = self.n_points if stop is None else stop
        return np.arange(start, stop) * self.spacing

    def weights(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        stop = self.n_points if stop is None else stop
        w = np.ones(stop - start)
        if start == 0:
            w[0] = 0.5
        return w


@dataclass
class DensityGrid:
    x: np.ndarray
    p: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.shape != self.p.shape:
            raise ValueError("x and p must have the same shape")
        if self.x.size > 1 and not np.all(np.diff(self.x) > 0):
            raise ValueError("x must be strictly increasing")

    def mass(self) -> float:
        if self.x.size < 2:
            return 0.0
        return float(np.trapezoid(self.p, self.x))

    def moment(self, order: int, center: float = 0.0) -> float:
        return float(np.trapezoid((self.x - center) ** order * self.p, self.x))

    def __len__(self):
        return self.x.size


def _sample_cf(cf, grid: FrequencyGrid):
    """Yield (start, weighted f) chunks over the frequency grid."""
    for start in range(0, grid.n_points, _CHUNK):
        stop = min(start + _CHUNK, grid.n_points)
        phi = grid.phi(start, stop)
        yield start, phi, np.asarray(cf(phi), dtype=complex) * grid.weights(start, stop)


def _check_span(x: np.ndarray, grid: FrequencyGrid):
    span = float(x.max() - x.min()) if x.size else 0.0
    if span >= grid.x_period:
        raise ValueError(
            f"frequency spacing too coarse: x span {span:.6g} must be below "
            f"2*pi/dphi = {grid.x_period:.6g}; increase n_points or reduce phi_max")


def _trapezoid(cf, grid: FrequencyGrid, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.size)
    xblock = max(1, (1 << 24) // min(grid.n_points, _CHUNK))
    for _, phi, fw in _sample_cf(cf, grid):
        for i in range(0, x.size, xblock):
            xs = x[i:i + xblock]
            out[i:i + xblock] += np.real(np.exp(-1j * np.outer(xs, phi)) @ fw)
    return out * grid.spacing / math.pi


def _fft_lattice(cf, grid: FrequencyGrid, x_min: float):
    n = grid.n_points
    buf = np.empty(n, dtype=complex)
    for start, phi, fw in _sample_cf(cf, grid):
        buf[start:start + phi.size] = fw * np.exp(-1j * phi * x_min)
    p = np.real(np.fft.fft(buf)) * grid.spacing / math.pi
    return x_min + np.arange(n) * grid.dx, p


def invert_half_axis(cf, grid: FrequencyGrid, x_values, method: str = "fft") -> DensityGrid:
    """``p(x) = Re int_0^phi_max e^{-i phi x} f(phi) dphi / pi`` by the trapezoid rule.

    ``method="trapezoid"`` sums directly at every requested x.
    ``method="fft"`` evaluates the same sum on the lattice
    ``x_min + j * 2 pi / phi_max`` and interpolates linearly onto
    ``x_values`` (exact at lattice points).
    """
    x = np.asarray(x_values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("x_values must be a nonempty 1-d array")
    _check_span(x, grid)
    meta = {"phi_max": grid.phi_max, "n_points": grid.n_points}
    if method == "trapezoid":
        p = _trapezoid(cf, grid, x)
    elif method == "fft":
        lat_x, lat_p = _fft_lattice(cf, grid, float(x.min()))
        p = np.interp(x, lat_x, lat_p)
        meta["dx"] = grid.dx
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(x)
    return DensityGrid(x[order], p[order], method=method, meta=meta)


def fft_density(cf, grid: FrequencyGrid, x_min: float, x_max: float) -> DensityGrid:
    """The raw FFT lattice restricted to ``[x_min, x_max]``."""
    _check_span(np.array([x_min, x_max]), grid)
    lat_x, lat_p = _fft_lattice(cf, grid, x_min)
    keep = lat_x <= x_max
    return DensityGrid(lat_x[keep], lat_p[keep], method="fft",
                       meta={"phi_max": grid.phi_max, "n_points": grid.n_points, "dx": grid.dx})


def tail_trim(density: DensityGrid, threshold: float, floor: float = 0.0) -> DensityGrid:
    """Keep the contiguous region around the mode where ``p >= threshold``.

    Tails where the density drops below ``threshold`` (including negative
    ringing below ``-floor``) are cut.  If nothing survives the result is
    empty with ``meta["empty"] = True``.
    """
    p = density.p
    meta = dict(density.meta, threshold=threshold)
    if p.size == 0 or not np.max(p) >= threshold:
        meta["empty"] = True
        return DensityGrid(np.empty(0), np.empty(0), density.method, meta)
    mode = int(np.argmax(p))
    ok = p >= max(threshold, -floor)
    lo = mode
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = mode
    while hi < p.size - 1 and ok[hi + 1]:
        hi += 1
    meta["empty"] = False
    meta["trimmed"] = int(p.size - (hi - lo + 1))
    return DensityGrid(density.x[lo:hi + 1], p[lo:hi + 1], density.method, meta)


def gaussian_cf(mu: float, sigma: float):
    def f(phi):
        phi = np.asarray(phi, dtype=float)
        return np.exp(1j * phi * mu - 0.5 * sigma**2 * phi**2)

    return f
