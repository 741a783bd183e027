"""Derivative-free principal-axis minimizer for noisy, box-bounded objectives.

Each sweep runs a bounded Brent line search along every direction of an
orthonormal set.  After the sweep the set is rebuilt from the singular
vectors of the step-scaled direction matrix, so that the first direction
follows the valley the previous sweep moved along.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar


class EvaluationError(RuntimeError):
    def __init__(self, point, cause):
        super().__init__(f"objective failed at {tuple(float(v) for v in point)}: {cause}")
        self.point = tuple(float(v) for v in point)


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    n_eval: int
    n_sweeps: int
    converged: bool
    trace: list = field(default_factory=list)


def _feasible_interval(x, v, lo, hi):
    """Largest [a, b] with x + t v inside the box for t in [a, b]."""
    a, b = -np.inf, np.inf
    for xi, vi, l, h in zip(x, v, lo, hi):
        if abs(vi) < 1e-300:
            continue
        t1, t2 = (l - xi) / vi, (h - xi) / vi
        a = max(a, min(t1, t2))
        b = min(b, max(t1, t2))
    return a, b


def _line_search(f, x, v, lo, hi, width, xtol):
    """Bounded Brent search along ``v``; the window grows while the minimum sits on its edge."""
    a, b = _feasible_interval(x, v, lo, hi)
    w = width
    for _ in range(30):
        left, right = max(a, -w), min(b, w)
        if right - left < xtol:
            return 0.0
        res = minimize_scalar(lambda t: f(np.clip(x + t * v, lo, hi)), bounds=(left, right),
                              method="bounded", options={"xatol": xtol / 2})
        t = float(res.x)
        at_edge = (right < b and right - t < 2 * xtol) or (left > a and t - left < 2 * xtol)
        if not at_edge:
            return t
        w *= 4
    return t


def principal_axis_minimize(fun, x0, bounds, xtol: float = 1e-6, ftol: float = 1e-10,
                            max_sweeps: int = 50, step: float | None = None) -> OptimizeResult:
    """Minimize ``fun`` over the box ``bounds`` starting at ``x0``.

    ``step`` caps the first line-search half-width (default: a quarter of
    the smallest box side); later sweeps adapt it to the distance moved.
    Stops after two consecutive sweeps that either move less than
    ``10 * xtol`` or improve the objective by less than ``ftol`` (relative).
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    dim = x.size
    trace: list = []
    cache: dict = {}

    def f(p):
        key = tuple(p.tolist())
        if key in cache:
            return cache[key]
        try:
            val = float(fun(p))
        except Exception as exc:
            raise EvaluationError(p, exc) from exc
        if not np.isfinite(val):
            raise EvaluationError(p, f"non-finite value {val}")
        cache[key] = val
        trace.append((p.copy(), val))
        return val

    fx = f(x)
    dirs = np.eye(dim)
    width = step if step is not None else 0.25 * float(np.min(hi - lo))
    quiet = 0
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        start, f_start = x.copy(), fx
        moves = np.zeros(dim)
        drops = np.zeros(dim)
        for j in range(dim):
            v = dirs[:, j]
            t = _line_search(f, x, v, lo, hi, width, xtol)
            cand = np.clip(x + t * v, lo, hi)
            fc = f(cand)
            if fc < fx:
                moves[j] = t
                drops[j] = fx - fc
                x, fx = cand, fc
        net = x - start
        moved = float(np.linalg.norm(net))
        if moved > 0:
            # extra search along the net displacement of the sweep
            v = net / moved
            t = _line_search(f, x, v, lo, hi, moved, xtol)
            cand = np.clip(x + t * v, lo, hi)
            fc = f(cand)
            if fc < fx:
                x, fx = cand, fc
            net = x - start
            moved = float(np.linalg.norm(net))
        gained = f_start - fx
        if moved < 10 * xtol or gained <= ftol * max(1.0, abs(fx)):
            quiet += 1
            if quiet >= 2:
                converged = True
                break
        else:
            quiet = 0
        if moved > 0:
            if sweeps % (dim + 1) == 0:
                # principal axes of the step-scaled directions plus the net move
                floor = 1e-2 * moved
                cols = np.column_stack([net, dirs * np.maximum(np.abs(moves), floor)])
                dirs = np.linalg.svd(cols)[0][:, :dim]
            else:
                # the net move replaces the direction that gained most
                j = int(np.argmax(drops))
                dirs = np.column_stack([np.delete(dirs, j, axis=1), net / moved])
        width = max(4.0 * moved, 10 * xtol) if moved > 0 else max(width / 4, 10 * xtol)
    return OptimizeResult(x=x, fun=fx, n_eval=len(trace), n_sweeps=sweeps,
                          converged=converged, trace=trace)
