"""Model constants of the exponential Ornstein-Uhlenbeck volatility model.

    dX = -1/2 m^2 e^{2Y} dt + m e^{Y} dW1
    dY = alpha (gamma - Y) dt + k rho dW1 + k sqrt(1 - rho^2) dW2

with X the centered log-return, X(t0) = 0 and Y(t0) = y0.  Times are in years.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

PARAM_FIELDS = ("s0", "mu", "m", "y0", "alpha", "gamma", "k", "rho")


class ParameterError(ValueError):
    """Raised when a parameter record violates the model constraints."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ModelParams:
    m: float
    alpha: float
    k: float
    rho: float
    gamma: float = 0.0
    y0: float = 0.0
    mu: float = 0.0
    s0: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ParameterError(f.name, f"must be finite, got {v}")
        if self.m <= 0:
            raise ParameterError("m", f"volatility level must be > 0, got {self.m}")
        if self.alpha <= 0:
            raise ParameterError("alpha", f"mean-reversion rate must be > 0, got {self.alpha}")
        if self.k < 0:
            raise ParameterError("k", f"vol-of-vol must be >= 0, got {self.k}")
        if abs(self.rho) > 1:
            raise ParameterError("rho", f"correlation must lie in [-1, 1], got {self.rho}")
        if self.s0 <= 0:
            raise ParameterError("s0", f"initial price must be > 0, got {self.s0}")

    @property
    def beta(self) -> float:
        """Stationary variance of Y, k^2 / (2 alpha)."""
        return self.k**2 / (2.0 * self.alpha)

    @property
    def lam(self) -> float:
        return self.k / self.m

    @property
    def m_bar(self) -> float:
        return self.m * math.exp(self.gamma)

    @classmethod
    def from_beta(cls, m: float, alpha: float, beta: float, rho: float, **kw) -> "ModelParams":
        """Build parameters from the stationary variance instead of k."""
        if beta < 0:
            raise ParameterError("beta", f"must be >= 0, got {beta}")
        return cls(m=m, alpha=alpha, k=math.sqrt(2.0 * alpha * beta), rho=rho, **kw)

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in PARAM_FIELDS}

    def derived(self) -> dict[str, float]:
        return {"beta": self.beta, "lambda": self.lam, "m_bar": self.m_bar}


def validate(raw: Mapping[str, Any]) -> ModelParams:
    """Validate a flat parameter record and return :class:`ModelParams`.

    Accepts either ``k`` or ``beta`` (not both).  Unknown keys are rejected.
    """
    raw = dict(raw)
    allowed = set(PARAM_FIELDS) | {"beta"}
    unknown = set(raw) - allowed
    if unknown:
        raise ParameterError(sorted(unknown)[0], "unknown parameter")
    for key in ("m", "alpha", "rho"):
        if key not in raw:
            raise ParameterError(key, "missing")
    if "beta" in raw:
        if "k" in raw:
            raise ParameterError("beta", "give either k or beta, not both")
        beta = float(raw.pop("beta"))
        if beta < 0:
            raise ParameterError("beta", f"must be >= 0, got {beta}")
        alpha = float(raw["alpha"])
        if alpha <= 0:
            raise ParameterError("alpha", f"mean-reversion rate must be > 0, got {alpha}")
        raw["k"] = math.sqrt(2.0 * alpha * beta)
    if "k" not in raw:
        raise ParameterError("k", "missing")
    try:
        values = {key: float(v) for key, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise ParameterError("record", str(exc)) from None
    return ModelParams(**values)


def load_params(path: str | Path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        return validate(json.load(fh))


def save_params(params: ModelParams, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class Horizon:
    t: float
    t0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.t0)):
            raise ValueError("horizon times must be finite")
        if self.t < self.t0:
            raise ValueError(f"t={self.t} precedes t0={self.t0}")

    @property
    def elapsed(self) -> float:
        return self.t - self.t0

    def zeta(self, params: ModelParams) -> float:
        return params.alpha * self.elapsed


def _elapsed(h) -> np.ndarray | float:
    return h.elapsed if isinstance(h, Horizon) else h


def ou_mean(params: ModelParams, h: Horizon | float | np.ndarray):
    """E[Y(t)] = (y0 - gamma) e^{-alpha (t - t0)} + gamma.

    ``h`` may be a :class:`Horizon` or elapsed time(s) ``t - t0``.
    """
    dt = _elapsed(h)
    return (params.y0 - params.gamma) * np.exp(-params.alpha * dt) + params.gamma


def ou_variance(params: ModelParams, h: Horizon | float | np.ndarray):
    """Var[Y(t)] = beta (1 - e^{-2 alpha (t - t0)}); zero at t0 for the delta start."""
    dt = _elapsed(h)
    return -params.beta * np.expm1(-2.0 * params.alpha * dt)
