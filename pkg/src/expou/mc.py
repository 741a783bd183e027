"""Euler-Maruyama path ensembles for the exponential and linearized models."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np

from .model import ModelParams
from .rng import LANE_INIT, LANE_STEP, normal_pair, seed_to_uint64


class Dynamics(str, enum.Enum):
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    n_steps: int = 1000
    n_paths: int = 100_000
    seed: int = 0
    dynamics: Dynamics = Dynamics.EXPONENTIAL
    record_hidden: bool = False
    # draw Y(t0) ~ N(gamma, beta) instead of Y(t0) = y0
    stationary_start: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dynamics", Dynamics(self.dynamics))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        seed_to_uint64(self.seed)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "n_steps": self.n_steps,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "dynamics": self.dynamics.value,
            "record_hidden": self.record_hidden,
            "stationary_start": self.stationary_start,
        }


@dataclass
class PathEnsemble:
    """Centered log-returns at each checkpoint, one row per path.

    ``hidden`` holds Y (exponential) or Z (linear) at the checkpoints when
    ``record_hidden`` was requested.
    """

    x: np.ndarray
    checkpoint_times: np.ndarray
    config: SimConfig
    params: ModelParams
    hidden: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def x_final(self) -> np.ndarray:
        return self.x[:, -1]

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def at(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.checkpoint_times - t)))
        if not math.isclose(self.checkpoint_times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no checkpoint at t={t}")
        return self.x[:, idx]

    def to_csv(self, path: str | Path) -> None:
        hidden_name = "y" if self.config.dynamics is Dynamics.EXPONENTIAL else "z"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            header = ["path_id", "checkpoint_time", "x"]
            if self.hidden is not None:
                header.append(hidden_name)
            w.writerow(header)
            for i in range(self.n_paths):
                for j, t in enumerate(self.checkpoint_times):
                    row = [i, repr(float(t)), repr(float(self.x[i, j]))]
                    if self.hidden is not None:
                        row.append(repr(float(self.hidden[i, j])))
                    w.writerow(row)

    def to_npz(self, path: str | Path) -> None:
        extra = {} if self.hidden is None else {"hidden": self.hidden}
        np.savez(
            path,
            x=self.x,
            checkpoint_times=self.checkpoint_times,
            params=np.array(list(self.params.to_dict().values())),
            param_names=np.array(list(self.params.to_dict().keys())),
            **extra,
        )


def load_ensemble_x(path: str | Path, t: float | None = None) -> np.ndarray:
    """Read terminal (or time-``t``) returns back from an exported ensemble."""
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            x, times = data["x"], data["checkpoint_times"]
    else:
        rows = np.genfromtxt(path, delimiter=",", names=True)
        times = np.unique(rows["checkpoint_time"])
        n_paths = int(rows["path_id"].max()) + 1
        x = rows["x"].reshape(n_paths, len(times))
    j = len(times) - 1 if t is None else int(np.argmin(np.abs(times - t)))
    return x[:, j]


def checkpoint_steps(checkpoints: Sequence[float], dt: float, n_steps: int) -> np.ndarray:
    """Map elapsed times onto Euler step indices, rejecting off-grid times."""
    cps = np.asarray(checkpoints, dtype=float)
    if cps.ndim != 1 or cps.size == 0:
        raise ValueError("checkpoints must be a nonempty 1-d sequence")
    steps = np.rint(cps / dt)
    off = np.abs(cps / dt - steps) > 1e-9 * np.maximum(1.0, steps)
    if np.any(off) or np.any(cps < 0):
        bad = cps[off | (cps < 0)][0]
        raise ValueError(f"checkpoint {bad} is not on the grid t0 + i*{dt}")
    steps = steps.astype(np.int64)
    if np.any(np.diff(steps) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if steps[-1] > n_steps:
        raise ValueError(f"checkpoint {cps[-1]} lies beyond the simulated horizon {n_steps * dt}")
    return steps


@nb.njit(parallel=True, cache=True, error_model="numpy", fastmath={"contract", "arcp"})
def _kernel(seed, path_offset, dt, n_steps, m, alpha, gamma, k, rho, y0, beta,
            linear, stationary, ck, out_x, out_h, record_hidden):
    n_paths = out_x.shape[0]
    nck = ck.shape[0]
    sdt = math.sqrt(dt)
    rc = math.sqrt(max(0.0, 1.0 - rho * rho))
    mb = m * math.exp(gamma)
    sb = math.sqrt(beta)
    for p in nb.prange(n_paths):
        pid = np.uint64(path_offset + p)
        if stationary:
            e0, _ = normal_pair(seed, pid, np.uint64(0), LANE_INIT)
            dev = sb * e0
        else:
            dev = y0 - gamma
        # linear model state Z = Y - gamma + 1
        h = 1.0 + dev if linear else gamma + dev
        x = 0.0
        ci = 0
        while ci < nck and ck[ci] == 0:
            out_x[p, ci] = x
            if record_hidden:
                out_h[p, ci] = h
            ci += 1
        for j in range(n_steps):
            if ci >= nck:
                break
            e1, e2 = normal_pair(seed, pid, np.uint64(j), LANE_STEP)
            w2 = rho * e1 + rc * e2
            if linear:
                x += -0.5 * mb * mb * (2.0 * h - 1.0) * dt + mb * h * sdt * e1
                h += alpha * (1.0 - h) * dt + k * sdt * w2
            else:
                v = m * math.exp(h)
                x += -0.5 * v * v * dt + v * sdt * e1
                h += alpha * (gamma - h) * dt + k * sdt * w2
            while ci < nck and ck[ci] == j + 1:
                out_x[p, ci] = x
                if record_hidden:
                    out_h[p, ci] = h
                ci += 1


def simulate(
    params: ModelParams,
    cfg: SimConfig,
    checkpoints: Sequence[float] | None = None,
    *,
    path_offset: int = 0,
) -> PathEnsemble:
    """Simulate ``cfg.n_paths`` Euler-Maruyama paths.

    Path ``i`` (global index ``path_offset + i``) consumes the shocks of
    ``per_path_stream(cfg.seed, path_offset + i)``, so an ensemble can be
    built in chunks, or on any number of threads, with identical results.
    Checkpoints are elapsed times ``t - t0`` on the grid ``i * dt``.
    """
    if checkpoints is None:
        checkpoints = [cfg.horizon]
    ck = checkpoint_steps(checkpoints, cfg.dt, cfg.n_steps)
    n_run = int(ck[-1])
    out_x = np.empty((cfg.n_paths, ck.size))
    out_h = np.empty((cfg.n_paths, ck.size) if cfg.record_hidden else (1, 1))
    _kernel(
        seed_to_uint64(cfg.seed), np.uint64(path_offset), cfg.dt, n_run,
        params.m, params.alpha, params.gamma, params.k, params.rho, params.y0, params.beta,
        cfg.dynamics is Dynamics.LINEAR, cfg.stationary_start, ck, out_x, out_h, cfg.record_hidden,
    )
    if not np.all(np.isfinite(out_x)):
        raise FloatingPointError(
            "non-finite paths: parameters overflow the Euler scheme "
            f"(m={params.m}, k={params.k}, dt={cfg.dt})"
        )
    return PathEnsemble(
        x=out_x,
        checkpoint_times=ck * cfg.dt,
        config=cfg,
        params=params,
        hidden=out_h if cfg.record_hidden else None,
        meta={"scheme": "euler-maruyama", "rng": "philox4x32-10", "path_offset": path_offset},
    )
