"""Counter-based random streams for Monte Carlo paths.

Every Gaussian shock is a pure function of ``(seed, path, step, lane)``:
Philox4x32-10 is keyed by the 64-bit seed and fed the counter
``(step, path_lo, path_hi, lane)``.  One Philox block yields four 32-bit
words, i.e. two 53-bit uniforms on (0, 1), mapped to normals by the inverse
CDF (Wichura's AS241).  That pair is exactly the ``(eps1, eps2)`` an Euler
step consumes.  Results therefore never
depend on how paths are distributed over threads.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint32(0x9E3779B9)
PHILOX_W1 = np.uint32(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)

# lane 0: per-step shocks, lane 1: initial-state draws
LANE_STEP = 0
LANE_INIT = 1

_INV_2_53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, inline="always", error_model="numpy", fastmath={"contract", "arcp"})
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds. All arguments are uint32."""
    for _ in range(10):
        p0 = PHILOX_M0 * np.uint64(c0)
        p1 = PHILOX_M1 * np.uint64(c2)
        hi0 = np.uint32(p0 >> np.uint64(32))
        lo0 = np.uint32(p0 & MASK32)
        hi1 = np.uint32(p1 >> np.uint64(32))
        lo1 = np.uint32(p1 & MASK32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + PHILOX_W0)
        k1 = np.uint32(k1 + PHILOX_W1)
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always", error_model="numpy", fastmath={"contract", "arcp"})
def ndtri(p):
    """Inverse standard normal CDF, AS241 (PPND16), relative error ~1e-16."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                  + 45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                  + 21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
                  + 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                  + 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
                  + 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
                  + 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    x = num / den
    return -x if q < 0 else x
@nb.njit(cache=True, inline="always", error_model="numpy", fastmath={"contract", "arcp"})
def normal_pair(seed, path, step, lane):
    """Two independent N(0, 1) draws for ``(seed, path, step, lane)``."""
    k0 = np.uint32(seed & np.uint64(0xFFFFFFFF))
    k1 = np.uint32(seed >> np.uint64(32))
    r0, r1, r2, r3 = philox4x32(
        np.uint32(step),
        np.uint32(path & np.uint64(0xFFFFFFFF)),
        np.uint32(path >> np.uint64(32)),
        np.uint32(lane),
        k0,
        k1,
    )
    a = (np.uint64(r0) >> np.uint64(5)) * np.uint64(67108864) + (np.uint64(r1) >> np.uint64(6))
    b = (np.uint64(r2) >> np.uint64(5)) * np.uint64(67108864) + (np.uint64(r3) >> np.uint64(6))
    return ndtri((float(a) + 0.5) * _INV_2_53), ndtri((float(b) + 0.5) * _INV_2_53)


@nb.njit(cache=True, error_model="numpy", fastmath={"contract", "arcp"})
def _philox_block(counter, key):
    r = philox4x32(
        np.uint32(counter[0]), np.uint32(counter[1]), np.uint32(counter[2]), np.uint32(counter[3]),
        np.uint32(key[0]), np.uint32(key[1]),
    )
    out = np.empty(4, dtype=np.uint32)
    out[0], out[1], out[2], out[3] = r
    return out


def philox_block(counter, key) -> np.ndarray:
    """Raw Philox4x32-10 block; exposed for known-answer tests."""
    return _philox_block(np.asarray(counter, dtype=np.uint32), np.asarray(key, dtype=np.uint32))


@nb.njit(cache=True, error_model="numpy", fastmath={"contract", "arcp"})
def _fill_pairs(seed, path, start, n, lane, out):
    for i in range(n):
        e1, e2 = normal_pair(seed, path, np.uint64(start + i), lane)
        out[i, 0] = e1
        out[i, 1] = e2


def seed_to_uint64(seed: int) -> np.uint64:
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint64(int(seed))


class PathStream:
    """The shock sequence seen by a single path.

    ``stream.normals(n)`` returns an ``(n, 2)`` array whose row ``j`` is the
    pair ``(eps1, eps2)`` used by the simulator at Euler step ``j``.
    """

    def __init__(self, seed: int, path_index: int, lane: int = LANE_STEP):
        if path_index < 0:
            raise ValueError("path_index must be nonnegative")
        self.seed = int(seed)
        self.path_index = int(path_index)
        self.lane = int(lane)
        self._pos = 0

    def normals(self, n: int) -> np.ndarray:
        out = np.empty((n, 2))
        _fill_pairs(seed_to_uint64(self.seed), np.uint64(self.path_index), self._pos, n, self.lane, out)
        self._pos += n
        return out

    def reset(self) -> None:
        self._pos = 0


def per_path_stream(seed: int, path_index: int) -> PathStream:
    return PathStream(seed, path_index)
