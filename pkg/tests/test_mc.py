import hashlib
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate

from expou.mc import Dynamics, SimConfig, checkpoint_steps, load_ensemble_x, simulate
from expou.model import ModelParams, ou_mean, ou_variance
from expou.edgeworth import cumulants_closed_form
from expou.stats import estimate_cumulants


def small_cfg(**kw):
    base = dict(dt=1e-2, n_steps=100, n_paths=2000, seed=5)
    base.update(kw)
    return SimConfig(**base)


def test_zero_vol_of_vol_is_brownian():
    p = ModelParams(m=0.2, alpha=10, k=0, rho=-0.5)
    n = 200_000
    ens = simulate(p, SimConfig(dt=0.05, n_steps=20, n_paths=n, seed=1, record_hidden=True))
    x = ens.x_final
    assert np.all(ens.hidden == 0.0)
    t = 1.0
    assert abs(x.mean() + 0.5 * p.m**2 * t) < 4 * p.m * np.sqrt(t / n)
    assert abs(x.var() / (p.m**2 * t) - 1) < 4 * np.sqrt(2 / n)


def test_same_seed_bit_identical():
    p = ModelParams.from_beta(0.1, 10, 0.02, -0.9)
    a = simulate(p, small_cfg())
    b = simulate(p, small_cfg())
    assert a.x.tobytes() == b.x.tobytes()


def test_different_seed_differs():
    p = ModelParams.from_beta(0.1, 10, 0.02, -0.9)
    a = simulate(p, small_cfg(seed=1)).x_final
    b = simulate(p, small_cfg(seed=2)).x_final
    assert np.all(a != b)


def test_chunked_equals_whole():
    p = ModelParams.from_beta(0.1, 10, 0.02, -0.9)
    whole = simulate(p, small_cfg(n_paths=1000)).x
    parts = [simulate(p, small_cfg(n_paths=n), path_offset=o).x for o, n in [(0, 333), (333, 500), (833, 167)]]
    assert np.vstack(parts).tobytes() == whole.tobytes()


_THREAD_SCRIPT = """
import hashlib, numba
from expou.mc import SimConfig, simulate
from expou.model import ModelParams
p = ModelParams.from_beta(0.1, 10, 0.05, -0.9)
e = simulate(p, SimConfig(dt=1e-2, n_steps=100, n_paths=5000, seed=9, record_hidden=True), [0.5, 1.0])
print(numba.get_num_threads(), hashlib.sha256(e.x.tobytes() + e.hidden.tobytes()).hexdigest())
"""


def test_independent_of_thread_count():
    out = {}
    for n in (1, 4):
        env = dict(os.environ, NUMBA_NUM_THREADS=str(n))
        env.pop("EXPOU_THREADS", None)
        res = subprocess.run([sys.executable, "-c", _THREAD_SCRIPT], env=env, capture_output=True, text=True,
                             check=True)
        threads, digest = res.stdout.split()
        assert int(threads) == n
        out[n] = digest
    assert out[1] == out[4]


def test_correlated_drivers():
    # after one step from y0 = gamma = 0: X = -m^2 dt / 2 + m sqrt(dt) e1, Y = k sqrt(dt) (rho e1 + ...)
    rho = -0.7
    p = ModelParams(m=0.1, alpha=5, k=1, rho=rho)
    ens = simulate(p, SimConfig(dt=1e-3, n_steps=1, n_paths=1_000_000, seed=3, record_hidden=True))
    r = np.corrcoef(ens.x_final, ens.hidden[:, -1])[0, 1]
    assert abs(r - rho) < 4e-3


def test_hidden_state_matches_ou_moments():
    p = ModelParams(m=0.1, alpha=10, k=np.sqrt(2 * 10 * 0.05), rho=-0.9, y0=0.5)
    n = 100_000
    times = [0.05, 0.1, 0.3, 1.0]
    ens = simulate(p, SimConfig(dt=1e-3, n_steps=1000, n_paths=n, seed=4, record_hidden=True), times)
    for j, t in enumerate(times):
        y = ens.hidden[:, j]
        mean, var = ou_mean(p, t), ou_variance(p, t)
        assert abs(y.mean() - mean) < 4 * np.sqrt(var / n)
        assert abs(y.var() - var) < 4 * var * np.sqrt(2 / n)


def test_linear_initial_state_and_checkpoint_zero():
    p = ModelParams(m=0.1, alpha=10, k=0.4, rho=0.0, y0=0.3, gamma=0.1)
    ens = simulate(p, small_cfg(dynamics="linear", record_hidden=True), [0.0, 0.5])
    assert np.all(ens.x[:, 0] == 0.0)
    assert np.allclose(ens.hidden[:, 0], 0.3 - 0.1 + 1.0, rtol=0, atol=1e-15)
    assert ens.config.dynamics is Dynamics.LINEAR


def test_mc_variance_halves_with_double_paths():
    p = ModelParams.from_beta(0.1, 10, 0.02, -0.9)
    n, reps = 2000, 64
    k2 = {}
    for size, offset in [(n, 0), (2 * n, reps * n)]:
        vals = []
        for r in range(reps):
            x = simulate(p, small_cfg(n_paths=size), path_offset=offset + r * size).x_final
            vals.append(x.var(ddof=1))
        k2[size] = np.var(vals, ddof=1)
    ratio = k2[n] / k2[2 * n]
    # F(63, 63) two-sided 99% band around 2
    assert 2 * 0.52 < ratio < 2 * 1.92


@pytest.mark.parametrize(
    "cps,msg",
    [([0.105], "grid"), ([0.5, 0.3], "increasing"), ([2.0], "beyond"), ([-0.1], "grid"), ([], "nonempty")],
)
def test_checkpoint_errors(cps, msg):
    with pytest.raises(ValueError, match=msg):
        checkpoint_steps(cps, 0.01, 100)


def test_config_validation():
    for bad in [dict(dt=0), dict(dt=-1), dict(n_steps=0), dict(n_paths=0), dict(seed=-1), dict(dynamics="milstein")]:
        with pytest.raises(ValueError):
            small_cfg(**bad)


def test_non_finite_rejected():
    p = ModelParams(m=1.0, alpha=0.1, k=2000.0, rho=0.9)
    with pytest.raises(FloatingPointError):
        simulate(p, small_cfg(n_paths=50))


def test_export_roundtrip(tmp_path):
    p = ModelParams.from_beta(0.1, 10, 0.02, -0.9)
    ens = simulate(p, small_cfg(n_paths=20, record_hidden=True), [0.5, 1.0])
    ens.to_csv(tmp_path / "e.csv")
    ens.to_npz(tmp_path / "e.npz")
    for name in ("e.csv", "e.npz"):
        assert np.array_equal(load_ensemble_x(tmp_path / name), ens.x_final)
        assert np.array_equal(load_ensemble_x(tmp_path / name, 0.5), ens.at(0.5))
    header = (tmp_path / "e.csv").read_text().splitlines()[0]
    assert header == "path_id,checkpoint_time,x,y"


def test_exponential_short_horizon_cumulants():
    # at beta = 2% the skewness of a 0.1 yr return is clearly negative for rho = -0.9
    p = ModelParams.from_beta(0.1, 10, 0.02, -0.9)
    x = simulate(p, SimConfig(dt=1e-3, n_steps=100, n_paths=200_000, seed=8)).x_final
    cs = estimate_cumulants(x, method="delta")
    assert cs.skew + cs.half_widths["skew"] < 0
    # exact mean: E[X] = -m^2/2 int E[e^{2Y}] ds with E[e^{2Y}] = exp(2 Var Y) for y0 = gamma = 0
    k1 = -0.5 * p.m**2 * integrate.quad(lambda s: np.exp(2 * ou_variance(p, s)), 0, 0.1)[0]
    assert abs(cs.k1 - k1) < 4 * cs.half_widths["k1"] / 1.96
    assert cumulants_closed_form(p, 0.1).k2 == pytest.approx(cs.k2, rel=0.05)
