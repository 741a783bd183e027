import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expou.model import Horizon, ModelParams, ParameterError, load_params, ou_mean, ou_variance, save_params, validate


def test_validate_reference_set():
    p = validate({"m": 0.1, "alpha": 10, "k": 1, "rho": -0.9, "gamma": 0, "y0": 0})
    assert p.beta == pytest.approx(0.05, rel=1e-15)
    assert p.lam == pytest.approx(10.0, rel=1e-15)
    assert p.m_bar == pytest.approx(0.1, rel=1e-15)


def test_validate_zero_vol_of_vol():
    p = validate({"m": 0.1, "alpha": 10, "k": 0, "rho": 0.3})
    assert p.beta == 0 and p.lam == 0


@pytest.mark.parametrize(
    "field,value",
    [("m", -0.1), ("m", 0.0), ("alpha", 0.0), ("alpha", -1.0), ("k", -0.5), ("rho", 1.01), ("rho", -1.5),
     ("s0", 0.0), ("s0", -1.0)],
)
def test_validate_rejects(field, value):
    raw = {"m": 0.1, "alpha": 10, "k": 1, "rho": -0.9, "s0": 100.0}
    raw[field] = value
    with pytest.raises(ParameterError) as err:
        validate(raw)
    assert err.value.field == field
    assert field in str(err.value)


def test_validate_beta_input():
    p = validate({"m": 0.1, "alpha": 10, "beta": 0.05, "rho": 0})
    assert p.k == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ParameterError):
        validate({"m": 0.1, "alpha": 10, "beta": 0.05, "k": 1, "rho": 0})


def test_validate_unknown_and_missing():
    with pytest.raises(ParameterError) as err:
        validate({"m": 0.1, "alpha": 10, "k": 1, "rho": 0, "sigma": 2})
    assert err.value.field == "sigma"
    with pytest.raises(ParameterError) as err:
        validate({"m": 0.1, "alpha": 10, "k": 1})
    assert err.value.field == "rho"


def test_non_finite_rejected():
    with pytest.raises(ParameterError):
        ModelParams(m=float("nan"), alpha=1, k=1, rho=0)


def test_ou_mean_reference():
    p = ModelParams(m=0.1, alpha=10, k=1, rho=0, y0=1.0)
    assert ou_mean(p, 0.1) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert ou_mean(p, Horizon(t=1.3, t0=1.2)) == pytest.approx(0.367879441171, rel=1e-11)


def test_ou_mean_fixed_point_and_limit():
    p = ModelParams(m=0.1, alpha=3, k=1, rho=0, y0=0.4, gamma=0.4)
    assert np.allclose(ou_mean(p, np.linspace(0, 5, 11)), 0.4, rtol=0, atol=1e-15)
    q = p.replace(y0=2.0)
    assert ou_mean(q, 50.0) == pytest.approx(0.4, abs=1e-15)


def test_ou_variance_reference():
    p = ModelParams(m=0.1, alpha=10, k=1, rho=0)
    assert ou_variance(p, 0.0) == 0.0
    assert ou_variance(p, 0.1) == pytest.approx(0.05 * (1 - math.exp(-2)), rel=1e-14)
    assert ou_variance(p, 0.1) == pytest.approx(0.043233, abs=5e-7)
    assert ou_variance(p, 100.0) == pytest.approx(p.beta, rel=1e-15)


params_st = st.builds(
    ModelParams,
    m=st.floats(1e-3, 2.0),
    alpha=st.floats(1e-2, 100.0),
    k=st.floats(0.0, 5.0),
    rho=st.floats(-1.0, 1.0),
    gamma=st.floats(-2.0, 2.0),
    y0=st.floats(-2.0, 2.0),
    mu=st.floats(-1.0, 1.0),
    s0=st.floats(1e-2, 1e4),
)


@settings(max_examples=100, deadline=None)
@given(params_st)
def test_derived_quantities_exact(p):
    assert p.beta == p.k**2 / (2 * p.alpha)
    assert p.lam == p.k / p.m
    assert p.m_bar == p.m * math.exp(p.gamma)


@settings(max_examples=100, deadline=None)
@given(params_st)
def test_ou_variance_monotone_to_beta(p):
    t = np.linspace(0.0, 20.0 / p.alpha, 200)
    v = ou_variance(p, t)
    assert np.all(v >= 0)
    assert np.all(np.diff(v) >= -1e-15 * p.beta)
    assert v[-1] <= p.beta * (1 + 1e-14)
    assert ou_variance(p, 60.0 / p.alpha) == pytest.approx(p.beta, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(params_st)
def test_ou_mean_log_linear_decay(p):
    if abs(p.y0 - p.gamma) < 1e-3:
        return
    t = np.linspace(0.0, 5.0 / p.alpha, 20)
    slope = np.polyfit(t, np.log(np.abs(ou_mean(p, t) - p.gamma)), 1)[0]
    assert slope == pytest.approx(-p.alpha, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(params_st)
def test_json_roundtrip(tmp_path_factory, p):
    path = tmp_path_factory.mktemp("params") / "p.json"
    save_params(p, path)
    assert load_params(path) == p


def test_horizon_invariants():
    h = Horizon(t=2.0, t0=1.5)
    p = ModelParams(m=0.1, alpha=4, k=1, rho=0)
    assert h.zeta(p) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Horizon(t=1.0, t0=2.0)
