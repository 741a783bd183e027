import math

import numpy as np
import pytest
from scipy import stats as sps

from expou.inversion import DensityGrid, FrequencyGrid, fft_density, gaussian_cf, invert_half_axis, tail_trim
from expou.linear_cf import cf_cumulants, cf_handle
from expou.model import ModelParams

LIN = ModelParams.from_beta(m=0.1, alpha=10.0, beta=0.01, rho=-0.9)


@pytest.fixture(scope="module")
def linear_fft():
    return fft_density(cf_handle(LIN, 1.0), FrequencyGrid(1e3, 2**18), -0.6, 0.5)


@pytest.mark.parametrize("method", ["fft", "trapezoid"])
def test_gaussian_pair(method):
    mu, sigma = 0.01, 0.1
    x = np.linspace(-0.5, 0.5, 201 if method == "trapezoid" else 2001)
    d = invert_half_axis(gaussian_cf(mu, sigma), FrequencyGrid(1e3, 2**20), x, method=method)
    ref = sps.norm.pdf(d.x, mu, sigma)
    if method == "fft":
        # linear interpolation between lattice points: compare on the lattice itself
        lat = fft_density(gaussian_cf(mu, sigma), FrequencyGrid(1e3, 2**20), -0.5, 0.5)
        assert np.max(np.abs(lat.p - sps.norm.pdf(lat.x, mu, sigma))) < 1e-8
    else:
        assert np.max(np.abs(d.p - ref)) < 1e-8


def test_fft_matches_trapezoid():
    grid = FrequencyGrid(1e3, 2**16)
    cf = cf_handle(LIN, 1.0)
    lat = fft_density(cf, grid, -0.6, 0.5)
    x = lat.x[::97]
    direct = invert_half_axis(cf, grid, x, method="trapezoid")
    assert np.max(np.abs(direct.p - lat.p[::97])) < 1e-10


def test_interpolation_exact_on_lattice():
    grid = FrequencyGrid(1e3, 2**14)
    cf = cf_handle(LIN, 1.0)
    lat = fft_density(cf, grid, -0.6, 0.5)
    again = invert_half_axis(cf, grid, lat.x, method="fft")
    assert np.allclose(again.p, lat.p, rtol=0, atol=1e-12)


def test_nyquist_error_names_bound():
    grid = FrequencyGrid(1e3, 2**10)  # x period 2 pi / (1e3 / 1024) ~ 6.43
    with pytest.raises(ValueError, match="2\\*pi/dphi"):
        invert_half_axis(gaussian_cf(0, 0.1), grid, np.linspace(-4, 4, 11))
    with pytest.raises(ValueError):
        fft_density(gaussian_cf(0, 0.1), grid, -4, 4)


@pytest.mark.parametrize("bad", [dict(phi_max=0), dict(phi_max=float("inf")), dict(n_points=1000),
                                 dict(n_points=1)])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        FrequencyGrid(**bad)


def test_bad_inputs():
    grid = FrequencyGrid(1e3, 2**10)
    with pytest.raises(ValueError):
        invert_half_axis(gaussian_cf(0, 0.1), grid, [])
    with pytest.raises(ValueError):
        invert_half_axis(gaussian_cf(0, 0.1), grid, [0.0, 0.1], method="simpson")
    with pytest.raises(ValueError):
        DensityGrid([0.0, 0.0], [1.0, 1.0], "fft")


def test_normalization(linear_fft):
    assert abs(linear_fft.mass() - 1) < 1e-4


def test_moments_match_cf_derivatives(linear_fft):
    k1, k2, _, _ = cf_cumulants(LIN, 1.0)
    m1 = linear_fft.moment(1) / linear_fft.mass()
    var = linear_fft.moment(2, center=m1) / linear_fft.mass()
    assert m1 == pytest.approx(k1, rel=1e-4)
    assert var == pytest.approx(k2, rel=1e-4)


def test_grid_refinement(linear_fft):
    fine = fft_density(cf_handle(LIN, 1.0), FrequencyGrid(1e3, 2**19), -0.6, 0.5)
    # same lattice spacing 2 pi / phi_max; halving dphi doubles the lattice length only
    n = linear_fft.x.size
    assert np.allclose(fine.x[:n], linear_fft.x, rtol=0, atol=1e-14)
    assert np.max(np.abs(fine.p[:n] - linear_fft.p)) < 1e-6


def test_default_grid_agrees_with_test_grid(linear_fft):
    ref = fft_density(cf_handle(LIN, 1.0), FrequencyGrid(), -0.6, 0.5)
    n = linear_fft.x.size
    assert np.max(np.abs(ref.p[:n] - linear_fft.p)) < 1e-6


def test_gaussian_not_trimmed():
    x = np.linspace(-0.6, 0.6, 1001)
    d = invert_half_axis(gaussian_cf(0.0, 0.1), FrequencyGrid(1e3, 2**16), x, method="trapezoid")
    out = tail_trim(d, 1e-12)
    assert out.meta["trimmed"] == 0 and not out.meta["empty"]
    assert np.array_equal(out.x, d.x)


def test_under_resolved_grid_trims_tails(linear_fft):
    coarse = fft_density(cf_handle(LIN, 1.0), FrequencyGrid(40.0, 2**10), -0.6, 0.5)
    ref = np.interp(coarse.x, linear_fft.x, linear_fft.p)
    threshold = 1e-3
    trimmed = tail_trim(coarse, threshold)
    assert trimmed.meta["trimmed"] > 0
    assert np.all(trimmed.p >= threshold)
    # the core survives and still tracks the reference
    core = ref >= 0.05 * ref.max()
    assert np.all(np.isin(coarse.x[core], trimmed.x))
    keep = np.isin(coarse.x, trimmed.x) & core
    assert np.max(np.abs(coarse.p[keep] - ref[keep]) / ref.max()) < 1e-2


def test_threshold_above_max_is_empty():
    d = DensityGrid(np.linspace(0, 1, 5), np.full(5, 0.5), "fft")
    out = tail_trim(d, 1.0)
    assert out.meta["empty"] and len(out) == 0 and out.mass() == 0.0


def test_trim_cuts_negative_ringing():
    x = np.linspace(-1, 1, 9)
    p = np.array([-1e-3, 0.2, 0.5, 0.8, 1.0, 0.7, -0.01, 0.3, 0.1])
    out = tail_trim(DensityGrid(x, p, "fft"), 0.0)
    assert np.array_equal(out.x, x[1:6])
