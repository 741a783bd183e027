"""Exponential Ornstein-Uhlenbeck stochastic volatility: simulation, cumulants,
characteristic functions, density inversion and calibration."""

import os as _os

import numba as _numba

# prefer OpenMP / workqueue; the TBB layer warns when the installed TBB is too old
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
if "EXPOU_THREADS" in _os.environ and "NUMBA_NUM_THREADS" not in _os.environ:
    try:
        _numba.set_num_threads(min(int(_os.environ["EXPOU_THREADS"]), _numba.config.NUMBA_NUM_THREADS))
    except ValueError:
        pass

from .model import Horizon, ModelParams, ParameterError, ou_mean, ou_variance  # noqa: E402
from .mc import Dynamics, PathEnsemble, SimConfig, simulate  # noqa: E402
from .stats import CumulantSet, build_histogram, estimate_cumulants  # noqa: E402
from .edgeworth import TheoreticalCumulants, cumulants_closed_form, edgeworth_density, exponent_C  # noqa: E402
from .linear_cf import cf_linear, negative_vol_probability  # noqa: E402
from .inversion import DensityGrid, FrequencyGrid, invert_half_axis, tail_trim  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Horizon", "ModelParams", "ParameterError", "ou_mean", "ou_variance",
    "Dynamics", "PathEnsemble", "SimConfig", "simulate",
    "CumulantSet", "build_histogram", "estimate_cumulants",
    "TheoreticalCumulants", "cumulants_closed_form", "edgeworth_density", "exponent_C",
    "cf_linear", "negative_vol_probability",
    "DensityGrid", "FrequencyGrid", "invert_half_axis", "tail_trim",
]
