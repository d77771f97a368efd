import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bistoch.decay import (
    CONSTANT,
    EXPONENTIAL,
    IDENTICALLY_ZERO,
    OTHER,
    ExponentialDecayFit,
    fit_decay,
)


@given(st.floats(0.05, 0.95), st.floats(0.1, 10.0))
@settings(max_examples=50, deadline=None)
def test_geometric_series(lam, a):
    t = np.arange(25)
    fit = fit_decay(a * lam ** t)
    assert fit.classification == EXPONENTIAL
    assert fit.rate == pytest.approx(-math.log(lam), rel=1e-9)
    assert fit.residual < 1e-10
    assert fit.plateau == 0.0


def test_geometric_series_with_plateau():
    t = np.arange(160)
    fit = fit_decay(0.25 + 0.8 ** t)
    assert fit.plateau == pytest.approx(0.25, abs=1e-10)
    assert fit.classification == EXPONENTIAL
    assert fit.rate == pytest.approx(-math.log(0.8), rel=1e-3)


def test_known_plateau():
    t = np.arange(30)
    fit = fit_decay(0.1 + 0.5 * 0.9 ** t, plateau=0.1, t_min=5)
    assert fit.rate == pytest.approx(-math.log(0.9), rel=1e-9)
    assert fit.t_min == 5


def test_cnot_series_identically_zero():
    fit = fit_decay(np.r_[1.0, np.zeros(10)])
    assert fit.classification == IDENTICALLY_ZERO
    assert fit.degenerate


def test_constant_series():
    fit = fit_decay(np.r_[1.0, np.full(10, 0.5)])
    assert fit.classification == CONSTANT
    assert fit.rate == 0.0
    assert fit.plateau == 0.5


def test_noisy_series_is_other(rng):
    fit = fit_decay(np.abs(rng.normal(size=30)) + 0.01 * np.arange(30))
    assert fit.classification == OTHER


def test_short_window_is_degenerate():
    fit = fit_decay([1.0, 0.5, 1e-20, 1e-20, 3e-20])
    assert fit.degenerate and fit.classification == OTHER


def test_predict_reproduces_series():
    t = np.arange(20)
    y = 2.0 * 0.7 ** t
    est = ExponentialDecayFit().fit(y)
    assert np.allclose(est.predict(t), y)


def test_predict_requires_fit():
    with pytest.raises(NotFittedError):
        ExponentialDecayFit().predict([1, 2])


def test_params_round_trip():
    est = ExponentialDecayFit(t_min=3, max_residual=0.2)
    params = est.get_params()
    assert params["t_min"] == 3 and params["max_residual"] == 0.2
    assert clone(est).get_params() == params
    est.set_params(t_min=4)
    assert est.t_min == 4


@pytest.mark.parametrize("bad", [[1.0], np.ones((2, 2))])
def test_input_validation(bad):
    with pytest.raises(ValueError):
        ExponentialDecayFit().fit(bad)


def test_json_dict():
    out = fit_decay(0.5 ** np.arange(10)).to_json_dict()
    assert set(out) == {"rate", "plateau", "window", "residual", "class", "degenerate"}
