import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pepforge.core.errors import RangeError, TrainingDivergenceError
from pepforge.core.layers import ModelParams
from pepforge.core.optim import Adam, adam_step


def _scalar_params(value=1.0):
    P = ModelParams()
    P.add("w", np.array([value]))
    return P


def test_first_step_matches_hand_computation():
    param = np.array([1.0])
    m, v = np.zeros(1), np.zeros(1)
    adam_step(param, np.array([0.5]), m, v, lr=0.1, betas=(0.9, 0.999), eps=1e-8, step=1)
    # m_hat = 0.5, v_hat = 0.25: the update is lr * 0.5 / (0.5 + eps)
    assert m[0] == pytest.approx(0.05)
    assert v[0] == pytest.approx(0.00025)
    assert param[0] == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-15)
    assert param[0] == pytest.approx(0.9, abs=1e-7)


def test_second_step_uses_bias_corrected_moments():
    P = _scalar_params()
    opt = Adam(P, lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    for g in (0.5, -1.0):
        P["w"].grad = np.array([g])
        opt.step()
    m = 0.9 * 0.05 + 0.1 * -1.0
    v = 0.999 * 0.00025 + 0.001 * 1.0
    second = 0.1 * (m / (1 - 0.9**2)) / (math.sqrt(v / (1 - 0.999**2)) + 1e-8)
    first = 0.1 * 0.5 / (0.5 + 1e-8)
    assert opt.step_count == 2
    assert P["w"].data[0] == pytest.approx(1.0 - first - second, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10.0, 10.0), st.integers(1, 50))
def test_zero_gradient_is_a_fixed_point(value, step):
    param = np.array([value, -value])
    m, v = np.zeros(2), np.zeros(2)
    adam_step(param, np.zeros(2), m, v, lr=0.01, betas=(0.9, 0.999), eps=1e-8, step=step)
    assert np.array_equal(param, [value, -value])


def test_untouched_parameters_do_not_move():
    P = _scalar_params(2.5)
    opt = Adam(P)
    opt.step()
    opt.step()
    assert P["w"].data[0] == 2.5


def test_non_finite_gradient_raises_and_leaves_parameters():
    P = _scalar_params()
    P.add("b", np.zeros(3))
    opt = Adam(P, lr=0.1)
    P["w"].grad = np.array([0.5])
    P["b"].grad = np.array([0.0, np.nan, 1.0])
    with pytest.raises(TrainingDivergenceError):
        opt.step()
    assert P["w"].data[0] == 1.0
    assert opt.step_count == 0

    with pytest.raises(TrainingDivergenceError):
        adam_step(np.zeros(1), np.array([np.inf]), np.zeros(1), np.zeros(1), 0.1, (0.9, 0.999), 1e-8, 1)
    with pytest.raises(RangeError):
        adam_step(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), 0.1, (0.9, 0.999), 1e-8, 0)
