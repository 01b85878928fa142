import math

import numpy as np
import pytest

from mvcons.errors import ConfigurationError, NonFiniteGradientError
from mvcons.optim import OptimizerState, StepDecaySchedule, adam_step
from mvcons.tensor import Tensor


def scalar_adam_trace(p, g, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    m = v = 0.0
    trace = []
    for t in range(1, steps + 1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        p -= lr * (m / (1 - beta1 ** t)) / (math.sqrt(v / (1 - beta2 ** t)) + eps)
        trace.append(p)
    return trace


def test_zero_gradient_without_decay_is_a_no_op(f64):
    params = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
    params["w"].grad = np.zeros(2)
    adam_step(params, OptimizerState.for_params(params), lr=0.1, weight_decay=0.0)
    np.testing.assert_array_equal(params["w"].data, [1.0, -2.0])


def test_matches_scalar_reference_trace(f64):
    p = Tensor(np.array([0.5]), requires_grad=True)
    params = {"p": p}
    state = OptimizerState.for_params(params)
    expected = scalar_adam_trace(0.5, 0.3, lr=1e-3, steps=5)
    for value in expected:
        p.grad = np.array([0.3])
        adam_step(params, state, lr=1e-3, weight_decay=0.0)
        assert p.data[0] == pytest.approx(value, abs=1e-10)
    assert state.step == 5


def test_weight_decay_shrinks_magnitude(f64):
    params = {"w": Tensor(np.array([1.0, -1.0]), requires_grad=True)}
    adam_step(params, OptimizerState.for_params(params), lr=1e-3, weight_decay=1e-4)
    assert np.all(np.abs(params["w"].data) < 1.0)


def test_gradients_are_cleared_after_step(f64):
    params = {"w": Tensor(np.ones(3), requires_grad=True)}
    params["w"].grad = np.ones(3)
    adam_step(params, OptimizerState.for_params(params), lr=1e-3, weight_decay=0.0)
    assert params["w"].grad is None


def test_nan_gradient_aborts_without_touching_parameters(f64):
    params = {"a": Tensor(np.ones(2), requires_grad=True), "b": Tensor(np.ones(2), requires_grad=True)}
    params["a"].grad = np.ones(2)
    params["b"].grad = np.array([0.0, np.nan])
    state = OptimizerState.for_params(params)
    with pytest.raises(NonFiniteGradientError, match="parameter b"):
        adam_step(params, state, lr=1e-3, weight_decay=0.0)
    np.testing.assert_array_equal(params["a"].data, [1.0, 1.0])
    assert state.step == 0


def test_moments_keep_parameter_shapes(f64):
    params = {"w": Tensor(np.ones((2, 3)), requires_grad=True)}
    params["w"].grad = np.ones((2, 3))
    state = adam_step(params, OptimizerState.for_params(params), lr=1e-3, weight_decay=0.0)
    assert state.m["w"].shape == state.v["w"].shape == (2, 3)


def test_step_decay_schedule():
    schedule = StepDecaySchedule(1e-4)
    assert schedule.lr_at(0) == 1e-4
    assert schedule.lr_at(14) == 1e-4
    assert schedule.lr_at(15) == pytest.approx(1e-5)
    assert schedule.lr_at(31) == pytest.approx(1e-6)
    with pytest.raises(ConfigurationError):
        StepDecaySchedule(1e-4, step_epochs=0)
