import numpy as np
import pytest

from mvcons.gradcheck import PASS_THRESHOLD, REL_ERR_FLOOR, gradcheck, relative_error, run_gradient_suite
from mvcons.tensor import Function, Tensor


class WrongSquare(Function):
    """x**2 with a deliberately wrong derivative."""

    def forward(self, x):
        return x * x

    def backward(self, grad):
        (x,) = self.inputs
        return (grad * 3.0 * x.data,)


def test_relative_error_floor_protects_tiny_gradients():
    err = relative_error(np.array([1e-12, 2.0]), np.array([-1e-12, 2.0 + 2e-6]))
    assert err[0] < 1e-9
    assert np.isclose(err[1], 1e-6, rtol=1e-3)


def test_relative_error_is_absolute_below_floor():
    # both entries under the floor: error is |a - n| / REL_ERR_FLOOR
    err = relative_error(np.array([1e-3, 5e-3]), np.array([1e-3 + 5e-7, 5e-3 + 2e-6]))
    assert err[0] == pytest.approx(5e-7 / REL_ERR_FLOOR)
    assert err[0] < PASS_THRESHOLD <= err[1]


def test_gradcheck_flags_a_wrong_backward(f64, rng):
    x = Tensor(rng.uniform(0.5, 1.5, size=5), requires_grad=True)
    assert gradcheck(lambda: WrongSquare.apply(x).sum(), [x]) > 0.1


def test_gradcheck_passes_a_correct_backward(f64, rng):
    x = Tensor(rng.uniform(0.5, 1.5, size=5), requires_grad=True)
    assert gradcheck(lambda: (x * x).sum(), [x]) < PASS_THRESHOLD


def test_suite_covers_every_primitive_and_passes():
    results = run_gradient_suite(seed=0)
    names = {r.name for r in results}
    assert {"conv2d", "conv2d_depthwise_stride2", "linear", "layer_norm", "gelu", "relu",
            "softmax_lastaxis", "log_softmax_lastaxis", "encoder_head_combined_loss", "tsne_kl"} <= names
    failing = {r.name: r.max_rel_error for r in results if not r.passed}
    assert not failing
