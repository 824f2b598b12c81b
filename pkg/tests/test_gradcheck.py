import numpy as np
import pytest

from engine.gradcheck import (
    MAX_CHECKED_PARAMS,
    central_difference,
    finite_diff_check,
    gradient_errors,
    max_relative_error,
    relative_errors,
)
from engine.network import Activation, LossKind, build_network
from utils.errors import PreconditionError


def test_square_function():
    point = np.array([3.0])
    numeric = central_difference(lambda theta: float(theta[0] ** 2), point, 1e-5)
    assert abs(numeric[0] - 6.0) < 1e-8


def test_constant_function_has_zero_error():
    numeric = central_difference(lambda theta: 4.2, np.array([1.0, -2.0, 0.5]), 1e-5)
    assert max_relative_error(np.zeros(3), numeric) == 0.0


def test_relative_error_formula():
    errors = relative_errors(np.array([1.0]), np.array([1.1]))
    assert errors[0] == pytest.approx(0.1 / (2.1 + 1e-12))


def test_absolute_floor_zeroes_rounding_noise():
    errors = relative_errors(np.array([1e-14]), np.array([-1e-14]), abs_tol=1e-10)
    assert errors[0] == 0.0


def test_linear_model_passes(linear_net):
    error = finite_diff_check(linear_net(3.0, 0.5), None, [[1.0], [2.0]], [[0.0], [1.0]], LossKind.REGRESSION)
    assert error < 1e-5


@pytest.mark.parametrize('step', [0.0, -1e-5, 0.1])
def test_step_outside_range(linear_net, step):
    with pytest.raises(PreconditionError):
        finite_diff_check(linear_net(1.0), None, [[1.0]], [[0.0]], LossKind.REGRESSION, step=step)


def test_parameter_limit(rng):
    net = build_network([200, 60, 1], Activation.TANH, rng)
    assert net.n_params > MAX_CHECKED_PARAMS
    with pytest.raises(PreconditionError):
        finite_diff_check(net, None, rng.normal(size=(1, 200)), [[0.0]], LossKind.REGRESSION)


def test_corrupted_gradient_is_caught(rng, random_net):
    net = random_net(rng, [2, 3, 1])
    inputs = rng.normal(size=(4, 2))
    targets = rng.normal(size=(4, 1))
    logits = rng.normal(size=net.mask_size)
    honest = gradient_errors(net, logits, inputs, targets, LossKind.REGRESSION)
    corrupted = gradient_errors(net, logits, inputs, targets, LossKind.REGRESSION, corrupt=True)
    assert honest['weights'] < 1e-5
    assert corrupted['weights'] > 1e-2
