# Finite-difference verification of the analytic gradients
import logging
from typing import Callable, Dict, Optional

import numpy as np

from engine.network import LossKind, Network, dense_probs, evaluate_loss, logistic, loss_and_grads
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)

MAX_CHECKED_PARAMS = 10_000
DEFAULT_STEP = 1e-5
# rounding floor of a double-precision central difference at the default step
DEFAULT_ABS_TOL = 1e-10


def central_difference(fn: Callable[[np.ndarray], float], point: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector"""
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(point)
    for index in range(point.size):
        shifted = point.copy()
        shifted[index] = point[index] + step
        upper = fn(shifted)
        shifted[index] = point[index] - step
        lower = fn(shifted)
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, abs_tol: float = 0.0) -> np.ndarray:
    """|a - c| / (|a| + |c| + 1e-12), zeroed where |a - c| <= abs_tol"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    errors = diff / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    if abs_tol > 0:
        errors = np.where(diff <= abs_tol, 0.0, errors)
    return errors


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, abs_tol: float = 0.0) -> float:
    errors = relative_errors(analytic, numeric, abs_tol)
    return float(errors.max()) if errors.size else 0.0


def _validate(net: Network, step: float):
    if not 0.0 < step <= 1e-2:
        raise PreconditionError(f"Finite-difference step must lie in (0, 1e-2], got {step}")
    if net.n_params > MAX_CHECKED_PARAMS:
        raise PreconditionError(
            f"Network has {net.n_params} parameters; finite differences are limited to {MAX_CHECKED_PARAMS}"
        )


def gradient_errors(net: Network, mask_logits: Optional[np.ndarray], inputs, targets,
                    loss_kind: LossKind, step: float = DEFAULT_STEP,
                    abs_tol: float = DEFAULT_ABS_TOL, corrupt: bool = False) -> Dict[str, float]:
    """
    Max relative error of the weight-loss gradients, split by parameter group.

    Args:
        mask_logits: logits producing the mask; None checks the dense network only
        corrupt: perturb the analytic gradient (negative control for the checker)

    Returns:
        dict with 'weights' and 'mask_logits' maximum relative errors
    """
    _validate(net, step)
    if mask_logits is None:
        logits = None
        probs = dense_probs(net)
    else:
        logits = np.asarray(mask_logits, dtype=np.float64).ravel()
        probs = logistic(logits)

    _, grads = loss_and_grads(net, probs, inputs, targets, loss_kind)
    analytic_weights = grads.flat_weights()
    analytic_mask = grads.mask_logits.copy()
    if corrupt:
        analytic_weights = analytic_weights * 1.5 + 1e-3

    flat = net.flat_params()
    numeric_weights = central_difference(
        lambda params: evaluate_loss(net.with_flat_params(params), probs, inputs, targets, loss_kind),
        flat, step,
    )
    report = {'weights': max_relative_error(analytic_weights, numeric_weights, abs_tol), 'mask_logits': 0.0}

    if logits is not None and logits.size:
        numeric_mask = central_difference(
            lambda values: evaluate_loss(net, logistic(values), inputs, targets, loss_kind),
            logits, step,
        )
        report['mask_logits'] = max_relative_error(analytic_mask, numeric_mask, abs_tol)

    logger.debug(f"Gradient check: weights={report['weights']:.3e}, mask={report['mask_logits']:.3e}")
    return report


def finite_diff_check(net: Network, mask_logits: Optional[np.ndarray], inputs, targets,
                      loss_kind: LossKind, step: float = DEFAULT_STEP,
                      abs_tol: float = DEFAULT_ABS_TOL) -> float:
    """Max relative error over all parameters and mask logits"""
    report = gradient_errors(net, mask_logits, inputs, targets, loss_kind, step, abs_tol)
    return max(report.values())
