# Frugality, plasticity and sensitivity measurements and the combined structure constraint
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from engine.gradcheck import DEFAULT_ABS_TOL, DEFAULT_STEP, central_difference, max_relative_error
from engine.network import LossKind, Network, dense_probs, logistic, loss_and_grads
from structure.structure_mask import DEFAULT_THRESHOLD, activation_set
from utils.errors import ConfigError, DomainError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StructureWeights:
    lambda_fr: float = 0.5
    lambda_pl: float = 0.5
    lambda_se: float = 0.5
    bound_c: float = 1.0          # C
    gamma: float = 0.5            # γ
    hinge_mu: float = 1.0         # μ
    sensitivity_floor: float = 1e-8  # ε_s

    def validate(self) -> 'StructureWeights':
        for name in ('lambda_fr', 'lambda_pl', 'lambda_se', 'hinge_mu'):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ('bound_c', 'gamma', 'sensitivity_floor'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        return self

    @property
    def inactive(self) -> bool:
        return self.lambda_fr == 0 and self.lambda_pl == 0 and self.lambda_se == 0


@dataclass
class StructureLoss:
    total: float
    l1: float
    bound: float
    penalty: float
    plasticity_soft: float
    plasticity_hard: float
    sensitivity: float
    grad_logits: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def violation(self) -> float:
        return max(0.0, self.l1 - self.bound)


def frugality_bound(d: int, n_samples: int, bound_c: float, gamma: float) -> float:
    """max{C, γ·d·ln(N_i/d)}"""
    if d < 1 or n_samples < 1:
        raise PreconditionError(f"Frugality bound needs d >= 1 and N_i >= 1, got d={d}, N_i={n_samples}")
    if bound_c <= 0 or gamma <= 0:
        raise PreconditionError("Frugality constants C and γ must be positive")
    return max(bound_c, gamma * d * math.log(n_samples / d))


def owned_magnitudes(weights: Union[Network, np.ndarray], size: int,
                     owners: Optional[np.ndarray] = None) -> np.ndarray:
    """Σ |θ_p| over the parameters owned by each mask element"""
    if isinstance(weights, Network):
        owners = weights.owners()
        weights = weights.flat_params()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if owners is None:
        if weights.size != size:
            raise ShapeError(f"{weights.size} weights cannot align with {size} mask elements without owners")
        return np.abs(weights)
    owners = np.asarray(owners, dtype=np.int64).ravel()
    if owners.size != weights.size:
        raise ShapeError(f"Owner map has {owners.size} entries for {weights.size} weights")
    owned = owners >= 0
    return np.bincount(owners[owned], weights=np.abs(weights[owned]), minlength=size)[:size]


def active_dimension(weights: Union[Network, np.ndarray], active, owners: Optional[np.ndarray] = None) -> int:
    """Number of parameters owned by activated mask elements (at least 1)"""
    active = np.asarray(active).ravel().astype(bool)
    if isinstance(weights, Network):
        owners = weights.owners()
    if owners is None:
        return max(1, int(active.sum()))
    owners = np.asarray(owners, dtype=np.int64)
    owned = owners >= 0
    return max(1, int(np.sum(active[owners[owned]])))


def frugality_loss(weights: Union[Network, np.ndarray], probs, bound: float, hinge_mu: float,
                   owners: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    Masked l1 and its hinge penalty.

    Returns:
        (l1, penalty) with l1 = Σ_p prob(owner(p))·|θ_p| and penalty = μ·max(0, l1 - bound)
    """
    probs = np.asarray(probs, dtype=np.float64).ravel()
    magnitudes = owned_magnitudes(weights, probs.size, owners)
    l1 = float(np.dot(probs, magnitudes))
    penalty = hinge_mu * max(0.0, l1 - bound)
    return l1, penalty


def plasticity_loss(probs_i, probs_others: Sequence, hebbian_p,
                    threshold: float = DEFAULT_THRESHOLD) -> Tuple[float, float]:
    """
    Importance-weighted overlap of task i's units with every other task's.

    Returns:
        (soft, hard): soft = Σ_j Σ_ω probs_i·probs_j·p_ω is the differentiable surrogate,
        hard = Σ_j Σ_ω 1[both activate ω]·p_ω is the reported quantity
    """
    probs_i = np.asarray(probs_i, dtype=np.float64).ravel()
    hebbian_p = np.asarray(hebbian_p, dtype=np.float64).ravel()
    if hebbian_p.size != probs_i.size:
        raise ShapeError(f"Importance vector has {hebbian_p.size} entries, mask has {probs_i.size}")

    active_i = activation_set(probs_i, threshold)
    soft = 0.0
    hard = 0.0
    for probs_j in probs_others:
        probs_j = np.asarray(probs_j, dtype=np.float64).ravel()
        if probs_j.size != probs_i.size:
            raise ShapeError(f"Mask lengths differ: {probs_i.size} vs {probs_j.size}")
        soft += float(np.sum(probs_i * probs_j * hebbian_p))
        hard += float(np.sum(active_i * activation_set(probs_j, threshold) * hebbian_p))
    return soft, hard


def sensitivity_scores(net: Network, mask_logits: Optional[np.ndarray], inputs, targets,
                       loss_kind: LossKind) -> np.ndarray:
    """s(ω) = Σ over parameters owned by ω of |∂L/∂θ_p| at the masked parameters"""
    probs = dense_probs(net) if mask_logits is None else logistic(mask_logits)
    _, grads = loss_and_grads(net, probs, inputs, targets, loss_kind)
    return owned_magnitudes(grads.flat_weights(), net.mask_size, net.owners())


def _sensitivity_coefficients(s, floor: float) -> np.ndarray:
    """-ln((s + ε_s) / S') per unit"""
    s = np.asarray(s, dtype=np.float64).ravel()
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise DomainError("Sensitivity scores must be finite and non-negative")
    shifted = s + floor
    largest = shifted.max() if shifted.size else 0.0
    if largest <= 0:
        raise DomainError("All sensitivity scores are zero and the floor ε_s is 0")
    # scaled by the largest score so the sum cannot overflow
    scaled = shifted / largest
    ratios = scaled / scaled.sum()
    with np.errstate(divide='ignore'):
        coefficients = -np.log(ratios)
    # a zero-score unit under ε_s = 0 would be infinite; only reachable without a floor
    if not np.all(np.isfinite(coefficients)):
        raise DomainError("Sensitivity ratio of zero with ε_s = 0")
    return coefficients


def sensitivity_loss(probs, s, floor: float) -> float:
    """Σ_ω -ln((s(ω) + ε_s) / S')·probs[ω]"""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if probs.size != np.asarray(s).size:
        raise ShapeError("Sensitivity scores and mask differ in length")
    return float(np.dot(_sensitivity_coefficients(s, floor), probs))


def structure_loss(net: Network, mask_logits: np.ndarray, hebbian_p: np.ndarray,
                   other_probs: Sequence[np.ndarray], s: Optional[np.ndarray], weights: StructureWeights,
                   d: int, n_samples: int, threshold: float = DEFAULT_THRESHOLD) -> StructureLoss:
    """
    λ_fr·(l1 + hinge) + λ_pl·soft plasticity + λ_se·sensitivity, with its gradient
    with respect to the mask logits (θ, the other tasks' masks, p and s held fixed).
    """
    probs = logistic(np.asarray(mask_logits, dtype=np.float64).ravel())
    return structure_loss_from_probs(net, probs, hebbian_p, other_probs, s, weights, d, n_samples, threshold)


def structure_loss_from_probs(net: Network, probs, hebbian_p: np.ndarray,
                              other_probs: Sequence[np.ndarray], s: Optional[np.ndarray],
                              weights: StructureWeights, d: int, n_samples: int,
                              threshold: float = DEFAULT_THRESHOLD) -> StructureLoss:
    """Same terms at given probabilities; the dense mask (all ones) gets a zero logit gradient"""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    bound = frugality_bound(d, n_samples, weights.bound_c, weights.gamma)

    magnitudes = owned_magnitudes(net, probs.size)
    l1 = float(np.dot(probs, magnitudes))
    penalty = weights.hinge_mu * max(0.0, l1 - bound)
    soft, hard = plasticity_loss(probs, other_probs, hebbian_p, threshold)

    if s is None:
        coefficients = np.zeros_like(probs)
    else:
        if np.asarray(s).size != probs.size:
            raise ShapeError("Sensitivity scores and mask differ in length")
        coefficients = _sensitivity_coefficients(s, weights.sensitivity_floor)
    sensitivity = float(np.dot(coefficients, probs))

    total = (weights.lambda_fr * (l1 + penalty)
             + weights.lambda_pl * soft
             + weights.lambda_se * sensitivity)

    hinge_slope = weights.hinge_mu if l1 > bound else 0.0
    grad_probs = weights.lambda_fr * (1.0 + hinge_slope) * magnitudes + weights.lambda_se * coefficients
    if weights.lambda_pl > 0 and len(other_probs):
        others_sum = np.sum([np.asarray(p, dtype=np.float64).ravel() for p in other_probs], axis=0)
        grad_probs = grad_probs + weights.lambda_pl * others_sum * np.asarray(hebbian_p, dtype=np.float64)

    return StructureLoss(
        total=float(total), l1=l1, bound=bound, penalty=penalty,
        plasticity_soft=soft, plasticity_hard=hard, sensitivity=sensitivity,
        grad_logits=grad_probs * probs * (1.0 - probs),
    )


def structure_gradient_error(net: Network, mask_logits: np.ndarray, hebbian_p: np.ndarray,
                             other_probs: Sequence[np.ndarray], s: Optional[np.ndarray],
                             weights: StructureWeights, d: int, n_samples: int,
                             threshold: float = DEFAULT_THRESHOLD, step: float = DEFAULT_STEP,
                             abs_tol: float = DEFAULT_ABS_TOL, corrupt: bool = False) -> float:
    """Max relative error of the structure-loss logit gradient against central differences"""
    logits = np.asarray(mask_logits, dtype=np.float64).ravel()

    def total(values: np.ndarray) -> float:
        return structure_loss(net, values, hebbian_p, other_probs, s, weights, d, n_samples, threshold).total

    analytic = structure_loss(net, logits, hebbian_p, other_probs, s, weights, d, n_samples, threshold).grad_logits
    if corrupt:
        analytic = analytic * 1.5 + 1e-3
    numeric = central_difference(total, logits, step)
    return max_relative_error(analytic, numeric, abs_tol)
