# Structure package initialization
from .structure_mask import StructureMask, activation_set, mask_probs
from .hebbian import HebbianTracker, hebbian_probs, update_tracker
from .constraints import (
    active_dimension,
    owned_magnitudes,
    StructureLoss,
    StructureWeights,
    frugality_bound,
    frugality_loss,
    plasticity_loss,
    sensitivity_loss,
    sensitivity_scores,
    structure_loss,
    structure_gradient_error,
    structure_loss_from_probs,
)

__all__ = [
    'StructureMask', 'activation_set', 'mask_probs',
    'HebbianTracker', 'hebbian_probs', 'update_tracker',
    'StructureLoss', 'StructureWeights', 'frugality_bound', 'frugality_loss', 'plasticity_loss',
    'sensitivity_loss', 'sensitivity_scores', 'structure_loss', 'structure_loss_from_probs',
    'structure_gradient_error', 'active_dimension', 'owned_magnitudes',
]
