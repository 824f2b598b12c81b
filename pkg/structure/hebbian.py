# Hebbian importance tracking for the plasticity measurement
import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from utils.errors import DomainError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class HebbianTracker:
    """
    Running per-unit importance L_ω assessed on historical tasks.

    Importances are an exponential moving average of observed loss impact:
    activated units move toward their latest impact at rate `decay`,
    inactive units decay toward 0 at the same rate.
    """
    importance: np.ndarray
    decay: float = 0.1          # ρ_heb
    temperature: float = 1.0    # β_heb

    def __post_init__(self):
        self.importance = np.asarray(self.importance, dtype=np.float64).ravel()
        if not 0.0 <= self.decay <= 1.0:
            raise DomainError(f"Hebbian decay must lie in [0, 1], got {self.decay}")
        if self.temperature <= 0:
            raise DomainError(f"Hebbian temperature must be positive, got {self.temperature}")
        if not np.all(np.isfinite(self.importance)) or np.any(self.importance < 0):
            raise DomainError("Importances must be finite and non-negative")

    @classmethod
    def initialize(cls, size: int, decay: float, temperature: float) -> 'HebbianTracker':
        return cls(np.zeros(size), decay, temperature)

    def __len__(self) -> int:
        return self.importance.size

    def to_dict(self) -> Dict:
        return {'importance': self.importance.tolist(), 'decay': self.decay, 'temperature': self.temperature}

    @classmethod
    def from_dict(cls, data: Dict) -> 'HebbianTracker':
        return cls(np.asarray(data['importance'], dtype=np.float64), float(data['decay']),
                   float(data['temperature']))


def hebbian_probs(tracker: HebbianTracker) -> np.ndarray:
    """p_ω = softmax(β_heb · L)_ω with max-subtraction"""
    if len(tracker) == 0:
        raise PreconditionError("Hebbian tracker is empty")
    scaled = tracker.temperature * tracker.importance
    weights = np.exp(scaled - scaled.max())
    return weights / weights.sum()


def update_tracker(tracker: HebbianTracker, active, impacts) -> HebbianTracker:
    """EMA update toward the latest impacts for activated units, decay for the rest"""
    active = np.asarray(active).ravel().astype(bool)
    impacts = np.asarray(impacts, dtype=np.float64).ravel()
    if active.size != len(tracker) or impacts.size != len(tracker):
        raise ShapeError(
            f"Tracker has {len(tracker)} units, got {active.size} activations and {impacts.size} impacts"
        )
    if np.any(impacts < 0) or not np.all(np.isfinite(impacts)):
        raise DomainError("Impacts must be finite and non-negative")

    rate = tracker.decay
    target = np.where(active, impacts, 0.0)
    importance = (1.0 - rate) * tracker.importance + rate * target
    return HebbianTracker(importance, tracker.decay, tracker.temperature)
