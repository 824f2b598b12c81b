# Learnable structure mask: logits, activation probabilities and activation sets
import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from engine.network import Granularity, logistic
from utils.errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


def mask_probs(logits) -> np.ndarray:
    """Elementwise logistic of the mask logits, strictly inside (0, 1) for finite logits"""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise DomainError("Mask logits must be finite")
    return logistic(logits)


def activation_set(probs, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """1 where the unit's probability exceeds the threshold (strictly), else 0"""
    return (np.asarray(probs, dtype=np.float64) > threshold).astype(np.int64)


@dataclass
class StructureMask:
    logits: np.ndarray
    threshold: float = DEFAULT_THRESHOLD
    granularity: Granularity = Granularity.PER_UNIT

    @classmethod
    def initialize(cls, size: int, init_logit: float, threshold: float = DEFAULT_THRESHOLD,
                   granularity: Granularity = Granularity.PER_UNIT) -> 'StructureMask':
        return cls(np.full(size, float(init_logit)), threshold, granularity)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.logits)):
            raise DomainError("Mask logits must be finite")
        if not 0.0 < self.threshold < 1.0:
            raise DomainError(f"Activation threshold must lie in (0, 1), got {self.threshold}")

    @property
    def size(self) -> int:
        return self.logits.size

    def probs(self) -> np.ndarray:
        return mask_probs(self.logits)

    def active(self) -> np.ndarray:
        return activation_set(self.probs(), self.threshold)

    def density(self) -> float:
        """Mean activation probability"""
        return float(np.mean(self.probs())) if self.size else 1.0

    def with_logits(self, logits: np.ndarray) -> 'StructureMask':
        return StructureMask(np.array(logits, dtype=np.float64), self.threshold, self.granularity)

    def to_dict(self) -> Dict:
        return {
            'logits': self.logits.tolist(),
            'threshold': self.threshold,
            'granularity': self.granularity.value,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'StructureMask':
        return cls(np.asarray(data['logits'], dtype=np.float64), float(data['threshold']),
                   Granularity(data['granularity']))
