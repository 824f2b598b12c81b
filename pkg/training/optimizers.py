# First-order update rules shared by the weight level and the mask level
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict

import numpy as np

from utils.errors import CheckpointError, ConfigError, DivergenceError

logger = logging.getLogger(__name__)


class OptimizerKind(Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass
class Optimizer:
    """
    Stateful step rule over a flat parameter vector.

    Plain gradient descent keeps no state. Adam keeps first and second
    moment estimates plus a step counter; both are saved in checkpoints
    so a resumed run continues the same trajectory.
    """
    kind: OptimizerKind
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    steps: int = 0
    first_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))
    second_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"Learning rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the updated parameters; inputs are not modified"""
        params = np.asarray(params, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        if self.weight_decay:
            grad = grad + self.weight_decay * params

        if self.kind is OptimizerKind.SGD:
            updated = params - self.learning_rate * grad
        else:
            if self.first_moment.shape != params.shape:
                self.first_moment = np.zeros_like(params)
                self.second_moment = np.zeros_like(params)
            self.steps += 1
            self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grad
            self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grad ** 2
            m_hat = self.first_moment / (1.0 - self.beta1 ** self.steps)
            v_hat = self.second_moment / (1.0 - self.beta2 ** self.steps)
            updated = params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)

        if not np.all(np.isfinite(updated)):
            raise DivergenceError(f"{self.kind.value} step produced non-finite parameters")
        return updated

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind.value,
            'learning_rate': self.learning_rate,
            'weight_decay': self.weight_decay,
            'steps': self.steps,
            'first_moment': self.first_moment.tolist(),
            'second_moment': self.second_moment.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Optimizer':
        try:
            return cls(
                kind=OptimizerKind(data['kind']),
                learning_rate=float(data['learning_rate']),
                weight_decay=float(data.get('weight_decay', 0.0)),
                steps=int(data.get('steps', 0)),
                first_moment=np.asarray(data.get('first_moment', []), dtype=np.float64),
                second_moment=np.asarray(data.get('second_moment', []), dtype=np.float64),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise CheckpointError(f"Invalid optimizer state: {e}") from e


def make_optimizer(kind: str, learning_rate: float, weight_decay: float = 0.0) -> Optimizer:
    try:
        optimizer_kind = OptimizerKind(kind)
    except ValueError:
        raise ConfigError(f"Unknown optimizer '{kind}', expected one of {[k.value for k in OptimizerKind]}")
    return Optimizer(optimizer_kind, learning_rate, weight_decay)
