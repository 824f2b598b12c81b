# Utils package initialization
from .errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    DomainError,
    NeuronMLError,
    PreconditionError,
    ShapeError,
)

__all__ = [
    'CheckpointError', 'ConfigError', 'DivergenceError', 'DomainError',
    'NeuronMLError', 'PreconditionError', 'ShapeError',
]
