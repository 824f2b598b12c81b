# Exception hierarchy for NeuronML Lab
from typing import List, Optional


class NeuronMLError(Exception):
    """Base class for every error raised by the lab"""
    exit_code = 1


class ConfigError(NeuronMLError, ValueError):
    """Invalid, missing or unknown configuration field"""
    exit_code = 2


class PreconditionError(NeuronMLError, ValueError):
    """An operation was called outside its precondition"""
    exit_code = 2


class ShapeError(NeuronMLError, ValueError):
    """Dimension mismatch between arrays, layers or masks"""
    exit_code = 2


class DomainError(NeuronMLError, ValueError):
    """Value outside the mathematical domain of an operation"""
    exit_code = 2


class DivergenceError(NeuronMLError, ArithmeticError):
    """Non-finite loss or parameters during optimization"""
    exit_code = 3

    def __init__(self, message: str, trace: Optional[List[float]] = None, metrics: Optional[list] = None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.metrics = list(metrics) if metrics is not None else []


class CheckpointError(NeuronMLError, OSError):
    """Checkpoint missing, unreadable or of an unsupported version"""
    exit_code = 4
