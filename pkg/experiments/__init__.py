# Experiments package initialization
from .experiment_runner import DEFAULT_SWEEP_GRID, GRADCHECK_TOLERANCE, ExperimentRunner, RunReport

__all__ = ['DEFAULT_SWEEP_GRID', 'GRADCHECK_TOLERANCE', 'ExperimentRunner', 'RunReport']
