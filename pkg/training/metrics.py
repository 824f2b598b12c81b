# Per-iteration metrics row and its fixed column order
import math
from dataclasses import asdict, dataclass
from typing import Dict, List

from utils.errors import DivergenceError

METRICS_COLUMNS = [
    'iteration',
    'meta_loss',
    'query_metric',
    'l1',
    'bound',
    'violation',
    'plasticity_soft',
    'plasticity_hard',
    'sensitivity',
    'density',
    'wall_clock_ms',
]


@dataclass
class MetricsRecord:
    """
    One row per meta-iteration.

    Every value except `iteration` is a mean over the meta-batch. `query_metric`
    is MSE for regression and accuracy for classification; `plasticity_hard` is
    the mean pairwise hard overlap of the batch's activation sets.
    """
    iteration: int
    meta_loss: float
    query_metric: float
    l1: float
    bound: float
    violation: float
    plasticity_soft: float
    plasticity_hard: float
    sensitivity: float
    density: float
    wall_clock_ms: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != 'iteration' and not math.isfinite(value):
                raise DivergenceError(f"Metric {name} is not finite at iteration {self.iteration}")

    def to_row(self, include_timing: bool = False) -> Dict:
        row = asdict(self)
        if not include_timing:
            row.pop('wall_clock_ms')
        return row


def metrics_columns(include_timing: bool = False) -> List[str]:
    return METRICS_COLUMNS if include_timing else METRICS_COLUMNS[:-1]
