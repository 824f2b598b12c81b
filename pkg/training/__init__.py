# Training package initialization
from .metrics import METRICS_COLUMNS, MetricsRecord, metrics_columns
from .optimizers import Optimizer, OptimizerKind, make_optimizer
from .meta_learner import (
    EvaluationSummary,
    InnerResult,
    MetaGradient,
    MetaState,
    TrainConfig,
    apply_mask,
    evaluate,
    init_state,
    inner_adapt,
    mask_step,
    outer_weight_step,
    train,
    train_maml_baseline,
)

__all__ = [
    'METRICS_COLUMNS', 'MetricsRecord', 'metrics_columns',
    'Optimizer', 'OptimizerKind', 'make_optimizer',
    'EvaluationSummary', 'InnerResult', 'MetaGradient', 'MetaState', 'TrainConfig',
    'apply_mask', 'evaluate', 'init_state', 'inner_adapt', 'mask_step', 'outer_weight_step',
    'train', 'train_maml_baseline',
]
