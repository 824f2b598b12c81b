# Engine package initialization
from .network import (
    Activation,
    GradBundle,
    Granularity,
    Layer,
    LossKind,
    Network,
    build_network,
    forward,
    loss_and_grads,
)
from .gradcheck import finite_diff_check, gradient_errors

__all__ = [
    'Activation', 'GradBundle', 'Granularity', 'Layer', 'LossKind', 'Network',
    'build_network', 'forward', 'loss_and_grads', 'finite_diff_check', 'gradient_errors',
]
