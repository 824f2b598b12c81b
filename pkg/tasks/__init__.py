# Tasks package initialization
from .task_generator import (
    Task,
    TaskGenConfig,
    TaskKind,
    TaskSampler,
    build_ssl_batch,
    gen_cluster_task,
    gen_quadratic_task,
    gen_sinusoid_task,
)

__all__ = [
    'Task', 'TaskGenConfig', 'TaskKind', 'TaskSampler', 'build_ssl_batch',
    'gen_cluster_task', 'gen_quadratic_task', 'gen_sinusoid_task',
]
