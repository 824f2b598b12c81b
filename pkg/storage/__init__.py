# Storage package initialization
from .run_store import (
    CHECKPOINT_VERSION,
    RunStore,
    checkpoint_document,
    load_checkpoint,
    metrics_csv,
    read_metrics,
    state_from_document,
    write_atomic,
    write_json,
)

__all__ = [
    'CHECKPOINT_VERSION', 'RunStore', 'checkpoint_document', 'load_checkpoint', 'metrics_csv',
    'read_metrics', 'state_from_document', 'write_atomic', 'write_json',
]
