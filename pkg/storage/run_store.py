# Run directory persistence: metrics CSV, versioned checkpoints, summaries
import csv
import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from engine.network import Activation, Granularity, Layer, Network
from structure.hebbian import HebbianTracker
from structure.structure_mask import StructureMask
from training.meta_learner import MetaState
from training.metrics import MetricsRecord, metrics_columns
from training.optimizers import Optimizer
from utils.errors import CheckpointError, ConfigError, NeuronMLError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'neuronml-checkpoint'
CHECKPOINT_VERSION = 1
CHECKPOINT_DIR = 'checkpoints'
FINAL_CHECKPOINT = 'checkpoint.json'
SUMMARY_FILE = 'summary.json'


def write_atomic(path: Path, text: str) -> Path:
    """Write through a sibling temp file and rename it into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_name(path.name + '.tmp')
    with open(temp_path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(text)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(temp_path, path)
    return path


def write_json(path: Path, document: Any) -> Path:
    return write_atomic(path, json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + '\n')


def metrics_csv(records: Sequence[MetricsRecord], include_timing: bool = False) -> str:
    """Header row plus one row per record, in the fixed column order"""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=metrics_columns(include_timing), lineterminator='\n')
    writer.writeheader()
    for record in records:
        writer.writerow({key: repr(value) if isinstance(value, float) else value
                         for key, value in record.to_row(include_timing).items()})
    return buffer.getvalue()


def read_metrics(path: Path) -> List[Dict[str, float]]:
    path = Path(path)
    if not path.is_file():
        raise NeuronMLError(f"Metrics file not found: {path}")
    with open(path, encoding='utf-8', newline='') as handle:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(handle)]


def checkpoint_document(state: MetaState, echo: Optional[Dict] = None) -> Dict:
    net = state.net
    return {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'iteration': state.iteration,
        'seed': state.seed,
        'dense': state.dense,
        'task_digest': state.task_digest,
        'architecture': {
            'layer_sizes': net.layer_sizes,
            'granularity': net.granularity.value,
            'activations': [layer.activation.value for layer in net.layers],
        },
        'layers': [{'weight': layer.weight.tolist(), 'bias': layer.bias.tolist()} for layer in net.layers],
        'mask': state.mask.to_dict(),
        'tracker': state.tracker.to_dict(),
        'optimizers': {
            'weights': state.weight_optimizer.to_dict(),
            'mask': state.mask_optimizer.to_dict(),
        },
        'config': echo or {},
    }


def state_from_document(document: Dict) -> MetaState:
    if not isinstance(document, dict) or document.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError("Document is not a NeuronML checkpoint")
    version = document.get('version')
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")

    try:
        architecture = document['architecture']
        granularity = Granularity(architecture['granularity'])
        layers = [
            Layer(np.asarray(entry['weight'], dtype=np.float64).reshape(fan_out, fan_in),
                  np.asarray(entry['bias'], dtype=np.float64).reshape(fan_out),
                  Activation(activation))
            for entry, fan_in, fan_out, activation in zip(
                document['layers'], architecture['layer_sizes'], architecture['layer_sizes'][1:],
                architecture['activations'],
            )
        ]
        if len(layers) != len(architecture['layer_sizes']) - 1:
            raise CheckpointError("Checkpoint layer list does not match its architecture")
        return MetaState(
            net=Network(layers, granularity),
            mask=StructureMask.from_dict(document['mask']),
            tracker=HebbianTracker.from_dict(document['tracker']),
            weight_optimizer=Optimizer.from_dict(document['optimizers']['weights']),
            mask_optimizer=Optimizer.from_dict(document['optimizers']['mask']),
            iteration=int(document['iteration']),
            seed=int(document['seed']),
            dense=bool(document['dense']),
            task_digest=str(document.get('task_digest', '')),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, NeuronMLError) as e:
        raise CheckpointError(f"Corrupt checkpoint: {e}") from e


def load_checkpoint(path) -> Tuple[MetaState, Dict]:
    """Read a checkpoint; returns the state and the config echo stored with it"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    state = state_from_document(document)
    logger.info(f"Loaded checkpoint {path} at iteration {state.iteration}")
    return state, document.get('config', {})


class RunStore:
    """Owns one output directory; every file it writes is replaced atomically"""

    def __init__(self, out_dir, metrics_filename: str = 'metrics.csv', include_timing: bool = False):
        self.root = Path(out_dir)
        self.metrics_filename = metrics_filename
        self.include_timing = include_timing

    def prepare(self) -> 'RunStore':
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Output directory {self.root} is not writable: {e}") from e
        if not os.access(self.root, os.W_OK):
            raise ConfigError(f"Output directory {self.root} is not writable")
        return self

    @property
    def metrics_path(self) -> Path:
        return self.root / self.metrics_filename

    @property
    def checkpoint_path(self) -> Path:
        return self.root / FINAL_CHECKPOINT

    @property
    def summary_path(self) -> Path:
        return self.root / SUMMARY_FILE

    @property
    def log_path(self) -> Path:
        return self.root / 'run.log'

    def write_metrics(self, records: Sequence[MetricsRecord]) -> Path:
        path = write_atomic(self.metrics_path, metrics_csv(records, self.include_timing))
        logger.debug(f"Wrote {len(records)} metrics rows to {path}")
        return path

    def save_checkpoint(self, state: MetaState, echo: Optional[Dict] = None, final: bool = False) -> Path:
        if final:
            path = self.checkpoint_path
        else:
            path = self.root / CHECKPOINT_DIR / f"iter_{state.iteration:06d}.json"
        write_json(path, checkpoint_document(state, echo))
        logger.info(f"Saved checkpoint {path}")
        return path

    def write_summary(self, document: Dict, name: str = SUMMARY_FILE) -> Path:
        path = write_json(self.root / name, document)
        logger.info(f"Wrote summary {path}")
        return path

    def write_text(self, name: str, text: str) -> Path:
        return write_atomic(self.root / name, text)
