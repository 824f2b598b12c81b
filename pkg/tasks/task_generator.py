# Seeded episode generators: sinusoid / quadratic regression, cluster classification, self-supervised batches
import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from engine.network import LossKind
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

AUG_SCALE_RANGE = (0.8, 1.2)
# seed-stream tags kept apart from iteration indices
POOL_STREAM = 2_000_000_011
PICK_STREAM = 2_000_000_033
HELD_OUT_STREAM = 1_000_000_007
# unlabeled pools are drawn from a mixture of unit-variance Gaussians
SSL_MIXTURE_COMPONENTS = 4
SSL_MIXTURE_SPREAD = 3.0


class PoolOrder(Enum):
    RANDOM = "random"      # uniform picks with replacement per iteration
    CYCLE = "cycle"        # walk the pool in order, wrapping around


class TaskKind(Enum):
    SINUSOID = "sinusoid"
    QUADRATIC = "quadratic"
    CLUSTER = "cluster"
    SSL = "ssl"


@dataclass
class Task:
    support_inputs: np.ndarray
    support_targets: np.ndarray
    query_inputs: np.ndarray
    query_targets: np.ndarray
    kind: LossKind
    n_way: int = 0
    meta: Dict = field(default_factory=dict)

    @property
    def all_inputs(self) -> np.ndarray:
        return np.concatenate([self.support_inputs, self.query_inputs], axis=0)

    @property
    def all_targets(self) -> np.ndarray:
        return np.concatenate([self.support_targets, self.query_targets], axis=0)

    @property
    def n_samples(self) -> int:
        return self.support_inputs.shape[0] + self.query_inputs.shape[0]

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for array in (self.support_inputs, self.support_targets, self.query_inputs, self.query_targets):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True)
class TaskGenConfig:
    seed: int = 0
    kind: TaskKind = TaskKind.SINUSOID
    k_shot: int = 5
    query_count: int = 10
    n_way: int = 5
    input_dim: int = 1
    amplitude_range: Tuple[float, float] = (0.1, 5.0)
    frequency_range: Tuple[float, float] = (0.5, 2.0)
    phase_range: Tuple[float, float] = (0.0, 2.0 * math.pi)
    x_range: Tuple[float, float] = (-5.0, 5.0)
    support_x_range: Optional[Tuple[float, float]] = None
    quadratic_range: Tuple[float, float] = (-1.0, 1.0)
    noise_sigma: float = 0.3
    cluster_separation: float = 3.0
    augment_count: int = 4
    block_count: int = 2
    aug_sigma: float = 0.1
    aug_scaling: bool = True
    ssl_pool_size: int = 20
    task_pool_size: int = 0
    pool_order: PoolOrder = PoolOrder.RANDOM

    @property
    def loss_kind(self) -> LossKind:
        if self.kind in (TaskKind.CLUSTER, TaskKind.SSL):
            return LossKind.CLASSIFICATION
        return LossKind.REGRESSION

    @property
    def output_dim(self) -> int:
        if self.kind is TaskKind.SSL:
            return self.ssl_pool_size // self.block_count
        if self.kind is TaskKind.CLUSTER:
            return self.n_way
        return 1

    @property
    def feature_dim(self) -> int:
        return 1 if self.kind in (TaskKind.SINUSOID, TaskKind.QUADRATIC) else self.input_dim

    def validate(self) -> 'TaskGenConfig':
        """Raise ConfigError on degenerate ranges or counts"""
        ranges = {
            'amplitude_range': self.amplitude_range,
            'frequency_range': self.frequency_range,
            'phase_range': self.phase_range,
            'x_range': self.x_range,
            'quadratic_range': self.quadratic_range,
        }
        if self.support_x_range is not None:
            ranges['support_x_range'] = self.support_x_range
        for name, (low, high) in ranges.items():
            if low > high:
                raise ConfigError(f"{name} is empty: min {low} > max {high}")
        if self.k_shot < 1 or self.query_count < 1 or self.input_dim < 1:
            raise ConfigError("k_shot, query_count and input_dim must be positive")
        if self.noise_sigma < 0 or self.aug_sigma < 0:
            raise ConfigError("noise_sigma and aug_sigma must be non-negative")
        if self.kind is TaskKind.CLUSTER and self.n_way < 2:
            raise ConfigError(f"n_way must be at least 2, got {self.n_way}")
        if self.kind is TaskKind.SSL:
            _check_ssl_shape(self.ssl_pool_size, self.block_count, self.augment_count)
            if self.ssl_pool_size // self.block_count < 2:
                raise ConfigError("Self-supervised blocks need at least 2 items (ssl_pool_size / block_count)")
        return self


def task_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent stream for (seed, stream indices); schedule-independent"""
    return np.random.default_rng([int(seed)] + [int(index) for index in stream])


def sinusoid_values(x: np.ndarray, amplitude: float, frequency: float, phase: float) -> np.ndarray:
    return amplitude * np.sin(frequency * x + phase)


def gen_sinusoid_task(cfg: TaskGenConfig, rng: np.random.Generator) -> Task:
    """y = A·sin(w·x + b) + ε with per-task A, w, b drawn uniformly"""
    if cfg.kind is not TaskKind.SINUSOID:
        raise ConfigError(f"gen_sinusoid_task needs kind=sinusoid, got {cfg.kind.value}")
    cfg.validate()

    amplitude = rng.uniform(*cfg.amplitude_range)
    frequency = rng.uniform(*cfg.frequency_range)
    phase = rng.uniform(*cfg.phase_range)
    support_range = cfg.support_x_range or cfg.x_range

    support_x = rng.uniform(*support_range, size=(cfg.k_shot, 1))
    query_x = rng.uniform(*cfg.x_range, size=(cfg.query_count, 1))
    support_y = sinusoid_values(support_x, amplitude, frequency, phase)
    query_y = sinusoid_values(query_x, amplitude, frequency, phase)
    if cfg.noise_sigma > 0:
        support_y = support_y + rng.normal(0.0, cfg.noise_sigma, size=support_y.shape)
        query_y = query_y + rng.normal(0.0, cfg.noise_sigma, size=query_y.shape)

    return Task(
        support_x, support_y, query_x, query_y, LossKind.REGRESSION,
        meta={'amplitude': float(amplitude), 'frequency': float(frequency), 'phase': float(phase)},
    )


def gen_quadratic_task(cfg: TaskGenConfig, rng: np.random.Generator) -> Task:
    """y = a·x² + b·x + c + ε with coefficients drawn from quadratic_range"""
    if cfg.kind is not TaskKind.QUADRATIC:
        raise ConfigError(f"gen_quadratic_task needs kind=quadratic, got {cfg.kind.value}")
    cfg.validate()

    a, b, c = rng.uniform(*cfg.quadratic_range, size=3)
    support_x = rng.uniform(*(cfg.support_x_range or cfg.x_range), size=(cfg.k_shot, 1))
    query_x = rng.uniform(*cfg.x_range, size=(cfg.query_count, 1))
    support_y = a * support_x ** 2 + b * support_x + c
    query_y = a * query_x ** 2 + b * query_x + c
    if cfg.noise_sigma > 0:
        support_y = support_y + rng.normal(0.0, cfg.noise_sigma, size=support_y.shape)
        query_y = query_y + rng.normal(0.0, cfg.noise_sigma, size=query_y.shape)

    return Task(support_x, support_y, query_x, query_y, LossKind.REGRESSION,
                meta={'a': float(a), 'b': float(b), 'c': float(c)})


def gen_cluster_task(cfg: TaskGenConfig, rng: np.random.Generator) -> Task:
    """N-way K-shot episode over Gaussian clusters around separated centroids"""
    if cfg.n_way < 2:
        raise ConfigError(f"n_way must be at least 2, got {cfg.n_way}")
    if cfg.kind is not TaskKind.CLUSTER:
        raise ConfigError(f"gen_cluster_task needs kind=cluster, got {cfg.kind.value}")
    cfg.validate()

    centroids = rng.normal(size=(cfg.n_way, cfg.input_dim)) * cfg.cluster_separation
    support_y = np.repeat(np.arange(cfg.n_way), cfg.k_shot)
    query_y = np.repeat(np.arange(cfg.n_way), cfg.query_count)
    support_x = centroids[support_y] + rng.normal(size=(support_y.size, cfg.input_dim))
    query_x = centroids[query_y] + rng.normal(size=(query_y.size, cfg.input_dim))

    return Task(support_x, support_y, query_x, query_y, LossKind.CLASSIFICATION, n_way=cfg.n_way,
                meta={'centroids': centroids.tolist()})


def _check_ssl_shape(pool_size: int, block_count: int, augment_count: int):
    if block_count < 1 or pool_size < 1 or pool_size % block_count != 0:
        raise ConfigError(f"Pool size {pool_size} is not divisible into {block_count} blocks")
    if augment_count < 2:
        raise ConfigError(f"Augmentation count must be at least 2, got {augment_count}")


def augment(item: np.ndarray, cfg: TaskGenConfig, rng: np.random.Generator) -> np.ndarray:
    """One augmented view: random scaling then additive Gaussian noise"""
    view = item.astype(np.float64)
    if cfg.aug_scaling:
        view = view * rng.uniform(*AUG_SCALE_RANGE)
    if cfg.aug_sigma > 0:
        view = view + rng.normal(0.0, cfg.aug_sigma, size=view.shape)
    return view


def build_ssl_batch(pool: np.ndarray, cfg: TaskGenConfig, rng: np.random.Generator) -> List[Task]:
    """
    Turn an unlabeled pool into K pseudo-labelled classification tasks.

    The pool is split into K consecutive blocks of N/K items; every item of a block is
    its own class with M augmented views, the first ceil(M/2) views go to support.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim == 1:
        pool = pool.reshape(-1, 1)
    n_items = pool.shape[0]
    _check_ssl_shape(n_items, cfg.block_count, cfg.augment_count)

    block_size = n_items // cfg.block_count
    n_support = math.ceil(cfg.augment_count / 2)
    tasks = []
    for block in range(cfg.block_count):
        items = pool[block * block_size:(block + 1) * block_size]
        views = np.stack([
            np.stack([augment(item, cfg, rng) for _ in range(cfg.augment_count)])
            for item in items
        ])  # (classes, M, dim)
        labels = np.arange(block_size)
        support_x = views[:, :n_support].reshape(-1, pool.shape[1])
        query_x = views[:, n_support:].reshape(-1, pool.shape[1])
        support_y = np.repeat(labels, n_support)
        query_y = np.repeat(labels, cfg.augment_count - n_support)
        tasks.append(Task(support_x, support_y, query_x, query_y, LossKind.CLASSIFICATION,
                          n_way=block_size, meta={'block': block}))
    return tasks


def sample_ssl_pool(cfg: TaskGenConfig, rng: np.random.Generator) -> np.ndarray:
    """Unlabeled items from a Gaussian mixture with randomly placed component means"""
    means = rng.normal(size=(SSL_MIXTURE_COMPONENTS, cfg.input_dim)) * SSL_MIXTURE_SPREAD
    assignment = rng.integers(0, SSL_MIXTURE_COMPONENTS, size=cfg.ssl_pool_size)
    return means[assignment] + rng.normal(size=(cfg.ssl_pool_size, cfg.input_dim))


class TaskSampler:
    """Produces the task sequence of a run; identical (cfg, seed) gives identical tasks"""

    def __init__(self, cfg: TaskGenConfig):
        self.cfg = cfg.validate()
        self.generator = {
            TaskKind.SINUSOID: gen_sinusoid_task,
            TaskKind.QUADRATIC: gen_quadratic_task,
            TaskKind.CLUSTER: gen_cluster_task,
        }.get(cfg.kind)
        self.pool: List[Task] = []
        if cfg.task_pool_size > 0:
            self.pool = self._fixed_pool(cfg.task_pool_size)
            logger.info(f"Generated fixed pool of {len(self.pool)} {cfg.kind.value} tasks")

    def _fixed_pool(self, size: int) -> List[Task]:
        if self.cfg.kind is TaskKind.SSL:
            tasks: List[Task] = []
            round_index = 0
            while len(tasks) < size:
                tasks.extend(self._ssl_tasks(POOL_STREAM, round_index))
                round_index += 1
            return tasks[:size]
        return [self.generator(self.cfg, task_rng(self.cfg.seed, POOL_STREAM, index)) for index in range(size)]

    def _ssl_tasks(self, stream: int, index: int) -> List[Task]:
        rng = task_rng(self.cfg.seed, stream, index)
        return build_ssl_batch(sample_ssl_pool(self.cfg, rng), self.cfg, rng)

    def sample(self, iteration: int, count: int) -> List[Task]:
        """Tasks for one meta-iteration"""
        if self.pool and self.cfg.pool_order is PoolOrder.CYCLE:
            start = iteration * count
            return [self.pool[(start + offset) % len(self.pool)] for offset in range(count)]
        if self.pool:
            picker = task_rng(self.cfg.seed, PICK_STREAM, iteration)
            return [self.pool[index] for index in picker.integers(0, len(self.pool), size=count)]

        if self.cfg.kind is TaskKind.SSL:
            tasks: List[Task] = []
            chunk = 0
            while len(tasks) < count:
                tasks.extend(self._ssl_tasks(iteration, chunk))
                chunk += 1
            return tasks[:count]
        return [self.generator(self.cfg, task_rng(self.cfg.seed, iteration, index)) for index in range(count)]

    def held_out(self, count: int, offset: int = 0) -> List[Task]:
        """Evaluation tasks from a stream disjoint from training iterations"""
        stream = HELD_OUT_STREAM + offset
        if self.cfg.kind is TaskKind.SSL:
            tasks: List[Task] = []
            chunk = 0
            while len(tasks) < count:
                tasks.extend(self._ssl_tasks(stream, chunk))
                chunk += 1
            return tasks[:count]
        return [self.generator(self.cfg, task_rng(self.cfg.seed, stream, index)) for index in range(count)]


def tasks_checksum(tasks: Sequence[Task]) -> str:
    digest = hashlib.sha256()
    for task in tasks:
        digest.update(task.checksum().encode('ascii'))
    return digest.hexdigest()


def tasks_document(tasks: Sequence[Task], echo: Optional[Dict] = None) -> Dict:
    """Structured dump of a batch for cross-implementation comparison"""
    return {
        'config': echo or {},
        'checksum': tasks_checksum(tasks),
        'tasks': [
            {
                'kind': task.kind.value,
                'n_way': task.n_way,
                'meta': task.meta,
                'support_inputs': task.support_inputs.tolist(),
                'support_targets': task.support_targets.tolist(),
                'query_inputs': task.query_inputs.tolist(),
                'query_targets': task.query_targets.tolist(),
            }
            for task in tasks
        ],
    }
