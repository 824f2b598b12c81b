# Bi-level meta-training: per-task inner adaptation, weight step, structure-mask step
import copy
import hashlib
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from engine.gradcheck import DEFAULT_STEP, central_difference
from engine.network import (
    Activation,
    GradBundle,
    Granularity,
    LossKind,
    Network,
    apply_gradient,
    build_network,
    dense_probs,
    evaluate_loss,
    loss_and_grads,
    query_metric,
)
from structure.constraints import (
    StructureLoss,
    StructureWeights,
    active_dimension,
    sensitivity_scores,
    structure_loss,
    structure_loss_from_probs,
)
from structure.hebbian import HebbianTracker, hebbian_probs, update_tracker
from structure.structure_mask import DEFAULT_THRESHOLD, StructureMask, activation_set, mask_probs
from tasks.task_generator import Task, TaskGenConfig, TaskSampler, task_rng, tasks_checksum
from training.metrics import MetricsRecord
from training.optimizers import Optimizer, make_optimizer
from utils.errors import ConfigError, DivergenceError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)

INIT_STREAM = 3_000_000_019
EXACT_MODE_MAX_PARAMS = 100


class MetaGradient(Enum):
    FIRST_ORDER = "first_order"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: Tuple[int, ...] = (40, 40)
    activation: Activation = Activation.TANH
    granularity: Granularity = Granularity.PER_UNIT
    inner_lr: float = 0.01          # α
    outer_lr: float = 0.001         # β
    mask_lr: float = 0.001          # η
    inner_steps: int = 1
    meta_batch: int = 4             # N_tr
    iterations: int = 1000
    structure: StructureWeights = field(default_factory=StructureWeights)
    threshold: float = DEFAULT_THRESHOLD   # τ_act
    hebbian_temperature: float = 1.0       # β_heb
    hebbian_decay: float = 0.1             # ρ_heb
    mask_init_logit: float = 2.0
    seed: int = 0
    taskgen: TaskGenConfig = field(default_factory=TaskGenConfig)
    eval_every: int = 0             # 0 disables periodic evaluation
    eval_tasks: int = 20
    weight_decay: float = 0.0
    outer_optimizer: str = "sgd"
    meta_gradient: MetaGradient = MetaGradient.FIRST_ORDER
    n_jobs: int = 1
    log_every: int = 100
    progress: bool = False
    dense: bool = False

    @property
    def loss_kind(self) -> LossKind:
        return self.taskgen.loss_kind

    @property
    def layer_sizes(self) -> List[int]:
        return [self.taskgen.feature_dim, *self.hidden_sizes, self.taskgen.output_dim]

    @property
    def uses_mask(self) -> bool:
        """False for the dense baseline and whenever every structure weight is zero"""
        return not self.dense and not self.structure.inactive

    def validate(self) -> 'TrainConfig':
        for name in ('inner_lr', 'outer_lr', 'mask_lr'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.inner_steps < 0:
            raise ConfigError(f"inner_steps must be non-negative, got {self.inner_steps}")
        if self.meta_batch < 1:
            raise ConfigError(f"meta_batch must be at least 1, got {self.meta_batch}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be non-negative, got {self.iterations}")
        if not self.hidden_sizes or any(size < 1 for size in self.hidden_sizes):
            raise ConfigError(f"hidden_sizes must be non-empty and positive, got {list(self.hidden_sizes)}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be non-zero")
        if self.eval_every < 0 or self.eval_tasks < 1 or self.log_every < 1:
            raise ConfigError("eval_every must be >= 0, eval_tasks and log_every >= 1")
        self.structure.validate()
        self.taskgen.validate()
        if self.meta_gradient is MetaGradient.FINITE_DIFFERENCE:
            n_params = sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]))
            if n_params > EXACT_MODE_MAX_PARAMS:
                raise ConfigError(
                    f"meta_gradient=finite_difference is limited to {EXACT_MODE_MAX_PARAMS} parameters, "
                    f"architecture has {n_params}"
                )
        return self


@dataclass
class MetaState:
    """Shared initialization θ, global mask logits M and the Hebbian tracker"""
    net: Network
    mask: StructureMask
    tracker: HebbianTracker
    weight_optimizer: Optimizer
    mask_optimizer: Optimizer
    iteration: int = 0
    seed: int = 0
    dense: bool = False
    task_digest: str = ""

    def __post_init__(self):
        if self.mask.size != self.net.mask_size or len(self.tracker) != self.net.mask_size:
            raise ShapeError(
                f"Network has {self.net.mask_size} mask elements, mask has {self.mask.size}, "
                f"tracker has {len(self.tracker)}"
            )

    def probs(self, logits: Optional[np.ndarray] = None) -> np.ndarray:
        if self.dense:
            return dense_probs(self.net)
        return mask_probs(self.mask.logits if logits is None else logits)

    def density(self) -> float:
        return 1.0 if self.dense else self.mask.density()


@dataclass
class InnerResult:
    task: Task
    net: Network
    logits: Optional[np.ndarray]        # None under the dense mask
    probs: np.ndarray
    trace: List[float]
    query_loss: float
    query_metric: float
    query_grads: GradBundle
    meta_grad: np.ndarray
    active: np.ndarray
    sensitivity: np.ndarray
    curve: List[float] = field(default_factory=list)
    structure: Optional[StructureLoss] = None


@dataclass
class EvaluationSummary:
    metric_name: str
    mean: float
    std: float
    density: float
    overlap: float
    curve: List[float]
    per_task: List[float]

    def to_dict(self) -> Dict:
        return {
            'metric': self.metric_name,
            'mean': self.mean,
            'std': self.std,
            'density': self.density,
            'overlap': self.overlap,
            'adaptation_curve': self.curve,
            'per_task': self.per_task,
            'tasks': len(self.per_task),
        }


def init_state(cfg: TrainConfig) -> MetaState:
    rng = task_rng(cfg.seed, INIT_STREAM)
    net = build_network(cfg.layer_sizes, cfg.activation, rng, cfg.granularity)
    dense = not cfg.uses_mask
    return MetaState(
        net=net,
        mask=StructureMask.initialize(net.mask_size, cfg.mask_init_logit, cfg.threshold, cfg.granularity),
        tracker=HebbianTracker.initialize(net.mask_size, cfg.hebbian_decay, cfg.hebbian_temperature),
        weight_optimizer=make_optimizer(cfg.outer_optimizer, cfg.outer_lr, cfg.weight_decay),
        mask_optimizer=make_optimizer(cfg.outer_optimizer, cfg.mask_lr),
        seed=cfg.seed,
        dense=dense,
    )


def apply_mask(weights: Union[Network, np.ndarray], probs, owners: Optional[np.ndarray] = None):
    """
    θ_M = M ⊙ θ.

    A flat array without owners is masked elementwise (per-parameter). With an
    owner map each parameter is scaled by the probability of its owner; entries
    mapped to -1 pass through. For a Network the map is net.consumers(): a
    per-unit probability scales the next layer's weights reading that unit, so
    forward(apply_mask(net, p), ones) equals forward(net, p).
    """
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if isinstance(weights, Network):
        if probs.size != weights.mask_size:
            raise ShapeError(f"Network has {weights.mask_size} mask elements, got {probs.size} probabilities")
        flat = weights.flat_params()
        return weights.with_flat_params(apply_mask(flat, probs, weights.consumers()))

    flat = np.asarray(weights, dtype=np.float64).ravel()
    if owners is None:
        if flat.size != probs.size:
            raise ShapeError(f"{flat.size} weights cannot be masked by {probs.size} probabilities")
        return flat * probs
    owners = np.asarray(owners, dtype=np.int64).ravel()
    if owners.size != flat.size:
        raise ShapeError(f"Owner map has {owners.size} entries for {flat.size} weights")
    if owners.size and owners.max() >= probs.size:
        raise ShapeError(f"Owner index {owners.max()} exceeds mask length {probs.size}")
    scale = np.ones_like(flat)
    owned = owners >= 0
    scale[owned] = probs[owners[owned]]
    return flat * scale


def _check_finite(net: Network, logits: Optional[np.ndarray], loss: float):
    if not np.isfinite(loss):
        raise DivergenceError(f"Support loss became non-finite ({loss})")
    if not np.all(np.isfinite(net.flat_params())):
        raise DivergenceError("Adapted weights became non-finite")
    if logits is not None and not np.all(np.isfinite(logits)):
        raise DivergenceError("Adapted mask logits became non-finite")


def inner_adapt(state: MetaState, task: Task, alpha: float, steps: int,
                record_curve: bool = False, with_sensitivity: bool = True) -> InnerResult:
    """
    Full-batch gradient steps on the support loss for weights and mask logits.

    The global state is only read. The returned trace holds the support loss
    before each step plus the final one (steps + 1 values); the query loss and
    gradient are taken at the adapted point. With record_curve the query metric
    after each step (0..steps) is recorded too.
    """
    if steps < 0:
        raise PreconditionError(f"Inner steps must be non-negative, got {steps}")

    loss_kind = task.kind
    net = state.net
    logits = None if state.dense else state.mask.logits.copy()
    trace: List[float] = []
    curve: List[float] = []

    try:
        for _ in range(steps):
            probs = state.probs(logits)
            if record_curve:
                curve.append(query_metric(net, probs, task.query_inputs, task.query_targets, loss_kind))
            loss, grads = loss_and_grads(net, probs, task.support_inputs, task.support_targets, loss_kind)
            trace.append(loss)
            net = apply_gradient(net, grads, alpha)
            if logits is not None:
                logits = logits - alpha * grads.mask_logits
            _check_finite(net, logits, loss)

        probs = state.probs(logits)
        final_loss = evaluate_loss(net, probs, task.support_inputs, task.support_targets, loss_kind)
        _check_finite(net, logits, final_loss)
        trace.append(final_loss)

        q_loss, q_grads = loss_and_grads(net, probs, task.query_inputs, task.query_targets, loss_kind)
        if loss_kind is LossKind.REGRESSION:
            metric = q_loss
        else:
            metric = query_metric(net, probs, task.query_inputs, task.query_targets, loss_kind)
        if record_curve:
            curve.append(metric)

        if with_sensitivity:
            s = sensitivity_scores(net, logits, task.all_inputs, task.all_targets, loss_kind)
            if not np.all(np.isfinite(s)):
                raise DivergenceError("Sensitivity scores became non-finite")
        else:
            s = np.zeros(net.mask_size)
    except DivergenceError as e:
        raise DivergenceError(str(e), trace=trace) from e

    return InnerResult(
        task=task,
        net=net,
        logits=logits,
        probs=probs,
        trace=trace,
        query_loss=q_loss,
        query_metric=metric,
        query_grads=q_grads,
        meta_grad=q_grads.flat_weights(),
        active=activation_set(probs, state.mask.threshold),
        sensitivity=s,
        curve=curve,
    )


def exact_meta_gradient(state: MetaState, task: Task, alpha: float, steps: int,
                        step: float = DEFAULT_STEP) -> np.ndarray:
    """d(query loss after adaptation)/dθ by central differences through the whole inner loop"""
    if state.net.n_params > EXACT_MODE_MAX_PARAMS:
        raise PreconditionError(
            f"Exact meta-gradient is limited to {EXACT_MODE_MAX_PARAMS} parameters, net has {state.net.n_params}"
        )

    def adapted_query_loss(flat: np.ndarray) -> float:
        perturbed = replace(state, net=state.net.with_flat_params(flat))
        return inner_adapt(perturbed, task, alpha, steps, with_sensitivity=False).query_loss

    return central_difference(adapted_query_loss, state.net.flat_params(), step)


def adapt_batch(state: MetaState, tasks: Sequence[Task], alpha: float, steps: int,
                n_jobs: int = 1, record_curve: bool = False) -> List[InnerResult]:
    """Inner adaptation of every task; results come back in task order whatever the schedule"""
    if n_jobs == 1 or len(tasks) < 2:
        return [inner_adapt(state, task, alpha, steps, record_curve) for task in tasks]
    return Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(inner_adapt)(state, task, alpha, steps, record_curve) for task in tasks
    )


def attach_structure(state: MetaState, results: List[InnerResult], weights: StructureWeights) -> List[InnerResult]:
    """
    Evaluate the structure loss of every task at its adapted point.

    Each task's plasticity term is taken against the other tasks of the batch,
    with the tracker's current importances.
    """
    p = hebbian_probs(state.tracker)
    batch_probs = [result.probs for result in results]
    for index, result in enumerate(results):
        others = batch_probs[:index] + batch_probs[index + 1:]
        d = active_dimension(result.net, result.active)
        n_samples = result.task.n_samples
        if result.logits is None:
            result.structure = structure_loss_from_probs(
                result.net, result.probs, p, others, result.sensitivity, weights, d, n_samples, state.mask.threshold
            )
        else:
            result.structure = structure_loss(
                result.net, result.logits, p, others, result.sensitivity, weights, d, n_samples, state.mask.threshold
            )
    return results


def outer_weight_step(state: MetaState, inner_results: Sequence[InnerResult], beta: float) -> MetaState:
    """θ ← θ − β·mean of the per-task meta-gradients; M is left untouched"""
    if not inner_results:
        raise PreconditionError("Outer weight step needs at least one inner result")
    grad = np.mean(np.stack([result.meta_grad for result in inner_results]), axis=0)

    optimizer = copy.deepcopy(state.weight_optimizer)
    optimizer.learning_rate = beta
    flat = optimizer.step(state.net.flat_params(), grad)
    return replace(state, net=state.net.with_flat_params(flat), weight_optimizer=optimizer)


def mask_step(state: MetaState, inner_results: Sequence[InnerResult], eta: float) -> MetaState:
    """
    M ← M − η·mean of the per-task structure-loss logit gradients, θ held fixed,
    followed by a single tracker update from the batch.
    """
    if not inner_results:
        raise PreconditionError("Mask step needs at least one inner result")
    if state.dense:
        return state
    if any(result.structure is None for result in inner_results):
        raise PreconditionError("Mask step needs structure losses attached to every inner result")

    grad = np.mean(np.stack([result.structure.grad_logits for result in inner_results]), axis=0)
    optimizer = copy.deepcopy(state.mask_optimizer)
    optimizer.learning_rate = eta
    logits = optimizer.step(state.mask.logits, grad)

    activations = np.stack([result.active for result in inner_results]).astype(bool)
    scores = np.stack([result.sensitivity for result in inner_results])
    counts = activations.sum(axis=0)
    impacts = np.where(counts > 0, (scores * activations).sum(axis=0) / np.maximum(counts, 1), 0.0)
    if not np.all(np.isfinite(impacts)):
        raise DivergenceError("Hebbian impacts became non-finite")
    tracker = update_tracker(state.tracker, counts > 0, impacts)

    return replace(state, mask=state.mask.with_logits(logits), tracker=tracker, mask_optimizer=optimizer)


def mean_pairwise_overlap(actives: Sequence[np.ndarray], hebbian_p: np.ndarray) -> float:
    """Mean over unordered task pairs of the importance-weighted hard overlap"""
    pairs = list(combinations(range(len(actives)), 2))
    if not pairs:
        return 0.0
    return float(np.mean([np.sum(actives[i] * actives[j] * hebbian_p) for i, j in pairs]))


def _record(iteration: int, results: Sequence[InnerResult], hebbian_p: np.ndarray, elapsed_ms: float) -> MetricsRecord:
    structures = [result.structure for result in results]
    return MetricsRecord(
        iteration=iteration,
        meta_loss=float(np.mean([result.query_loss for result in results])),
        query_metric=float(np.mean([result.query_metric for result in results])),
        l1=float(np.mean([s.l1 for s in structures])),
        bound=float(np.mean([s.bound for s in structures])),
        violation=float(np.mean([s.violation for s in structures])),
        plasticity_soft=float(np.mean([s.plasticity_soft for s in structures])),
        plasticity_hard=mean_pairwise_overlap([result.active for result in results], hebbian_p),
        sensitivity=float(np.mean([s.sensitivity for s in structures])),
        density=float(np.mean([np.mean(result.probs) for result in results])),
        wall_clock_ms=elapsed_ms,
    )


def _chain_digest(previous: str, tasks: Sequence[Task]) -> str:
    return hashlib.sha256((previous + tasks_checksum(tasks)).encode('ascii')).hexdigest()


IterationCallback = Callable[[MetricsRecord, MetaState], None]


def show_progress(requested: bool) -> bool:
    """Progress bars only when asked for and stderr is a terminal"""
    isatty = getattr(sys.stderr, 'isatty', None)
    return bool(requested and isatty is not None and isatty())


def train(cfg: TrainConfig, on_iteration: Optional[IterationCallback] = None,
          initial_state: Optional[MetaState] = None) -> Tuple[MetaState, List[MetricsRecord]]:
    """
    Run meta-iterations from the state's counter up to cfg.iterations.

    Each iteration samples cfg.meta_batch tasks, adapts each one, then applies
    the weight step followed by the mask step. On divergence the records
    gathered so far travel on the raised DivergenceError.
    """
    cfg.validate()
    state = initial_state if initial_state is not None else init_state(cfg)
    sampler = TaskSampler(cfg.taskgen)
    exact = cfg.meta_gradient is MetaGradient.FINITE_DIFFERENCE
    metrics: List[MetricsRecord] = []

    logger.info(
        f"Training {'dense baseline' if state.dense else 'masked network'} {cfg.layer_sizes} "
        f"on {cfg.taskgen.kind.value} tasks for {cfg.iterations - state.iteration} iterations"
    )

    progress = tqdm(range(state.iteration, cfg.iterations), disable=not show_progress(cfg.progress),
                    desc='meta-train')
    for iteration in progress:
        started = time.perf_counter()
        tasks = sampler.sample(iteration, cfg.meta_batch)
        try:
            results = adapt_batch(state, tasks, cfg.inner_lr, cfg.inner_steps, cfg.n_jobs)
            if exact:
                for result in results:
                    result.meta_grad = exact_meta_gradient(state, result.task, cfg.inner_lr, cfg.inner_steps)
            attach_structure(state, results, cfg.structure)
            hebbian_p = hebbian_probs(state.tracker)

            state = outer_weight_step(state, results, cfg.outer_lr)
            state = mask_step(state, results, cfg.mask_lr)
            record = _record(iteration, results, hebbian_p, (time.perf_counter() - started) * 1000.0)
        except DivergenceError as e:
            logger.error(f"Diverged at iteration {iteration}: {e}")
            raise DivergenceError(f"Diverged at iteration {iteration}: {e}", trace=e.trace, metrics=metrics) from e

        state = replace(state, iteration=iteration + 1, task_digest=_chain_digest(state.task_digest, tasks))
        metrics.append(record)

        if (iteration + 1) % cfg.log_every == 0 or iteration == cfg.iterations - 1:
            logger.info(
                f"iter {iteration + 1}: loss={record.meta_loss:.5f} metric={record.query_metric:.5f} "
                f"density={record.density:.3f} overlap={record.plasticity_hard:.4f}"
            )
            if record.violation > 0 and not state.dense:
                logger.warning(f"iter {iteration + 1}: frugality bound exceeded by {record.violation:.4f}")
        if on_iteration is not None:
            try:
                on_iteration(record, state)
            except DivergenceError as e:
                logger.error(f"Diverged after iteration {iteration}: {e}")
                raise DivergenceError(f"Diverged after iteration {iteration}: {e}", trace=e.trace,
                                      metrics=metrics) from e

    return state, metrics


def train_maml_baseline(cfg: TrainConfig, on_iteration: Optional[IterationCallback] = None,
                        initial_state: Optional[MetaState] = None) -> Tuple[MetaState, List[MetricsRecord]]:
    """First-order MAML: the mask stays all-ones, structure terms are only logged"""
    return train(replace(cfg, dense=True), on_iteration, initial_state)


def evaluate(state: MetaState, tasks: Sequence[Task], adapt_steps: int, alpha: float,
             n_jobs: int = 1) -> EvaluationSummary:
    """Adapt to each task, score its query set and aggregate with the sample std"""
    if not tasks:
        raise PreconditionError("Evaluation needs at least one task")
    results = adapt_batch(state, tasks, alpha, adapt_steps, n_jobs, record_curve=True)

    scores = [result.query_metric for result in results]
    std = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
    metric_name = 'accuracy' if tasks[0].kind is LossKind.CLASSIFICATION else 'mse'
    return EvaluationSummary(
        metric_name=metric_name,
        mean=float(np.mean(scores)),
        std=std,
        density=float(np.mean([np.mean(result.probs) for result in results])),
        overlap=mean_pairwise_overlap([result.active for result in results], hebbian_probs(state.tracker)),
        curve=[float(value) for value in np.mean([result.curve for result in results], axis=0)],
        per_task=[float(score) for score in scores],
    )
