# Run configuration: flat JSON documents validated with pydantic
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from engine.network import Activation, Granularity
from structure.constraints import StructureWeights
from tasks.task_generator import PoolOrder, TaskGenConfig, TaskKind
from training.meta_learner import MetaGradient, TrainConfig
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

ABLATION_FIELDS = {'fr': 'lambda_fr', 'pl': 'lambda_pl', 'se': 'lambda_se'}
DEFAULT_OUT_DIR = 'runs'

Range = Tuple[float, float]


class RunConfig(BaseModel):
    """
    Everything a run needs, as one flat key/value document.

    Unknown keys are rejected by name; the model is immutable so the echo
    written into artifacts always matches what ran.
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    # architecture
    hidden_sizes: List[int] = Field(default_factory=lambda: [40, 40])
    activation: Literal['relu', 'tanh', 'identity'] = 'tanh'
    granularity: Literal['per_unit', 'per_parameter'] = 'per_unit'
    mask_init_logit: float = 2.0

    # optimization
    inner_lr: float = Field(0.01, gt=0)
    outer_lr: float = Field(0.001, gt=0)
    mask_lr: float = Field(0.001, gt=0)
    inner_steps: int = Field(1, ge=0)
    meta_batch: int = Field(4, ge=1)
    iterations: int = Field(1000, ge=0)
    weight_decay: float = Field(0.0, ge=0)
    outer_optimizer: Literal['sgd', 'adam'] = 'sgd'
    meta_gradient: Literal['first_order', 'finite_difference'] = 'first_order'
    n_jobs: int = 1

    # structure constraint
    lambda_fr: float = Field(0.5, ge=0)
    lambda_pl: float = Field(0.5, ge=0)
    lambda_se: float = Field(0.5, ge=0)
    bound_c: float = Field(1.0, gt=0)
    gamma: float = Field(0.5, gt=0)
    hinge_mu: float = Field(1.0, ge=0)
    sensitivity_floor: float = Field(1e-8, gt=0)
    threshold: float = Field(0.5, gt=0, lt=1)
    hebbian_temperature: float = Field(1.0, gt=0)
    hebbian_decay: float = Field(0.1, ge=0, le=1)

    # tasks
    seed: int = Field(0, ge=0, lt=2 ** 64)
    task_kind: Literal['sinusoid', 'quadratic', 'cluster', 'ssl'] = 'sinusoid'
    k_shot: int = Field(5, ge=1)
    query_count: int = Field(10, ge=1)
    n_way: int = Field(5, ge=2)
    input_dim: int = Field(1, ge=1)
    amplitude_range: Range = (0.1, 5.0)
    frequency_range: Range = (0.5, 2.0)
    phase_range: Range = (0.0, 2.0 * math.pi)
    x_range: Range = (-5.0, 5.0)
    support_x_range: Optional[Range] = None
    quadratic_range: Range = (-1.0, 1.0)
    noise_sigma: float = Field(0.3, ge=0)
    cluster_separation: float = Field(3.0, ge=0)
    augment_count: int = Field(4, ge=1)
    block_count: int = Field(2, ge=1)
    aug_sigma: float = Field(0.1, ge=0)
    aug_scaling: bool = True
    ssl_pool_size: int = Field(20, ge=2)
    task_pool_size: int = Field(0, ge=0)
    pool_order: Literal['random', 'cycle'] = 'random'

    # evaluation and artifacts
    eval_every: int = Field(0, ge=0)
    eval_tasks: int = Field(20, ge=1)
    eval_adapt_steps: Optional[int] = Field(None, ge=0)
    out_dir: str = DEFAULT_OUT_DIR
    metrics_filename: str = 'metrics.csv'
    checkpoint_every: int = Field(100, ge=1)
    log_every: int = Field(100, ge=1)
    record_timing: bool = False
    progress: bool = False
    baseline: bool = False          # first-order MAML with the mask frozen at all-ones

    @field_validator('hidden_sizes')
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError('every hidden layer needs at least one unit')
        return value

    @field_validator('amplitude_range', 'frequency_range', 'phase_range', 'x_range',
                     'support_x_range', 'quadratic_range')
    @classmethod
    def _non_empty_range(cls, value: Optional[Range]) -> Optional[Range]:
        if value is not None and value[0] > value[1]:
            raise ValueError(f'range is empty: min {value[0]} > max {value[1]}')
        return value

    @field_validator('metrics_filename')
    @classmethod
    def _plain_filename(cls, value: str) -> str:
        if not value or os.path.basename(value) != value:
            raise ValueError('metrics_filename must be a bare file name')
        return value

    @model_validator(mode='after')
    def _trainable(self) -> 'RunConfig':
        if not self.hidden_sizes:
            raise ValueError('hidden_sizes must name at least one hidden layer')
        if self.n_jobs == 0:
            raise ValueError('n_jobs must be non-zero')
        return self

    def structure_weights(self) -> StructureWeights:
        return StructureWeights(
            lambda_fr=self.lambda_fr,
            lambda_pl=self.lambda_pl,
            lambda_se=self.lambda_se,
            bound_c=self.bound_c,
            gamma=self.gamma,
            hinge_mu=self.hinge_mu,
            sensitivity_floor=self.sensitivity_floor,
        )

    def taskgen_config(self) -> TaskGenConfig:
        return TaskGenConfig(
            seed=self.seed,
            kind=TaskKind(self.task_kind),
            k_shot=self.k_shot,
            query_count=self.query_count,
            n_way=self.n_way,
            input_dim=self.input_dim,
            amplitude_range=tuple(self.amplitude_range),
            frequency_range=tuple(self.frequency_range),
            phase_range=tuple(self.phase_range),
            x_range=tuple(self.x_range),
            support_x_range=tuple(self.support_x_range) if self.support_x_range else None,
            quadratic_range=tuple(self.quadratic_range),
            noise_sigma=self.noise_sigma,
            cluster_separation=self.cluster_separation,
            augment_count=self.augment_count,
            block_count=self.block_count,
            aug_sigma=self.aug_sigma,
            aug_scaling=self.aug_scaling,
            ssl_pool_size=self.ssl_pool_size,
            task_pool_size=self.task_pool_size,
            pool_order=PoolOrder(self.pool_order),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_sizes=tuple(self.hidden_sizes),
            activation=Activation(self.activation),
            granularity=Granularity(self.granularity),
            inner_lr=self.inner_lr,
            outer_lr=self.outer_lr,
            mask_lr=self.mask_lr,
            inner_steps=self.inner_steps,
            meta_batch=self.meta_batch,
            iterations=self.iterations,
            structure=self.structure_weights(),
            threshold=self.threshold,
            hebbian_temperature=self.hebbian_temperature,
            hebbian_decay=self.hebbian_decay,
            mask_init_logit=self.mask_init_logit,
            seed=self.seed,
            taskgen=self.taskgen_config(),
            eval_every=self.eval_every,
            eval_tasks=self.eval_tasks,
            weight_decay=self.weight_decay,
            outer_optimizer=self.outer_optimizer,
            meta_gradient=MetaGradient(self.meta_gradient),
            n_jobs=self.n_jobs,
            log_every=self.log_every,
            progress=self.progress,
            dense=self.baseline,
        )

    @property
    def adapt_steps(self) -> int:
        return self.inner_steps if self.eval_adapt_steps is None else self.eval_adapt_steps


def _describe(error: ValidationError) -> str:
    problems = []
    for issue in error.errors():
        name = '.'.join(str(part) for part in issue['loc']) or 'config'
        if issue['type'] == 'extra_forbidden':
            problems.append(f"unknown field '{name}'")
        elif issue['type'] == 'missing':
            problems.append(f"missing field '{name}'")
        else:
            problems.append(f"{name}: {issue['msg']}")
    return '; '.join(problems)


def build_run_config(data: Mapping[str, Any]) -> RunConfig:
    """Validate a mapping, turning pydantic errors into a ConfigError naming each field"""
    try:
        cfg = RunConfig.model_validate(dict(data))
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {_describe(e)}") from e
    # cross-field checks owned by the task and training layers
    cfg.train_config().validate()
    return cfg


def load_run_config(path: Optional[str], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Read a JSON config, apply CLI overrides (None values are skipped) and validate.

    Without a path the defaults are used. NEURONML_OUT_DIR supplies the output
    directory when neither the file nor the overrides name one.
    """
    data: Dict[str, Any] = {}
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            data = json.loads(config_path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        # echoes written into summaries carry the config under a 'config' key
        if set(data) == {'config'} and isinstance(data['config'], dict):
            data = data['config']

    if 'out_dir' not in data and os.getenv('NEURONML_OUT_DIR'):
        data['out_dir'] = os.environ['NEURONML_OUT_DIR']
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    cfg = build_run_config(data)
    logger.debug(f"Loaded config from {path or 'defaults'}: {config_echo(cfg)}")
    return cfg


def config_echo(cfg: RunConfig) -> Dict[str, Any]:
    """Canonical, key-sorted dict of every field; loading it back gives the same config"""
    dumped = cfg.model_dump(mode='json')
    return {key: dumped[key] for key in sorted(dumped)}


def ablated(cfg: RunConfig, disable: str) -> RunConfig:
    """Copy of cfg with the named constraint's λ forced to 0"""
    if disable not in ABLATION_FIELDS:
        raise ConfigError(f"Unknown constraint '{disable}', expected one of {sorted(ABLATION_FIELDS)}")
    return cfg.model_copy(update={ABLATION_FIELDS[disable]: 0.0})


def with_overrides(cfg: RunConfig, **updates: Any) -> RunConfig:
    """Validated copy with some fields replaced"""
    data = cfg.model_dump()
    data.update(updates)
    return build_run_config(data)
