import json
from pathlib import Path

import pytest

from engine.network import Activation
from tasks.task_generator import PoolOrder, TaskKind
from utils.config_manager import (
    RunConfig,
    ablated,
    build_run_config,
    config_echo,
    load_run_config,
    with_overrides,
)
from utils.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


@pytest.fixture(autouse=True)
def no_out_dir_env(monkeypatch):
    monkeypatch.delenv('NEURONML_OUT_DIR', raising=False)


def write_config(tmp_path, data, name='run.json') -> str:
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


def test_defaults():
    cfg = load_run_config(None)
    train_cfg = cfg.train_config()
    assert train_cfg.layer_sizes == [1, 40, 40, 1]
    assert train_cfg.activation is Activation.TANH
    assert train_cfg.taskgen.kind is TaskKind.SINUSOID
    assert cfg.out_dir == 'runs'
    assert not train_cfg.dense


@pytest.mark.parametrize('name', sorted(path.name for path in CONFIG_DIR.glob('*.json')
                                        if path.name != 'candidates_example.json'))
def test_shipped_configs_are_valid(name):
    cfg = load_run_config(str(CONFIG_DIR / name))
    assert cfg.train_config().validate()


def test_unknown_field_is_named(tmp_path):
    with pytest.raises(ConfigError, match='learning_rate'):
        load_run_config(write_config(tmp_path, {'learning_rate': 0.1}))


def test_negative_inner_rate_is_named(tmp_path):
    with pytest.raises(ConfigError, match='inner_lr'):
        load_run_config(write_config(tmp_path, {'inner_lr': -0.01}))


@pytest.mark.parametrize('data', [
    {'hidden_sizes': [0]},
    {'hidden_sizes': []},
    {'amplitude_range': [5.0, 0.1]},
    {'n_way': 1},
    {'threshold': 1.0},
    {'n_jobs': 0},
    {'metrics_filename': 'sub/metrics.csv'},
    {'task_kind': 'ssl', 'ssl_pool_size': 10, 'block_count': 3},
    {'meta_gradient': 'finite_difference'},
    {'pool_order': 'shuffled'},
])
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        build_run_config(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / 'absent.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_run_config(str(bad))
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, [1, 2, 3]))


def test_overrides_skip_none(tmp_path):
    path = write_config(tmp_path, {'seed': 3, 'out_dir': 'from_file'})
    cfg = load_run_config(path, {'seed': None, 'out_dir': 'from_cli'})
    assert cfg.seed == 3
    assert cfg.out_dir == 'from_cli'


def test_environment_supplies_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('NEURONML_OUT_DIR', str(tmp_path / 'env_runs'))
    assert load_run_config(None).out_dir == str(tmp_path / 'env_runs')
    assert load_run_config(write_config(tmp_path, {'out_dir': 'explicit'})).out_dir == 'explicit'


def test_echo_reloads_to_the_same_config(tmp_path):
    cfg = build_run_config({'seed': 9, 'support_x_range': [0.0, 1.0], 'hidden_sizes': [4, 3]})
    echo = config_echo(cfg)
    assert list(echo) == sorted(echo)
    assert build_run_config(echo) == cfg
    assert load_run_config(write_config(tmp_path, {'config': echo})) == cfg


def test_config_is_frozen():
    cfg = RunConfig()
    with pytest.raises(Exception):
        cfg.seed = 4


def test_ablation_zeroes_one_weight():
    cfg = RunConfig()
    reduced = ablated(cfg, 'fr')
    assert reduced.lambda_fr == 0.0
    assert reduced.lambda_pl == cfg.lambda_pl and reduced.lambda_se == cfg.lambda_se
    assert reduced.seed == cfg.seed
    with pytest.raises(ConfigError):
        ablated(cfg, 'xx')


def test_overrides_are_validated():
    cfg = RunConfig()
    assert with_overrides(cfg, lambda_pl=0.9).lambda_pl == 0.9
    with pytest.raises(ConfigError):
        with_overrides(cfg, inner_lr=-1.0)


def test_baseline_and_adapt_steps():
    cfg = build_run_config({'baseline': True, 'inner_steps': 2})
    assert cfg.train_config().dense
    assert cfg.adapt_steps == 2
    assert build_run_config({'eval_adapt_steps': 5}).adapt_steps == 5


def test_all_zero_weights_run_dense():
    cfg = build_run_config({'lambda_fr': 0.0, 'lambda_pl': 0.0, 'lambda_se': 0.0})
    assert not cfg.train_config().uses_mask


def test_pool_order_reaches_the_sampler():
    assert RunConfig().taskgen_config().pool_order is PoolOrder.RANDOM
    cfg = load_run_config(str(CONFIG_DIR / 'quadratic.json'))
    taskgen = cfg.taskgen_config()
    assert taskgen.pool_order is PoolOrder.CYCLE
    assert taskgen.task_pool_size == cfg.meta_batch
