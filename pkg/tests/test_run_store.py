import json
from dataclasses import replace

import numpy as np
import pytest

from storage.run_store import (
    CHECKPOINT_VERSION,
    RunStore,
    checkpoint_document,
    load_checkpoint,
    metrics_csv,
    read_metrics,
    write_atomic,
)
from tasks.task_generator import TaskGenConfig
from training.meta_learner import TrainConfig, train
from training.metrics import metrics_columns
from utils.errors import CheckpointError, ConfigError


@pytest.fixture(scope='module')
def trained():
    cfg = TrainConfig(hidden_sizes=(6,), iterations=4, meta_batch=2, seed=3,
                      taskgen=TaskGenConfig(seed=3, k_shot=4, query_count=4), outer_optimizer='adam')
    state, metrics = train(cfg)
    return cfg, state, metrics


def test_metrics_file_layout(tmp_path, trained):
    _, _, metrics = trained
    store = RunStore(tmp_path).prepare()
    path = store.write_metrics(metrics)
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0].split(',') == metrics_columns()
    assert len(lines) == len(metrics) + 1
    rows = read_metrics(path)
    assert rows[-1]['meta_loss'] == metrics[-1].meta_loss
    assert 'wall_clock_ms' not in rows[0]


def test_timing_column_is_opt_in(trained):
    _, _, metrics = trained
    header = metrics_csv(metrics, include_timing=True).splitlines()[0]
    assert header.endswith('wall_clock_ms')


def test_checkpoint_round_trip(tmp_path, trained):
    _, state, _ = trained
    store = RunStore(tmp_path).prepare()
    path = store.save_checkpoint(state, {'seed': 3}, final=True)
    restored, echo = load_checkpoint(path)
    assert echo == {'seed': 3}
    np.testing.assert_array_equal(restored.net.flat_params(), state.net.flat_params())
    np.testing.assert_array_equal(restored.mask.logits, state.mask.logits)
    np.testing.assert_array_equal(restored.tracker.importance, state.tracker.importance)
    np.testing.assert_array_equal(restored.weight_optimizer.second_moment, state.weight_optimizer.second_moment)
    assert restored.iteration == state.iteration == 4
    assert restored.task_digest == state.task_digest
    assert [layer.activation for layer in restored.net.layers] == [layer.activation for layer in state.net.layers]


def test_resumed_run_matches_uninterrupted_run(tmp_path, trained):
    cfg, state, metrics = trained
    half_state, halfway = train(replace(cfg, iterations=2))
    path = RunStore(tmp_path).prepare().save_checkpoint(half_state)
    restored, _ = load_checkpoint(path)
    resumed, rest = train(cfg, initial_state=restored)
    np.testing.assert_array_equal(resumed.net.flat_params(), state.net.flat_params())
    assert [r.to_row() for r in halfway + rest] == [r.to_row() for r in metrics]


def test_periodic_checkpoint_names(tmp_path, trained):
    _, state, _ = trained
    path = RunStore(tmp_path).prepare().save_checkpoint(state)
    assert path == tmp_path / 'checkpoints' / 'iter_000004.json'


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'nope.json')


def test_version_mismatch(tmp_path, trained):
    _, state, _ = trained
    document = checkpoint_document(state)
    document['version'] = CHECKPOINT_VERSION + 1
    path = tmp_path / 'future.json'
    path.write_text(json.dumps(document), encoding='utf-8')
    with pytest.raises(CheckpointError, match='version'):
        load_checkpoint(path)


@pytest.mark.parametrize('text', ['not json', '{"format": "something-else", "version": 1}', '[]'])
def test_unreadable_documents(tmp_path, text):
    path = tmp_path / 'broken.json'
    path.write_text(text, encoding='utf-8')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_layers(tmp_path, trained):
    _, state, _ = trained
    document = checkpoint_document(state)
    document['layers'] = document['layers'][:1]
    path = tmp_path / 'short.json'
    path.write_text(json.dumps(document), encoding='utf-8')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_atomic_write_leaves_no_temp_file(tmp_path):
    target = write_atomic(tmp_path / 'a' / 'b.txt', 'first')
    write_atomic(target, 'second')
    assert target.read_text(encoding='utf-8') == 'second'
    assert sorted(p.name for p in target.parent.iterdir()) == ['b.txt']


def test_output_path_that_is_a_file(tmp_path):
    blocker = tmp_path / 'taken'
    blocker.write_text('x', encoding='utf-8')
    with pytest.raises(ConfigError):
        RunStore(blocker).prepare()
