import math

import numpy as np
import pytest

from engine.network import LossKind
from tasks.task_generator import (
    PoolOrder,
    TaskGenConfig,
    TaskKind,
    TaskSampler,
    build_ssl_batch,
    gen_cluster_task,
    gen_quadratic_task,
    gen_sinusoid_task,
    sample_ssl_pool,
    sinusoid_values,
    task_rng,
    tasks_checksum,
    tasks_document,
)
from utils.errors import ConfigError


class TestSinusoid:
    def test_noise_free_targets_follow_the_curve(self):
        cfg = TaskGenConfig(noise_sigma=0.0)
        task = gen_sinusoid_task(cfg, task_rng(0, 0, 0))
        meta = task.meta
        expected = sinusoid_values(task.support_inputs, meta['amplitude'], meta['frequency'], meta['phase'])
        np.testing.assert_allclose(task.support_targets, expected)
        assert 0.1 <= meta['amplitude'] <= 5.0
        assert 0.5 <= meta['frequency'] <= 2.0
        assert 0.0 <= meta['phase'] <= 2.0 * math.pi

    def test_shapes_and_ranges(self):
        cfg = TaskGenConfig(k_shot=10, query_count=7)
        task = gen_sinusoid_task(cfg, task_rng(3, 1, 2))
        assert task.support_inputs.shape == (10, 1)
        assert task.query_targets.shape == (7, 1)
        assert np.all(np.abs(task.all_inputs) <= 5.0)
        assert task.kind is LossKind.REGRESSION
        assert task.n_samples == 17

    def test_support_range_restriction(self):
        cfg = TaskGenConfig(support_x_range=(0.0, 1.0))
        task = gen_sinusoid_task(cfg, task_rng(0, 5))
        assert np.all((task.support_inputs >= 0.0) & (task.support_inputs <= 1.0))

    def test_inverted_range(self):
        with pytest.raises(ConfigError):
            gen_sinusoid_task(TaskGenConfig(amplitude_range=(5.0, 0.1)), task_rng(0))

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            gen_sinusoid_task(TaskGenConfig(kind=TaskKind.CLUSTER), task_rng(0))


def test_quadratic_coefficients_in_range():
    cfg = TaskGenConfig(kind=TaskKind.QUADRATIC, noise_sigma=0.0)
    task = gen_quadratic_task(cfg, task_rng(1, 0))
    a, b, c = (task.meta[key] for key in 'abc')
    assert all(-1.0 <= value <= 1.0 for value in (a, b, c))
    x = task.query_inputs
    np.testing.assert_allclose(task.query_targets, a * x ** 2 + b * x + c)


class TestClusters:
    def test_balanced_labels(self):
        cfg = TaskGenConfig(kind=TaskKind.CLUSTER, n_way=3, k_shot=2, query_count=4, input_dim=5)
        task = gen_cluster_task(cfg, task_rng(0, 0))
        assert task.support_inputs.shape == (6, 5)
        np.testing.assert_array_equal(np.bincount(task.support_targets), [2, 2, 2])
        np.testing.assert_array_equal(np.bincount(task.query_targets), [4, 4, 4])
        assert task.n_way == 3

    def test_separated_clusters_are_nearest_centroid_separable(self):
        cfg = TaskGenConfig(kind=TaskKind.CLUSTER, n_way=5, k_shot=1, query_count=3, input_dim=8,
                            cluster_separation=100.0)
        for index in range(100):
            task = gen_cluster_task(cfg, task_rng(0, index))
            assert task.support_inputs.shape[0] == 5 and task.query_inputs.shape[0] == 15
            centroids = np.stack([task.support_inputs[task.support_targets == label].mean(axis=0)
                                  for label in range(5)])
            distances = np.linalg.norm(task.query_inputs[:, None, :] - centroids[None], axis=2)
            np.testing.assert_array_equal(np.argmin(distances, axis=1), task.query_targets)

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            gen_cluster_task(TaskGenConfig(kind=TaskKind.CLUSTER, n_way=1), task_rng(0))


class TestSelfSupervised:
    def test_block_structure(self):
        cfg = TaskGenConfig(kind=TaskKind.SSL, augment_count=4, block_count=2, aug_sigma=0.0, aug_scaling=False)
        pool = np.arange(20, dtype=np.float64).reshape(10, 2)
        tasks = build_ssl_batch(pool, cfg, task_rng(0))
        assert len(tasks) == 2
        first = tasks[0]
        assert first.n_way == 5
        np.testing.assert_array_equal(first.support_targets, np.repeat(np.arange(5), 2))
        np.testing.assert_array_equal(first.support_inputs[:2], pool[[0, 0]])
        np.testing.assert_array_equal(tasks[1].query_inputs[0], pool[5])

    def test_odd_augmentation_count_favours_support(self):
        cfg = TaskGenConfig(kind=TaskKind.SSL, augment_count=3, block_count=1)
        task = build_ssl_batch(np.zeros((4, 1)), cfg, task_rng(0))[0]
        assert task.support_inputs.shape[0] == 8
        assert task.query_inputs.shape[0] == 4

    def test_indivisible_pool(self):
        cfg = TaskGenConfig(kind=TaskKind.SSL, block_count=3)
        with pytest.raises(ConfigError):
            build_ssl_batch(np.zeros((10, 1)), cfg, task_rng(0))

    def test_single_augmentation_rejected(self):
        cfg = TaskGenConfig(kind=TaskKind.SSL, augment_count=1)
        with pytest.raises(ConfigError):
            build_ssl_batch(np.zeros((10, 1)), cfg, task_rng(0))

    def test_pool_is_reproducible(self):
        cfg = TaskGenConfig(kind=TaskKind.SSL, ssl_pool_size=20, input_dim=3)
        np.testing.assert_array_equal(sample_ssl_pool(cfg, task_rng(4)), sample_ssl_pool(cfg, task_rng(4)))

    def test_pool_spreads_over_mixture_components(self):
        cfg = TaskGenConfig(kind=TaskKind.SSL, ssl_pool_size=200, input_dim=8)
        pool = sample_ssl_pool(cfg, task_rng(0))
        assert pool.shape == (200, 8)
        # a single standard normal would give per-dimension variance near 1
        assert pool.var(axis=0).mean() > 2.0


class TestSampler:
    def test_same_seed_same_tasks(self):
        first = TaskSampler(TaskGenConfig(seed=11)).sample(4, 3)
        second = TaskSampler(TaskGenConfig(seed=11)).sample(4, 3)
        assert tasks_checksum(first) == tasks_checksum(second)

    def test_iterations_and_seeds_differ(self):
        sampler = TaskSampler(TaskGenConfig(seed=11))
        assert tasks_checksum(sampler.sample(0, 2)) != tasks_checksum(sampler.sample(1, 2))
        other = TaskSampler(TaskGenConfig(seed=12))
        assert tasks_checksum(sampler.sample(0, 2)) != tasks_checksum(other.sample(0, 2))

    def test_held_out_disjoint_from_training(self):
        sampler = TaskSampler(TaskGenConfig(seed=0))
        training = {task.checksum() for i in range(5) for task in sampler.sample(i, 4)}
        assert not training & {task.checksum() for task in sampler.held_out(10)}

    def test_fixed_pool(self):
        sampler = TaskSampler(TaskGenConfig(seed=2, task_pool_size=3))
        pool = {task.checksum() for task in sampler.pool}
        drawn = {task.checksum() for i in range(20) for task in sampler.sample(i, 4)}
        assert drawn <= pool

    def test_cycled_pool_walks_in_order(self):
        sampler = TaskSampler(TaskGenConfig(seed=2, task_pool_size=4, pool_order=PoolOrder.CYCLE))
        pool = [task.checksum() for task in sampler.pool]
        assert [task.checksum() for task in sampler.sample(0, 4)] == pool
        assert [task.checksum() for task in sampler.sample(7, 4)] == pool
        assert [task.checksum() for task in sampler.sample(1, 3)] == [pool[3], pool[0], pool[1]]

    def test_ssl_sampling_count(self):
        sampler = TaskSampler(TaskGenConfig(kind=TaskKind.SSL, ssl_pool_size=8, block_count=2, input_dim=3))
        tasks = sampler.sample(0, 5)
        assert len(tasks) == 5
        assert all(task.n_way == 4 for task in tasks)

    def test_document_carries_checksum(self):
        tasks = TaskSampler(TaskGenConfig()).sample(0, 2)
        document = tasks_document(tasks, {'seed': 0})
        assert document['checksum'] == tasks_checksum(tasks)
        assert len(document['tasks']) == 2
        assert document['tasks'][0]['kind'] == 'regression'
