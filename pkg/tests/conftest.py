import numpy as np
import pytest

from engine.network import Activation, Granularity, Layer, LossKind, Network, build_network
from tasks.task_generator import Task


def make_layer(weight, bias, activation=Activation.IDENTITY) -> Layer:
    return Layer(np.array(weight, dtype=np.float64), np.array(bias, dtype=np.float64), activation)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def one_unit_net():
    """1 hidden relu unit: w1=1, b1=0, w2=3, b2=0.5"""
    return Network([
        make_layer([[1.0]], [0.0], Activation.RELU),
        make_layer([[3.0]], [0.5]),
    ])


@pytest.fixture
def linear_net():
    """Single identity layer y = θ·x + b; factory over θ"""
    def build(theta: float, bias: float = 0.0) -> Network:
        return Network([make_layer([[theta]], [bias])])
    return build


@pytest.fixture
def random_net():
    def build(rng, sizes, activation=Activation.TANH, granularity=Granularity.PER_UNIT) -> Network:
        net = build_network(sizes, activation, rng, granularity)
        for layer in net.layers:
            layer.bias[:] = rng.normal(0.0, 0.3, size=layer.bias.shape)
        return net
    return build


@pytest.fixture
def random_task():
    def build(rng, net: Network, loss_kind: LossKind = LossKind.REGRESSION,
              n_support: int = 5, n_query: int = 7) -> Task:
        def targets(n):
            if loss_kind is LossKind.CLASSIFICATION:
                return rng.integers(0, net.output_dim, size=n)
            return rng.normal(size=(n, net.output_dim))
        return Task(
            rng.normal(size=(n_support, net.input_dim)), targets(n_support),
            rng.normal(size=(n_query, net.input_dim)), targets(n_query),
            loss_kind, n_way=net.output_dim if loss_kind is LossKind.CLASSIFICATION else 0,
        )
    return build
