import numpy as np
import pytest

from discredibility.data import SynthConfig, gen_synthetic, make_splits
from discredibility.modelzoo import train_generator, train_shadows, train_victim
from discredibility.tinynn import DenseNet, TrainConfig


def quick_train_config(epochs: int = 30, seed: int = 0) -> TrainConfig:
    return TrainConfig(
        learning_rate=0.1,
        decay_factor=1.0,
        decay_epochs=(),
        epochs=epochs,
        batch_size=16,
        seed=seed,
    )


@pytest.fixture(scope="session")
def tiny_data():
    """160 samples: 2 classes x 2 subpopulations x 40, 6 features."""
    return gen_synthetic(
        SynthConfig(
            classes=2,
            subpops_per_class=2,
            dim=6,
            cluster_spread=0.05,
            center_spread=0.2,
            samples_per_subpop=40,
            seed=3,
        )
    )


@pytest.fixture(scope="session")
def tiny_split(tiny_data):
    return make_splits(tiny_data, [0.25, 0.25, 0.25, 0.25], seed=1)


@pytest.fixture(scope="session")
def tiny_victim(tiny_data, tiny_split):
    net, report = train_victim(tiny_data, tiny_split, [8], quick_train_config(epochs=200))
    return net, report


@pytest.fixture(scope="session")
def tiny_shadows(tiny_data, tiny_split):
    pool_ids = np.sort(
        np.concatenate(
            [tiny_split.auditor_train_ids, tiny_split.member_ids, tiny_split.nonmember_eval_ids]
        )
    )
    return train_shadows(tiny_data, pool_ids, 4, [8], quick_train_config(epochs=10, seed=5))


@pytest.fixture(scope="session")
def tiny_generator(tiny_data, tiny_split, tiny_victim):
    public = tiny_data.subset(tiny_split.public_pool_ids)
    return train_generator(public, tiny_victim[0], [16], quick_train_config(epochs=100, seed=4))


@pytest.fixture
def identity_encoder():
    """
    Encoder whose latent is the input itself (inputs are non-negative), with a
    two-class head comparing the first two features.
    """
    dim = 4
    head = np.zeros((dim, 2))
    head[0, 0] = 1.0
    head[1, 1] = 1.0
    return DenseNet([np.eye(dim), head], [np.zeros(dim), np.zeros(2)])
