import numpy as np
import pytest

from gaitshape.data import write_synthetic_dataset
from gaitshape.trainer import TrainConfig


@pytest.fixture(scope="session")
def tiny_tree(tmp_path_factory):
    """Small on-disk synthetic dataset shared across tests."""
    root = tmp_path_factory.mktemp("tiny") / "ds"
    manifest = write_synthetic_dataset(
        root,
        n_subjects=6,
        views=[0, 90, 150],
        frames=12,
        seed=11,
        variants={"nm": 5, "bg": 1, "cl": 1},
    )
    return root, manifest


def lean_config(**overrides) -> TrainConfig:
    """Training config small enough for single-core CPU test runs."""
    base = dict(
        p=3,
        k=2,
        frames_per_sample=10,
        max_iters=5,
        silhouette_channels=(8, 16, 32),
        body_channels=(8, 8, 16, 16, 24, 32),
        embedding_dim=32,
        eval_every=1000,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
