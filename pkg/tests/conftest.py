import numpy as np
import pytest

from augrf.dataset import CameraPose, PosedDataset, Scene, look_at
from augrf.field import FieldConfig, init_params


def random_dataset(n=4, size=(6, 5), seed=0):
    rng = np.random.default_rng(seed)
    poses = []
    for i in range(n):
        az = 2 * np.pi * i / max(n, 1)
        poses.append(CameraPose(look_at([3 * np.cos(az), 3 * np.sin(az), 1.0]), 0.8))
    images = tuple(rng.random((*size, 3)) for _ in range(n))
    return PosedDataset(images, tuple(poses))


@pytest.fixture
def small_dataset():
    return random_dataset()


@pytest.fixture
def tiny_scene():
    train = random_dataset(3, (8, 8), seed=1)
    test = random_dataset(2, (8, 8), seed=2)
    return Scene(train, test, near=1.5, far=4.5)


@pytest.fixture
def tiny_config():
    return FieldConfig(
        pe_levels_position=2, pe_levels_direction=1, mlp1_widths=(8,), latent_dim=4,
        mlp2_widths=(6,), embed_dim=3,
    )


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=0)
