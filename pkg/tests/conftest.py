import numpy as np
import pytest

import rfanet as rf


@pytest.fixture(scope="session")
def desk_config():
    return rf.desk_scale()


@pytest.fixture(scope="session")
def small_dataset(desk_config):
    """Shared 12-identity synthetic dataset for the sweep tests."""
    return rf.generate_synthetic(
        12, 24,
        width=desk_config.image_w, height=desk_config.image_h,
        appearance_seed=3,
        camera_gain=(1.05, 1.0, 0.95), camera_offset=(0.05, 0.0, -0.05),
        jitter=0.02, noise_pool_size=20,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, width, height):
    return rf.RawImage(
        width, height, rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    )
