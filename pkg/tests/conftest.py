import numpy as np
import pytest

from vton import data

TINY = (32, 24)


@pytest.fixture(scope="session")
def tiny_sample():
    return data.synth_sample(data.random_spec(7, image_size=TINY, tps_k=3))


@pytest.fixture(scope="session")
def tiny_samples():
    return [data.synth_sample(data.random_spec(s, image_size=TINY, tps_k=3))
            for s in range(4)]


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
