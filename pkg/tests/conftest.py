import numpy as np
import pytest

from splitfdr import RngHandle


@pytest.fixture
def rng():
    return RngHandle(12345)


def gen(seed: int) -> np.random.Generator:
    """Plain numpy generator for test-local randomness."""
    return np.random.Generator(np.random.PCG64(seed))
