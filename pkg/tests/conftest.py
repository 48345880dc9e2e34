import numpy as np
import pytest

from roweeder.raster import BinaryMask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mask(rng, height=64, width=64, density=0.2) -> BinaryMask:
    return BinaryMask(rng.random((height, width)) < density)
