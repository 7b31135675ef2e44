import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hnne.dataio import gen_blobs  # noqa: E402


@pytest.fixture(scope="session")
def blobs():
    """The desk-scale blobs set: 10 clusters, 5000 points, 64 dimensions."""
    return gen_blobs(5000, 64, 10, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
