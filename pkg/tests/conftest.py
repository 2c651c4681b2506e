import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lsrm.numerics import rng_stream  # noqa: E402


@pytest.fixture
def rng():
    return rng_stream(20240601, 0)


def random_stationary(rng, scale=0.9):
    """Random 2x2 coefficient matrix with spectral radius below ``scale``."""
    while True:
        m = rng.uniform(-1, 1, size=(2, 2))
        if np.max(np.abs(np.linalg.eigvals(m))) < scale:
            return m


def random_spd(rng, d=2):
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.5 * np.eye(d)
