"""Shared helpers for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from segros.textfilter import TokenSequence


def token_sequence(rows, special=()):
    """TokenSequence from a plain list of rows; specials given by index."""
    rows = np.asarray(rows, dtype=np.float64)
    flags = np.zeros(rows.shape[0], dtype=bool)
    for i in special:
        flags[i] = True
    return TokenSequence(rows, flags)


def unit(dim, axis):
    v = np.zeros(dim)
    v[axis] = 1.0
    return v


@pytest.fixture
def rng_factory():
    from segros.numerics import Rng

    return Rng
