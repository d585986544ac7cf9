import numpy as np
import pytest

from tinyalign import tensor as T


@pytest.fixture(autouse=True)
def _clean_tape():
    T.clear_tape()
    yield
    T.clear_tape()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
