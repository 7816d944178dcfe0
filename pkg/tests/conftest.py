import numpy as np
import pytest

from kinseg.autodiff import set_default_dtype


@pytest.fixture
def f64():
    """Run a test with float64 tensors (gradient-test mode)."""
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
