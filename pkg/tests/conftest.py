import numpy as np
import pytest

from tests.helpers import ms, scenario


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def short_scenario():
    """Two seconds of undisturbed PTP over a symmetric 1 ms path."""
    return scenario(duration_ns=ms(2000), link__d_common_ns=ms(1))
