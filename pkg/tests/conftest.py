import numpy as np
import pytest

from beamtrack import ArrayGeometry, PilotConfig


@pytest.fixture
def geom8():
    return ArrayGeometry(8, 8)


@pytest.fixture
def pilot():
    """Unit pilot at 0 dB transmit SNR."""
    return PilotConfig(s_p=1.0, sigma2=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
