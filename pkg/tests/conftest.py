import numpy as np
import pytest

from snakecpg.cpg import OscillatorParams
from snakecpg.robot import PhysicsParams


@pytest.fixture
def params() -> OscillatorParams:
    """Stock tuned parameter set."""
    return OscillatorParams()


@pytest.fixture
def single_unit(params) -> OscillatorParams:
    """One uncoupled oscillator with unamplified output."""
    return params.replace(n_oscillators=1, a_z=1.0)


@pytest.fixture
def phys() -> PhysicsParams:
    return PhysicsParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
