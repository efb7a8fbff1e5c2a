import numpy as np
import pytest

from beamobs.beam_model import build_modal_basis
from beamobs.config import ExperimentConfig

# Characteristic roots to 21 digits (50-digit mpmath bisection), used as
# frozen expectations wherever a test needs exact root values.
FROZEN_ROOTS = np.array([
    1.87510406871196116645,
    4.69409113297417457644,
    7.85475743823761256486,
    10.9955407348754669907,
    14.1371683910464705809,
    17.2787595320882363335,
    20.4203522510412509944,
    23.5619449018064435015,
    26.7035375555182988054,
    29.8451302091028172638,
])

# omega_1 for the default aluminum beam, same provenance as the roots.
FROZEN_OMEGA1 = 6.46007083774818993031

# Lowest interior curvature zero (second mode), frozen the same way.
FROZEN_MODE2_ZERO = 0.43311089899888135246


@pytest.fixture(scope="session")
def default_config():
    return ExperimentConfig().validate()


@pytest.fixture(scope="session")
def beam(default_config):
    return default_config.beam_spec()


@pytest.fixture(scope="session")
def basis2(beam):
    return build_modal_basis(beam, 2, 501)


@pytest.fixture(scope="session")
def basis4(beam):
    return build_modal_basis(beam, 4, 501)


@pytest.fixture(scope="session")
def basis8(beam):
    return build_modal_basis(beam, 8, 501)


@pytest.fixture(scope="session")
def timing(default_config, basis8):
    """(horizon, dt) for one period of the first mode at the default step count."""
    return default_config.horizon_and_dt(basis8.frequencies[0])
