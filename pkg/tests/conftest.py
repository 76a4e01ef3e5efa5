import numpy as np
import pytest

from pumpshape.turbulence import TurbulenceParams

# field values of the emulated 1 km link; scale 1e-3 gives the lab screen
FIELD = dict(cn2=1e-15, z=1000.0, wavelength=808e-9, outer_scale=10.0, inner_scale=5e-3)


@pytest.fixture
def lab_params():
    return TurbulenceParams(**FIELD, scale=1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lab_like(r0_factor=1.0):
    """Lab screen with r0 multiplied by ``r0_factor`` (all lengths scale together)."""
    return TurbulenceParams(**FIELD, scale=1e-3 * r0_factor)
