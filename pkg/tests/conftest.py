import numpy as np
import pytest
from hypothesis import settings

from cbctmar import _kernels
from cbctmar.geometry import ScanGeometry
from cbctmar.volume import Grid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def small_geometry():
    return ScanGeometry.circular(24, det_nu=40, det_nv=24, pitch_u_mm=3.8, pitch_v_mm=3.8)


@pytest.fixture
def small_grid():
    return Grid.centered((32, 32, 16), 3.0)


@pytest.fixture(params=_kernels.available())
def each_backend(request):
    with _kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
