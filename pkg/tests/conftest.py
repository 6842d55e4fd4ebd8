import os
import sys
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pvnowcast.grid import GridField, GridGeometry, Kind

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

T0 = datetime(2020, 5, 1, 10, 0, tzinfo=timezone.utc)


def make_field(values, kind=Kind.CSI, t=T0, lon_min=7.0, lat_min=46.0, cell=0.02):
    values = np.asarray(values, dtype=np.float32)
    geom = GridGeometry(lon_min, lat_min, cell, values.shape[1], values.shape[0])
    return GridField(geom, t, values, kind)


def textured(shape, seed=0, scale=6.0):
    """Smooth random texture in [0, 1]."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    a = ndimage.gaussian_filter(rng.standard_normal(shape), scale, mode="wrap")
    a = (a - a.min()) / (a.max() - a.min())
    return a


@pytest.fixture
def field_factory():
    return make_field


sys.path.insert(0, os.path.dirname(__file__))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
