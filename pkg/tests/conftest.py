import datetime as dt
import sys

import numpy as np
import pytest

from broomsat.scene_store import Scene, SceneMeta


def make_meta(width=3, height=2, date=dt.date(2023, 6, 1), cloud=0.0, **kw):
    return SceneMeta(acquisition_date=date, cloud_fraction=cloud, sun_zenith=30.0,
                     sun_azimuth=150.0, view_zenith=5.0, view_azimuth=100.0,
                     width=width, height=height, **kw)


def make_scene(refl, date=dt.date(2023, 6, 1), cloud=0.0, valid=None):
    refl = np.asarray(refl, dtype=np.float64)
    return Scene.from_reflectance(make_meta(refl.shape[2], refl.shape[1], date, cloud), refl, valid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
