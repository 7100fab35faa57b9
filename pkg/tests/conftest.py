import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("grid") / "grid.npz"


@pytest.fixture(scope="session")
def three_static():
    """Three-static fixture, seed 0: mixture, truth, detections and confirmed tracks."""
    from sonarray.geometry import CUBE_ARRAY
    from sonarray.pipeline import localize_and_track
    from sonarray.simulator import get_fixture, synthesize_scene

    mix, truth = synthesize_scene(get_fixture("three-static"), 0)
    det, records = localize_and_track(mix, CUBE_ARRAY, seed=0)
    return mix, truth, det, records


@pytest.fixture(scope="session")
def three_static_separation(three_static):
    """Multi-source and single-source post-filter runs with stem references."""
    from sonarray.geometry import CUBE_ARRAY
    from sonarray.pipeline import separate
    from sonarray.postfilter import PostfilterConfig

    mix, truth, _, records = three_static
    refs = np.concatenate([truth.stems, truth.noise[None]])
    multi = separate(mix, CUBE_ARRAY, records, pf_config=PostfilterConfig(reverb=False),
                     references=refs, diagnostics=True)
    single = separate(mix, CUBE_ARRAY, records, pf_config=PostfilterConfig.single_source())
    return multi, single


@pytest.fixture(scope="session")
def single_static():
    from sonarray.geometry import CUBE_ARRAY
    from sonarray.pipeline import localize_and_track, separate
    from sonarray.simulator import get_fixture, synthesize_scene

    mix, truth = synthesize_scene(get_fixture("single-static"), 0)
    _, records = localize_and_track(mix, CUBE_ARRAY, seed=0)
    res = separate(mix, CUBE_ARRAY, records, diagnostics=True)
    return mix, truth, records, res
