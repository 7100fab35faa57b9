"""Array-recording simulator with exact ground truth."""

from .fixtures import FIXTURE_NAMES, available_fixtures, get_fixture, standard_fixtures
from .scene import (
    GroundTruth,
    SceneSpec,
    SourceSpec,
    Trajectory,
    load_scene,
    read_truth_csv,
    render_source,
    reverb_kernel,
    scene_from_dict,
    synthesize_scene,
    write_outputs,
    write_truth_csv,
)
from .signals import GENERATORS, pink_noise

__all__ = [
    "FIXTURE_NAMES",
    "GENERATORS",
    "GroundTruth",
    "SceneSpec",
    "SourceSpec",
    "Trajectory",
    "available_fixtures",
    "get_fixture",
    "load_scene",
    "pink_noise",
    "read_truth_csv",
    "render_source",
    "reverb_kernel",
    "scene_from_dict",
    "standard_fixtures",
    "synthesize_scene",
    "write_outputs",
    "write_truth_csv",
]
