"""Named scenes used by the tests, the acceptance suite and the CLI."""

from __future__ import annotations

import numpy as np

from .scene import SceneSpec, SourceSpec, Trajectory

FIXTURE_NAMES = (
    "single-static",
    "three-static",
    "four-moving",
    "two-crossing",
)

# Continuous talkers: short gaps, rare long pauses.
_TALKER = {"gap": (0.03, 0.12), "long_pause_prob": 0.05, "long_pause": (0.3, 0.6)}
# Digit-string talkers: frequent pauses between short utterances.
_DIGITS = {"long_pause_prob": 0.3}


def _single_static(t60: float) -> SceneSpec:
    return SceneSpec(
        # Talker stops at 3 s; the tail is background only.
        sources=[SourceSpec(Trajectory.static(30.0, 10.0), "speech", -26.0, dict(_TALKER), window=(0.0, 3.0))],
        duration=5.0,
        noise_db=-50.0,
        t60=t60,
    )


def _three_static(t60: float) -> SceneSpec:
    return SceneSpec(
        sources=[
            SourceSpec(Trajectory.static(az, 0.0), "speech", -26.0, dict(_DIGITS))
            for az in (-90.0, 0.0, 135.0)
        ],
        duration=8.0,
        noise_db=-45.0,
        t60=t60,
    )


def _four_moving(t60: float) -> SceneSpec:
    t = np.linspace(0.0, 8.0, 9)
    paths = [
        Trajectory.from_angles(t, -10.0 + 5.0 * t, 10.0),
        Trajectory.from_angles(t, 80.0 + 6.0 * t, -5.0),
        Trajectory.from_angles(t, 170.0 + 5.0 * t, 15.0),
        Trajectory.from_angles(t, -100.0 - 6.0 * t, 0.0),
    ]
    return SceneSpec(
        sources=[SourceSpec(p, "speech", -26.0, dict(_TALKER)) for p in paths],
        duration=8.0,
        noise_db=-50.0,
        t60=t60,
    )


def _two_crossing(t60: float) -> SceneSpec:
    t = np.array([0.0, 6.0])
    return SceneSpec(
        sources=[
            SourceSpec(Trajectory.from_angles(t, [-60.0, 60.0], 0.0), "speech", -26.0, dict(_TALKER)),
            SourceSpec(Trajectory.from_angles(t, [60.0, -60.0], 0.0), "speech", -26.0, dict(_TALKER)),
        ],
        duration=6.0,
        noise_db=-50.0,
        t60=t60,
    )


_BUILDERS = {
    "single-static": (_single_static, 0.0),
    "three-static": (_three_static, 0.35),
    "four-moving": (_four_moving, 0.0),
    "two-crossing": (_two_crossing, 0.0),
}


def get_fixture(name: str) -> SceneSpec:
    """Scene for ``name``; append ``-anechoic`` or ``-reverb`` to override T60."""
    base, t60 = name, None
    if name.endswith("-anechoic"):
        base, t60 = name[: -len("-anechoic")], 0.0
    elif name.endswith("-reverb"):
        base, t60 = name[: -len("-reverb")], 0.35
    if base not in _BUILDERS:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(available_fixtures())}")
    build, default_t60 = _BUILDERS[base]
    return build(default_t60 if t60 is None else t60)


def available_fixtures() -> list[str]:
    names = []
    for n in FIXTURE_NAMES:
        names += [n, f"{n}-anechoic", f"{n}-reverb"]
    return names


def standard_fixtures(seed: int = 0) -> dict:
    """Every fixture at T60 = 0 and 0.35 s, rendered with ``seed``."""
    from .scene import synthesize_scene

    out = {}
    for n in FIXTURE_NAMES:
        for suffix in ("-anechoic", "-reverb"):
            out[n + suffix] = synthesize_scene(get_fixture(n + suffix), seed)
    return out
