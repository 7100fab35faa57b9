"""Steered-beamformer localisation: weighting, correlations, grid search."""

from .correlation import CrossCorrelationBank, enhanced_cross_correlations
from .grid import (
    SphericalGrid,
    build_grid,
    build_tdoa_table,
    far_field_tdoa,
    load_or_build,
    near_field_tdoa,
)
from .noise import MCRA, NoiseWeightState, mcra_update, reverb_decay, update_weights
from .search import (
    PotentialSource,
    direction_search,
    energy_threshold,
    multi_source_search,
    refine_direction,
    source_confidence,
)

__all__ = [
    "CrossCorrelationBank",
    "MCRA",
    "NoiseWeightState",
    "PotentialSource",
    "SphericalGrid",
    "build_grid",
    "build_tdoa_table",
    "direction_search",
    "energy_threshold",
    "enhanced_cross_correlations",
    "far_field_tdoa",
    "load_or_build",
    "mcra_update",
    "multi_source_search",
    "near_field_tdoa",
    "refine_direction",
    "reverb_decay",
    "source_confidence",
    "update_weights",
]
