"""Geodesic counting, blocking thresholds, and growth-rate verification on
flat and hyperbolic geometries."""

from .blocker import (
    IncidenceInstance,
    PairSampler,
    RecursionReport,
    SolverCaps,
    ThresholdResult,
    blocking_cost_sampled,
    blocking_threshold,
    build_instance,
    midpoint_cover,
    recursion_harness,
    solve_exact,
)
from .flatspace import (
    FlatSpace,
    GeodesicSegment,
    RationalPoint,
    classify,
    connecting_family,
    count,
    enumerate_geodesics,
    intersection_candidates,
    point_on_geodesic,
    shortest_vector,
)
from .growth import (
    ClosedForm,
    GrowthClass,
    GrowthSeries,
    TransformParams,
    bound_check,
    classify_growth,
    kappa,
    rate_estimate,
    transform,
)
from .hyperbolic import (
    FuchsianPreset,
    MobiusMatrix,
    blocking_lower_bound_series,
    certified_blocking_lower_bound,
    entropy_estimate,
    hyp_distance,
    load_preset,
    orbit_count,
    uniform_count_bound,
    word_growth,
)

__version__ = "0.1.0"
