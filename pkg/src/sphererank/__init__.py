"""Numerical laboratory for conjugate points and spherical rank on model manifolds."""

from .errors import (
    AmbiguousEndpointError,
    DegeneratePlaneError,
    DomainError,
    NormalizationError,
    ParameterError,
)
from .geodesics import (
    GeodesicState,
    ParallelField,
    Trajectory,
    exp_map,
    geodesic_flow,
    normal_frame,
    parallel_transport,
    time_grid,
)
from .geometry import (
    BergerSphere,
    ComplexProjective,
    CurvatureScan,
    Frame,
    ManifoldModel,
    Point,
    RoundSphere,
    Scaled,
    Tangent,
    curvature_bounds,
    curvature_operator,
    curvature_scan,
    make_frame,
    make_point,
    make_tangent,
    metric_inner,
    point_distance,
    sectional_curvature,
    unwrap,
)
from .jacobi import (
    ConjugateEvent,
    CurvatureProfile,
    JacobiPropagator,
    SphericalFieldCertificate,
    SturmResult,
    conjugate_points,
    curvature_profile,
    fixed_endpoint_index,
    jacobi_propagate,
    spherical_field,
    verify_sturm_bound,
)
from .rank import (
    BergerReportRow,
    GeodesicSampler,
    RankEvidence,
    RankVerdict,
    berger_report,
    check_positive_spherical_rank,
    check_weak_spherical_rank,
    killing_jacobi_field,
    measure_fiber_time,
    normalize_to_bound,
    weak_field_search,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousEndpointError",
    "BergerReportRow",
    "BergerSphere",
    "ComplexProjective",
    "ConjugateEvent",
    "CurvatureProfile",
    "CurvatureScan",
    "DegeneratePlaneError",
    "DomainError",
    "Frame",
    "GeodesicSampler",
    "GeodesicState",
    "JacobiPropagator",
    "ManifoldModel",
    "NormalizationError",
    "ParallelField",
    "ParameterError",
    "Point",
    "RankEvidence",
    "RankVerdict",
    "RoundSphere",
    "Scaled",
    "SphericalFieldCertificate",
    "SturmResult",
    "Tangent",
    "Trajectory",
    "berger_report",
    "check_positive_spherical_rank",
    "check_weak_spherical_rank",
    "conjugate_points",
    "curvature_bounds",
    "curvature_operator",
    "curvature_profile",
    "curvature_scan",
    "exp_map",
    "fixed_endpoint_index",
    "geodesic_flow",
    "jacobi_propagate",
    "killing_jacobi_field",
    "make_frame",
    "make_point",
    "make_tangent",
    "measure_fiber_time",
    "metric_inner",
    "normal_frame",
    "normalize_to_bound",
    "parallel_transport",
    "point_distance",
    "sectional_curvature",
    "spherical_field",
    "time_grid",
    "unwrap",
    "verify_sturm_bound",
    "weak_field_search",
]
