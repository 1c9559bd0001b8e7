"""Numerical laboratory for conformal metrics built from holomorphic data.

Expression trees over the extended complex plane, Weierstrass-type data
triples with closed-form curvature and an independent finite-difference
oracle, geodesic distance fields on conformally weighted meshes, executable
omitted-value/boundedness predicates with the explicit curvature-estimate
constant, and surface synthesis for minimal surfaces, maxfaces, improper
affine fronts and flat fronts.
"""

__version__ = "0.1.0"

from .expr import (
    INFINITY,
    ExtComplex,
    MeroExpr,
    MobiusMap,
    chordal,
    derivative,
    eval_ext,
    local_order,
    mobius_apply,
    parse_mero,
    spherical_gradient,
    stereographic,
    to_source,
)
from .mtriple import (
    Annulus,
    Disk,
    DomainSpec,
    MTriple,
    Rectangle,
    TruncatedPlane,
    check_regularity,
    curvature,
    curvature_fd,
    make_triple,
    metric_density,
)
from .geodesy import (
    CompletenessReport,
    MeshedDomain,
    boundary_distance_field,
    build_mesh,
    completeness_probe,
    hyperbolic_distance,
    path_length,
    poincare_density,
)
from .estimates import (
    Bounded,
    EstimateReport,
    Omits,
    curvature_constant,
    fujimoto_ratio,
    marty_sup,
    optimal_example,
    property_check,
    verify_estimate,
    zalcman_rescale,
)
from .surfaces import (
    FlatFrontData,
    ImproperAffineData,
    MaxfaceData,
    MinimalData,
    SurfaceMesh,
    export_mesh,
    gauss_normal_check,
    immersion_check,
    period_residuals,
    singular_locus,
    synth_flatfront,
    synth_improper_affine,
    synth_maxface,
    synth_minimal,
)
