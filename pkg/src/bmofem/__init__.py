"""Finite elements for divergence-form elliptic problems whose coefficients
are unbounded but of bounded mean oscillation."""

from .mesh import (
    MAX_LEVEL,
    Mesh,
    build_uniform_mesh,
    cell_areas,
    interior_vertex_indices,
    mesh_to_text,
    refine,
    shape_regularity_ratio,
)
from .coeff import (
    CoefficientField,
    DyadicSquare,
    PiecewiseConstantMatrixField,
    ScalarField,
    bmo_seminorm_estimate,
    checkerboard_coefficient,
    coefficient_entry,
    coefficient_error,
    coercivity_of_projection,
    constant_coefficient,
    dyadic_maximal,
    identity_coefficient,
    john_nirenberg_check,
    load_sampled_coefficient,
    log_reciprocal_scalar,
    log_singular_coefficient,
    mesh_maximal,
    project_coefficient,
    smooth_coefficient,
)
from .fem import (
    P1Function,
    PCVectorField,
    SparseSPDSystem,
    assemble_rhs,
    assemble_stiffness,
    dump_system,
    evaluate_p1,
    gradient,
    interpolate_p1,
    lp_norm,
    p1_zero_trace,
    project_rhs,
    solve_bvp,
    solve_projected,
    solve_spd,
)
from .hodge import (
    HodgeSplit,
    conjugate_field,
    conjugate_gap,
    flux_decompose,
    hodge_decompose,
)
from .harness import (
    CSV_HEADER,
    ExperimentConfig,
    ReportRow,
    StudyReport,
    config_from_dict,
    prolong,
    report_to_csv,
    run_study,
    write_report,
)
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
