import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmofem import coeff as C
from bmofem.errors import InvariantError, SingularityError
from bmofem.mesh import build_uniform_mesh

# Frozen oracle: level-2 cell averages of (1 + 0.5 |log|x||), computed with
# degree-10 Gauss (Duffy) on 4^8 subtriangles per cell before the build
# (scripts/compute_reference_values.py), package cell order.
LOG_PROJECTION_L2_A11 = [
    1.87716130592797, 1.8771613059279264, 1.4305841257542777, 1.4973744997102776,
    1.1995193328602674, 1.2508044971173207, 1.04234822156269, 1.0818350847436595,
    1.4973744997102776, 1.4305841257542704, 1.3172309245792668, 1.3172309245792506,
    1.1483390136519416, 1.167954380716423, 1.0296060414938082, 1.043249078505642,
    1.2508044971172916, 1.1995193328602722, 1.1679543807164203, 1.1483390136519238,
    1.0629194813341682, 1.0629194814385523, 1.045302890235326, 1.0382128325148505,
    1.0818350846854654, 1.042348221611745, 1.0432490784263448, 1.0296060416205317,
    1.0382128324464845, 1.0453028900538854, 1.1065176278106899, 1.1065176278106974,
]

# Closed forms for the classical unbounded example on the unit square:
# mean of log(1/|x|) is (3 - ln2 - pi/2)/2, mean of |log(1/|x|) - mean| is
# (pi/4) exp(-(3 - ln2 - pi/2)), and the level sets are circular arcs, so
# |{|w - w_Q| > lam}| = (pi/4) exp(-(3 - ln2 - pi/2)) exp(-2 lam).
LOG_UNIT_SQUARE_MEAN = (3.0 - math.log(2.0) - math.pi / 2.0) / 2.0
LOG_UNIT_SQUARE_OSC = (math.pi / 4.0) * math.exp(-2.0 * LOG_UNIT_SQUARE_MEAN)


# ---------------------------------------------------------------------------
# fixtures and projection


def test_fixture_symmetry_and_coercivity(rng):
    pts = rng.uniform(0.01, 0.99, size=(200, 2))
    fixtures = [
        C.identity_coefficient(),
        C.smooth_coefficient(),
        C.log_singular_coefficient(0.5),
        C.checkerboard_coefficient(5.0),
    ]
    for A in fixtures:
        vals = A.evaluate(pts)
        assert np.array_equal(vals[:, 0, 1], vals[:, 1, 0])
        eigs = np.linalg.eigvalsh(vals)
        assert np.all(eigs[:, 0] >= A.alpha - 1e-12)


def test_project_constant_is_exact(meshes):
    A_h = C.project_coefficient(C.identity_coefficient(), meshes[2])
    assert np.array_equal(A_h.values, np.broadcast_to(np.eye(2), (32, 2, 2)))


def test_project_affine_uses_centroid():
    # average of diag(1 + x, 1) over the triangle (0,0),(h,0),(0,h) is
    # diag(1 + h/3, 1): the centroid rule is exact for affine integrands
    from bmofem.quadrature import triangle_means

    h = 0.25
    tri = np.array([[[0.0, 0.0], [h, 0.0], [0.0, h]]])

    def f(p, i):
        out = np.zeros((p.shape[0], 2, 2))
        out[:, 0, 0] = 1.0 + p[:, 0]
        out[:, 1, 1] = 1.0
        return out

    vals = triangle_means(f, tri, 1e-12)
    assert vals[0, 0, 0] == pytest.approx(1.0 + h / 3.0, abs=1e-15)
    assert vals[0, 1, 1] == 1.0


def test_project_log_singular_matches_gauss_oracle(meshes):
    A = C.log_singular_coefficient(0.5, x0=(0.0, 0.0))
    A_h = C.project_coefficient(A, meshes[2], rel_tol=1e-6)
    oracle = np.asarray(LOG_PROJECTION_L2_A11)
    assert np.max(np.abs(A_h.values[:, 0, 0] - oracle)) <= 1e-6
    assert np.max(np.abs(A_h.values[:, 1, 1] - oracle)) <= 1e-6
    assert np.max(np.abs(A_h.values[:, 0, 1])) == 0.0


def test_checkerboard_projection(meshes):
    A = C.checkerboard_coefficient(100.0)
    # level 0: both cells average the quadrant pattern exactly
    A_h0 = C.project_coefficient(A, meshes[0])
    assert np.allclose(A_h0.values[:, 0, 0], 50.5, atol=1e-12)
    # level >= 1: cells are quadrant-pure, values are exactly 1 or 100
    A_h2 = C.project_coefficient(A, meshes[2])
    assert set(np.unique(A_h2.values[:, 0, 0])) == {1.0, 100.0}


def test_fixture_parameter_guards():
    with pytest.raises(ValueError):
        C.log_singular_coefficient(-0.1)
    with pytest.raises(ValueError):
        C.checkerboard_coefficient(0.0)
    assert C.checkerboard_coefficient(0.5).alpha == 0.5


def test_projection_rel_tol_range(meshes):
    A = C.identity_coefficient()
    with pytest.raises(ValueError):
        C.project_coefficient(A, meshes[1], rel_tol=1e-3)
    with pytest.raises(ValueError):
        C.project_coefficient(A, meshes[1], rel_tol=1e-13)


@settings(deadline=None, max_examples=15)
@given(c=st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
def test_projection_commutes_with_shift_exact_fields(c):
    # affine fields are integrated exactly, so the shift commutes to
    # rounding error
    mesh = build_uniform_mesh(2)

    def base(p):
        out = np.zeros((p.shape[0], 2, 2))
        out[:, 0, 0] = 2.0 + p[:, 0]
        out[:, 1, 1] = 3.0 - p[:, 1]
        out[:, 0, 1] = out[:, 1, 0] = 0.25 * p[:, 0]
        return out

    A = C.CoefficientField(base, 1.0, "affine", {})
    shifted = C.CoefficientField(
        lambda p: base(p) + c * np.eye(2), 1.0, "affine-shifted", {}
    )
    lhs = C.project_coefficient(shifted, mesh).values
    rhs = C.project_coefficient(A, mesh).values + c * np.eye(2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_projection_commutes_with_shift_log_fixture(meshes):
    # adaptively integrated fields may stop at different uniform levels
    # once shifted, so the defect is bounded by the quadrature tolerance
    A = C.log_singular_coefficient(0.5)
    shifted = C.CoefficientField(
        lambda p: A.evaluate(p) + 2.0 * np.eye(2), 1.0, "log-shifted", {}
    )
    lhs = C.project_coefficient(shifted, meshes[3], rel_tol=1e-6).values
    rhs = C.project_coefficient(A, meshes[3], rel_tol=1e-6).values + 2.0 * np.eye(2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-3


# ---------------------------------------------------------------------------
# coercivity


def test_coercivity_identity_and_diagonal(meshes):
    assert C.coercivity_of_projection(
        C.project_coefficient(C.identity_coefficient(), meshes[1])
    ) == 1.0
    A = C.constant_coefficient(np.diag([2.0, 3.0]))
    assert C.coercivity_of_projection(C.project_coefficient(A, meshes[1])) == 2.0


def test_coercivity_log_fixture_levels(meshes):
    A = C.log_singular_coefficient(0.5)
    for level in range(4):
        A_h = C.project_coefficient(A, meshes[level])
        assert C.coercivity_of_projection(A_h) >= A.alpha - 1e-8


def test_coercivity_rejects_asymmetric(meshes):
    values = np.broadcast_to(np.eye(2), (meshes[0].num_cells, 2, 2)).copy()
    values[0, 0, 1] = 0.5
    bad = C.PiecewiseConstantMatrixField(meshes[0], values)
    with pytest.raises(InvariantError, match="cell 0"):
        C.coercivity_of_projection(bad)


# ---------------------------------------------------------------------------
# coefficient error


def test_coefficient_error_constant_zero(meshes):
    A = C.identity_coefficient()
    A_h = C.project_coefficient(A, meshes[3])
    assert C.coefficient_error(A, A_h, 2.0) <= 1e-12


def test_coefficient_error_affine_halves(meshes):
    def base(p):
        out = np.zeros((p.shape[0], 2, 2))
        out[:, 0, 0] = 1.0 + p[:, 0]
        out[:, 1, 1] = 1.0
        return out

    A = C.CoefficientField(base, 1.0, "affine", {})
    errs = [
        C.coefficient_error(A, C.project_coefficient(A, meshes[l]), 2.0)
        for l in (3, 4)
    ]
    assert 0.45 <= errs[1] / errs[0] <= 0.55


def test_coefficient_error_log_decreases(meshes):
    A = C.log_singular_coefficient(0.5)
    errs = [
        C.coefficient_error(A, C.project_coefficient(A, meshes[l]), 2.0)
        for l in (1, 2, 3)
    ]
    assert errs[2] < errs[1] < errs[0]


def test_coefficient_error_nonincreasing_other_fixtures(meshes, sampled_csv_path):
    # checkerboard: positive at level 0, exactly zero once cells align
    cb = C.checkerboard_coefficient(5.0)
    errs = [
        C.coefficient_error(cb, C.project_coefficient(cb, meshes[l]), 2.0)
        for l in (0, 1, 2)
    ]
    assert errs[0] > 0.0
    assert errs[1] == 0.0 and errs[2] == 0.0
    sampled = C.load_sampled_coefficient(sampled_csv_path)
    s_errs = [
        C.coefficient_error(sampled, C.project_coefficient(sampled, meshes[l]), 2.0)
        for l in (1, 2, 3)
    ]
    assert s_errs[2] < s_errs[1] < s_errs[0]


def test_coefficient_error_r_range(meshes):
    A = C.identity_coefficient()
    A_h = C.project_coefficient(A, meshes[1])
    with pytest.raises(ValueError):
        C.coefficient_error(A, A_h, 1.05)
    with pytest.raises(ValueError):
        C.coefficient_error(A, A_h, 11.0)


# ---------------------------------------------------------------------------
# maximal functions


def test_mesh_maximal_constant(meshes):
    w = C.ScalarField(lambda p: np.full(p.shape[0], -3.0), "const")
    for x in [(0.3, 0.3), (0.5, 0.5), (1.0, 1.0)]:
        assert C.mesh_maximal(w, meshes[2], x) == pytest.approx(3.0, abs=1e-12)


def test_mesh_maximal_indicator_of_cell(meshes):
    mesh = meshes[1]
    # indicator of the lower triangle of grid square (0,0); its interior
    # point sees average exactly 1
    tri = mesh.vertices[mesh.cells[0]]

    def ind(p):
        d = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
        bary = np.linalg.solve(d, (p - tri[0]).T).T
        inside = (bary[:, 0] >= 0) & (bary[:, 1] >= 0) & (bary.sum(axis=1) <= 1)
        return inside.astype(float)

    w = C.ScalarField(ind, "cell-indicator")
    assert C.mesh_maximal(w, mesh, (0.3, 0.1)) == pytest.approx(1.0, abs=1e-9)


def test_mesh_maximal_edge_point_takes_max(meshes):
    # w = x on the level-1 mesh; cell averages are the centroid abscissae.
    # The point (0.5, 0.25) lies on the edge between a cell with average
    # 1/3 and one with average 2/3.
    w = C.ScalarField(lambda p: p[:, 0], "x")
    val = C.mesh_maximal(w, meshes[1], (0.5, 0.25))
    assert val == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_dyadic_maximal_constant():
    w = C.ScalarField(lambda p: np.full(p.shape[0], 2.5), "const")
    for depth in (1, 3):
        assert C.dyadic_maximal(w, depth, (0.7, 0.2)) == pytest.approx(2.5, abs=1e-12)


def test_dyadic_maximal_indicator_inside_support():
    ind = C.ScalarField(
        lambda p: ((p[:, 0] < 0.5) & (p[:, 1] < 0.5)).astype(float), "quarter"
    )
    assert C.dyadic_maximal(ind, 1, (0.25, 0.25)) == 1.0
    assert C.dyadic_maximal(ind, 2, (0.25, 0.25)) == 1.0


def test_dyadic_maximal_indicator_outside_support():
    # only the unit square contains both (0.75, 0.75) and the support, so
    # the maximum is the global average 1/4 at every depth
    ind = C.ScalarField(
        lambda p: ((p[:, 0] < 0.5) & (p[:, 1] < 0.5)).astype(float), "quarter"
    )
    for depth in (1, 2, 5):
        assert C.dyadic_maximal(ind, depth, (0.75, 0.75)) == 0.25


def test_dyadic_depth_bound():
    w = C.ScalarField(lambda p: p[:, 0], "x")
    with pytest.raises(ValueError):
        C.dyadic_maximal(w, 11, (0.5, 0.5))


def test_maximal_relation_on_log_scalar(meshes):
    # cell averages are controlled by twice the containing-square average
    w = C.log_reciprocal_scalar()
    mesh = meshes[2]
    for x in [(0.1, 0.1), (0.4, 0.9), (0.55, 0.55), (1.0, 0.3)]:
        mm = C.mesh_maximal(w, mesh, x)
        dm = C.dyadic_maximal(w, mesh.level, x)
        assert mm <= 2.0 * dm + 1e-6


# ---------------------------------------------------------------------------
# BMO seminorm estimate


def test_bmo_constant_zero():
    w = C.ScalarField(lambda p: np.full(p.shape[0], 7.0), "const")
    assert C.bmo_seminorm_estimate(w, 3) <= 1e-12


def test_bmo_half_indicator():
    # w_Q = 1/2 on the unit square and |w - 1/2| = 1/2 everywhere
    w = C.ScalarField(lambda p: (p[:, 0] < 0.5).astype(float), "half")
    est = C.bmo_seminorm_estimate(w, 1)
    assert est == pytest.approx(0.5, abs=1e-12)


def test_bmo_log_matches_closed_form_and_saturates():
    w = C.log_reciprocal_scalar()
    est3 = C.bmo_seminorm_estimate(w, 3)
    est6 = C.bmo_seminorm_estimate(w, 6)
    # scale invariance: every corner square has the unit-square oscillation
    assert est3 == pytest.approx(LOG_UNIT_SQUARE_OSC, abs=5e-5)
    assert est6 == pytest.approx(LOG_UNIT_SQUARE_OSC, abs=5e-5)
    assert est6 - est3 <= 0.2 * est3


def test_bmo_monotone_in_depth():
    w = C.ScalarField(
        lambda p: np.sin(3.0 * p[:, 0]) + np.cos(2.0 * p[:, 1]), "wave"
    )
    estimates = [C.bmo_seminorm_estimate(w, d) for d in (1, 2, 3, 4)]
    assert all(b >= a - 1e-15 for a, b in zip(estimates, estimates[1:]))


# ---------------------------------------------------------------------------
# John-Nirenberg distribution check


def test_jn_constant_zero_fractions():
    w = C.ScalarField(lambda p: np.full(p.shape[0], 1.0), "const")
    table = C.john_nirenberg_check(w, C.DyadicSquare(0, 0, 0), [0.5, 1.0], 6)
    assert all(frac == 0.0 for _, frac in table)


def test_jn_tiny_lambda_is_full_measure():
    w = C.log_reciprocal_scalar()
    table = C.john_nirenberg_check(w, C.DyadicSquare(0, 0, 0), [1e-15], 8)
    assert table[0][1] >= 0.999


def test_jn_log_matches_closed_form_tail():
    w = C.log_reciprocal_scalar()
    lambdas = [1.0, 2.0, 3.0, 4.0]
    table = C.john_nirenberg_check(w, C.DyadicSquare(0, 0, 0), lambdas, 10)
    fractions = [frac for _, frac in table]
    # monotone nonincreasing
    assert all(b <= a for a, b in zip(fractions, fractions[1:]))
    # exponential tail with rate exactly 2
    for lam, frac in table:
        exact = LOG_UNIT_SQUARE_OSC * math.exp(-2.0 * lam)
        assert frac == pytest.approx(exact, rel=2e-2)
    slopes = np.diff(np.log(fractions))
    assert max(abs(slopes)) / min(abs(slopes)) <= 3.0


def test_jn_rejects_bad_inputs():
    w = C.log_reciprocal_scalar()
    with pytest.raises(ValueError):
        C.john_nirenberg_check(w, C.DyadicSquare(0, 0, 0), [0.0], 4)
    with pytest.raises(ValueError):
        C.DyadicSquare(1, 2, 0)


def test_jn_skip_policy_errors_on_many_bad_samples():
    w = C.ScalarField(lambda p: np.where(p[:, 0] < 0.3, np.nan, 1.0), "broken")
    with pytest.raises(SingularityError):
        C.john_nirenberg_check(w, C.DyadicSquare(0, 0, 0), [1.0], 6)


# ---------------------------------------------------------------------------
# sampled-grid ingestion


def test_sampled_roundtrip_at_nodes(sampled_csv_path):
    A = C.load_sampled_coefficient(sampled_csv_path)
    rows = []
    with open(sampled_csv_path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("x,"):
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.asarray(rows)
    vals = A.evaluate(data[:, :2])
    assert np.allclose(vals[:, 0, 0], data[:, 2], atol=1e-12)
    assert np.allclose(vals[:, 0, 1], data[:, 3], atol=1e-12)
    assert np.allclose(vals[:, 1, 1], data[:, 4], atol=1e-12)
    assert A.kind == "sampled-grid"


def test_sampled_bilinear_between_nodes(sampled_csv_path):
    A = C.load_sampled_coefficient(sampled_csv_path)
    # midpoint of a grid cell carries the mean of the four corners
    pts = np.array([[0.0, 0.0], [0.125, 0.0], [0.0, 0.125], [0.125, 0.125]])
    corners = A.evaluate(pts)
    mid = A.evaluate(np.array([[0.0625, 0.0625]]))
    assert np.allclose(mid[0], corners.mean(axis=0), atol=1e-12)


def test_sampled_requires_alpha(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y,a11,a12,a22\n0,0,1,0,1\n")
    with pytest.raises(InvariantError, match="alpha"):
        C.load_sampled_coefficient(p)


def test_sampled_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# alpha=1.0\nx,y,a11,a22\n")
    with pytest.raises(InvariantError, match="header"):
        C.load_sampled_coefficient(p)
