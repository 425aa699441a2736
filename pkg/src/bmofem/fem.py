"""P1 Galerkin discretization: spaces, assembly, solve, and field norms.

The discrete problem is posed on interior-vertex unknowns only
(homogeneous Dirichlet data by elimination).  The right hand side is
projected to cell averages before assembly, so every assembled integral is
exact: both the coefficient and the test-function gradients are constant
per cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import quadrature
from .coeff import (
    DEFAULT_PROJECTION_TOL,
    CoefficientField,
    PiecewiseConstantMatrixField,
    _min_eigenvalues,
    project_coefficient,
)
from .errors import (
    AssemblyError,
    GeometryError,
    InvariantError,
    IterationLimitError,
    NotSPDError,
)
from .mesh import Mesh, cell_areas, interior_vertex_indices

P_RANGE = (1.1, 10.0)
SOLVER_TOL_RANGE = (1e-14, 1e-6)
DEFAULT_SOLVER_TOL = 1e-12
ITERATION_FACTOR = 50


def _require_p(p: float) -> float:
    if not (P_RANGE[0] <= p <= P_RANGE[1]):
        raise ValueError(f"p must be in [{P_RANGE[0]}, {P_RANGE[1]}], got {p}")
    return float(p)


@dataclass(frozen=True)
class P1Function:
    """Continuous piecewise linear function given by vertex values."""

    mesh: Mesh
    values: np.ndarray
    zero_trace: bool = False

    def __post_init__(self):
        if self.values.shape != (self.mesh.num_vertices,):
            raise InvariantError("vertex value count does not match the mesh")
        if self.zero_trace and np.any(self.values[self.mesh.boundary_vertex_flags] != 0.0):
            raise InvariantError("zero-trace function with nonzero boundary values")

    def __add__(self, other):
        _same_mesh(self.mesh, other.mesh)
        return P1Function(self.mesh, self.values + other.values,
                          self.zero_trace and other.zero_trace)

    def __sub__(self, other):
        _same_mesh(self.mesh, other.mesh)
        return P1Function(self.mesh, self.values - other.values,
                          self.zero_trace and other.zero_trace)

    def __rmul__(self, c):
        return P1Function(self.mesh, float(c) * self.values, self.zero_trace)


@dataclass(frozen=True)
class PCVectorField:
    """Cell-wise constant vector field."""

    mesh: Mesh
    values: np.ndarray  # (ncells, 2)

    def __post_init__(self):
        if self.values.shape != (self.mesh.num_cells, 2):
            raise InvariantError("cell value count does not match the mesh")

    def __add__(self, other):
        _same_mesh(self.mesh, other.mesh)
        return PCVectorField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        _same_mesh(self.mesh, other.mesh)
        return PCVectorField(self.mesh, self.values - other.values)

    def __rmul__(self, c):
        return PCVectorField(self.mesh, float(c) * self.values)


@dataclass(frozen=True)
class SparseSPDSystem:
    """Symmetric positive definite system over interior-vertex unknowns."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    mesh: Mesh


def _same_mesh(a: Mesh, b: Mesh):
    if a is not b and (a.level != b.level or a.num_cells != b.num_cells):
        raise InvariantError("fields live on different meshes")


def p1_zero_trace(mesh: Mesh, interior_values: np.ndarray) -> P1Function:
    """Zero-trace P1 function from its interior vertex values."""
    values = np.zeros(mesh.num_vertices)
    values[interior_vertex_indices(mesh)] = interior_values
    return P1Function(mesh, values, zero_trace=True)


def interpolate_p1(mesh: Mesh, func, zero_trace: bool = False) -> P1Function:
    """Vertex interpolant of func(points (N,2)) -> (N,)."""
    values = np.asarray(func(mesh.vertices), dtype=float)
    if zero_trace:
        values = values.copy()
        values[mesh.boundary_vertex_flags] = 0.0
    return P1Function(mesh, values, zero_trace=zero_trace)


def hat_gradients(mesh: Mesh):
    """Gradients of the three local hat functions per cell, (m, 3, 2), and
    the cell areas."""
    coords = mesh.cell_coordinates()
    areas = cell_areas(mesh)
    if np.any(areas <= 0.0):
        bad = int(np.argmax(areas <= 0.0))
        raise GeometryError(f"cell {bad} is degenerate or negatively oriented")
    g = np.empty((mesh.num_cells, 3, 2))
    for a in range(3):
        # grad of the hat that is 1 at vertex a: rotate the opposite edge.
        pb = coords[:, (a + 1) % 3]
        pc = coords[:, (a + 2) % 3]
        edge = pc - pb
        g[:, a, 0] = -edge[:, 1]
        g[:, a, 1] = edge[:, 0]
    g /= 2.0 * areas[:, None, None]
    return g, areas


def gradient(u: P1Function) -> PCVectorField:
    """Exact cell-wise constant gradient of a P1 function."""
    g, _ = hat_gradients(u.mesh)
    vals = np.einsum("ka,kad->kd", u.values[u.mesh.cells], g)
    return PCVectorField(u.mesh, vals)


def project_rhs(f, mesh: Mesh, rel_tol: float = 1e-8) -> PCVectorField:
    """Cell averages of a vector-valued function.

    f is either a callable (points (N,2)) -> (N,2) or an aligned
    PCVectorField, which is already cell-constant and returned as is.
    """
    if isinstance(f, PCVectorField):
        _same_mesh(f.mesh, mesh)
        return f
    verts = mesh.cell_coordinates()

    def integrand(pts, ids):
        return np.asarray(f(pts), dtype=float)

    floor = quadrature.global_scale_floor(integrand, verts)
    vals = quadrature.triangle_means(integrand, verts, rel_tol, abs_floor=floor)
    return PCVectorField(mesh, vals)


def assemble_stiffness(mesh: Mesh, A_h: PiecewiseConstantMatrixField) -> SparseSPDSystem:
    """Stiffness matrix over interior vertices for a cell-wise constant
    coefficient; every entry is an exact integral.

    M[i, j] = sum_K |K| <A_K grad phi_j, grad phi_i>.  Refuses to assemble
    when the projected coefficient is not coercive.
    """
    _same_mesh(A_h.mesh, mesh)
    if float(np.min(_min_eigenvalues(A_h.values))) <= 0.0:
        raise AssemblyError(
            "projected coefficient is not positive definite; assembly refused"
        )
    g, areas = hat_gradients(mesh)
    local = np.einsum("k,kai,kij,kbj->kab", areas, g, A_h.values, g)
    local = 0.5 * (local + local.transpose(0, 2, 1))  # exact symmetry

    interior = interior_vertex_indices(mesh)
    pos = -np.ones(mesh.num_vertices, dtype=np.int64)
    pos[interior] = np.arange(interior.size)
    cell_pos = pos[mesh.cells]  # (m, 3), -1 for boundary vertices

    rows = np.repeat(cell_pos, 3, axis=1).ravel()
    cols = np.tile(cell_pos, (1, 3)).ravel()
    data = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = interior.size
    matrix = sp.coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    return SparseSPDSystem(matrix=matrix, rhs=np.zeros(n), interior=interior, mesh=mesh)


def assemble_rhs(mesh: Mesh, f_h: PCVectorField) -> np.ndarray:
    """b[i] = sum_K |K| <f_K, grad phi_i|K>, exactly."""
    _same_mesh(f_h.mesh, mesh)
    g, areas = hat_gradients(mesh)
    contrib = np.einsum("k,kad,kd->ka", areas, g, f_h.values)
    b_full = np.zeros(mesh.num_vertices)
    np.add.at(b_full, mesh.cells.ravel(), contrib.ravel())
    return b_full[interior_vertex_indices(mesh)]


def solve_spd(system: SparseSPDSystem, rel_residual_tol: float = DEFAULT_SOLVER_TOL) -> np.ndarray:
    """Diagonally preconditioned conjugate gradients, deterministic.

    Zero initial guess, fixed iteration order, iteration cap 50 n.  Raises
    NotSPDError on nonpositive curvature and IterationLimitError at the
    cap, reporting the final relative residual.
    """
    lo, hi = SOLVER_TOL_RANGE
    if not (lo <= rel_residual_tol <= hi):
        raise ValueError(f"solver tolerance must be in [{lo}, {hi}]")
    A = system.matrix
    b = system.rhs
    n = b.size
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise NotSPDError("nonpositive diagonal entry; system is not SPD")
    x = np.zeros(n)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = float(r @ z)
    threshold = rel_residual_tol * b_norm
    for _ in range(ITERATION_FACTOR * n):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NotSPDError("nonpositive curvature encountered in CG")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if float(np.linalg.norm(r)) <= threshold:
            return x
        z = r / d
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise IterationLimitError(
        f"CG did not converge in {ITERATION_FACTOR * n} iterations "
        f"(relative residual {np.linalg.norm(r) / b_norm:.3e})",
        relative_residual=float(np.linalg.norm(r) / b_norm),
    )


def solve_bvp(
    mesh: Mesh,
    A: CoefficientField,
    f,
    projection_tol: float | None = None,
    solver_tol: float = DEFAULT_SOLVER_TOL,
) -> P1Function:
    """Galerkin solution: project A and f, assemble, solve.

    Returns the zero-trace P1 function whose discrete residual against
    every interior hat function is at solver tolerance.
    """
    tol = DEFAULT_PROJECTION_TOL if projection_tol is None else projection_tol
    A_h = project_coefficient(A, mesh, tol)
    f_h = project_rhs(f, mesh, tol)
    return solve_projected(mesh, A_h, f_h, solver_tol)


def solve_projected(
    mesh: Mesh,
    A_h: PiecewiseConstantMatrixField,
    f_h: PCVectorField,
    solver_tol: float = DEFAULT_SOLVER_TOL,
) -> P1Function:
    """Solve with already projected data (shared by studies and solve_bvp)."""
    system = assemble_stiffness(mesh, A_h)
    b = assemble_rhs(mesh, f_h)
    x = solve_spd(
        SparseSPDSystem(system.matrix, b, system.interior, mesh), solver_tol
    )
    return p1_zero_trace(mesh, x)


def lp_norm(field: PCVectorField, p: float) -> float:
    """(sum_K |K| |v_K|^p)^(1/p) with the Euclidean cell norm."""
    p = _require_p(p)
    areas = np.abs(cell_areas(field.mesh))
    mags = np.linalg.norm(field.values, axis=1)
    return float(np.sum(areas * mags**p) ** (1.0 / p))


def evaluate_p1(u: P1Function, points: np.ndarray) -> np.ndarray:
    """Evaluate a P1 function on the structured mesh at points of the
    closed unit square."""
    pts = np.asarray(points, dtype=float)
    n = 2**u.mesh.level
    gx = np.clip(np.floor(pts[:, 0] * n).astype(np.int64), 0, n - 1)
    gy = np.clip(np.floor(pts[:, 1] * n).astype(np.int64), 0, n - 1)
    xi = pts[:, 0] * n - gx
    eta = pts[:, 1] * n - gy
    stride = n + 1
    v_ll = u.values[gy * stride + gx]
    v_lr = u.values[gy * stride + gx + 1]
    v_ul = u.values[(gy + 1) * stride + gx]
    v_ur = u.values[(gy + 1) * stride + gx + 1]
    lower = xi >= eta  # below the cell diagonal
    vals = np.where(
        lower,
        v_ll * (1.0 - xi) + v_lr * (xi - eta) + v_ur * eta,
        v_ll * (1.0 - eta) + v_ur * xi + v_ul * (eta - xi),
    )
    return vals


def dump_system(system: SparseSPDSystem) -> str:
    """Debug export in coordinate format, one `i j value` line per entry."""
    coo = system.matrix.tocoo()
    lines = [f"{i} {j} {float(v)!r}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    return "\n".join(lines) + "\n"
