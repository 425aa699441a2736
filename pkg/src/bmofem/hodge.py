"""Discrete Hodge decomposition of cell-wise constant vector fields.

A field s in Q_h splits uniquely as s = grad(phi) + g with phi a
zero-trace P1 function and g discretely divergence free, i.e. orthogonal
to every discrete gradient.  phi is obtained by projecting s onto discrete
gradients through the identity-coefficient Poisson problem; the same
projection is used whatever norm the split is later measured in, so the
split itself is norm independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeff import PiecewiseConstantMatrixField
from .errors import DegenerateFieldError, MeshTooCoarseError
from .fem import (
    DEFAULT_SOLVER_TOL,
    P1Function,
    PCVectorField,
    SparseSPDSystem,
    _require_p,
    assemble_rhs,
    assemble_stiffness,
    gradient,
    lp_norm,
    p1_zero_trace,
    solve_spd,
)
from .mesh import Mesh, interior_vertex_indices


@dataclass(frozen=True)
class HodgeSplit:
    """Result of a discrete Hodge decomposition.

    potential: the zero-trace P1 part (its gradient is the projection).
    sigma: the discretely divergence-free remainder.
    reconstruction_residual: max cell defect of potential-gradient + sigma
    against the input field.
    orthogonality_residual: max residual of sigma against interior hats.
    """

    potential: P1Function
    sigma: PCVectorField
    reconstruction_residual: float
    orthogonality_residual: float


def _identity_field(mesh: Mesh) -> PiecewiseConstantMatrixField:
    eye = np.broadcast_to(np.eye(2), (mesh.num_cells, 2, 2))
    return PiecewiseConstantMatrixField(mesh=mesh, values=np.array(eye))


def hodge_decompose(
    s: PCVectorField, mesh: Mesh, solver_tol: float = DEFAULT_SOLVER_TOL
) -> HodgeSplit:
    """Split s into a discrete gradient plus a discretely divergence-free
    remainder."""
    if interior_vertex_indices(mesh).size == 0:
        raise MeshTooCoarseError(
            "mesh has no interior vertices; refine at least once"
        )
    system = assemble_stiffness(mesh, _identity_field(mesh))
    b = assemble_rhs(mesh, s)
    x = solve_spd(SparseSPDSystem(system.matrix, b, system.interior, mesh), solver_tol)
    phi = p1_zero_trace(mesh, x)
    g = s - gradient(phi)
    recon = s - (gradient(phi) + g)
    recon_res = float(np.max(np.linalg.norm(recon.values, axis=1), initial=0.0))
    orth_res = float(np.max(np.abs(assemble_rhs(mesh, g)), initial=0.0))
    return HodgeSplit(
        potential=phi,
        sigma=g,
        reconstruction_residual=recon_res,
        orthogonality_residual=orth_res,
    )


def conjugate_field(u: P1Function, p: float) -> PCVectorField:
    """Cell-wise |grad u|^(p-2) grad u; zero-gradient cells map to zero.

    The cell magnitudes are |grad u|^(p-1), and the L^q norm (q conjugate
    to p) raised to q equals the L^p norm of grad u raised to p.
    """
    _require_p(p)
    gu = gradient(u)
    mags = np.linalg.norm(gu.values, axis=1)
    with np.errstate(divide="ignore"):
        scale = np.where(mags > 0.0, mags ** (p - 2.0), 0.0)
    return PCVectorField(u.mesh, scale[:, None] * gu.values)


def conjugate_gap(u: P1Function, p: float, mesh: Mesh, solver_tol: float = DEFAULT_SOLVER_TOL):
    """Size of the divergence-free part of the conjugate of grad u.

    Returns (g_norm, bound_ratio) with g_norm the L^q norm of the
    divergence-free component and bound_ratio its size against
    |p-2| * ||grad u||_{L^p}^{p/q}.  At p = 2 the conjugate is grad u
    itself, so g_norm is at solver-noise level and bound_ratio is 0 by
    convention.
    """
    _require_p(p)
    gu = gradient(u)
    if not np.any(gu.values):
        raise DegenerateFieldError("conjugate gap of a function with zero gradient")
    s = conjugate_field(u, p)
    split = hodge_decompose(s, mesh, solver_tol)
    q = p / (p - 1.0)
    g_norm = lp_norm(split.sigma, q)
    if p == 2.0:
        return g_norm, 0.0
    denom = abs(p - 2.0) * lp_norm(gu, p) ** (p / q)
    return g_norm, g_norm / denom


def flux_decompose(
    u: P1Function,
    A_h: PiecewiseConstantMatrixField,
    p: float,
    solver_tol: float = DEFAULT_SOLVER_TOL,
):
    """Hodge decomposition of the flux A_h grad u.

    Returns (grad_part, ell, bound_ratio): the P1 potential of the flux,
    its discretely divergence-free part, and
    ||ell||_{L^p} / ||grad u||_{L^p}.  The comparison against the
    coefficient oscillation is left to the caller.
    """
    _require_p(p)
    gu = gradient(u)
    gu_norm = lp_norm(gu, p)
    if gu_norm == 0.0:
        raise DegenerateFieldError("flux decomposition of a function with zero gradient")
    flux = PCVectorField(u.mesh, np.einsum("kij,kj->ki", A_h.values, gu.values))
    split = hodge_decompose(flux, u.mesh, solver_tol)
    ratio = lp_norm(split.sigma, p) / gu_norm
    return split.potential, split.sigma, ratio
