"""Composite midpoint quadrature with adaptive refinement.

All integration in the package goes through a small number of entry points:

* ``triangle_means`` computes cell averages over batches of triangles by
  uniform composite midpoint quadrature on 4^m congruent subtriangles,
  increasing m until two successive levels agree to the requested
  tolerance.  Cells that are still contracting at the uniform cap keep
  doubling a few extra levels; stalled cells (point singularities,
  interfaces not aligned with the subdivision) fall back to a worst-first
  locally adaptive rule.

* ``square_mean`` / ``square_means_batch`` average scalars over axis
  aligned squares with tensor midpoint grids of at least 16x16 points,
  doubling the grid until the Richardson extrapolations of successive
  grid pairs agree, and returning the last extrapolation.

Midpoint nodes are strictly interior to their subcells, so fields with an
integrable singularity at a mesh vertex are only evaluated at finite
points.  Any non-finite evaluation raises SingularityError.
"""

from __future__ import annotations

import heapq
from functools import lru_cache

import numpy as np

from .errors import QuadratureError, SingularityError

UNIFORM_CAP = 8
EXTENDED_CAP = 12
MIN_SQUARE_GRID = 16
MAX_SQUARE_GRID = 1024
STALL_RATIO = 0.45
ADAPTIVE_NODE_CAP = 200_000
_CHUNK = 1 << 21


def _check_finite(values: np.ndarray, points: np.ndarray) -> None:
    if np.all(np.isfinite(values)):
        return
    flat = values.reshape(values.shape[0], -1) if values.ndim > 1 else values[:, None]
    bad = ~np.all(np.isfinite(flat), axis=1)
    p = points[int(np.argmax(bad))]
    raise SingularityError(
        f"non-finite field value at quadrature node ({p[0]}, {p[1]})",
        point=(float(p[0]), float(p[1])),
    )


def _eval(f, points, region_ids):
    values = np.asarray(f(points, region_ids), dtype=float)
    _check_finite(values, points)
    return values


@lru_cache(maxsize=None)
def _centroid_offsets(m: int) -> np.ndarray:
    """Affine coordinates (a, b) of the 4^m subtriangle centroids.

    A node is v0 + a*(v1-v0) + b*(v2-v0).  Splitting into n^2 = 4^m
    congruent triangles gives upward cells (i, j) with i+j <= n-1 and
    downward cells with i+j <= n-2, all of equal area.
    """
    n = 2**m
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    up = i + j <= n - 1
    down = i + j <= n - 2
    a = np.concatenate([(3 * i[up] + 1), (3 * i[down] + 2)]) / (3 * n)
    b = np.concatenate([(3 * j[up] + 1), (3 * j[down] + 2)]) / (3 * n)
    out = np.column_stack([a, b])
    out.setflags(write=False)
    return out


def _flat_norm(a: np.ndarray) -> np.ndarray:
    """Euclidean norm over all trailing value axes, one number per row."""
    return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))


def _uniform_tri_means(f, verts, cell_ids, m):
    """Composite midpoint means at uniform level m for each triangle."""
    offs = _centroid_offsets(m)
    k = offs.shape[0]
    per = max(1, _CHUNK // k)
    chunks = []
    for start in range(0, verts.shape[0], per):
        v = verts[start : start + per]
        ids = cell_ids[start : start + per]
        e1 = v[:, 1, :] - v[:, 0, :]
        e2 = v[:, 2, :] - v[:, 0, :]
        pts = (
            v[:, None, 0, :]
            + offs[None, :, 0, None] * e1[:, None, :]
            + offs[None, :, 1, None] * e2[:, None, :]
        )
        vals = _eval(f, pts.reshape(-1, 2), np.repeat(ids, k))
        vals = vals.reshape((v.shape[0], k) + vals.shape[1:])
        chunks.append(vals.mean(axis=1))
    return np.concatenate(chunks, axis=0)


def triangle_means(
    f,
    verts,
    rel_tol,
    cell_ids=None,
    abs_floor=0.0,
    uniform_cap=UNIFORM_CAP,
):
    """Mean of f over each triangle, entrywise to tolerance rel_tol.

    f(points (N,2), cell_ids (N,)) -> (N, ...) values; the value shape may
    be scalar, vector or matrix.  verts has shape (ncells, 3, 2).

    Uniform levels that agree exactly stop immediately (constants, affine
    integrands, and fields resolved by the dyadic subdivision).  Otherwise
    a cell is converged once the Richardson extrapolations of successive
    level pairs agree within rel_tol * max(value norm, abs_floor); the
    extrapolated value is returned.  Cells still unsettled past the
    uniform cap either keep doubling (while contracting) or switch to the
    locally adaptive rule.
    """
    verts = np.asarray(verts, dtype=float)
    nc = verts.shape[0]
    if cell_ids is None:
        cell_ids = np.arange(nc)
    cell_ids = np.asarray(cell_ids)
    if nc == 0:
        return np.empty(0)
    result = None
    active = np.arange(nc)
    i_prev = None
    e_prev = None
    d_prev = None
    bad_streak = np.zeros(nc, dtype=int)

    def finish(idx_array):
        for idx in idx_array:
            result[idx] = _adaptive_tri_mean(
                f, verts[idx], int(cell_ids[idx]), rel_tol, abs_floor
            )

    for m in range(EXTENDED_CAP + 1):
        vals = _uniform_tri_means(f, verts[active], cell_ids[active], m)
        if result is None:
            result = np.empty((nc,) + vals.shape[1:], dtype=float)
        if i_prev is None:
            i_prev = vals
            continue
        exact = _flat_norm(vals - i_prev) == 0.0
        extrap = (4.0 * vals - i_prev) / 3.0
        if e_prev is not None:
            d = _flat_norm(extrap - e_prev)
            scale = np.maximum(_flat_norm(extrap), abs_floor)
            done = exact | (d <= rel_tol * np.maximum(scale, 1e-300))
        else:
            d = None
            done = exact
        result[active[done]] = extrap[done]
        if m > uniform_cap and d is not None and d_prev is not None:
            # A cell whose extrapolations stop contracting twice in a row is
            # not going to settle by doubling; hand it to the local rule.
            bad = d > STALL_RATIO * d_prev
            bad_streak[active[bad]] += 1
            bad_streak[active[~bad]] = 0
            stalled = ~done & (bad_streak[active] >= 2)
            finish(active[stalled])
            keep = ~done & ~stalled
        else:
            keep = ~done
        active = active[keep]
        if active.size == 0:
            return result
        i_prev = vals[keep]
        e_prev = extrap[keep]
        d_prev = d[keep] if d is not None else None
    finish(active)
    return result


def global_scale_floor(f, verts, cell_ids=None) -> float:
    """Mean magnitude of f over all cells, from a coarse (4 points per
    cell) composite rule; a tolerance floor so that cells with negligible
    contribution to a global quantity are not over-refined."""
    verts = np.asarray(verts, dtype=float)
    if verts.shape[0] == 0:
        return 0.0
    if cell_ids is None:
        cell_ids = np.arange(verts.shape[0])
    vals = _uniform_tri_means(f, verts, np.asarray(cell_ids), 1)
    return float(np.mean(_flat_norm(np.abs(vals))))


def _tri_children(v):
    m01 = 0.5 * (v[0] + v[1])
    m12 = 0.5 * (v[1] + v[2])
    m02 = 0.5 * (v[0] + v[2])
    return (
        np.array([v[0], m01, m02]),
        np.array([m01, v[1], m12]),
        np.array([m02, m12, v[2]]),
        np.array([m01, m12, m02]),
    )


def _adaptive_tri_mean(f, verts, cell_id, rel_tol, abs_floor):
    return _adaptive_mean(
        lambda pts: f(pts, np.full(pts.shape[0], cell_id)),
        verts,
        _tri_children,
        lambda g: (g[0] + g[1] + g[2]) / 3.0,
        rel_tol,
        abs_floor,
    )


def _square_children(sq):
    (x, y), size = sq
    h = 0.5 * size
    return ((x, y), h), ((x + h, y), h), ((x, y + h), h), ((x + h, y + h), h)


def _square_center(sq):
    (x, y), size = sq
    return np.array([x + 0.5 * size, y + 0.5 * size])


def _adaptive_mean(f, root, split, center, rel_tol, abs_floor):
    """Greedy worst-first adaptive composite midpoint mean over one region.

    Each leaf stores a one-point estimate and the four-child composite; the
    difference is the refinement indicator.  Deterministic via insertion
    order tie-breaking.  Cost is logarithmic in the tolerance for point
    singularities.
    """

    def make_leaf(geom, frac):
        children = split(geom)
        pts = np.vstack([center(geom)[None, :]] + [center(c)[None, :] for c in children])
        vals = np.asarray(f(pts), dtype=float)
        _check_finite(vals, pts)
        coarse = frac * vals[0]
        fine = 0.25 * frac * (vals[1] + vals[2] + vals[3] + vals[4])
        err = float(np.sqrt(np.sum((coarse - fine) ** 2)))
        # Richardson-corrected leaf value; err stays the conservative
        # two-level difference.
        value = fine + (fine - coarse) / 3.0
        return geom, frac, value, err, children

    counter = 0
    _, _, fine0, err0, _ = first = make_leaf(root, 1.0)
    integral = np.array(fine0, dtype=float)
    err_total = err0
    heap = [(-err0, 0, first)]
    nodes = 1
    while err_total > rel_tol * max(float(np.sqrt(np.sum(integral**2))), abs_floor, 1e-300):
        if nodes > ADAPTIVE_NODE_CAP:
            raise QuadratureError(
                f"adaptive quadrature stalled above tolerance {rel_tol} "
                f"after {ADAPTIVE_NODE_CAP} subdivisions"
            )
        _, _, worst = heapq.heappop(heap)
        _, wfrac, wfine, werr, wchildren = worst
        err_total -= werr
        integral -= wfine
        for child in wchildren:
            counter += 1
            nodes += 1
            lf = make_leaf(child, wfrac / 4.0)
            integral += lf[2]
            err_total += lf[3]
            heapq.heappush(heap, (-lf[3], counter, lf))
    return integral


def _square_grid_means(f, los, size, n, square_ids):
    """Tensor midpoint means on n x n grids for a batch of squares."""
    k = los.shape[0]
    t = (np.arange(n) + 0.5) * (size / n)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    base = np.column_stack([xx.ravel(), yy.ravel()])
    per = max(1, _CHUNK // base.shape[0])
    out = np.empty(k)
    for start in range(0, k, per):
        lo = los[start : start + per]
        pts = lo[:, None, :] + base[None, :, :]
        ids = np.repeat(square_ids[start : start + per], base.shape[0])
        vals = _eval(f, pts.reshape(-1, 2), ids)
        out[start : start + per] = vals.reshape(lo.shape[0], -1).mean(axis=1)
    return out


def square_means_batch(f, los, size, tol, square_ids=None):
    """Means of scalar f over a batch of equal-size axis-aligned squares.

    f(points (N,2), square_ids (N,)) -> (N,).  Doubles the tensor midpoint
    grid from 16 points per side and tracks the Richardson extrapolation of
    successive grids; a square is done once consecutive extrapolations
    agree within tol * max(1, |mean|).  Squares whose extrapolations are
    not contracting at fourth order (kinked or singular integrands) switch
    to the locally adaptive rule instead of refining globally.
    """
    los = np.asarray(los, dtype=float).reshape(-1, 2)
    k = los.shape[0]
    if square_ids is None:
        square_ids = np.arange(k)
    square_ids = np.asarray(square_ids)
    result = np.empty(k)

    def run_adaptive(idx):
        val = _adaptive_mean(
            lambda pts, i=idx: f(pts, np.full(pts.shape[0], square_ids[i])),
            ((float(los[idx, 0]), float(los[idx, 1])), float(size)),
            _square_children,
            _square_center,
            tol,
            1.0,
        )
        result[idx] = float(val)

    n = MIN_SQUARE_GRID
    prev = _square_grid_means(f, los, size, n, square_ids)
    cur = _square_grid_means(f, los, size, 2 * n, square_ids)
    exact = cur == prev  # integrand resolved exactly by the dyadic grid
    result[exact] = cur[exact]
    active = np.flatnonzero(~exact)
    extrap_prev = ((4.0 * cur - prev) / 3.0)[~exact]
    i_cur = cur[~exact]
    d_prev = None
    bad_streak = np.zeros(k, dtype=int)
    n = 2 * n
    while active.size:
        if 2 * n > MAX_SQUARE_GRID:
            for idx in active:
                run_adaptive(idx)
            return result
        i_next = _square_grid_means(f, los[active], size, 2 * n, square_ids[active])
        extrap = (4.0 * i_next - i_cur) / 3.0
        d = np.abs(extrap - extrap_prev)
        done = (i_next == i_cur) | (d <= tol * np.maximum(1.0, np.abs(extrap)))
        result[active[done]] = extrap[done]
        if d_prev is not None:
            bad = d > STALL_RATIO * d_prev
            bad_streak[active[bad]] += 1
            bad_streak[active[~bad]] = 0
            stalled = ~done & (bad_streak[active] >= 2)
            for idx in active[stalled]:
                run_adaptive(idx)
            keep = ~done & ~stalled
        else:
            keep = ~done
        d_prev = d[keep]
        active = active[keep]
        extrap_prev = extrap[keep]
        i_cur = i_next[keep]
        n *= 2
    return result


def square_mean(f, lo, size, tol=1e-8):
    """Mean of scalar f(points (N,2)) -> (N,) over one square."""
    lo = np.asarray(lo, dtype=float)
    return float(square_means_batch(lambda p, i: f(p), lo[None, :], size, tol)[0])
