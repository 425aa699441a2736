#!/usr/bin/env python3
"""Regenerate the frozen reference values used by the test suite.

Everything here is computed independently of the package quadrature: cell
averages come from a degree-10 Gauss rule (Duffy-transformed tensor
Gauss-Legendre) composed over 4^8 congruent subtriangles per cell.  The
printed arrays are pasted into tests as literals.
"""

import numpy as np


def gauss_duffy_nodes(order=6):
    """Tensor Gauss-Legendre on the unit square pushed to the reference
    triangle (0,0),(1,0),(1,1) via (u, v) -> (u, u v), weight u."""
    x, wx = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    uu, vv = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(wx, wx, indexing="ij")
    pts = np.column_stack([uu.ravel(), (uu * vv).ravel()])
    wts = (wu * wv * uu).ravel()  # integral over the half-square triangle
    return pts, wts


def subtriangles(v0, v1, v2, m):
    """All 4^m congruent subtriangles of (v0, v1, v2), vertex triples."""
    n = 2**m
    e1 = (v1 - v0) / n
    e2 = (v2 - v0) / n
    tris = []
    for i in range(n):
        for j in range(n - i):
            a = v0 + i * e1 + j * e2
            tris.append((a, a + e1, a + e2))
            if j < n - i - 1:
                tris.append((a + e1, a + e1 + e2, a + e2))
    return tris


def triangle_mean_gauss(f, v0, v1, v2, m=8, order=6):
    pts, wts = gauss_duffy_nodes(order)
    # reference triangle (0,0),(1,0),(1,1): barycentric map a=x, b=y/x;
    # write nodes directly as combinations of the subtriangle vertices.
    total = 0.0
    tris = subtriangles(np.asarray(v0, float), np.asarray(v1, float), np.asarray(v2, float), m)
    # the Duffy nodes live on (0,0),(1,0),(1,1); map via P = A + x*(B-A) + y*(C-B)
    for a, b, c in tris:
        nodes = a[None, :] + pts[:, :1] * (b - a)[None, :] + pts[:, 1:] * (c - b)[None, :]
        vals = f(nodes)
        total += 2.0 * wts @ vals  # 2*area of reference triangle normalizes
    return total / len(tris)


def log_coefficient_entry(beta=0.5):
    def f(pts):
        r = np.linalg.norm(pts, axis=1)
        return 1.0 + beta * np.abs(np.log(r))

    return f


def main():
    np.set_printoptions(precision=17)

    # Level-2 structured mesh cells in package order: grid squares scanned
    # x-fastest, each contributing the lower and upper triangle.
    h = 0.25
    f = log_coefficient_entry(0.5)
    values = []
    for j in range(4):
        for i in range(4):
            ll = np.array([i * h, j * h])
            lr = ll + [h, 0.0]
            ul = ll + [0.0, h]
            ur = ll + [h, h]
            values.append(triangle_mean_gauss(f, ll, lr, ur))
            values.append(triangle_mean_gauss(f, ll, ur, ul))
    print("# level-2 cell averages of (1 + 0.5|log|x||), package cell order")
    print("LOG_PROJECTION_L2_A11 = [")
    for v in values:
        print(f"    {float(v)!r},")
    print("]")

    # Closed forms for the log(1/|x|) diagnostics on the unit square.
    c = (3.0 - np.log(2.0) - np.pi / 2.0) / 2.0
    osc = (np.pi / 4.0) * np.exp(-2.0 * c)
    print(f"\n# mean of log(1/|x|) over the unit square: (3 - ln2 - pi/2)/2")
    print(f"LOG_UNIT_SQUARE_MEAN = {float(c)!r}")
    print(f"# mean of |log(1/|x|) - mean|: (pi/4) exp(-(3 - ln2 - pi/2))")
    print(f"LOG_UNIT_SQUARE_OSC = {float(osc)!r}")
    print("# tail fractions |{|w - w_Q| > lam}|: (pi/4) exp(-2c) exp(-2 lam)")
    for lam in (1.0, 2.0, 3.0, 4.0):
        print(f"#   lam={lam}: {float(osc * np.exp(-2.0 * lam))!r}")


if __name__ == "__main__":
    main()
