"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same output layout.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def trig_eval(points, ks, cos_c, sin_c, order):
    """Evaluate a trigonometric perturbation and its derivatives.

    Args:
        points: ``(N, 2)`` float array.
        ks: ``(M, 2)`` float array of integer wave vectors.
        cos_c, sin_c: ``(M, 2)`` coefficient arrays.
        order: 0, 1 or 2.

    Returns:
        ``(value, jac, hess)`` with shapes ``(N, 2)``, ``(N, 2, 2)`` and
        ``(N, 2, 2, 2)``. Arrays above the requested order are zero.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    val = np.zeros((n, 2))
    jac = np.zeros((n, 2, 2))
    hess = np.zeros((n, 2, 2, 2))
    if ks.shape[0] == 0:
        return val, jac, hess
    phase = TWO_PI * pts @ ks.T  # (N, M)
    cph = np.cos(phase)
    sph = np.sin(phase)
    val = cph @ cos_c + sph @ sin_c
    if order >= 1:
        # d/dx_b of component a: 2pi k_b (-c_a sin + s_a cos)
        w = -sph[:, :, None] * cos_c[None] + cph[:, :, None] * sin_c[None]  # (N, M, 2)
        jac = TWO_PI * np.einsum("nma,mb->nab", w, ks)
    if order >= 2:
        w2 = -cph[:, :, None] * cos_c[None] - sph[:, :, None] * sin_c[None]
        kk = np.einsum("mb,mc->mbc", ks, ks)
        hess = TWO_PI**2 * np.einsum("nma,mbc->nabc", w2, kk)
    return val, jac, hess


def invert_newton(points, lin, ks, cos_c, sin_c, tol, max_iter):
    """Solve ``lin @ y + p(y) = x`` modulo the integer lattice.

    Returns:
        ``(y, iterations, max_residual)`` with ``y`` reduced to ``[0, 1)^2``.
    """
    x = np.asarray(points, dtype=float)
    lin = np.asarray(lin, dtype=float)
    lin_inv = np.linalg.inv(lin)
    y = x @ lin_inv.T
    it = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        val, jac, _ = trig_eval(y, ks, cos_c, sin_c, 1)
        r = y @ lin.T + val - x
        r -= np.rint(r)
        res = float(np.max(np.abs(r))) if r.size else 0.0
        if res <= tol:
            break
        full = lin[None] + jac
        y = y - np.linalg.solve(full, r[..., None])[..., 0]
    return np.mod(y, 1.0), it, res


def bilinear_periodic(grid, points):
    """Periodic bilinear interpolation of a ``(G, G, K)`` grid at ``(N, 2)`` points.

    Grid cell ``[i, j]`` sits at ``(i / G, j / G)``.
    """
    g = grid.shape[0]
    pts = np.mod(np.asarray(points, dtype=float), 1.0) * g
    i0 = np.floor(pts[:, 0]).astype(np.int64)
    j0 = np.floor(pts[:, 1]).astype(np.int64)
    tx = (pts[:, 0] - i0)[:, None]
    ty = (pts[:, 1] - j0)[:, None]
    i0 %= g
    j0 %= g
    i1 = (i0 + 1) % g
    j1 = (j0 + 1) % g
    return (
        grid[i0, j0] * (1 - tx) * (1 - ty)
        + grid[i1, j0] * tx * (1 - ty)
        + grid[i0, j1] * (1 - tx) * ty
        + grid[i1, j1] * tx * ty
    )
