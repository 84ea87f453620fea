"""Sparse bilinear interpolation operators on the boundary grids."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .grids import TWO_PI, BoundaryGrid


def _periodic(coord, step, n, offset=0.0):
    f = (np.mod(coord - offset, TWO_PI)) / step
    i0 = np.floor(f).astype(np.int64)
    t = f - i0
    i0 %= n
    return i0, (i0 + 1) % n, t


def influx_matrix(grid: BoundaryGrid, beta, alpha):
    """Bilinear interpolation of influx data at ``(beta, alpha)`` points.

    ``beta`` is periodic.  Points beyond the outermost alpha nodes (grazing
    rays) are clamped to the edge value.  Returns ``(matrix, n_clamped)``
    where the matrix maps flattened influx data to the query points.
    """
    beta = np.ravel(beta)
    alpha = np.ravel(alpha)
    i0, i1, tb = _periodic(beta, grid.d_beta, grid.n_beta)
    fa = (alpha - grid.alpha[0]) / grid.d_alpha
    clamped = (fa < 0.0) | (fa > grid.n_b - 1)
    fa = np.clip(fa, 0.0, grid.n_b - 1)
    j0 = np.minimum(np.floor(fa).astype(np.int64), grid.n_b - 2)
    ta = fa - j0
    n_b = grid.n_b
    rows = np.repeat(np.arange(beta.size), 4)
    cols = np.stack([i0 * n_b + j0, i1 * n_b + j0, i0 * n_b + j0 + 1, i1 * n_b + j0 + 1], axis=1)
    w = np.stack([(1 - tb) * (1 - ta), tb * (1 - ta), (1 - tb) * ta, tb * ta], axis=1)
    m = sparse.csr_matrix((w.ravel(), (rows, cols.ravel())),
                          shape=(beta.size, grid.n_beta * n_b))
    return m, int(clamped.sum())


def full_matrix(grid: BoundaryGrid, beta, theta):
    """Bilinear interpolation of full-boundary data at ``(beta, theta)``; periodic in both."""
    beta = np.ravel(beta)
    theta = np.ravel(theta)
    n = grid.n_beta
    i0, i1, tb = _periodic(beta, grid.d_beta, n)
    k0, k1, tt = _periodic(theta, grid.d_theta, n, offset=0.5 * grid.d_theta)
    rows = np.repeat(np.arange(beta.size), 4)
    cols = np.stack([i0 * n + k0, i1 * n + k0, i0 * n + k1, i1 * n + k1], axis=1)
    w = np.stack([(1 - tb) * (1 - tt), tb * (1 - tt), (1 - tb) * tt, tb * tt], axis=1)
    return sparse.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(beta.size, n * n))


def apply(matrix, data, shape):
    """Apply a sparse interpolation matrix to real or complex gridded data."""
    flat = np.ravel(data)
    if np.iscomplexobj(flat):
        out = matrix @ flat.real + 1j * (matrix @ flat.imag)
    else:
        out = matrix @ flat
    return out.reshape(shape)
