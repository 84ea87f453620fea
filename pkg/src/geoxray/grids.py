"""Discretization grids: the Cartesian disk grid and the boundary phase-space grids.

Array conventions used throughout the package:

* scalar fields are ``(n, n)`` arrays indexed ``[ix, iy]`` over ``[-1, 1]^2``;
* influx data (functions on the influx boundary) are ``(2 n_b, n_b)`` arrays
  indexed ``[i, j]`` for ``(beta_i, alpha_j)``;
* full-boundary data are ``(2 n_b, 2 n_b)`` arrays indexed ``[i, k]`` for
  ``(beta_i, theta_k)``; each row is one tangent circle;
* fiber fields are ``(n_inside, n_theta)`` arrays over the inside nodes of the
  disk grid (row order of ``DiskGrid.inside``) and a uniform fiber angle grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import DomainError, ShapeError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DiskGrid:
    n: int

    def __post_init__(self):
        if self.n < 5:
            raise DomainError(f"disk grid needs n >= 5, got {self.n}")

    @property
    def spacing(self) -> float:
        return 2.0 / (self.n - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n)

    @cached_property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @cached_property
    def mask(self) -> np.ndarray:
        x, y = self.xy
        return x * x + y * y < 1.0 - 1e-12

    @cached_property
    def interior(self) -> np.ndarray:
        """Inside nodes with all eight neighbours inside (drops the edge ring)."""
        return ndimage.binary_erosion(self.mask, structure=np.ones((3, 3), bool))

    @cached_property
    def inside(self) -> tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.mask)

    @property
    def n_inside(self) -> int:
        return int(self.mask.sum())

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != (self.n, self.n):
            raise ShapeError(f"scalar field must be {(self.n, self.n)}, got {f.shape}")
        return f

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x, y)`` on every node of the square (not only the disk)."""
        x, y = self.xy
        return np.asarray(func(x, y)) * np.ones_like(x)

    def scatter(self, values: np.ndarray, fill=0.0) -> np.ndarray:
        """Inside-node vector -> full ``(n, n)`` array."""
        out = np.full((self.n, self.n), fill, dtype=np.result_type(values, float))
        out[self.inside] = values
        return out

    def extend_outside(self, f: np.ndarray) -> np.ndarray:
        """Fill nodes outside the disk with the nearest inside value.

        Bilinear sampling near the boundary touches outside nodes; this keeps
        reconstructed fields (zero outside) from being dragged toward zero.
        """
        f = np.array(self.check(f))
        _, (ii, jj) = ndimage.distance_transform_edt(~self.mask, return_indices=True)
        out = ~self.mask
        f[out] = f[ii[out], jj[out]]
        return f


@dataclass(frozen=True)
class BoundaryGrid:
    """Influx grid ``(beta_i, alpha_j)`` and full-boundary grid ``(beta_i, theta_k)``.

    ``beta_i = i pi / n_b`` (``2 n_b`` values), ``alpha_j`` sits at half-cell
    offsets inside ``(-pi/2, pi/2)`` and ``theta_k = (k + 1/2) pi / n_b``.  With
    ``n_b`` even, every influx node is exactly a full-boundary node, and the
    antipodal map ``theta -> theta + pi`` is a shift by ``n_b`` along ``k``.
    """

    n_b: int

    def __post_init__(self):
        if self.n_b < 16 or self.n_b % 2:
            raise DomainError(f"boundary grid needs an even n_b >= 16, got {self.n_b}")

    @property
    def n_beta(self) -> int:
        return 2 * self.n_b

    @property
    def d_beta(self) -> float:
        return np.pi / self.n_b

    d_alpha = d_beta
    d_theta = d_beta

    @cached_property
    def beta(self) -> np.ndarray:
        return np.arange(2 * self.n_b) * self.d_beta

    @cached_property
    def alpha(self) -> np.ndarray:
        return -0.5 * np.pi + (np.arange(self.n_b) + 0.5) * self.d_alpha

    @cached_property
    def theta(self) -> np.ndarray:
        return (np.arange(2 * self.n_b) + 0.5) * self.d_theta

    @property
    def influx_shape(self) -> tuple[int, int]:
        return (2 * self.n_b, self.n_b)

    @property
    def full_shape(self) -> tuple[int, int]:
        return (2 * self.n_b, 2 * self.n_b)

    @cached_property
    def influx_k(self) -> np.ndarray:
        """Column ``k`` of each influx node ``(i, j)`` in the full-boundary grid."""
        i = np.arange(2 * self.n_b)[:, None]
        j = np.arange(self.n_b)[None, :]
        return (i + j + self.n_b // 2) % (2 * self.n_b)

    @cached_property
    def is_influx(self) -> np.ndarray:
        m = np.zeros(self.full_shape, bool)
        m[np.arange(2 * self.n_b)[:, None], self.influx_k] = True
        return m

    @cached_property
    def full_alpha(self) -> np.ndarray:
        """Incidence angle ``theta - beta - pi`` wrapped to ``(-pi, pi]``, per full node."""
        a = self.theta[None, :] - self.beta[:, None] - np.pi
        return np.angle(np.exp(1j * a))

    def check_influx(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d)
        if d.shape != self.influx_shape:
            raise ShapeError(f"influx data must be {self.influx_shape}, got {d.shape}")
        return d

    def check_full(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != self.full_shape:
            raise ShapeError(f"full-boundary data must be {self.full_shape}, got {u.shape}")
        return u

    def restrict(self, u: np.ndarray) -> np.ndarray:
        """Full-boundary data -> its values on the influx nodes."""
        u = self.check_full(u)
        return u[np.arange(2 * self.n_b)[:, None], self.influx_k]

    def embed(self, d: np.ndarray, outflux=None) -> np.ndarray:
        """Influx data -> full-boundary array; outflux nodes get ``outflux`` (default 0)."""
        d = self.check_influx(d)
        out = np.zeros(self.full_shape, dtype=np.result_type(d, float))
        if outflux is not None:
            out[...] = outflux
        out[np.arange(2 * self.n_b)[:, None], self.influx_k] = d
        return out

    def reverse(self, u: np.ndarray) -> np.ndarray:
        """``u(x, -v)``: exact shift by half a turn along each tangent circle."""
        return np.roll(self.check_full(u), -self.n_b, axis=1)

    def extend_parity(self, d: np.ndarray, sign: int) -> np.ndarray:
        """Extend influx data to the full boundary by ``u(x, -v) = sign * u(x, v)``."""
        inner = self.embed(d)
        return inner + sign * self.reverse(inner)

    def influx_xy(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Start points and unit directions ``(x, y, cos theta, sin theta)`` of all influx rays."""
        b = self.beta[:, None] * np.ones((1, self.n_b))
        th = b + np.pi + self.alpha[None, :]
        return np.cos(b), np.sin(b), np.cos(th), np.sin(th)
