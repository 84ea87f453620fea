"""Forward ray transforms, transport extension and the backprojection adjoints.

Everything hangs off an :class:`XRaySetup`, which fixes the metric, the disk
and boundary grids, the fiber resolution and the integration steps, and lazily
caches the endpoint table and the transport-extension matrix.
"""

from __future__ import annotations

import logging
import os
import warnings
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import interp
from .errors import ShapeError
from .geometry import (DEFAULT_H_STEP, DEFAULT_T_MAX, TOL_EXIT, ConformalMetric,
                       _raise_status, backtrace_influx, build_endpoint_table)
from .grids import TWO_PI, BoundaryGrid, DiskGrid

log = logging.getLogger(__name__)


def auto_n_theta(n: int) -> int:
    """Fiber directions for an ``n x n`` disk grid: ``~1.25 n``, a multiple of 8.

    Backprojection with fewer directions under-samples the rim angularly
    (arc spacing > ~2.5 cells) and its streak aliasing stalls the Neumann
    iteration on piecewise-constant phantoms.
    """
    return int(8 * np.ceil(1.25 * n / 8))


# Backward traces only feed bilinear lookups on the boundary grid, whose cells
# are ~1e-2 wide; RK4 at this step is accurate to ~1e-8 there.
DEFAULT_H_TRACE = 1e-2


class XRaySetup:
    def __init__(self, metric: ConformalMetric | None = None, n=129, n_b=128,
                 n_theta=None, h_step=DEFAULT_H_STEP, h_trace=DEFAULT_H_TRACE,
                 t_max=DEFAULT_T_MAX, cache_dir=None):
        n_theta = auto_n_theta(n) if not n_theta else n_theta
        if n_theta % 2:
            raise ShapeError(f"n_theta must be even, got {n_theta}")
        self.metric = metric if metric is not None else ConformalMetric.euclidean()
        self.disk = DiskGrid(n)
        self.bgrid = BoundaryGrid(n_b)
        self.n_theta = int(n_theta)
        self.h_step = float(h_step)
        self.h_trace = float(h_trace)
        self.t_max = float(t_max)
        self.cache_dir = cache_dir or os.environ.get("GEOXRAY_CACHE_DIR")

    def __repr__(self):
        return (f"XRaySetup(n={self.disk.n}, n_b={self.bgrid.n_b}, n_theta={self.n_theta}, "
                f"h_step={self.h_step:g}, euclidean={self.metric.is_euclidean})")

    # --- cached geometry ----------------------------------------------------

    @cached_property
    def table(self):
        return build_endpoint_table(self.metric, self.bgrid.n_b, self.h_step, self.t_max,
                                    self.cache_dir)

    @cached_property
    def lam(self) -> np.ndarray:
        x, y = self.disk.xy
        return self.metric.lam(x, y)

    @cached_property
    def fiber_theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * TWO_PI / self.n_theta

    @cached_property
    def influx_weight(self) -> np.ndarray:
        """Quadrature weights of ``L^2_mu``: ``cos(alpha) e^{lambda} dbeta dalpha``."""
        g = self.bgrid
        lam_b = self.metric.lam(np.cos(g.beta), np.sin(g.beta))
        return (np.exp(lam_b)[:, None] * np.cos(g.alpha)[None, :]) * g.d_beta * g.d_alpha

    @cached_property
    def area_weight(self) -> np.ndarray:
        """Riemannian area element on the mask, ``e^{2 lambda} dx dy``; zero outside."""
        return np.where(self.disk.mask, np.exp(2.0 * self.lam), 0.0) * self.disk.spacing ** 2

    @cached_property
    def backtrace(self):
        """Influx coordinates ``(beta, alpha)`` of the ray through every (inside node, theta_k)."""
        path = None
        if self.cache_dir:
            path = Path(self.cache_dir) / (
                f"gxbt_{self.metric.digest():016x}_n{self.disk.n}_t{self.n_theta}"
                f"_h{self.h_trace:.3e}.npz")
            if path.exists():
                with np.load(path) as z:
                    return z["beta"], z["alpha"]
        ii, jj = self.disk.inside
        ax = self.disk.axis
        shape = (ii.size, self.n_theta)
        x = np.broadcast_to(ax[ii][:, None], shape)
        y = np.broadcast_to(ax[jj][:, None], shape)
        th = np.broadcast_to(self.fiber_theta[None, :], shape)
        beta, alpha, _ = backtrace_influx(self.metric, x, y, th, self.h_trace, self.t_max)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(path, beta=beta, alpha=alpha)
        return beta, alpha

    @cached_property
    def transport(self):
        """Sparse map from influx data to fiber values, ``d -> d_psi``."""
        beta, alpha = self.backtrace
        m, n_clamped = interp.influx_matrix(self.bgrid, beta, alpha)
        log.debug("transport matrix: %d grazing lookups clamped", n_clamped)
        return m

    # --- inner products -----------------------------------------------------

    def inner_mu(self, d1, d2) -> complex:
        return complex(np.sum(self.influx_weight * d1 * np.conj(d2)))

    def inner_M(self, f, g) -> complex:
        return complex(np.sum(self.area_weight * f * np.conj(g)))

    def norm_mu(self, d) -> float:
        return float(np.sqrt(np.sum(self.influx_weight * np.abs(d) ** 2)))

    def norm_M(self, f, mask=None) -> float:
        w = self.area_weight if mask is None else np.where(mask, self.area_weight, 0.0)
        return float(np.sqrt(np.sum(w * np.abs(f) ** 2)))

    def rel_error(self, est, truth, mask=None) -> float:
        """Relative L^2(M) error, by default over the interior mask."""
        mask = self.disk.interior if mask is None else mask
        return self.norm_M(est - truth, mask) / self.norm_M(truth, mask)

    # --- grid calculus ------------------------------------------------------

    def gradient(self, f):
        return (masked_derivative(f, self.disk.mask, self.disk.spacing, 0),
                masked_derivative(f, self.disk.mask, self.disk.spacing, 1))

    def divergence(self, px, py):
        return (masked_derivative(px, self.disk.mask, self.disk.spacing, 0)
                + masked_derivative(py, self.disk.mask, self.disk.spacing, 1))

    def dbar(self, f):
        """``(d_x + i d_y) / 2`` on the mask."""
        fx, fy = self.gradient(f)
        return 0.5 * (fx + 1j * fy)


def masked_derivative(f, mask, dx, axis):
    """Partial derivative on the mask: central where possible, else one-sided.

    One-sided stencils are second order when two neighbours are available on
    that side, first order with one, zero for isolated nodes.  The result is
    zero outside the mask.
    """
    f = np.asarray(f)
    n = f.shape[axis]

    def shift(a, k, fill):
        out = np.full_like(a, fill)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        if k > 0:
            src[axis], dst[axis] = slice(k, n), slice(0, n - k)
        else:
            src[axis], dst[axis] = slice(0, n + k), slice(-k, n)
        out[tuple(dst)] = a[tuple(src)]
        return out

    fz = np.where(mask, f, 0)
    p1, p2 = shift(fz, 1, 0), shift(fz, 2, 0)
    m1, m2 = shift(fz, -1, 0), shift(fz, -2, 0)
    ip1, ip2 = shift(mask, 1, False), shift(mask, 2, False)
    im1, im2 = shift(mask, -1, False), shift(mask, -2, False)

    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    central = mask & ip1 & im1
    fwd2 = mask & ~central & ip1 & ip2
    bwd2 = mask & ~central & ~fwd2 & im1 & im2
    fwd1 = mask & ~central & ~fwd2 & ~bwd2 & ip1
    bwd1 = mask & ~central & ~fwd2 & ~bwd2 & ~fwd1 & im1
    out[central] = (p1 - m1)[central] / (2 * dx)
    out[fwd2] = (-3 * fz + 4 * p1 - p2)[fwd2] / (2 * dx)
    out[bwd2] = (3 * fz - 4 * m1 + m2)[bwd2] / (2 * dx)
    out[fwd1] = (p1 - fz)[fwd1] / dx
    out[bwd1] = (fz - m1)[bwd1] / dx
    return out


# --- forward transforms ------------------------------------------------------

def _prep(setup, f):
    return np.ascontiguousarray(setup.disk.extend_outside(np.real(setup.disk.check(f))), float)


def forward_components(setup: XRaySetup, comps, a=None, h_step=None) -> np.ndarray:
    """Ray integrals of ``sum_k comps[k](x) * e_k(theta)`` with ``e = (1, cos, sin, cos 2, sin 2)``.

    ``comps`` holds 1, 3 or 5 real grid fields; ``a`` is an optional real
    attenuation.  Values outside the disk are replaced by the nearest inside
    value before bilinear sampling.
    """
    comps = np.stack([_prep(setup, c) for c in comps])
    if comps.shape[0] not in (1, 3, 5):
        raise ShapeError("need 1, 3 or 5 integrand components")
    use_att = a is not None
    att = _prep(setup, a) if use_att else np.zeros((2, 2))
    g = setup.bgrid
    x0, y0, c0, s0 = (np.ascontiguousarray(v.ravel()) for v in g.influx_xy())
    out, status = K.ray_integrals(x0, y0, c0, s0, float(h_step or setup.h_step), setup.t_max,
                                  TOL_EXIT, *setup.metric.kernel_args, comps, att, use_att,
                                  -1.0, setup.disk.spacing)
    _raise_status(status, " (forward transform)")
    return out.reshape(g.influx_shape)


def _complex_split(fn, f, *args, **kw):
    if np.iscomplexobj(f):
        return fn(np.real(f), *args, **kw) + 1j * fn(np.imag(f), *args, **kw)
    return fn(f, *args, **kw)


def forward_Ia(setup: XRaySetup, f, a=None, h_step=None) -> np.ndarray:
    """Attenuated transform ``I_a f``; ``a=None`` gives ``I_0 f``."""
    return _complex_split(lambda g: forward_components(setup, [g], a, h_step), f)


def forward_I0(setup: XRaySetup, f, h_step=None) -> np.ndarray:
    return forward_Ia(setup, f, None, h_step)


def _perp_components(setup, h):
    hx, hy = setup.gradient(h)
    el = np.exp(-setup.lam)
    # X_perp h = e^{-lambda} (sin t h_x - cos t h_y)
    return [np.zeros_like(hx), -el * hy, el * hx]


def forward_Iperp(setup: XRaySetup, h, a=None, h_step=None, check_boundary=True) -> np.ndarray:
    """``I_perp h = I(X_perp h)``; ``h`` should vanish on the boundary."""
    def one(hr):
        h = setup.disk.check(hr)
        edge = setup.disk.mask & ~setup.disk.interior
        peak = np.abs(h[setup.disk.mask]).max(initial=0.0)
        if check_boundary and peak > 0 and np.abs(h[edge]).max() > 0.05 * peak:
            warnings.warn("I_perp input does not vanish on the boundary; V_- symmetry degraded",
                          stacklevel=3)
        return forward_components(setup, _perp_components(setup, h), a, h_step)
    return _complex_split(one, h)


def forward_doppler(setup: XRaySetup, f1, f2, a=None, h_step=None) -> np.ndarray:
    """Transform of the vector field ``f1 d_x + f2 d_y``: integrand ``e^{-lambda}(f1 cos t + f2 sin t)``."""
    el = np.exp(-setup.lam)
    return forward_components(setup, [np.zeros_like(el), el * np.real(f1), el * np.real(f2)],
                              a, h_step)


# --- transport extension and adjoints ----------------------------------------

def transport_extend(setup: XRaySetup, d) -> np.ndarray:
    """``d_psi`` on the fiber grid: ``(n_inside, n_theta)`` array, constant along geodesics."""
    d = setup.bgrid.check_influx(d)
    return interp.apply(setup.transport, d, (setup.disk.n_inside, setup.n_theta))


def fiber_to_grid(setup: XRaySetup, values, fill=0.0) -> np.ndarray:
    return setup.disk.scatter(values, fill)


def adjoint_I0_star(setup: XRaySetup, d) -> np.ndarray:
    """``I_0^* d = 2 pi (d_psi)_0``."""
    return fiber_to_grid(setup, TWO_PI * transport_extend(setup, d).mean(axis=1))


def perp_moments(setup: XRaySetup, u_fiber):
    """``m(x) = int (-sin t, cos t) u(x, t) dt`` for a fiber field."""
    th = setup.fiber_theta
    w = TWO_PI / setup.n_theta
    mx = -(u_fiber * np.sin(th)).sum(axis=1) * w
    my = (u_fiber * np.cos(th)).sum(axis=1) * w
    return fiber_to_grid(setup, mx), fiber_to_grid(setup, my)


def adjoint_Iperp_star(setup: XRaySetup, d) -> np.ndarray:
    """``I_perp^* d = e^{-2 lambda} div(e^{lambda} m)`` with ``m`` the perpendicular fiber moments of ``d_psi``."""
    mx, my = perp_moments(setup, transport_extend(setup, d))
    el = np.exp(setup.lam)
    out = np.exp(-2.0 * setup.lam) * setup.divergence(el * mx, el * my)
    return np.where(setup.disk.mask, out, 0.0)
