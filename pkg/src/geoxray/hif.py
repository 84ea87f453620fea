"""Holomorphic integrating factors and holomorphic solutions of transport equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fiber, interp
from .fredholm import right_inverse_R0, right_inverse_Rperp
from .geometry import InfluxCoord, backtrace_influx, trace_geodesic
from .grids import TWO_PI
from .xray import XRaySetup, transport_extend


@dataclass
class IntegratingFactor:
    """Odd, fiber-holomorphic ``w`` with ``Xw = -a``.

    ``boundary``: ``w`` on the full boundary grid; ``interior``: ``w`` on the
    fiber grid ``(n_inside, n_theta)`` or None; ``n_data``: ``n = R_perp a``.
    """

    a: np.ndarray
    n_data: np.ndarray
    boundary: np.ndarray
    interior: np.ndarray | None = None


def _holo(u, axis):
    return 2j * np.pi * fiber.holomorphic_projection(u, axis=axis)


def build_hif_boundary(setup: XRaySetup, a, cfg=None, n_data=None) -> IntegratingFactor:
    """``w|_{dSM} = 2 pi i (Id + iH) A_+ n`` with ``n = R_perp a``.

    ``n`` lies in ``V_-``, so ``A_+ n`` is its odd extension.
    """
    a = np.real(setup.disk.check(a))
    n = right_inverse_Rperp(setup, a, cfg) if n_data is None else n_data
    wb = _holo(fiber.apply_A_plus(n, setup.table, parity=-1), axis=1)
    return IntegratingFactor(a, n, wb)


def build_hif_interior(setup: XRaySetup, a, cfg=None, hif: IntegratingFactor | None = None):
    """Adds ``w = 2 pi i (Id + iH) n_psi`` on the fiber grid."""
    hif = hif or build_hif_boundary(setup, a, cfg)
    if hif.interior is None:
        hif.interior = _holo(transport_extend(setup, hif.n_data), axis=1)
    return hif


def build_holomorphic_solution(setup: XRaySetup, f1, f2=None, cfg=None):
    """``u = 2 pi i [(Id+iH)(R_perp f1)_psi - (Id+iH)(R_0 f2)_psi]``, solving ``Xu = -f1 - X_perp f2``.

    Returns ``(u, p, q)`` with the fiber field ``u`` and the influx data
    ``p = R_perp f1``, ``q = R_0 f2`` (None when ``f2`` is omitted).
    """
    p = right_inverse_Rperp(setup, f1, cfg)
    data = p
    q = None
    if f2 is not None:
        q = right_inverse_R0(setup, f2, cfg)
        data = p - q
    return _holo(transport_extend(setup, data), axis=1), p, q


# --- off-grid evaluation -----------------------------------------------------------

def fiber_at_points(setup: XRaySetup, d, x, y, n_theta=None):
    """``d_psi`` at arbitrary points: ``(npts, n_theta)`` array on a fiber grid.

    ``n_theta`` defaults to the setup's fiber resolution.
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    n_theta = n_theta or setup.n_theta
    shape = (x.size, n_theta)
    th = np.broadcast_to(((np.arange(n_theta) + 0.5) * TWO_PI / n_theta)[None, :], shape)
    beta, alpha, _ = backtrace_influx(setup.metric, np.broadcast_to(x[:, None], shape),
                                      np.broadcast_to(y[:, None], shape), th,
                                      setup.h_trace, setup.t_max)
    m, _ = interp.influx_matrix(setup.bgrid, beta, alpha)
    return interp.apply(m, d, shape)


def fourier_eval(values, theta):
    """Trigonometric interpolation of fiber samples (on the ``(k + 1/2) 2pi/n`` grid) at ``theta``.

    ``values`` is ``(npts, n)``; ``theta`` has ``npts`` entries.
    """
    n = values.shape[1]
    k = np.fft.fftfreq(n, 1.0 / n)
    grid0 = 0.5 * TWO_PI / n
    coef = np.fft.fft(values, axis=1) / n * np.exp(-1j * k * grid0)[None, :]
    return (coef * np.exp(1j * k[None, :] * np.asarray(theta)[:, None])).sum(axis=1)


def evaluate_holomorphic(setup: XRaySetup, data, x, y, theta, n_theta=None):
    """``2 pi i (Id + iH) data_psi`` at arbitrary phase points.

    When the attenuation has jumps, ``data_psi`` has kinks in ``theta`` and the
    Hilbert transform converges only like ``1 / n_theta``; pass a finer
    ``n_theta`` than the setup's for pointwise work such as flow derivatives.
    """
    vals = _holo(fiber_at_points(setup, data, x, y, n_theta), axis=1)
    return fourier_eval(vals, np.atleast_1d(theta))


def flow_residual(setup: XRaySetup, data, a, n_geo=50, seed=0, segment=10, h=1e-3, n_theta=None):
    """RMS over random geodesics of the flow residual of ``w = 2 pi i (Id + iH) data_psi``.

    ``d/dt w + a`` is taken in integrated form over segments of ``segment``
    steps of length ``h``: ``(w(t1) - w(t0) + int_t0^t1 a) / (t1 - t0)``.
    For ``Xw = -f`` pass ``f`` as ``a``.  ``a`` is sampled bilinearly.
    """
    from scipy.interpolate import RegularGridInterpolator
    rng = np.random.default_rng(seed)
    interp_a = RegularGridInterpolator((setup.disk.axis,) * 2, np.real(a))
    out = []
    while len(out) < n_geo:
        c = InfluxCoord(rng.uniform(0, TWO_PI), rng.uniform(-1.2, 1.2))
        sm = trace_geodesic(setup.metric, c.phase_point(), h_step=h).samples[:-1]
        idx = np.arange(0, len(sm), segment)
        if idx.size < 3:
            continue
        pts = sm[idx]
        w = evaluate_holomorphic(setup, data, pts[:, 0], pts[:, 1], pts[:, 2], n_theta)
        av = interp_a(sm[:, :2])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (av[1:] + av[:-1]) * h)])
        out.append((np.diff(w) + np.diff(cum[idx])) / (segment * h))
    return float(np.sqrt(np.mean(np.abs(np.concatenate(out)) ** 2)))
