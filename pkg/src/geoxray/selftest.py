"""Reduced-size invariant suites (N=65, boundary 128x64) with a pass/fail table."""

from __future__ import annotations

import tempfile
import time
from pathlib import Path

import numpy as np

from . import fiber
from .errors import CacheFormatError
from .fredholm import op_FredW
from .geometry import ConformalMetric, GeodesicEndpointTable
from .phantoms import smooth_gaussians
from .xray import XRaySetup, adjoint_I0_star, forward_I0, forward_Iperp


def _wrap(x):
    return np.abs(np.angle(np.exp(1j * x)))


def _euclidean_checks(s: XRaySetup, rng):
    g, tb = s.bgrid, s.table
    A, B = g.alpha[None, :], g.beta[:, None]
    yield "chord exit time", np.abs(tb.tau - 2 * np.cos(A)).max(), 1e-5
    yield "chord antipodal map", max(_wrap(tb.beta1 - (B + np.pi + 2 * A)).max(),
                                     np.abs(tb.alpha1 + A).max()), 1e-5
    ones = np.ones((s.disk.n,) * 2)
    yield "I0(1) = 2 cos(alpha)", np.abs(forward_I0(s, ones) - 2 * np.cos(A)).max(), 1e-4
    f = s.disk.sample(smooth_gaussians)
    yield "op_FredW = Id", s.rel_error(op_FredW(s, f), f), 0.03


def _nyquist(d):
    n = d.shape[-1]
    sgn = (-1.0) ** np.arange(n)
    return np.outer(d @ sgn / n, sgn)


def _generic_checks(s: XRaySetup, rng, tag):
    g, tb = s.bgrid, s.table
    x, y = s.disk.xy
    d = rng.standard_normal((8, g.n_beta))
    d -= _nyquist(d)  # H annihilates the Nyquist mode
    H = fiber.hilbert_fiber
    yield f"[{tag}] H^2 = -Id + pi0", np.abs(H(H(d)) + d - d.mean(axis=1, keepdims=True)).max(), 1e-12
    c = rng.uniform(-0.4, 0.4, 2)
    f = np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2) / 0.08)
    D = forward_I0(s, f)
    yield f"[{tag}] A+^*A+ = 2 Id", (s.norm_mu(fiber.apply_A_star(fiber.apply_A_plus(D, tb), tb, 1) - 2 * D)
                                   / s.norm_mu(2 * D)), 0.02
    dp, dm = fiber.project_Vpm(D, tb)
    yield f"[{tag}] Range I0 in V+", s.norm_mu(dm) / s.norm_mu(D), 0.02
    h = f * (1 - x ** 2 - y ** 2) ** 2
    Dp = forward_Iperp(s, h)
    yield f"[{tag}] Range Iperp in V-", s.norm_mu(fiber.project_Vpm(Dp, tb)[0]) / s.norm_mu(Dp), 0.02
    dd = np.cos(g.beta[:, None] + rng.uniform(0, 6)) * np.cos(2 * g.alpha[None, :]) + 0.3
    lhs, rhs = s.inner_mu(D, dd), s.inner_M(f, adjoint_I0_star(s, dd))
    yield f"[{tag}] adjoint I0", abs(lhs - rhs) / (s.norm_M(f) * s.norm_mu(dd)), 0.01
    yield f"[{tag}] alpha1 involution (cells)", _involution_cells(tb), 2.0


def _involution_cells(tb):
    from . import interp
    g = tb.grid
    m, _ = interp.influx_matrix(g, tb.beta1, tb.alpha1)
    # interpolate e^{i beta'} rather than beta' to stay periodic
    b2 = interp.apply(m, np.exp(1j * tb.beta1), g.influx_shape)
    a2 = interp.apply(m, tb.alpha1, g.influx_shape)
    interior = np.abs(g.alpha) < np.pi / 2 - 2 * g.d_alpha
    db = np.abs(np.angle(b2 * np.exp(-1j * g.beta[:, None]))) / g.d_beta
    da = np.abs(a2 - g.alpha[None, :]) / g.d_alpha
    return float(max(db[:, interior].max(), da[:, interior].max()))


def _cache_check():
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "bad.bin"
        p.write_bytes(b"XXXX" + bytes(64))
        try:
            GeodesicEndpointTable.load(p)
        except CacheFormatError:
            return 0.0
    return 1.0


def run_selftest(seed=0, n=65, n_b=64, out=print) -> bool:
    rng = np.random.default_rng(seed)
    rows = []
    t0 = time.perf_counter()
    euc = XRaySetup(None, n, n_b, h_step=2e-3)
    rows += list(_euclidean_checks(euc, rng))
    rows += list(_generic_checks(euc, rng, "euclidean"))
    bumps = XRaySetup(ConformalMetric.default(), n, n_b, h_step=2e-3)
    rows += list(_generic_checks(bumps, rng, "bumps"))
    rows.append(("corrupted cache rejected", _cache_check(), 0.5))
    ok = True
    out(f"{'check':<34} {'measured':>12} {'tolerance':>10}  result")
    for name, val, tol in rows:
        passed = bool(val <= tol)
        ok &= passed
        out(f"{name:<34} {val:12.3e} {tol:10.1e}  {'PASS' if passed else 'FAIL'}")
    out(f"{sum(v <= t for _, v, t in rows)}/{len(rows)} passed in {time.perf_counter() - t0:.1f} s")
    return ok
