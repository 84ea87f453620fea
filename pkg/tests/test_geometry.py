import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoxray.errors import CacheFormatError, DomainError, NonTrappingViolation
from geoxray.geometry import (ConformalMetric, GeodesicEndpointTable, InfluxCoord, PhasePoint,
                              backtrace_influx, build_endpoint_table, eval_metric,
                              trace_exits, trace_geodesic, trace_to_influx)

BUMPS = ConformalMetric.default()


def _fd_grad(m, x, y, h=1e-5):
    return ((m.lam(x + h, y) - m.lam(x - h, y)) / (2 * h),
            (m.lam(x, y + h) - m.lam(x, y - h)) / (2 * h))


def test_euclidean_metric_is_flat():
    m = ConformalMetric.euclidean()
    assert m.is_euclidean
    x = np.linspace(-0.5, 0.5, 7)
    assert np.all(m.lam(x, x) == 0) and np.all(m.curvature(x, -x) == 0)


def test_bump_pair_signs():
    # positive bump at (0.3, 0.3), negative one mirrored through the origin
    tail = 0.2 * np.exp(-0.72 / (2 * 0.25 ** 2))
    assert BUMPS.lam(0.3, 0.3) == pytest.approx(0.2 - tail, abs=1e-12)
    assert BUMPS.lam(-0.3, -0.3) == pytest.approx(-0.2 + tail, abs=1e-12)
    assert abs(BUMPS.lam(0.0, 0.0)) < 1e-12


@given(st.floats(-0.65, 0.65), st.floats(-0.65, 0.65))
@settings(max_examples=30, deadline=None)
def test_gradient_and_curvature_match_finite_differences(x, y):
    gx, gy = BUMPS.grad(x, y)
    fx, fy = _fd_grad(BUMPS, x, y)
    assert gx == pytest.approx(fx, abs=1e-7) and gy == pytest.approx(fy, abs=1e-7)
    h = 1e-4
    lap = (BUMPS.lam(x + h, y) + BUMPS.lam(x - h, y) + BUMPS.lam(x, y + h) + BUMPS.lam(x, y - h)
           - 4 * BUMPS.lam(x, y)) / h ** 2
    assert BUMPS.curvature(x, y) == pytest.approx(-np.exp(-2 * BUMPS.lam(x, y)) * lap, abs=1e-4)


def test_eval_metric_domain():
    lam, grad, kappa = eval_metric(BUMPS, (0.3, 0.3))
    assert lam == pytest.approx(BUMPS.lam(0.3, 0.3)) and len(grad) == 2
    with pytest.raises(DomainError):
        eval_metric(BUMPS, (0.9, 0.9))
    with pytest.raises(DomainError):
        PhasePoint((1.2, 0.0), 0.0)


def test_digest_depends_on_parameters():
    assert BUMPS.digest() == ConformalMetric.default().digest()
    assert BUMPS.digest() != ConformalMetric.gaussian_pair(0.15).digest()
    assert BUMPS.digest() != ConformalMetric.euclidean().digest()


def test_straight_chord():
    c = InfluxCoord(0.4, 0.3)
    path = trace_geodesic(ConformalMetric.euclidean(), c.phase_point(), h_step=1e-2)
    assert path.exit_time == pytest.approx(2 * np.cos(0.3), abs=1e-9)
    assert path.exit_coord[0] == pytest.approx(0.4 + np.pi + 0.6, abs=1e-9)
    # samples lie on the chord and keep their direction
    d = np.array([np.cos(c.theta), np.sin(c.theta)])
    p0 = np.array(c.phase_point().x)
    rel = path.samples[:, :2] - p0
    assert np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]).max() < 1e-12
    assert np.allclose(path.times[:-1], np.arange(len(path.samples) - 1) * 1e-2)


def test_outward_boundary_start_rejected():
    with pytest.raises(DomainError):
        trace_geodesic(BUMPS, PhasePoint((1.0, 0.0), 0.2))
    with pytest.raises(DomainError):
        trace_geodesic(BUMPS, PhasePoint((0.0, 0.0), 0.0), h_step=0.0)


def test_trapped_ray_reported():
    with pytest.raises(NonTrappingViolation):
        trace_exits(BUMPS, np.array([0.0]), np.array([0.0]), np.array([0.0]), t_max=0.3)


@given(st.floats(0, 2 * np.pi), st.floats(-1.4, 1.4))
@settings(max_examples=25, deadline=None)
def test_geodesic_flow_is_reversible(beta, alpha):
    """Tracing back from the exit point with the reversed direction returns to the start."""
    c = InfluxCoord(beta, alpha)
    x0, y0 = c.phase_point().x
    xo, yo, tho, tau = trace_exits(BUMPS, np.array([x0]), np.array([y0]), np.array([c.theta]),
                                   h_step=2e-3)
    xb, yb, thb, taub = trace_exits(BUMPS, xo, yo, tho + np.pi, h_step=2e-3)
    assert np.hypot(xb[0] - x0, yb[0] - y0) < 1e-6
    assert abs(np.angle(np.exp(1j * (thb[0] - np.pi - c.theta)))) < 1e-6
    assert taub[0] == pytest.approx(tau[0], abs=1e-6)


@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(0, 2 * np.pi))
@settings(max_examples=20, deadline=None)
def test_backtrace_lands_on_influx(x, y, theta):
    coord, t = trace_to_influx(BUMPS, PhasePoint((x, y), theta), h_step=2e-3)
    assert abs(coord.alpha) <= np.pi / 2 + 1e-9 and t > 0
    # forward from the influx point passes through (x, y) at time t
    path = trace_geodesic(BUMPS, coord.phase_point(), h_step=1e-3)
    k = np.argmin(np.abs(path.times - t))
    assert np.hypot(path.samples[k, 0] - x, path.samples[k, 1] - y) < 2e-3


def test_euclidean_table_oracle():
    tb = build_endpoint_table(ConformalMetric.euclidean(), 32, h_step=1e-2)
    g = tb.grid
    B, A = g.beta[:, None], g.alpha[None, :]
    assert np.abs(tb.tau - 2 * np.cos(A)).max() < 1e-8
    assert np.abs(np.angle(np.exp(1j * (tb.beta1 - B - np.pi - 2 * A)))).max() < 1e-8
    assert np.abs(tb.alpha1 + A).max() < 1e-8


def test_table_round_trip_and_corruption(tmp_path):
    tb = build_endpoint_table(BUMPS, 16, h_step=5e-3)
    p = tmp_path / "t.bin"
    tb.save(p)
    back = GeodesicEndpointTable.load(p, 5e-3, BUMPS.digest())
    for name in ("beta_out", "theta_out", "beta1", "alpha1", "tau"):
        assert np.array_equal(getattr(tb, name), getattr(back, name))
    raw = p.read_bytes()
    cases = {
        "magic": b"NOPE" + raw[4:],
        "version": raw[:4] + struct.pack("<I", 99) + raw[8:],
        "truncated": raw[:-8],
    }
    for name, blob in cases.items():
        q = tmp_path / f"{name}.bin"
        q.write_bytes(blob)
        with pytest.raises(CacheFormatError):
            GeodesicEndpointTable.load(q)
    with pytest.raises(CacheFormatError):
        GeodesicEndpointTable.load(p, metric_hash=BUMPS.digest() + 1)


def test_table_cache_reused(tmp_path):
    t1 = build_endpoint_table(BUMPS, 16, h_step=5e-3, cache_dir=tmp_path)
    files = list(tmp_path.glob("gxet_*.bin"))
    assert len(files) == 1
    mtime = files[0].stat().st_mtime_ns
    t2 = build_endpoint_table(BUMPS, 16, h_step=5e-3, cache_dir=tmp_path)
    assert files[0].stat().st_mtime_ns == mtime
    assert np.array_equal(t1.tau, t2.tau)


def test_antipodal_relation_is_an_involution():
    # alpha_1 maps the traced endpoint back onto the original ray
    tb = build_endpoint_table(BUMPS, 16, h_step=2e-3)
    b1, a1 = tb.beta1.ravel(), tb.alpha1.ravel()
    c = [InfluxCoord(b, a) for b, a in zip(b1, a1)]
    x = np.array([q.phase_point().x[0] for q in c])
    y = np.array([q.phase_point().x[1] for q in c])
    th = np.array([q.theta for q in c])
    xo, yo, tho, tau = trace_exits(BUMPS, x, y, th, h_step=2e-3)
    beta2 = np.mod(np.arctan2(yo, xo), 2 * np.pi)
    alpha2 = np.angle(np.exp(1j * (tho - beta2)))
    B, A = np.broadcast_arrays(tb.grid.beta[:, None], tb.grid.alpha[None, :])
    assert np.abs(np.angle(np.exp(1j * (beta2 - B.ravel())))).max() < 1e-6
    assert np.abs(alpha2 - A.ravel()).max() < 1e-6
    assert np.allclose(tau, tb.tau.ravel(), atol=1e-6)


def test_backtrace_vectorized_shape():
    x = np.zeros((3, 4))
    b, a, t = backtrace_influx(BUMPS, x, x, np.zeros((3, 4)) + 0.3, h_step=1e-2)
    assert b.shape == a.shape == t.shape == (3, 4)
