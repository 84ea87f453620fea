"""Compiled inner loops: geodesic RK4 stepping, exit refinement, ray quadrature.

The metric enters every kernel as four arrays describing a sum of Gaussian
bumps, ``lambda(x) = sum_i amps[i] * exp(-|x - c_i|^2 * w2[i])``.  The phase
state is ``(x, y, c, s)`` with ``(c, s) = (cos theta, sin theta)``; carrying
the unit vector instead of the angle avoids trig calls inside RK4 stages.
"""

import math

import numba as nb
import numpy as np

OK = 0
TRAPPED = 1
UNDERFLOW = 2

_jit = nb.njit(cache=True, fastmath=False)
_jit_inline = nb.njit(cache=True, inline="always")


@_jit_inline
def _rhs(x, y, c, s, amps, cx, cy, w2):
    lam = 0.0
    gx = 0.0
    gy = 0.0
    for i in range(amps.shape[0]):
        dx = x - cx[i]
        dy = y - cy[i]
        e = amps[i] * math.exp(-(dx * dx + dy * dy) * w2[i])
        lam += e
        gx -= 2.0 * dx * w2[i] * e
        gy -= 2.0 * dy * w2[i] * e
    el = math.exp(-lam)
    om = el * (gy * c - gx * s)
    return el * c, el * s, -s * om, c * om


@_jit_inline
def _rk4(x, y, c, s, h, amps, cx, cy, w2):
    a1, b1, c1, d1 = _rhs(x, y, c, s, amps, cx, cy, w2)
    hh = 0.5 * h
    a2, b2, c2, d2 = _rhs(x + hh * a1, y + hh * b1, c + hh * c1, s + hh * d1,
                          amps, cx, cy, w2)
    a3, b3, c3, d3 = _rhs(x + hh * a2, y + hh * b2, c + hh * c2, s + hh * d2,
                          amps, cx, cy, w2)
    a4, b4, c4, d4 = _rhs(x + h * a3, y + h * b3, c + h * c3, s + h * d3,
                          amps, cx, cy, w2)
    h6 = h / 6.0
    xn = x + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    yn = y + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    cn = c + h6 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    sn = s + h6 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    nrm = math.sqrt(cn * cn + sn * sn)
    return xn, yn, cn / nrm, sn / nrm


@_jit_inline
def _refine_exit(x, y, c, s, h, tol, amps, cx, cy, w2):
    """Bisect the step size in (0, h] until the end point sits on |x| = 1.

    ``(x, y)`` is inside (or on) the circle and a full step of size ``h``
    lands outside.  Returns the partial step and the state reached.
    """
    lo = 0.0
    hi = h
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xm, ym, cm, sm = _rk4(x, y, c, s, mid, amps, cx, cy, w2)
        r = math.sqrt(xm * xm + ym * ym)
        if abs(r - 1.0) <= tol:
            return mid, xm, ym, cm, sm, OK
        if r < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    return 0.5 * (lo + hi), xm, ym, cm, sm, UNDERFLOW


@_jit
def trace_exit(x, y, c, s, h, tmax, tol, amps, cx, cy, w2):
    """Flow forward until the boundary; returns (x, y, c, s, tau, status)."""
    t = 0.0
    while True:
        if t > tmax:
            return x, y, c, s, t, TRAPPED
        xn, yn, cn, sn = _rk4(x, y, c, s, h, amps, cx, cy, w2)
        if xn * xn + yn * yn >= 1.0:
            ds, xe, ye, ce, se, st = _refine_exit(x, y, c, s, h, tol,
                                                  amps, cx, cy, w2)
            return xe, ye, ce, se, t + ds, st
        x, y, c, s = xn, yn, cn, sn
        t += h


@_jit
def trace_many(x0, y0, c0, s0, h, tmax, tol, amps, cx, cy, w2):
    n = x0.shape[0]
    out = np.empty((n, 5))
    status = np.zeros(n, dtype=np.int64)
    for k in range(n):
        xe, ye, ce, se, tau, st = trace_exit(x0[k], y0[k], c0[k], s0[k], h,
                                             tmax, tol, amps, cx, cy, w2)
        out[k, 0] = xe
        out[k, 1] = ye
        out[k, 2] = ce
        out[k, 3] = se
        out[k, 4] = tau
        status[k] = st
    return out, status


@_jit
def trace_samples(x, y, c, s, h, tmax, tol, amps, cx, cy, w2):
    """All uniform-time samples of one ray, the refined exit point last."""
    nmax = int(math.ceil(tmax / h)) + 2
    buf = np.empty((nmax, 4))
    buf[0, 0] = x
    buf[0, 1] = y
    buf[0, 2] = c
    buf[0, 3] = s
    n = 1
    t = 0.0
    while True:
        if t > tmax or n >= nmax - 1:
            return buf[:n], t, 0.0, TRAPPED
        xn, yn, cn, sn = _rk4(x, y, c, s, h, amps, cx, cy, w2)
        if xn * xn + yn * yn >= 1.0:
            ds, xe, ye, ce, se, st = _refine_exit(x, y, c, s, h, tol,
                                                  amps, cx, cy, w2)
            buf[n, 0] = xe
            buf[n, 1] = ye
            buf[n, 2] = ce
            buf[n, 3] = se
            return buf[:n + 1], t + ds, ds, st
        x, y, c, s = xn, yn, cn, sn
        buf[n, 0] = x
        buf[n, 1] = y
        buf[n, 2] = c
        buf[n, 3] = s
        n += 1
        t += h


@_jit_inline
def _bilinear(vals, x, y, xmin, dx, n):
    fx = (x - xmin) / dx
    fy = (y - xmin) / dx
    i = int(math.floor(fx))
    j = int(math.floor(fy))
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    if j < 0:
        j = 0
    elif j > n - 2:
        j = n - 2
    tx = fx - i
    ty = fy - j
    if tx < 0.0:
        tx = 0.0
    elif tx > 1.0:
        tx = 1.0
    if ty < 0.0:
        ty = 0.0
    elif ty > 1.0:
        ty = 1.0
    return ((1.0 - tx) * (1.0 - ty) * vals[i, j] + tx * (1.0 - ty) * vals[i + 1, j]
            + (1.0 - tx) * ty * vals[i, j + 1] + tx * ty * vals[i + 1, j + 1])


@_jit_inline
def _integrand(comps, ncomp, x, y, c, s, xmin, dx, n):
    # comps[k] multiplies 1, cos t, sin t, cos 2t, sin 2t
    v = _bilinear(comps[0], x, y, xmin, dx, n)
    if ncomp > 1:
        v += c * _bilinear(comps[1], x, y, xmin, dx, n)
        v += s * _bilinear(comps[2], x, y, xmin, dx, n)
    if ncomp > 3:
        v += (c * c - s * s) * _bilinear(comps[3], x, y, xmin, dx, n)
        v += 2.0 * c * s * _bilinear(comps[4], x, y, xmin, dx, n)
    return v


@_jit
def ray_integrals(x0, y0, c0, s0, h, tmax, tol, amps, cx, cy, w2,
                  comps, att, use_att, xmin, dx):
    """Attenuated ray integrals by trapezoid in flow time.

    The integrand is sampled at uniform flow times plus the refined exit
    point; the inner attenuation integral uses the same trapezoid nodes.
    """
    nray = x0.shape[0]
    ncomp = comps.shape[0]
    n = comps.shape[1]
    out = np.empty(nray)
    status = np.zeros(nray, dtype=np.int64)
    for k in range(nray):
        x = x0[k]
        y = y0[k]
        c = c0[k]
        s = s0[k]
        g_prev = _integrand(comps, ncomp, x, y, c, s, xmin, dx, n)
        a_prev = 0.0
        if use_att:
            a_prev = _bilinear(att, x, y, xmin, dx, n)
        cum = 0.0
        acc = 0.0
        t = 0.0
        while True:
            if t > tmax:
                status[k] = TRAPPED
                break
            xn, yn, cn, sn = _rk4(x, y, c, s, h, amps, cx, cy, w2)
            step = h
            done = False
            if xn * xn + yn * yn >= 1.0:
                step, xn, yn, cn, sn, st = _refine_exit(x, y, c, s, h, tol,
                                                        amps, cx, cy, w2)
                status[k] = st
                done = True
            g = _integrand(comps, ncomp, xn, yn, cn, sn, xmin, dx, n)
            if use_att:
                a = _bilinear(att, xn, yn, xmin, dx, n)
                cum_new = cum + 0.5 * step * (a_prev + a)
                acc += 0.5 * step * (g_prev * math.exp(cum) + g * math.exp(cum_new))
                cum = cum_new
                a_prev = a
            else:
                acc += 0.5 * step * (g_prev + g)
            g_prev = g
            x, y, c, s = xn, yn, cn, sn
            t += step
            if done:
                break
        out[k] = acc
    return out, status
