"""Fiberwise harmonic calculus and the boundary operators A_+-, A_+-^*.

Fiber operators act along one axis holding a uniform angle grid of even
length (default: the last axis).  Boundary operators use the array layouts
of :mod:`geoxray.grids` and the scattering data of a
:class:`~geoxray.geometry.GeodesicEndpointTable`.
"""

from __future__ import annotations

import numpy as np

from . import interp
from .errors import ShapeError


def _check_even(d, axis):
    n = np.shape(d)[axis]
    if n % 2:
        raise ShapeError(f"fiber length must be even, got {n}")
    return n


def _multiplier(n, kind):
    k = np.fft.fftfreq(n, 1.0 / n)  # Nyquist lands on -n/2
    # the Nyquist mode has no sign: H kills it, so (Id + iH) keeps it once
    k[n // 2] = 0.0
    if kind == "hilbert":
        return -1j * np.sign(k)
    if kind == "holo":
        return 1.0 + np.sign(k)
    raise ValueError(kind)


def _apply_multiplier(d, axis, kind):
    n = _check_even(d, axis)
    d = np.asarray(d)
    shape = [1] * d.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(d, axis=axis) * _multiplier(n, kind).reshape(shape), axis=axis)
    if kind == "hilbert" and not np.iscomplexobj(d):
        return out.real
    return out


def hilbert_fiber(d, axis=-1):
    """Fiberwise Hilbert transform, multiplier ``-i sgn(k)``.  Real in, real out."""
    return _apply_multiplier(d, axis, "hilbert")


def holomorphic_projection(d, axis=-1):
    """``(Id + iH) d``: kills negative modes, doubles positive ones, keeps the mean."""
    return _apply_multiplier(d, axis, "holo")


def antiholomorphic_projection(d, axis=-1):
    """``(Id - iH) d``."""
    d = np.asarray(d)
    return 2.0 * d - holomorphic_projection(d, axis)


def parity_split(d, axis=-1):
    """Even and odd parts under ``theta -> theta + pi``."""
    n = _check_even(d, axis)
    d = np.asarray(d)
    shifted = np.roll(d, n // 2, axis=axis)
    return 0.5 * (d + shifted), 0.5 * (d - shifted)


def pi0(d, axis=-1):
    return np.mean(d, axis=axis)


def H_plus(d, axis=-1):
    return hilbert_fiber(parity_split(d, axis)[0], axis)


def H_minus(d, axis=-1):
    return hilbert_fiber(parity_split(d, axis)[1], axis)


def fiber_mode(d, k, axis=-1):
    """Fourier coefficient ``u_k`` of ``u(theta) = sum_k u_k e^{ik theta}`` on the grid ``(j + 1/2) 2pi/n``."""
    n = _check_even(d, axis)
    theta = (np.arange(n) + 0.5) * 2.0 * np.pi / n
    shape = [1] * np.ndim(d)
    shape[axis] = n
    return np.mean(np.asarray(d) * np.exp(-1j * k * theta).reshape(shape), axis=axis)


def negative_mode_fraction(d, axis=-1):
    """Energy fraction of strictly negative fiber modes (0 for holomorphic data).

    The sign-less Nyquist mode is not counted as negative.
    """
    n = _check_even(d, axis)
    c = np.abs(np.fft.fft(d, axis=axis)) ** 2
    k = np.fft.fftfreq(n, 1.0 / n)
    total = c.sum()
    if total == 0:
        return 0.0
    neg = np.flatnonzero((k < 0) & (k != -n // 2))
    return float(np.take(c, neg, axis=axis).sum() / total)


# --- boundary operators -----------------------------------------------------

def _alpha1(d, table):
    return interp.apply(table.alpha1_matrix, d, table.grid.influx_shape)


def apply_A(d, table, sign: int, parity=None):
    """``A_+-`` : influx data -> full boundary data.

    ``d`` on the influx half, ``+- d o alpha`` on the outflux half.  If ``d``
    is known to lie in ``V_+`` (``parity=+1``) or ``V_-`` (``parity=-1``),
    ``d o alpha_1 = parity * d`` and the outflux half is an exact reversal
    of the influx half, with no interpolation.
    """
    grid = table.grid
    d = grid.check_influx(d)
    if parity is not None:
        return grid.extend_parity(d, sign * parity)
    return grid.embed(d) + sign * grid.reverse(grid.embed(_alpha1(d, table)))


def apply_A_plus(d, table, parity=None):
    return apply_A(d, table, +1, parity)


def apply_A_minus(d, table, parity=None):
    return apply_A(d, table, -1, parity)


def apply_A_star(u, table, sign: int):
    """``A_+-^* u = (u +- u o alpha)`` restricted to the influx boundary."""
    grid = table.grid
    u = grid.check_full(u)
    return grid.restrict(u) + sign * interp.apply(table.outflux_matrix, u, grid.influx_shape)


def project_Vpm(d, table):
    """Split influx data into its ``V_+`` and ``V_-`` parts, ``(d +- d o alpha_1) / 2``."""
    d = table.grid.check_influx(d)
    da = _alpha1(d, table)
    return 0.5 * (d + da), 0.5 * (d - da)


def boundary_filter(u, table, hilbert="full"):
    """``(1/4) A_+^* H A_-``-style postprocessing of full-boundary data.

    ``hilbert`` picks ``H`` (``"full"``), ``H_+`` (``"plus"``) or ``H_-``
    (``"minus"``) along the fiber axis.
    """
    h = {"full": hilbert_fiber, "plus": H_plus, "minus": H_minus}[hilbert]
    return 0.25 * apply_A_star(h(u, axis=1), table, +1)
