"""Conformal metrics on the unit disk, geodesic tracing and the endpoint cache."""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import interp
from .errors import CacheFormatError, DomainError, NonTrappingViolation, NumericError
from .grids import TWO_PI, BoundaryGrid

log = logging.getLogger(__name__)

DEFAULT_H_STEP = 1e-3
DEFAULT_T_MAX = 10.0
TOL_EXIT = 1e-10

TABLE_MAGIC = b"GXET"
TABLE_VERSION = 1


@dataclass(frozen=True)
class ConformalMetric:
    """Metric ``g = exp(2 lambda) (dx^2 + dy^2)`` with ``lambda`` a sum of Gaussian bumps.

    ``lambda(x) = sum_i amplitudes[i] * exp(-|x - centers[i]|^2 / (2 widths[i]^2))``.
    The empty sum is the Euclidean disk.
    """

    amplitudes: tuple[float, ...] = ()
    centers: tuple[tuple[float, float], ...] = ()
    widths: tuple[float, ...] = ()

    def __post_init__(self):
        if not (len(self.amplitudes) == len(self.centers) == len(self.widths)):
            raise ValueError("amplitudes, centers and widths must have equal length")
        if any(w <= 0 for w in self.widths):
            raise ValueError("bump widths must be positive")

    @classmethod
    def euclidean(cls) -> ConformalMetric:
        return cls()

    @classmethod
    def gaussian_pair(cls, amplitude=0.2, center=(0.3, 0.3), width=0.25) -> ConformalMetric:
        """A bump of height ``amplitude`` at ``center`` and its negative at ``-center``."""
        cx, cy = map(float, center)
        return cls((float(amplitude), -float(amplitude)), ((cx, cy), (-cx, -cy)),
                   (float(width), float(width)))

    @classmethod
    def default(cls) -> ConformalMetric:
        return cls.gaussian_pair(0.2, (0.3, 0.3), 0.25)

    @property
    def is_euclidean(self) -> bool:
        return not any(self.amplitudes)

    @cached_property
    def kernel_args(self):
        amps = np.asarray(self.amplitudes, float)
        c = np.asarray(self.centers, float).reshape(-1, 2)
        w2 = 1.0 / (2.0 * np.asarray(self.widths, float) ** 2)
        return amps, np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1]), w2

    def _bumps(self, x, y):
        amps, cx, cy, w2 = self.kernel_args
        x = np.asarray(x, float)[..., None]
        y = np.asarray(y, float)[..., None]
        dx = x - cx
        dy = y - cy
        e = amps * np.exp(-(dx * dx + dy * dy) * w2)
        return dx, dy, e, w2

    def lam(self, x, y):
        return self._bumps(x, y)[2].sum(axis=-1)

    def grad(self, x, y):
        dx, dy, e, w2 = self._bumps(x, y)
        return (-2.0 * w2 * dx * e).sum(axis=-1), (-2.0 * w2 * dy * e).sum(axis=-1)

    def laplacian(self, x, y):
        dx, dy, e, w2 = self._bumps(x, y)
        return (e * (4.0 * w2 * w2 * (dx * dx + dy * dy) - 4.0 * w2)).sum(axis=-1)

    def curvature(self, x, y):
        return -np.exp(-2.0 * self.lam(x, y)) * self.laplacian(x, y)

    def sound_speed(self, x, y):
        return np.exp(-self.lam(x, y))

    def digest(self) -> int:
        """Stable 64-bit hash of the metric parameters."""
        text = repr((tuple(map(float, self.amplitudes)),
                     tuple(tuple(map(float, c)) for c in self.centers),
                     tuple(map(float, self.widths))))
        return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def eval_metric(metric: ConformalMetric, x):
    """Return ``(lambda, grad lambda, Gaussian curvature)`` at a point of the closed disk."""
    px, py = map(float, x)
    if px * px + py * py > 1.0 + 1e-12:
        raise DomainError(f"point {x} is outside the closed unit disk")
    gx, gy = metric.grad(px, py)
    return float(metric.lam(px, py)), (float(gx), float(gy)), float(metric.curvature(px, py))


@dataclass(frozen=True)
class PhasePoint:
    x: tuple[float, float]
    theta: float

    def __post_init__(self):
        if self.x[0] ** 2 + self.x[1] ** 2 > 1.0 + 1e-12:
            raise DomainError(f"phase point base {self.x} is outside the closed unit disk")


@dataclass(frozen=True)
class InfluxCoord:
    """Influx boundary point ``x(beta) = (cos beta, sin beta)`` with incidence ``alpha``."""

    beta: float
    alpha: float

    @property
    def theta(self) -> float:
        return float(np.mod(self.beta + np.pi + self.alpha, TWO_PI))

    @property
    def weight(self) -> float:
        return float(np.cos(self.alpha))

    def phase_point(self) -> PhasePoint:
        return PhasePoint((float(np.cos(self.beta)), float(np.sin(self.beta))), self.theta)


@dataclass
class GeodesicPath:
    samples: np.ndarray  # (n, 3): x, y, theta at t = 0, h, 2h, ..., then the exit point
    h_step: float
    exit_time: float
    exit_coord: tuple[float, float]  # (beta_out, theta_out)

    @property
    def times(self) -> np.ndarray:
        t = np.arange(len(self.samples)) * self.h_step
        t[-1] = self.exit_time
        return t


def _raise_status(status, where=""):
    status = np.asarray(status)
    if np.any(status == K.TRAPPED):
        bad = np.flatnonzero(status == K.TRAPPED)
        raise NonTrappingViolation(
            f"{bad.size} geodesic(s) did not exit before t_max{where}; first index {bad[0]}")
    if np.any(status == K.UNDERFLOW):
        bad = np.flatnonzero(status == K.UNDERFLOW)
        raise NumericError(f"exit bisection underflow for {bad.size} ray(s){where}; "
                           f"first index {bad[0]}")


def trace_geodesic(metric: ConformalMetric, start: PhasePoint, h_step=DEFAULT_H_STEP,
                   t_max=DEFAULT_T_MAX, tol_exit=TOL_EXIT) -> GeodesicPath:
    if h_step <= 0:
        raise DomainError("h_step must be positive")
    x, y = map(float, start.x)
    c, s = np.cos(start.theta), np.sin(start.theta)
    r2 = x * x + y * y
    if r2 >= 1.0 - 1e-12 and x * c + y * s >= 0.0:
        raise DomainError("boundary start point must point into the disk")
    buf, tau, _, st = K.trace_samples(x, y, c, s, float(h_step), float(t_max), float(tol_exit),
                                      *metric.kernel_args)
    _raise_status([st])
    samples = np.column_stack([buf[:, 0], buf[:, 1], np.mod(np.arctan2(buf[:, 3], buf[:, 2]), TWO_PI)])
    xe, ye = buf[-1, 0], buf[-1, 1]
    return GeodesicPath(samples, float(h_step), float(tau),
                        (float(np.mod(np.arctan2(ye, xe), TWO_PI)), float(samples[-1, 2])))


def trace_exits(metric, x, y, theta, h_step=DEFAULT_H_STEP, t_max=DEFAULT_T_MAX,
                tol_exit=TOL_EXIT, where=""):
    """Vectorized forward tracing; returns ``(x_out, y_out, theta_out, tau)`` arrays."""
    shape = np.shape(x)
    x = np.ascontiguousarray(np.ravel(x), float)
    y = np.ascontiguousarray(np.ravel(y), float)
    th = np.ravel(theta)
    out, status = K.trace_many(x, y, np.cos(th), np.sin(th), float(h_step), float(t_max),
                               float(tol_exit), *metric.kernel_args)
    _raise_status(status, where)
    th_out = np.mod(np.arctan2(out[:, 3], out[:, 2]), TWO_PI)
    return (out[:, 0].reshape(shape), out[:, 1].reshape(shape), th_out.reshape(shape),
            out[:, 4].reshape(shape))


def backtrace_influx(metric, x, y, theta, h_step=DEFAULT_H_STEP, t_max=DEFAULT_T_MAX,
                     tol_exit=TOL_EXIT):
    """Influx coordinates ``(beta, alpha)`` and elapsed time of the geodesics through ``(x, theta)``.

    The backward flow is the forward flow of the reversed direction; its exit
    point, with the direction flipped back, is where the geodesic entered.
    """
    xo, yo, tho, t = trace_exits(metric, x, y, np.asarray(theta) + np.pi, h_step, t_max, tol_exit,
                                 where=" (backward trace)")
    beta = np.mod(np.arctan2(yo, xo), TWO_PI)
    alpha = np.angle(np.exp(1j * (tho - beta)))
    return beta, alpha, t


def trace_to_influx(metric: ConformalMetric, p: PhasePoint, h_step=DEFAULT_H_STEP,
                    t_max=DEFAULT_T_MAX):
    beta, alpha, t = backtrace_influx(metric, np.array([p.x[0]]), np.array([p.x[1]]),
                                      np.array([p.theta]), h_step, t_max)
    return InfluxCoord(float(beta[0]), float(alpha[0])), float(t[0])


@dataclass
class GeodesicEndpointTable:
    """Scattering data of every influx-grid ray.

    ``beta_out, theta_out``: outflux point of the ray (the scattering relation);
    ``beta1, alpha1``: the same point with reversed direction, as influx
    coordinates (the antipodal scattering relation); ``tau``: exit time.
    """

    grid: BoundaryGrid
    metric_hash: int
    h_step: float
    beta_out: np.ndarray
    theta_out: np.ndarray
    beta1: np.ndarray
    alpha1: np.ndarray
    tau: np.ndarray
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def alpha1_matrix(self):
        """Interpolates influx data at the antipodal images ``alpha_1(beta, alpha)``."""
        if "a1" not in self._ops:
            m, n_clamped = interp.influx_matrix(self.grid, self.beta1, self.alpha1)
            if n_clamped:
                log.debug("alpha_1 lookup: %d grazing nodes clamped", n_clamped)
            self._ops["a1"] = m
            self._ops["a1_clamped"] = n_clamped
        return self._ops["a1"]

    @property
    def outflux_matrix(self):
        """Interpolates full-boundary data at the outflux images ``alpha(beta, alpha)``."""
        if "a" not in self._ops:
            self._ops["a"] = interp.full_matrix(self.grid, self.beta_out, self.theta_out)
        return self._ops["a"]

    @property
    def clamped(self) -> int:
        self.alpha1_matrix
        return self._ops["a1_clamped"]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(TABLE_MAGIC)
            fh.write(struct.pack("<IIQ", TABLE_VERSION, self.grid.n_b, self.metric_hash))
            for arr in (self.beta_out, self.theta_out, self.beta1, self.alpha1, self.tau):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, h_step=DEFAULT_H_STEP, metric_hash=None) -> GeodesicEndpointTable:
        raw = Path(path).read_bytes()
        if len(raw) < 20 or raw[:4] != TABLE_MAGIC:
            raise CacheFormatError(f"{path}: bad magic, not an endpoint table")
        version, n_b, mhash = struct.unpack("<IIQ", raw[4:20])
        if version != TABLE_VERSION:
            raise CacheFormatError(f"{path}: unsupported table version {version}")
        if metric_hash is not None and mhash != metric_hash:
            raise CacheFormatError(f"{path}: metric hash mismatch")
        n = 2 * n_b * n_b
        body = np.frombuffer(raw, dtype="<f8", offset=20)
        if body.size != 5 * n:
            raise CacheFormatError(f"{path}: truncated table ({body.size} of {5 * n} values)")
        arrs = [a.reshape(2 * n_b, n_b).astype(float) for a in np.split(body, 5)]
        return cls(BoundaryGrid(n_b), mhash, h_step, *arrs)


def _cache_path(cache_dir, metric, n_b, h_step):
    return Path(cache_dir) / f"gxet_{metric.digest():016x}_nb{n_b}_h{h_step:.3e}.bin"


def build_endpoint_table(metric: ConformalMetric, n_b: int, h_step=DEFAULT_H_STEP,
                         t_max=DEFAULT_T_MAX, cache_dir=None) -> GeodesicEndpointTable:
    """Trace all ``2 n_b x n_b`` influx rays once and store their endpoints.

    With ``cache_dir`` (or ``GEOXRAY_CACHE_DIR``) set, tables are persisted in
    the binary ``GXET`` format and reloaded on later calls.
    """
    grid = BoundaryGrid(n_b)
    cache_dir = cache_dir or os.environ.get("GEOXRAY_CACHE_DIR")
    path = _cache_path(cache_dir, metric, n_b, h_step) if cache_dir else None
    if path is not None and path.exists():
        return GeodesicEndpointTable.load(path, h_step, metric.digest())

    x0, y0, c0, s0 = grid.influx_xy()
    try:
        xo, yo, tho, tau = trace_exits(metric, x0, y0, np.arctan2(s0, c0), h_step, t_max)
    except NonTrappingViolation as exc:
        raise NonTrappingViolation(f"endpoint table (n_b={n_b}): {exc}") from exc
    beta_out = np.mod(np.arctan2(yo, xo), TWO_PI)
    alpha1 = np.angle(np.exp(1j * (tho - beta_out)))
    table = GeodesicEndpointTable(grid, metric.digest(), float(h_step), beta_out, tho,
                                  beta_out.copy(), alpha1, tau)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.save(path)
    return table
