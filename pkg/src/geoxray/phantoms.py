"""Built-in test phantoms (closed-form, sampled on the disk grid)."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import ConformalMetric
from .grids import DiskGrid


def _gauss(x, y, cx, cy, s):
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))


def smooth_gaussians(x, y):
    return (_gauss(x, y, 0.25, -0.1, 0.18) + 0.7 * _gauss(x, y, -0.3, 0.3, 0.14)
            + 0.5 * _gauss(x, y, -0.15, -0.4, 0.12))


def jumpy(x, y):
    """Piecewise constant: an annulus, two disks and a square, values in [0, 1.5]."""
    r = np.hypot(x - 0.05, y + 0.05)
    f = np.where((r > 0.45) & (r < 0.6), 0.6, 0.0)
    f = f + np.where(np.hypot(x + 0.2, y - 0.15) < 0.2, 1.0, 0.0)
    f = f + np.where(np.hypot(x - 0.25, y + 0.25) < 0.12, 0.5, 0.0)
    f = f + np.where((np.abs(x - 0.3) < 0.08) & (np.abs(y - 0.3) < 0.08), 0.8, 0.0)
    return f


def jumpy_edges(grid: DiskGrid, radius_cells=3):
    """Mask of nodes within ``radius_cells`` cells of a jump of :func:`jumpy`."""
    from scipy import ndimage
    f = grid.sample(jumpy)
    jump = np.zeros(f.shape, bool)
    jump[:-1, :] |= f[:-1, :] != f[1:, :]
    jump[1:, :] |= f[:-1, :] != f[1:, :]
    jump[:, :-1] |= f[:, :-1] != f[:, 1:]
    jump[:, 1:] |= f[:, :-1] != f[:, 1:]
    return ndimage.binary_dilation(jump, iterations=radius_cells)


def attenuation_smooth(x, y):
    """Smooth attenuation, peak ~1."""
    return 0.5 * _gauss(x, y, 0.0, 0.0, 0.45) + 0.5 * _gauss(x, y, -0.25, 0.1, 0.2)


def attenuation_jumpy(x, y):
    """Discontinuous attenuation, peak 1: a disk at 1 on a 0.5 ellipse plateau."""
    a = np.where((x / 0.85) ** 2 + (y / 0.7) ** 2 < 1, 0.5, 0.0)
    return a + np.where(np.hypot(x + 0.25, y - 0.1) < 0.3, 0.5, 0.0)


def polynomial_field(x, y):
    """Vector field ``(f1, f2)`` with low-degree polynomial components."""
    return 1 + 0.5 * x - y ** 2, x * y + 0.3 * y - 0.2


# vector-field phantoms, paired with a constant attenuation of 0.5 (times the scale)
FIELD_PHANTOMS = {"polynomial-field": polynomial_field}

PHANTOMS = {
    "smooth-gaussians": (smooth_gaussians, attenuation_smooth),
    "jumpy": (jumpy, attenuation_jumpy),
}


def make_field_phantom(name, grid: DiskGrid, atten_scale=1.0):
    """Return ``(f1, f2, a)`` for a vector-field phantom; ``a = 0.5 atten_scale`` on the disk."""
    if name not in FIELD_PHANTOMS:
        raise ConfigError(f"unknown vector-field phantom {name!r}")
    x, y = grid.xy
    f1, f2 = FIELD_PHANTOMS[name](x, y)
    m = grid.mask
    return np.where(m, f1, 0.0), np.where(m, f2, 0.0), np.where(m, 0.5 * atten_scale, 0.0)


def make_phantom(name, grid: DiskGrid, atten_scale=1.0, metric: ConformalMetric | None = None):
    """Return ``(f, a, c)`` sampled on the grid, ``c = e^{-lambda}`` the sound speed.

    ``"paper-metric"`` uses the smooth phantom with the default bump-pair metric.
    """
    if name == "paper-metric":
        metric = metric or ConformalMetric.default()
        fn, an = PHANTOMS["smooth-gaussians"]
    elif name in PHANTOMS:
        fn, an = PHANTOMS[name]
    else:
        raise ConfigError(f"unknown phantom {name!r}; choose from "
                          f"{sorted(PHANTOMS) + ['paper-metric'] + sorted(FIELD_PHANTOMS)}")
    metric = metric or ConformalMetric.euclidean()
    x, y = grid.xy
    mask = grid.mask
    f = np.where(mask, fn(x, y), 0.0)
    a = np.where(mask, atten_scale * an(x, y), 0.0)
    c = np.where(mask, metric.sound_speed(x, y), 0.0)
    return f, a, c
