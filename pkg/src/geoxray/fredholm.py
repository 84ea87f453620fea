"""Fredholm equations for I_0 / I_perp, their Neumann solution and the right-inverses."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fiber
from .errors import ConfigError, NeumannDivergence
from .xray import (XRaySetup, adjoint_I0_star, adjoint_Iperp_star, forward_I0,
                   forward_Iperp)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class NeumannConfig:
    max_iters: int = 8
    rel_tol: float = 1e-6
    divergence_guard: float = 10.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ConfigError("rel_tol must be positive")
        if self.divergence_guard <= 1:
            raise ConfigError("divergence_guard must exceed 1")


@dataclass
class NeumannRecord:
    iteration: int
    residual: float
    step_change: float


@dataclass
class NeumannResult:
    solution: np.ndarray
    history: list = field(default_factory=list)
    status: str = "converged"

    @property
    def contraction(self) -> float:
        """Geometric-mean ratio of consecutive step changes (nan with < 2 steps)."""
        s = [r.step_change for r in self.history if r.step_change > 0]
        if len(s) < 2:
            return float("nan")
        return float((s[-1] / s[0]) ** (1.0 / (len(s) - 1)))


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual", "step_change"])
        for r in history:
            w.writerow([r.iteration, f"{r.residual:.10e}", f"{r.step_change:.10e}"])


def neumann_solve(apply, g, cfg: NeumannConfig | None = None, norm=None) -> NeumannResult:
    """Solve ``apply(x) = g`` by the Neumann series ``x = sum_k (Id - apply)^k g``.

    Implemented as the fixed-point iteration ``x <- x + (g - apply(x))``; the
    step change equals the current residual.  Stops when the step is below
    ``rel_tol * |x|`` or after ``max_iters`` terms.  Raises
    :class:`NeumannDivergence` if a step exceeds ``divergence_guard`` times
    the first one.
    """
    cfg = cfg or NeumannConfig()
    norm = norm or (lambda v: float(np.linalg.norm(v)))
    x = np.array(g, dtype=np.result_type(g, float))
    gnorm = norm(g)
    history = []
    if gnorm == 0.0:
        return NeumannResult(x, [NeumannRecord(0, 0.0, 0.0)])
    first = None
    for k in range(1, cfg.max_iters + 1):
        r = g - apply(x)
        step = norm(r)
        history.append(NeumannRecord(k - 1, step, step))
        log.debug("neumann iter %d: step %.3e (rel %.3e)", k - 1, step, step / gnorm)
        if first is None:
            first = step
        elif step > cfg.divergence_guard * first:
            raise NeumannDivergence(f"Neumann series diverged at term {k}", history, x)
        if step <= cfg.rel_tol * norm(x) or k == cfg.max_iters:
            if step > cfg.rel_tol * norm(x):
                return NeumannResult(x, history, "maxed")
            return NeumannResult(x, history, "converged")
        x = x + r
    return NeumannResult(x, history, "maxed")  # pragma: no cover


# --- Fredholm pipelines ----------------------------------------------------------

def _norm_M(setup):
    return lambda f: setup.norm_M(f)


def filtered_backprojection_W(setup: XRaySetup, d_plus):
    """``(1/2pi) I_perp^* ((1/4) A_+^* H_- A_- d)`` for ``d`` in ``V_+``."""
    u = fiber.apply_A_minus(d_plus, setup.table, parity=+1)
    return adjoint_Iperp_star(setup, fiber.boundary_filter(u, setup.table, "minus")) / TWO_PI


def filtered_backprojection_Wstar(setup: XRaySetup, d_minus):
    """``-(1/2pi) I_0^* ((1/4) A_+^* H_+ A_- d)`` for ``d`` in ``V_-``."""
    u = fiber.apply_A_minus(d_minus, setup.table, parity=-1)
    return -adjoint_I0_star(setup, fiber.boundary_filter(u, setup.table, "plus")) / TWO_PI


def op_FredW(setup: XRaySetup, f):
    """``(Id + W^2) f`` realized as the boundary pipeline applied to ``I_0 f``."""
    return filtered_backprojection_W(setup, forward_I0(setup, f))


def op_FredWstar(setup: XRaySetup, h):
    """``(Id + (W^*)^2) h`` realized as the boundary pipeline applied to ``I_perp h``."""
    return filtered_backprojection_Wstar(setup, forward_Iperp(setup, h, check_boundary=False))


def solve_FredW(setup, g, cfg=None) -> NeumannResult:
    return neumann_solve(lambda f: np.real(op_FredW(setup, f)), g, cfg, _norm_M(setup))


def solve_FredWstar(setup, g, cfg=None) -> NeumannResult:
    return neumann_solve(lambda h: np.real(op_FredWstar(setup, h)), g, cfg, _norm_M(setup))


def right_inverse_Rperp(setup: XRaySetup, f, cfg=None, return_result=False):
    """``R_perp f = (1/8pi) A_+^* H_- A_- I_0 (Id + W^2)^{-1} f``: influx data in ``V_-`` with ``I_perp^* R_perp f = f``."""
    res = solve_FredW(setup, np.real(f), cfg)
    u = fiber.apply_A_minus(forward_I0(setup, res.solution), setup.table, parity=+1)
    p = fiber.boundary_filter(u, setup.table, "minus") / (2.0 * np.pi)
    return (p, res) if return_result else p


def right_inverse_R0(setup: XRaySetup, g, cfg=None, return_result=False):
    """``R_0 g = -(1/8pi) A_+^* H_+ A_- I_perp (Id + (W^*)^2)^{-1} g``: influx data in ``V_+`` with ``I_0^* R_0 g = g``."""
    res = solve_FredWstar(setup, np.real(g), cfg)
    u = fiber.apply_A_minus(forward_Iperp(setup, res.solution, check_boundary=False),
                           setup.table, parity=-1)
    q = -fiber.boundary_filter(u, setup.table, "plus") / (2.0 * np.pi)
    return (q, res) if return_result else q


def _complex_linear(fn, z, *args, **kw):
    if np.iscomplexobj(z):
        return fn(z.real, *args, **kw) + 1j * fn(z.imag, *args, **kw)
    return fn(z, *args, **kw)


def invert_I0perp(setup: XRaySetup, D, cfg=None):
    """Recover ``(f1, f2)`` from ``D = I_0 f1 + I_perp f2`` (``f2`` vanishing on the boundary).

    Complex data are handled by linearity, real and imaginary parts separately.
    """
    def real_case(Dr):
        d_plus, d_minus = fiber.project_Vpm(Dr, setup.table)
        f1 = solve_FredW(setup, np.real(filtered_backprojection_W(setup, d_plus)), cfg).solution
        f2 = solve_FredWstar(setup, np.real(filtered_backprojection_Wstar(setup, d_minus)),
                             cfg).solution
        return np.stack([f1, f2])

    out = _complex_linear(real_case, setup.bgrid.check_influx(D))
    return out[0], out[1]
