"""Reconstruction drivers: Neumann series, one-shot holomorphic reconstruction, Doppler."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fiber
from .errors import NeumannDivergence, UnsupportedRegionError
from .fredholm import NeumannConfig, invert_I0perp, right_inverse_R0, right_inverse_Rperp
from .hif import IntegratingFactor, build_hif_boundary, build_hif_interior
from .xray import XRaySetup, adjoint_Iperp_star, forward_Ia, transport_extend

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

# Convention for p in the one-shot pipeline: I_perp^* p = P_FACTOR * g.
# The alternative reading (i I_perp^* p = g) corresponds to P_FACTOR = -1j;
# the cross-method consistency check selects 1.
P_FACTOR = 1.0

# Boundary modes fitted by the Doppler pipeline; modes above 2 changed nothing measurable.
TRACE_FIT_MODES = 3

# Steps below this fraction of the first one count as converged noise.
GROWTH_FLOOR = 0.05


@dataclass
class ReconstructionReport:
    estimate: object
    errors: list = field(default_factory=list)  # interior relative L2 error per iterate
    residuals: list = field(default_factory=list)  # |I_a f_k - D|_mu per iterate
    steps: list = field(default_factory=list)
    status: str = "converged"
    iterates: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,rel_error,residual,step_change\n")
            n = max(len(self.errors), len(self.residuals), len(self.steps), 1)
            for k in range(n):
                row = [self.errors, self.residuals, self.steps]
                vals = [f"{r[k]:.10e}" if k < len(r) else "" for r in row]
                fh.write(f"{k + 1}," + ",".join(vals) + "\n")


def _is_zero(a):
    return a is None or not np.any(a)


def attenuation_factor(setup: XRaySetup, a, cfg=None) -> IntegratingFactor | None:
    if _is_zero(a):
        return None
    return build_hif_boundary(setup, a, cfg)


def approx_inverse_La(setup: XRaySetup, D, hif: IntegratingFactor | None = None):
    """``L_a D = (1/8pi) I_perp^* A_+^* H (e^{-w} D)_-``; real part returned.

    ``(.)_-`` is the odd extension from the influx half; ``hif=None`` means
    ``a = 0``, where ``L_0 I_0`` coincides with the ``Id + W^2`` pipeline.
    """
    g = setup.bgrid
    D = g.check_influx(D)
    if hif is not None:
        D = np.exp(-g.restrict(hif.boundary)) * D
    u = g.extend_parity(D, -1)
    eta = fiber.boundary_filter(u, setup.table, "full")
    return np.real(adjoint_Iperp_star(setup, eta)) / TWO_PI


def neumann_reconstruct(setup: XRaySetup, D, a=None, cfg: NeumannConfig | None = None,
                        truth=None, hif=None, raise_on_divergence=False) -> ReconstructionReport:
    """Defect-correction Neumann series ``f_{k+1} = f_k + L_a (D - I_a f_k)``, ``f_0 = L_a D``.

    ``cfg.max_iters`` counts iterates ``f_0 .. f_{max_iters-1}``.  The steps
    ``L_a(D - I_a f_k)`` are the terms of the series; the run is declared
    diverged when a step grows relative to its predecessor while still above
    ``GROWTH_FLOOR`` times the first one, or when it exceeds
    ``divergence_guard`` times the smallest step so far.
    """
    cfg = cfg or NeumannConfig()
    att = None if _is_zero(a) else np.real(a)
    if hif is None and att is not None:
        hif = build_hif_boundary(setup, att, cfg)
    rep = ReconstructionReport(None)

    def record(f):
        rep.iterates.append(f)
        if truth is not None:
            rep.errors.append(setup.rel_error(f, truth))

    f = approx_inverse_La(setup, D, hif)
    rep.steps.append(setup.norm_M(f))
    first = rep.steps[0] or 1.0
    rep.status = "maxed"
    for k in range(cfg.max_iters):
        record(f)
        if k + 1 == cfg.max_iters:
            break
        r = D - forward_Ia(setup, f, att)
        rep.residuals.append(setup.norm_mu(r))
        step = approx_inverse_La(setup, r, hif)
        s = setup.norm_M(step)
        prev, smallest = rep.steps[-1], min(rep.steps)
        rep.steps.append(s)
        log.info("neumann iterate %d: residual %.4e, step %.4e%s", k + 1, rep.residuals[-1], s,
                 f", error {rep.errors[-1]:.4f}" if rep.errors else "")
        f = f + step
        grew = k > 0 and s > prev and s > GROWTH_FLOOR * first
        if grew or s > cfg.divergence_guard * smallest:
            record(f)
            rep.status = "diverged"
            log.warning("neumann series diverged at iterate %d (step %.3e after %.3e)",
                        k + 2, s, prev)
            break
        if s <= cfg.rel_tol * first:
            record(f)
            rep.status = "converged"
            break
    if rep.status == "maxed" and rep.steps[-1] <= GROWTH_FLOOR * first:
        rep.status = "converged"
    rep.estimate = rep.iterates[-1]
    if raise_on_divergence and rep.status == "diverged":
        raise NeumannDivergence("Neumann reconstruction diverged", rep.steps, rep.estimate)
    return rep


# --- one-shot pipeline -----------------------------------------------------------------

def _boundary_split(setup: XRaySetup, b):
    """Holomorphic ``F`` and antiholomorphic ``G`` on the disk grid with ``(F + G)|_{dM} = b``.

    ``b`` holds samples at the boundary angles ``beta_i``; returns the grid
    fields and their boundary traces ``(F - G)(beta_i)``.
    """
    nb = b.size
    c = np.fft.fft(b) / nb
    m = np.fft.fftfreq(nb, 1.0 / nb).astype(int)
    x, y = setup.disk.xy
    z = x + 1j * y
    F = np.zeros_like(z)
    G = np.zeros_like(z)
    for mk, ck in zip(m, c):
        if abs(ck) < 1e-14 * np.abs(c).max():
            continue
        if mk >= 0:
            F += ck * z ** mk
        else:
            G += ck * np.conj(z) ** (-mk)
    e = np.exp(1j * np.outer(setup.bgrid.beta, m))
    hol = m >= 0
    trace = e[:, hol] @ c[hol] - e[:, ~hol] @ c[~hol]
    mask = setup.disk.mask
    return np.where(mask, F, 0), np.where(mask, G, 0), trace


@dataclass
class _OneShotState:
    hif: IntegratingFactor
    h_prime: np.ndarray
    F: np.ndarray
    v0_boundary: np.ndarray
    info: dict = field(default_factory=dict)


def _w_prime(setup: XRaySetup, data, cfg):
    """Holomorphic ``w'`` on ``dSM`` with ``X w' = -I_{0,perp}^{-1} data``."""
    g1, f2 = invert_I0perp(setup, data, cfg)
    # data = I_0 g + I_perp f2 with f2 = -i v_0
    p = P_FACTOR * _rlin(right_inverse_Rperp, setup, g1, cfg)
    q = _rlin(right_inverse_R0, setup, -f2, cfg)
    T = setup.table
    pq = fiber.apply_A_plus(p, T, parity=-1) + fiber.apply_A_plus(q, T, parity=+1)
    return 2j * np.pi * fiber.holomorphic_projection(pq, axis=1)


def _trace_responses(setup: XRaySetup, n_modes: int) -> np.ndarray:
    """Change of ``w'`` when the ``I_perp`` source gains a harmonic part with trace
    ``cos(k beta)`` or ``sin(k beta)``, ``k = 1..n_modes``.

    Data independent, so it is memoized on the setup and stored in its cache directory.
    """
    memo = setup.__dict__.setdefault("_trace_memo", {})
    if n_modes in memo:
        return memo[n_modes]
    g = setup.bgrid
    path = None
    if setup.cache_dir:
        path = Path(setup.cache_dir) / (
            f"gxtr_{setup.metric.digest():016x}_n{setup.disk.n}_nb{g.n_b}_t{setup.n_theta}"
            f"_h{setup.h_step:.3e}_k{n_modes}.npy")
    if path is not None and path.exists():
        out = np.load(path)
    else:
        out = []
        for k in range(1, n_modes + 1):
            for fn in (np.cos, np.sin):
                _, _, tr = _boundary_split(setup, fn(k * g.beta))
                full = np.repeat(tr[:, None], g.n_beta, axis=1)
                out.append(full - _w_prime(setup, fiber.apply_A_star(full, setup.table, -1), None))
        out = np.array(out)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.save(path, out)
    memo[n_modes] = out
    return out


def _inconsistency(setup: XRaySetup, u):
    """Outflux mismatch of a boundary function with the constant-along-geodesics extension of its influx half."""
    return u - fiber.apply_A_plus(setup.bgrid.restrict(u), setup.table)


def _one_shot_hprime(setup: XRaySetup, D, a, cfg, boundary_correction, hif=None, trace_fit=0):
    g = setup.bgrid
    att = np.real(a) if a is not None else np.zeros((setup.disk.n,) * 2)
    if hif is None:
        hif = build_hif_boundary(setup, att, cfg)
    hif = build_hif_interior(setup, att, cfg, hif)
    # step 2: v on dSM, then its antiholomorphic part
    v_in = np.exp(-g.restrict(hif.boundary)) * g.check_influx(D)
    v_full = g.embed(v_in)
    v_minus = fiber.antiholomorphic_projection(v_full, axis=1)
    data = fiber.apply_A_star(v_minus, setup.table, -1)
    v0b = v_full.mean(axis=1)
    F = np.zeros((setup.disk.n,) * 2, complex)
    fg_trace = np.zeros(g.n_beta, complex)
    if boundary_correction:
        F, G, fg_trace = _boundary_split(setup, v0b)
        # I_perp of the harmonic part of v_0 equals i A_-^*(F - G): move it to the data side
        data = data - fiber.apply_A_star(np.repeat(fg_trace[:, None], g.n_beta, axis=1),
                                         setup.table, -1)
    w_prime = _w_prime(setup, data, cfg) + fg_trace[:, None]
    info = {}
    if trace_fit:
        # unknown harmonic part of the I_perp source: pick it so that v^- - w' is a first integral
        resp = _trace_responses(setup, trace_fit)
        rhs = _inconsistency(setup, v_minus - w_prime).ravel()
        A = np.stack([_inconsistency(setup, r).ravel() for r in resp], axis=1)
        c, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        w_prime = w_prime + np.tensordot(c, resp, 1)
        info = {"inconsistency": (float(np.linalg.norm(rhs)), float(np.linalg.norm(rhs - A @ c)))}
    h_prime = 0.5 * g.restrict(v_minus - w_prime)
    return _OneShotState(hif, h_prime, F, v0b, info)


def _rlin(fn, setup, z, cfg):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return fn(setup, z.real, cfg) + 1j * fn(setup, z.imag, cfg)
    return fn(setup, z, cfg)


def _u1_tilde(setup: XRaySetup, st: _OneShotState):
    """``(-2i) (Im(e^w h'_psi))_1`` as a grid field."""
    hp = transport_extend(setup, st.h_prime)
    im = np.imag(np.exp(st.hif.interior) * hp)
    m1 = fiber.fiber_mode(im, 1, axis=1)
    return setup.disk.scatter(-2j * m1)


def oneshot_reconstruct(setup: XRaySetup, D, a=None, cfg=None, truth=None,
                        boundary_correction=True, hif=None) -> ReconstructionReport:
    """One-shot reconstruction ``f = -e^{-2 lambda} dbar(e^lambda u1~) - a u*_0``.

    With ``boundary_correction`` the boundary trace of ``v_0`` is carried by an
    explicit harmonic function, so the ``I_perp`` inversion only sees a part
    vanishing on the boundary; then ``u*_0`` equals its holomorphic half ``F``.
    """
    att = np.zeros((setup.disk.n,) * 2) if _is_zero(a) else np.real(a)
    st = _one_shot_hprime(setup, D, att, cfg, boundary_correction, hif)
    u1 = _u1_tilde(setup, st)
    el = np.exp(setup.lam)
    fz = -np.exp(-2 * setup.lam) * setup.dbar(el * u1) - att * st.F
    fz = np.where(setup.disk.mask, fz, 0)
    f = np.real(fz)
    imag = setup.norm_M(np.imag(fz)) / max(setup.norm_M(f), 1e-300)
    if imag > 0.1:
        log.warning("one-shot output has large imaginary residue %.3f", imag)
    rep = ReconstructionReport(f, status="converged", iterates=[f],
                               info={"imag_residue": imag, "u1_tilde": u1,
                                     "v0_boundary_max": float(np.abs(st.v0_boundary).max())})
    if truth is not None:
        rep.errors.append(setup.rel_error(f, truth))
    return rep


def doppler_reconstruct(setup: XRaySetup, D, a, cfg=None, truth=None, a_min_frac=0.05,
                        boundary_correction=False, hif=None,
                        trace_fit=TRACE_FIT_MODES) -> ReconstructionReport:
    """Vector field ``f1 d_x + f2 d_y`` from its attenuated Doppler transform.

    ``f1 + i f2 = -4i dbar(phi / a)``, ``phi = e^{-2 lambda} dbar(e^lambda m1)``
    where ``m1 = (Im(e^w h'_psi))_1``.  Points with ``|a| < a_min_frac |a|_inf``
    are excluded (NaN in the estimate).

    The ``I_perp`` source of the vector-field problem does not vanish on the
    boundary and its trace is not known in advance; ``trace_fit`` low modes of
    it are fitted so that the recovered ``h'`` is constant along geodesics.
    """
    att = np.real(setup.disk.check(a))
    amax = np.abs(att[setup.disk.mask]).max(initial=0.0)
    ok = setup.disk.mask & (np.abs(att) >= a_min_frac * amax) if amax > 0 else ~setup.disk.mask
    if ok.sum() < 0.5 * setup.disk.mask.sum():
        raise UnsupportedRegionError("attenuation below a_min on more than half of the disk")
    st = _one_shot_hprime(setup, D, att, cfg, boundary_correction, hif, trace_fit)
    m1 = _u1_tilde(setup, st) / (-2j)
    el = np.exp(setup.lam)
    phi = np.exp(-2 * setup.lam) * setup.dbar(el * m1)
    ratio = np.where(ok, phi / np.where(ok, att, 1.0), 0)
    z = -4j * _dbar_on(setup, ratio, ok)
    f1 = np.where(ok, z.real, np.nan)
    f2 = np.where(ok, z.imag, np.nan)
    rep = ReconstructionReport((f1, f2), status="converged", info={"support": ok, **st.info})
    if truth is not None:
        t1, t2 = truth
        m = ok & setup.disk.interior
        num = setup.norm_M(np.nan_to_num(f1) - t1, m) ** 2 + setup.norm_M(np.nan_to_num(f2) - t2, m) ** 2
        den = setup.norm_M(t1, m) ** 2 + setup.norm_M(t2, m) ** 2
        rep.errors.append(float(np.sqrt(num / den)))
    return rep


def _dbar_on(setup, f, mask):
    from .xray import masked_derivative
    h = setup.disk.spacing
    return 0.5 * (masked_derivative(f, mask, h, 0) + 1j * masked_derivative(f, mask, h, 1))
