"""Command-line driver: ``geoxray {phantom,forward,invert,selftest}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeoXrayError
from .fredholm import NeumannConfig
from .geometry import ConformalMetric
from .io import Manifest, read_array, write_array, write_pgm

log = logging.getLogger("geoxray")

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2
METHODS = ("neumann", "oneshot", "doppler")


@dataclass
class RunConfig:
    grid_n: int = 300
    boundary_n: int = 300
    n_theta: int = 0  # 0: about 1.25 grid_n fiber directions
    h_step: float = 1e-3
    h_trace: float = 1e-2
    t_max: float = 10.0
    max_iters: int = 8
    rel_tol: float = 1e-6
    divergence_guard: float = 10.0
    metric: str = "bumps"  # "bumps" or "euclidean"
    bump_amplitude: float = 0.2
    bump_center: tuple = (0.3, 0.3)
    bump_width: float = 0.25
    phantom: str = "smooth-gaussians"
    attenuation: str = "default"  # "default" (the phantom's), "none" or "constant"
    attenuation_scale: float = 1.0
    method: str = "neumann"
    boundary_correction: bool = True
    seed: int = 0
    out_dir: str = "run"

    def validate(self):
        if self.n_theta < 0:
            raise ConfigError("n_theta must be >= 0 (0 selects it from grid_n)")
        for name in ("grid_n", "boundary_n", "h_step", "h_trace", "t_max",
                     "max_iters", "rel_tol", "divergence_guard", "bump_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.metric not in ("bumps", "euclidean"):
            raise ConfigError(f"metric must be 'bumps' or 'euclidean', got {self.metric!r}")
        if self.attenuation not in ("default", "none", "constant"):
            raise ConfigError(f"unknown attenuation {self.attenuation!r}")
        self.bump_center = tuple(float(v) for v in self.bump_center)
        if len(self.bump_center) != 2:
            raise ConfigError("bump_center needs two coordinates")
        return self

    def build_metric(self) -> ConformalMetric:
        if self.metric == "euclidean":
            return ConformalMetric.euclidean()
        return ConformalMetric.gaussian_pair(self.bump_amplitude, self.bump_center, self.bump_width)

    def neumann(self) -> NeumannConfig:
        return NeumannConfig(self.max_iters, self.rel_tol, self.divergence_guard)

    def setup(self):
        from .xray import XRaySetup
        return XRaySetup(self.build_metric(), self.grid_n, self.boundary_n, self.n_theta,
                         self.h_step, self.h_trace, self.t_max)


def _coerce(name, raw, current):
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes"):
            return True
        if str(raw).lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            vals = raw if isinstance(raw, (list, tuple)) else str(raw).strip("()[]").split(",")
            return tuple(float(v) for v in vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return str(raw)


def load_config(path=None, overrides=()) -> RunConfig:
    """Flat JSON config plus ``key=value`` overrides; unknown keys are rejected."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    items = {}
    if path:
        try:
            items.update(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        k, v = ov.split("=", 1)
        items[k.strip()] = v.strip()
    unknown = sorted(set(items) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in items.items():
        setattr(cfg, k, _coerce(k, v, getattr(cfg, k)))
    return cfg.validate()


def _config_dict(cfg):
    d = asdict(cfg)
    d["bump_center"] = list(cfg.bump_center)
    return d


# --- verbs -----------------------------------------------------------------------

def _attenuation(cfg, grid, a_default):
    if cfg.attenuation == "none":
        return np.zeros_like(a_default)
    if cfg.attenuation == "constant":
        return np.where(grid.mask, cfg.attenuation_scale, 0.0)
    return a_default


def cmd_phantom(cfg: RunConfig) -> int:
    from .grids import DiskGrid
    from .phantoms import FIELD_PHANTOMS, make_field_phantom, make_phantom
    out = Path(cfg.out_dir)
    grid = DiskGrid(cfg.grid_n)
    metric = cfg.build_metric()
    if cfg.phantom in FIELD_PHANTOMS:
        f1, f2, a = make_field_phantom(cfg.phantom, grid, cfg.attenuation_scale)
        fields_ = [("f1", f1), ("f2", f2)]
    else:
        f, a, _ = make_phantom(cfg.phantom, grid, cfg.attenuation_scale, metric)
        fields_ = [("f", f)]
    a = _attenuation(cfg, grid, a)
    c = np.where(grid.mask, metric.sound_speed(*grid.xy), 0.0)
    man = Manifest(out)
    for name, arr in fields_ + [("a", a), ("c", c)]:
        p = write_array(out / f"{name}.bin", arr, grid_n=cfg.grid_n, role=name,
                        metric_hash=f"{metric.digest():016x}")
        man.add_array(p, kind="array")
        window = write_pgm(out / f"{name}.pgm", np.where(grid.mask, arr, np.nan))
        man.add(out / f"{name}.pgm", kind="image", window=window)
    man.set_meta(config=_config_dict(cfg))
    man.save()
    print(f"phantom {cfg.phantom!r} written to {out}")
    return EXIT_OK


def _load(out, name):
    p = Path(out) / f"{name}.bin"
    if not p.exists():
        raise ConfigError(f"missing input {p}; run the earlier pipeline stage first")
    return read_array(p)[0]


def _is_field(out):
    return (Path(out) / "f1.bin").exists() and not (Path(out) / "f.bin").exists()


def cmd_forward(cfg: RunConfig) -> int:
    from .xray import forward_doppler, forward_Ia
    out = Path(cfg.out_dir)
    field_ = _is_field(out)
    f = (_load(out, "f1"), _load(out, "f2")) if field_ else _load(out, "f")
    a = _load(out, "a")
    if a.shape != (cfg.grid_n, cfg.grid_n):
        raise ConfigError(f"phantom grid {a.shape} does not match grid_n={cfg.grid_n}")
    setup = cfg.setup()
    t0 = time.perf_counter()
    a_opt = a if np.any(a) else None
    data = forward_doppler(setup, *f, a_opt) if field_ else forward_Ia(setup, f, a_opt)
    log.info("forward transform: %.1f s", time.perf_counter() - t0)
    man = Manifest(out)
    p = write_array(out / "data.bin", data, boundary_n=cfg.boundary_n,
                    layout="influx (beta_i, alpha_j)", transform="doppler" if field_ else "scalar",
                    metric_hash=f"{setup.metric.digest():016x}")
    man.add_array(p, kind="array")
    man.add(out / "data.pgm", kind="image", window=write_pgm(out / "data.pgm", data.T))
    man.save()
    print(f"forward data {data.shape} written to {out / 'data.bin'}")
    return EXIT_OK


def cmd_invert(cfg: RunConfig) -> int:
    from . import inversion
    out = Path(cfg.out_dir)
    data = _load(out, "data")
    a = _load(out, "a")
    field_ = _is_field(out)
    if field_ != (cfg.method == "doppler"):
        kind = "vector-field" if field_ else "scalar"
        raise ConfigError(f"method {cfg.method!r} does not apply to {kind} data in {out}")
    if field_:
        truth = (_load(out, "f1"), _load(out, "f2"))
    else:
        truth = _load(out, "f") if (out / "f.bin").exists() else None
    setup = cfg.setup()
    if data.shape != setup.bgrid.influx_shape:
        raise ConfigError(f"data shape {data.shape} does not match boundary_n={cfg.boundary_n}")
    t0 = time.perf_counter()
    if cfg.method == "neumann":
        rep = inversion.neumann_reconstruct(setup, data, a, cfg.neumann(), truth)
    elif cfg.method == "oneshot":
        rep = inversion.oneshot_reconstruct(setup, data, a, cfg.neumann(), truth,
                                            cfg.boundary_correction)
    else:
        rep = inversion.doppler_reconstruct(setup, data, a, cfg.neumann(), truth)
    log.info("%s reconstruction: %.1f s", cfg.method, time.perf_counter() - t0)
    man = Manifest(out)
    mask = setup.disk.mask
    ests = rep.estimate if isinstance(rep.estimate, tuple) else (rep.estimate,)
    for k, est in enumerate(ests):
        name = "recon" if len(ests) == 1 else f"recon_f{k + 1}"
        p = write_array(out / f"{name}.bin", est, method=cfg.method, status=rep.status)
        man.add_array(p, kind="array")
        man.add(out / f"{name}.pgm", kind="image",
                window=write_pgm(out / f"{name}.pgm", np.where(mask, est, np.nan)))
        if isinstance(truth, tuple):
            err = np.where(mask, np.abs(est - truth[k]), np.nan)
            man.add(out / f"error_f{k + 1}.pgm", kind="image",
                    window=write_pgm(out / f"error_f{k + 1}.pgm", err))
    if truth is not None and len(ests) == 1:
        err = np.where(mask, np.abs(ests[0] - truth), np.nan)
        man.add(out / "error.pgm", kind="image", window=write_pgm(out / "error.pgm", err))
    rep.to_csv(out / "iterations.csv")
    man.add(out / "iterations.csv", kind="csv")
    man.set_meta(status=rep.status, errors=rep.errors)
    man.save()
    for k, e in enumerate(rep.errors):
        print(f"iterate {k + 1}: relative interior error {e:.4f}")
    print(f"status: {rep.status}")
    return EXIT_DIVERGED if rep.status == "diverged" else EXIT_OK


def cmd_selftest(cfg: RunConfig) -> int:
    from .selftest import run_selftest
    return EXIT_OK if run_selftest(seed=cfg.seed) else EXIT_ERROR


COMMANDS = {"phantom": cmd_phantom, "forward": cmd_forward, "invert": cmd_invert,
            "selftest": cmd_selftest}


def build_parser():
    p = argparse.ArgumentParser(prog="geoxray", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat JSON run configuration")
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg)
    except GeoXrayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
