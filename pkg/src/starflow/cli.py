"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input
(flags, config, curve spec, CSV, output directory), 3 numerical failure
(degenerate curve, origin crossing, loss of star shape).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import functionals as fn
from . import zelenjak as zl
from .flow import (
    ISOTROPIC,
    Anisotropy,
    FlowConfig,
    RhsKind,
    Trajectory,
    rescaled_initial,
    run,
    stable_dt,
)
from .geometry import (
    ClosedCurve,
    DegenerateCurveError,
    GeometryError,
    OriginCrossingError,
    make_circle,
    make_ellipse,
    make_polar,
    read_curve_csv,
    resample_uniform_arclength,
)

COMMANDS = ("simulate", "rescaled", "functionals", "verify-identities",
            "characteristics", "profile-f")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "rescaled"
    curve: str = "circle:r=1.4142135623730951"
    N: int = 256
    scheme: str = "rk4"
    cfl: float = 0.25
    order: int = 4
    resample_every: int = 10
    horizon: float = 1.0
    stride: int = 10
    dt: Optional[float] = None
    normalize: bool = True
    anisotropy: str = "iso"
    kinds: str = "huisken,repaired"
    out: str = "starflow_out"
    seed: int = 7
    points: int = 1000
    grid: int = 257
    psi_max: float = 1.5
    init: str = "1.0,0.5,0.0"
    s_max: float = 2.0
    ds: float = 1e-3
    run_dir: Optional[str] = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name in ("N", "cfl", "horizon", "stride", "points", "grid", "psi_max", "s_max", "ds"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.resample_every < 0:
            raise ConfigError("resample_every must be >= 0")
        if self.psi_max >= np.pi / 2:
            raise ConfigError("psi_max must be below pi/2")
        try:
            FlowConfig(cfl=self.cfl, resample_every=self.resample_every,
                       scheme=self.scheme, order=self.order)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for k in self.kind_list():
            if k not in fn.KINDS:
                raise ConfigError(f"unknown functional kind {k!r}")

    def kind_list(self) -> List[str]:
        return [k.strip() for k in self.kinds.split(",") if k.strip()]

    def flow_config(self) -> FlowConfig:
        return FlowConfig(cfl=self.cfl, resample_every=self.resample_every,
                          scheme=self.scheme, order=self.order)


def _parse_params(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(",")):
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"non-numeric value in {item!r}") from None
    return out


def parse_curve(spec: str, n: int) -> ClosedCurve:
    """``circle:r=..,cx=..,cy=..``, ``ellipse:a=..,b=..``,
    ``star:r0=..,eps=..,k=..`` (polar ``r0 (1 + eps cos(k theta))``) or a
    CSV path (optionally prefixed ``csv:``)."""
    name, _, rest = spec.partition(":")
    try:
        if name == "csv" or (not rest and spec.endswith(".csv")):
            return read_curve_csv(rest if name == "csv" else spec)
        p = _parse_params(rest)
        if name == "circle":
            return make_circle(p.get("r", 1.0), (p.get("cx", 0.0), p.get("cy", 0.0)), n)
        if name == "ellipse":
            return make_ellipse(p.get("a", 1.5), p.get("b", 1.0), n)
        if name == "star":
            r0, eps, k = p.get("r0", np.sqrt(2.0)), p.get("eps", 0.2), int(p.get("k", 3))
            return make_polar(lambda t: r0 * (1 + eps * np.cos(k * t)), n)
    except OSError as exc:
        raise ConfigError(f"cannot read curve: {exc}") from None
    except DegenerateCurveError:
        raise
    except GeometryError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown curve spec {spec!r}")


def parse_anisotropy(spec: str) -> Anisotropy:
    name, _, rest = spec.partition(":")
    if name == "iso":
        return ISOTROPIC
    if name == "harmonic":
        p = _parse_params(rest)
        try:
            return Anisotropy.harmonic(p.get("eps", 0.3), int(p.get("k", 2)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown anisotropy {spec!r}")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="starflow", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config; explicit flags override it")
    ap.add_argument("--curve")
    ap.add_argument("--N", type=int)
    ap.add_argument("--scheme", choices=["rk4", "euler"])
    ap.add_argument("--cfl", type=float)
    ap.add_argument("--order", type=int, choices=[2, 4])
    ap.add_argument("--resample-every", dest="resample_every", type=int)
    ap.add_argument("--horizon", type=float)
    ap.add_argument("--stride", type=int, help="observer stride in steps")
    ap.add_argument("--dt", type=float)
    ap.add_argument("--normalize", dest="normalize", action="store_true", default=None,
                    help="rescale with the estimated blow-up time (default)")
    ap.add_argument("--no-normalize", dest="normalize", action="store_false")
    ap.add_argument("--anisotropy", help="iso | harmonic:eps=..,k=..")
    ap.add_argument("--kinds", help="comma list of huisken,raw,repaired,corrected")
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--points", type=int)
    ap.add_argument("--grid", type=int)
    ap.add_argument("--psi-max", dest="psi_max", type=float)
    ap.add_argument("--init", help="xi1,xi2,phi of the characteristic start")
    ap.add_argument("--s-max", dest="s_max", type=float)
    ap.add_argument("--ds", type=float)
    ap.add_argument("--run-dir", dest="run_dir")
    return ap


def resolve_config(argv: List[str]) -> RunConfig:
    ns = _build_parser().parse_args(argv)
    values = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                values.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in known:
        v = getattr(ns, name, None)
        if v is not None:
            values[name] = v
    if "command" not in values:
        raise ConfigError("no command given")
    cfg = RunConfig(**values)
    env_out = os.environ.get("STARFLOW_OUT")
    if env_out:
        cfg.out = env_out
    cfg.validate()
    return cfg


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from None
    with open(out / "config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _simulate(cfg: RunConfig, out: Path, rhs_kind: RhsKind) -> Trajectory:
    g = parse_anisotropy(cfg.anisotropy)
    curve = parse_curve(cfg.curve, cfg.N)
    flow_cfg = cfg.flow_config()
    t0 = 0.0
    if rhs_kind is RhsKind.RESCALED and cfg.normalize:
        curve, t0 = rescaled_initial(curve, g)
    dt = cfg.dt
    if dt is None and rhs_kind is RhsKind.RESCALED:
        # fixed step keeps samples equally spaced in tau
        start = resample_uniform_arclength(curve) if flow_cfg.resample_every else curve
        dt = stable_dt(start, g, flow_cfg.cfl)
    traj = run(curve, rhs_kind, g, flow_cfg, cfg.horizon, cfg.stride, dt=dt, t0=t0)
    traj.dump(out, order=cfg.order)
    if traj.singular:
        print(f"numerical failure: {traj.message}", file=sys.stderr)
    return traj


def _write_reports(cfg: RunConfig, traj: Trajectory, out: Path) -> None:
    g = parse_anisotropy(cfg.anisotropy)
    reports = []
    for kind in cfg.kind_list():
        reports.extend(fn.trajectory_reports(traj, kind, g, order=cfg.order))
    reports.sort(key=lambda r: (r.tau, fn.KINDS.index(r.kind)))
    fn.write_reports(reports, out / "report.csv")
    if len(traj) < 3:
        print("warning: fewer than three samples; no identity can be evaluated "
              "(lower --stride or raise --horizon)", file=sys.stderr)
    for kind in cfg.kind_list():
        sel = [r for r in reports if r.kind == kind]
        if sel:
            res = max(abs(r.residual) for r in sel)
            vals = [r.value for r in sel]
            print(f"{kind}: value {vals[0]:.10g} -> {vals[-1]:.10g}, max |residual| {res:.3e}")


def load_trajectory(run_dir) -> Trajectory:
    run_dir = Path(run_dir)
    try:
        with open(run_dir / "trajectory.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read trajectory: {exc}") from None
    traj = Trajectory(rhs_kind=RhsKind.RESCALED)
    for row in rows:
        i = int(row["sample_index"])
        traj.times.append(float(row["tau"]))
        traj.curves.append(read_curve_csv(run_dir / "curves" / f"sample_{i:05d}.csv"))
    return traj


def _verify(cfg: RunConfig, out: Path) -> int:
    results = zl.run_battery(cfg.seed, cfg.points)
    zl.write_battery(results, out / "verification.csv")
    failed = 0
    for r in results:
        status = "INFO" if r.informational else ("PASS" if r.passed else "FAIL")
        failed += (not r.informational and not r.passed)
        print(f"{status} {r.name}: points={r.points} max_residual={r.max_residual:.3e}"
              f" tol={r.tolerance:.0e}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _characteristics(cfg: RunConfig, out: Path) -> None:
    try:
        xi1, xi2, phi = (float(v) for v in cfg.init.split(","))
    except ValueError:
        raise ConfigError(f"--init needs three numbers, got {cfg.init!r}") from None
    g = parse_anisotropy(cfg.anisotropy)
    t = zl.to_tilde(zl.EvalPoint([xi1, xi2], [np.cos(phi), np.sin(phi)]))
    init = zl.CharState(t.xt1, t.xt2, t.phi, -(t.xt1**2 + t.xt2**2) / 4.0)
    rows = zl.characteristics_integrate(g, init, (0.0, cfg.s_max), cfg.ds)
    zl.write_characteristics(out / "characteristics.csv", rows)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = resolve_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INVALID if exc.code else EXIT_OK
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        out = _prepare_out(cfg)
        if cfg.command == "simulate":
            if _simulate(cfg, out, RhsKind.PHYSICAL).singular:
                return EXIT_NUMERICAL
        elif cfg.command == "rescaled":
            traj = _simulate(cfg, out, RhsKind.RESCALED)
            if traj.singular:
                return EXIT_NUMERICAL
            _write_reports(cfg, traj, out)
        elif cfg.command == "functionals":
            if not cfg.run_dir:
                raise ConfigError("functionals needs --run-dir")
            _write_reports(cfg, load_trajectory(cfg.run_dir), out)
        elif cfg.command == "verify-identities":
            return _verify(cfg, out)
        elif cfg.command == "characteristics":
            _characteristics(cfg, out)
        elif cfg.command == "profile-f":
            fn.write_profile(out / "profile_f.csv", cfg.grid, cfg.psi_max)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DegenerateCurveError, OriginCrossingError, fn.NotStarShapedError,
            zl.CharacteristicBlowup) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
