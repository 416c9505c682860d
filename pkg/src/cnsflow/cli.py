"""Command-line front end: ``run``, ``meanfield``, ``particles``, ``diagnose``.

A run is configured by a flat JSON object (``--config``) overridden by
flags of the same names. Every output directory receives ``manifest.json``
(config echo and code version, bit-reproducible) and ``timing.json``
(wall time, the one non-deterministic file).
"""

from __future__ import annotations

import argparse
import dataclasses
import inspect
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import CnsflowError, ConfigError

THREADS_ENV = "CNSFLOW_THREADS"
RUN_MODES = ("ns", "constrained", "fp", "rescaled", "energy")
MODES = RUN_MODES + ("meanfield", "particles", "diagnose")
FAMILY_NAMES = ("gaussian", "oseen", "ring", "two-blob", "random", "snapshot")


@dataclass
class RunConfig:
    mode: str = "constrained"
    initial: str = "gaussian"
    initial_params: dict = field(default_factory=dict)
    snapshot: str | None = None
    L: float = 12.0
    n: int = 256
    nu: float = 1e-2
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "projected"
    advection: str = "spectral"
    output_every: int = 10
    write_snapshots: bool = False
    delta: float | None = None
    output: str = "out"
    seed: int = 0
    a_values: list = field(default_factory=lambda: [-0.5])
    b_values: list = field(default_factory=lambda: [2.0])
    fd_step: float = 1e-3
    N: int = 64
    process: str = "essential"
    bandwidth: float | None = None

    def validate(self) -> "RunConfig":
        from .dynamics import ADVECTION, SCHEMES
        from .particles import PROCESSES

        def choice(name, allowed):
            value = getattr(self, name)
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")

        def positive(name, integer=False):
            value = getattr(self, name)
            if integer and not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer > 0; got {value!r}")
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be a finite number > 0; got {value!r}")

        choice("mode", MODES)
        choice("initial", FAMILY_NAMES)
        choice("scheme", SCHEMES)
        choice("advection", ADVECTION)
        choice("process", PROCESSES)
        for name in ("L", "nu", "dt", "fd_step"):
            positive(name)
        for name in ("n", "output_every", "N"):
            positive(name, integer=True)
        if self.n % 2 or self.n < 16:
            raise ConfigError(f"n must be even and >= 16; got {self.n}")
        if self.t_end < 0:
            raise ConfigError(f"t_end must be >= 0; got {self.t_end}")
        if self.mode in RUN_MODES + ("particles",):
            steps = round(self.t_end / self.dt)
            if abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
                raise ConfigError(f"t_end must be a multiple of dt; got t_end={self.t_end}, dt={self.dt}")
        if self.delta is not None:
            positive("delta")
        if self.bandwidth is not None:
            positive("bandwidth")
        if self.mode in ("energy", "particles") and self.delta is None:
            raise ConfigError(f"mode {self.mode!r} needs delta > 0 (regularisation length)")
        if self.mode == "particles" and self.N < 2:
            raise ConfigError(f"N must be >= 2; got {self.N}")
        if self.initial == "snapshot" or self.snapshot is not None:
            if not self.snapshot:
                raise ConfigError("initial 'snapshot' needs the snapshot path")
            if not Path(self.snapshot).is_file():
                raise ConfigError(f"snapshot: no such file {self.snapshot!r}")
        else:
            _check_family_params(self.initial, self.initial_params)
        if self.mode == "meanfield":
            if not self.a_values or not self.b_values:
                raise ConfigError("a_values and b_values must be non-empty lists")
            for a in self.a_values:
                if not (isinstance(a, (int, float)) and a < 0):
                    raise ConfigError(f"a_values entries must be < 0 (a < 0 regime); got {a!r}")
            for b in self.b_values:
                if not (isinstance(b, (int, float)) and b < 8 * math.pi):
                    raise ConfigError(
                        f"b_values entries must satisfy b < 8π = {8 * math.pi:.6f} "
                        f"(admissible regime a < 0, b < 8π); got {b!r}"
                    )
        return self

    def step_config(self):
        from .dynamics import StepConfig

        return StepConfig(nu=self.nu, dt=self.dt, scheme=self.scheme, advection=self.advection,
                          t_end=self.t_end, output_every=self.output_every,
                          equation=self.mode, delta=self.delta)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _family(name):
    from .initial import FAMILIES

    return FAMILIES[name]


def _check_family_params(name, params):
    if not isinstance(params, dict):
        raise ConfigError(f"initial_params must be an object; got {params!r}")
    sig = inspect.signature(_family(name))
    allowed = [p for p in sig.parameters if p != "grid"]
    for key, value in params.items():
        if key not in allowed:
            raise ConfigError(
                f"initial_params: unknown parameter {key!r} for family {name!r} (allowed: {', '.join(allowed)})"
            )
        if not isinstance(value, (int, float)):
            raise ConfigError(f"initial_params.{key} must be a number; got {value!r}")
    if name == "oseen" and params.get("t", 0.0) < 0:
        raise ConfigError("initial_params.t must be >= 0 for the Oseen vortex")


def _field_types():
    return {f.name: f for f in dataclasses.fields(RunConfig)}


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated config from an optional JSON file plus overrides.

    A manifest written by a previous run is accepted as a config file.
    Unknown keys are rejected.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        if "config" in data and "version" in data:
            data = data["config"]
    data = {**data, **(overrides or {})}
    known = _field_types()
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} (known keys: {', '.join(known)})")
    cfg = RunConfig(**data)
    if isinstance(cfg.n, float) and cfg.n.is_integer():
        cfg.n = int(cfg.n)
    for name in ("L", "nu", "dt", "t_end", "fd_step"):
        value = getattr(cfg, name)
        if isinstance(value, int) and not isinstance(value, bool):
            setattr(cfg, name, float(value))
    return cfg.validate()


# ---------------------------------------------------------------- commands


def _grid(cfg):
    from .grid import Grid

    return Grid(cfg.L, cfg.n)


def initial_field(cfg: RunConfig, recenter: bool = True):
    """Initial field of a run; snapshots are moved to the centre-of-mass frame."""
    from .core import recentered
    from .io import read_field_snapshot

    if cfg.snapshot:
        omega, _ = read_field_snapshot(cfg.snapshot)
        return recentered(omega) if recenter else omega
    fam = _family(cfg.initial)
    params = dict(cfg.initial_params)
    if cfg.initial == "random":
        params.setdefault("seed", cfg.seed)
    return fam(_grid(cfg), **params)


def _prepare_output(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": cfg.as_dict(), "version": __version__}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _write_timing(out: Path, start: float) -> None:
    (out / "timing.json").write_text(json.dumps({"wall_time_s": time.perf_counter() - start}) + "\n")


def cmd_run(cfg: RunConfig) -> int:
    from .dynamics import run_trajectory
    from .io import write_field_snapshot

    if cfg.mode not in RUN_MODES:
        raise ConfigError(f"'run' needs mode in {', '.join(RUN_MODES)}; got {cfg.mode!r}")
    start = time.perf_counter()
    out = _prepare_output(cfg, "run")
    omega0 = initial_field(cfg)
    snap_dir = None
    if cfg.write_snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
    rec = run_trajectory(omega0, cfg.step_config(), snapshot_dir=snap_dir)
    rec.write_csv(out / "diagnostics.csv")
    write_field_snapshot(out / "final.bin", rec.final, rec.times[-1], rec.diagnostics[-1])
    _write_timing(out, start)
    d = rec.diagnostics[-1]
    print(f"t={rec.times[-1]:.6g} E={d.E:.12g} I={d.I:.12g} S={d.S:.12g} residual={rec.residuals[-1]:.3e}")
    return 0


def cmd_meanfield(cfg: RunConfig) -> int:
    from .io import write_radial_state, write_thermo_table
    from .meanfield import canonical_table, concavity_check, solve_mf_radial

    start = time.perf_counter()
    out = _prepare_output(cfg, "meanfield")
    a_vals = [float(a) for a in cfg.a_values]
    b_vals = [float(b) for b in cfg.b_values]
    points = canonical_table(a_vals, b_vals, fd_step=cfg.fd_step)
    write_thermo_table(out / "thermo.csv", points)
    states = out / "states"
    states.mkdir(exist_ok=True)
    for k, p in enumerate(points):
        write_radial_state(states / f"state_{k:03d}.txt", solve_mf_radial(p.a, p.b))
    report = concavity_check(points)
    summary = {
        "points": [
            {"a": p.a, "b": p.b, "dF_da": p.dF_da, "dF_db": p.dF_db, "I": p.I, "E": p.E}
            for p in points
        ],
        "concavity": None if report is None else {
            "checked_points": len(report.points),
            "max_hessian_eigenvalue": report.max_eigenvalue,
            "concave": report.concave,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_timing(out, start)
    for p in points:
        print(f"a={p.a:.6g} b={p.b:.6g} F={p.F:.12g} E={p.E:.12g} I={p.I:.12g} "
              f"dF/da={p.dF_da:.8g} dF/db={p.dF_db:.8g}")
    if report is None:
        print("concavity: not checked (grid has no interior point)")
    else:
        print(f"concavity: {'ok' if report.concave else 'VIOLATED'} at {len(report.points)} points, "
              f"max Hessian eigenvalue {report.max_eigenvalue:.3e}")
    return 0


def cmd_particles(cfg: RunConfig) -> int:
    from .io import write_ensemble, write_field_snapshot
    from .particles import deposit_density, init_ensemble, run_particles

    start = time.perf_counter()
    out = _prepare_output(cfg, "particles")
    omega = initial_field(cfg)
    e0 = init_ensemble(omega, cfg.N, cfg.delta, cfg.seed)
    write_ensemble(out / "ensemble_initial.txt", e0)
    e, stats = run_particles(e0, cfg.dt, cfg.t_end, cfg.process, cfg.output_every)
    write_ensemble(out / "ensemble_final.txt", e)
    stats.write_csv(out / "stats.csv")
    if cfg.bandwidth is not None:
        write_field_snapshot(out / "density.bin", deposit_density(e, omega.grid, cfg.bandwidth), e.t)
    _write_timing(out, start)
    print(f"t={e.t:.6g} H={stats.H[-1]:.12g} (initial {stats.H[0]:.12g}) I_emp={stats.I_emp[-1]:.12g}")
    return 0


def cmd_diagnose(cfg: RunConfig) -> int:
    from .core import diagnostics

    omega = initial_field(cfg, recenter=False)
    d = diagnostics(omega)
    print(f"M  = ({d.M[0]:.12g}, {d.M[1]:.12g})")
    for name in ("E", "I", "S", "Z2", "K", "V"):
        print(f"{name:<2} = {getattr(d, name):.12g}")
    return 0


COMMANDS = {"run": cmd_run, "meanfield": cmd_meanfield, "particles": cmd_particles,
            "diagnose": cmd_diagnose}


# ---------------------------------------------------------------- argument parsing


def _parse_value(name: str, text: str):
    f = _field_types()[name]
    if name == "initial_params":
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            raise ConfigError(f"--initial-params must be a JSON object; got {text!r}") from None
        return value
    if name in ("a_values", "b_values"):
        try:
            return [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--{name.replace('_', '-')} must be comma-separated numbers; got {text!r}") from None
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        if kind.startswith("bool"):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return text.lower() in ("true", "1", "yes")
    except ValueError:
        raise ConfigError(f"--{name.replace('_', '-')}: cannot parse {text!r} as {kind}") from None
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnsflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "integrate a vorticity equation (ns, constrained, fp, rescaled, energy)",
        "meanfield": "tabulate mean-field states and canonical thermodynamics",
        "particles": "simulate a stochastic vortex ensemble",
        "diagnose": "print the diagnostics of an initial field or snapshot",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file (or a previous manifest.json)")
        for f in dataclasses.fields(RunConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="VALUE")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get(THREADS_ENV)
    try:
        if threads:
            try:
                count = int(threads)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be a positive integer; got {threads!r}") from None
            if count < 1:
                raise ConfigError(f"{THREADS_ENV} must be a positive integer; got {threads!r}")
            from .grid import set_fft_workers
            from .particles import set_threads

            set_fft_workers(count)
            set_threads(count)
        overrides = {
            f.name: _parse_value(f.name, getattr(args, f.name))
            for f in dataclasses.fields(RunConfig)
            if getattr(args, f.name) is not None
        }
        if args.command in ("meanfield", "particles", "diagnose"):
            overrides["mode"] = args.command
        cfg = parse_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"cnsflow: config error: {exc}", file=sys.stderr)
        return 2
    except CnsflowError as exc:
        print(f"cnsflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
