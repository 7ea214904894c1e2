"""Configuration-driven runs: single solves, comparisons, and parameter sweeps.

A run is described by a JSON config; every mode writes CSV time series
(`t,sx,sy,sz` plus standard-error columns for ensembles, 17 significant
digits, byte-stable across reruns of the same config) and one manifest
JSON per data file carrying the config echo, package version, wall-clock
time and solver diagnostics.  Exit codes: 0 success, 1 numerical failure,
2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .correlations import ExponentialKernel, ThermalKernelSpec, kernel_from_json, thermal_modes
from .errors import ConfigurationError, NmblochError
from .finite_temperature import solve_finite_T
from .hierarchy import SystemSpec, propagate
from .oracle import discretize, evolve_exact
from .series import TimeSeries
from .stochastic import ensemble_mean

MODES = ("bloch", "oracle", "mc", "sweep", "compare")
SWEEP_PARAMS = ("gamma", "Gamma", "Omega", "omega", "T", "N")

_TOP_FIELDS = {
    "mode", "kernel", "omega", "a0", "correction", "order", "dt", "t_max",
    "stride", "seed", "n_traj", "noise_dt", "workers", "oracle", "sweep", "output",
}
_ORACLE_FIELDS = {"modes", "cutoff", "step", "krylov_dim", "rotating_wave", "max_dim"}
_SWEEP_FIELDS = {"param", "values", "hold"}


@dataclass
class RunConfig:
    mode: str
    kernel: dict
    omega: float = 1.0
    a0: tuple = (0.0, 0.0, 1.0)
    correction: str | None = None
    order: int = 100
    dt: float = 1e-3
    t_max: float = 30.0
    stride: int = 1
    seed: int | None = None
    n_traj: int | None = None
    noise_dt: float | None = None
    workers: int = 1
    oracle: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output: str = "out"

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(obj) - _TOP_FIELDS
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        for req in ("mode", "kernel"):
            if req not in obj:
                raise ConfigurationError(f"config missing required field {req!r}")
        cfg = cls(
            mode=obj["mode"],
            kernel=obj["kernel"],
            omega=float(obj.get("omega", 1.0)),
            a0=tuple(float(x) for x in obj.get("a0", (0.0, 0.0, 1.0))),
            correction=obj.get("correction"),
            order=int(obj.get("order", 100)),
            dt=float(obj.get("dt", 1e-3)),
            t_max=float(obj.get("t_max", 30.0)),
            stride=int(obj.get("stride", 1)),
            seed=None if obj.get("seed") is None else int(obj["seed"]),
            n_traj=None if obj.get("n_traj") is None else int(obj["n_traj"]),
            noise_dt=None if obj.get("noise_dt") is None else float(obj["noise_dt"]),
            workers=int(obj.get("workers", 1)),
            oracle=dict(obj.get("oracle", {})),
            sweep=dict(obj.get("sweep", {})),
            output=str(obj.get("output", "out")),
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        kernel_from_json(self.kernel)  # raises on malformed kernel specs
        if self.dt <= 0 or self.t_max < 0 or self.stride < 1 or self.order < 0:
            raise ConfigurationError("dt, t_max, stride and order must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if len(self.a0) != 3:
            raise ConfigurationError("a0 must have 3 components")
        if self.mode == "mc" or (self.mode == "compare" and self.n_traj is not None):
            if self.n_traj is None or self.seed is None:
                raise ConfigurationError("mc runs require both n_traj and seed")
            if self.n_traj < 1:
                raise ConfigurationError("n_traj must be >= 1")
        if self.mode == "sweep":
            unknown = set(self.sweep) - _SWEEP_FIELDS
            if unknown:
                raise ConfigurationError(f"unknown sweep fields: {sorted(unknown)}")
            param = self.sweep.get("param")
            if param not in SWEEP_PARAMS:
                raise ConfigurationError(
                    f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}"
                )
            values = self.sweep.get("values")
            if not values:
                raise ConfigurationError("sweep requires a non-empty list of values")
            hold = self.sweep.get("hold")
            if hold not in (None, "gamma_Gamma"):
                raise ConfigurationError(f"unknown hold convention {hold!r}")
        unknown = set(self.oracle) - _ORACLE_FIELDS
        if unknown:
            raise ConfigurationError(f"unknown oracle fields: {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "kernel": self.kernel, "omega": self.omega,
            "a0": list(self.a0), "correction": self.correction, "order": self.order,
            "dt": self.dt, "t_max": self.t_max, "stride": self.stride,
            "seed": self.seed, "n_traj": self.n_traj, "noise_dt": self.noise_dt,
            "workers": self.workers, "oracle": self.oracle, "sweep": self.sweep,
            "output": self.output,
        }


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, series: TimeSeries):
    cols = ["t", "sx", "sy", "sz"]
    data = [series.t, np.real(series.sx), np.real(series.sy), np.real(series.sz)]
    if series.se is not None:
        cols += ["se_sx", "se_sy", "se_sz"]
        data += [series.se[:, 0], series.se[:, 1], series.se[:, 2]]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*data):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _meta_jsonable(meta: dict) -> dict:
    out = {}
    for key, val in meta.items():
        if isinstance(val, np.ndarray):
            out[key] = {"min": float(val.min()), "max": float(val.max()), "n": len(val)}
        elif isinstance(val, (np.floating, np.integer)):
            out[key] = val.item()
        else:
            out[key] = val
    return out


def write_manifest(csv_path, config: RunConfig, series: TimeSeries | None,
                   elapsed: float, extra: dict | None = None):
    manifest = {
        "artifact_version": __version__,
        "config": config.to_dict(),
        "wall_clock_seconds": elapsed,
        "diagnostics": _meta_jsonable(series.meta) if series is not None else {},
    }
    if extra:
        manifest.update(extra)
    mpath = str(csv_path)[: -len(".csv")] + ".manifest.json"
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return mpath


def _system_spec(config: RunConfig, kernel: ExponentialKernel) -> SystemSpec:
    correction = config.correction
    if correction is None:
        correction = "none" if kernel.modulation == 0.0 else "sigma-x-freeze"
    return SystemSpec(omega=config.omega, kernel=kernel, a0=config.a0, correction=correction)


def run_bloch(config: RunConfig) -> TimeSeries:
    kernel = kernel_from_json(config.kernel)
    if isinstance(kernel, ThermalKernelSpec):
        if kernel.temperature == 0.0:
            base = ExponentialKernel(
                kernel.strength * kernel.width / 2.0, kernel.width, kernel.center
            )
            return propagate(_system_spec(config, base), config.order, config.dt,
                             config.t_max, stride=config.stride)
        modes = thermal_modes(kernel)
        return solve_finite_T(
            (modes[0], np.sqrt(modes[1])), kernel.temperature, config.omega,
            config.a0, config.order, config.dt, config.t_max, stride=config.stride,
        )
    return propagate(_system_spec(config, kernel), config.order, config.dt,
                     config.t_max, stride=config.stride)


def run_oracle(config: RunConfig) -> TimeSeries:
    kernel = kernel_from_json(config.kernel)
    if not isinstance(kernel, ExponentialKernel):
        raise ConfigurationError("oracle runs need an exponential-family kernel")
    opts = config.oracle
    disc = discretize(kernel, int(opts.get("modes", 64)), config.t_max,
                      cutoff=int(opts.get("cutoff", 3)))
    return evolve_exact(
        disc, config.omega, config.t_max,
        dt=float(opts.get("step", 0.05)),
        krylov_dim=int(opts.get("krylov_dim", 12)),
        rotating_wave=bool(opts.get("rotating_wave", False)),
        max_dim=int(opts.get("max_dim", 2_000_000)),
    )


def run_mc(config: RunConfig) -> TimeSeries:
    kernel = kernel_from_json(config.kernel)
    if not isinstance(kernel, ExponentialKernel):
        raise ConfigurationError("mc runs need an exponential-family kernel")
    return ensemble_mean(
        _system_spec(config, kernel), config.order, config.n_traj, config.seed,
        config.dt, config.t_max, noise_dt=config.noise_dt, workers=config.workers,
    )


def _interp_onto(t_ref, series: TimeSeries) -> np.ndarray:
    out = np.empty((len(t_ref), 3))
    for i, comp in enumerate((series.sx, series.sy, series.sz)):
        out[:, i] = np.interp(t_ref, series.t, np.real(comp))
    return out


def run_compare(config: RunConfig, outdir) -> list:
    """Run each method at matched parameters and emit per-method deltas."""
    written = []
    t0 = time.perf_counter()
    bloch = run_bloch(config)
    path = outdir / "bloch.csv"
    write_csv(path, bloch)
    write_manifest(path, config, bloch, time.perf_counter() - t0)
    written.append(path)
    others = {"oracle": run_oracle}
    if config.n_traj is not None:
        others["mc"] = run_mc
    summary = {}
    for name, fn in others.items():
        t0 = time.perf_counter()
        series = fn(config)
        elapsed = time.perf_counter() - t0
        path = outdir / f"{name}.csv"
        write_csv(path, series)
        write_manifest(path, config, series, elapsed)
        written.append(path)
        ref = _interp_onto(bloch.t, series)
        delta = ref - np.column_stack([bloch.sx, bloch.sy, bloch.sz])
        dseries = TimeSeries(t=bloch.t, sx=delta[:, 0], sy=delta[:, 1], sz=delta[:, 2],
                             meta={"comparison": f"{name} - bloch"})
        dpath = outdir / f"delta_{name}.csv"
        write_csv(dpath, dseries)
        sup = {f"sup_d{c}": float(np.abs(delta[:, i]).max())
               for i, c in enumerate(("sx", "sy", "sz"))}
        summary[name] = sup
        write_manifest(dpath, config, dseries, elapsed, extra={"sup_norms": sup})
        written.append(dpath)
    return written, summary


def _sweep_config(config: RunConfig, param: str, value, hold) -> RunConfig:
    kernel = dict(config.kernel)
    cfg = replace(config, kernel=kernel)
    if param == "omega":
        cfg = replace(cfg, omega=float(value))
    elif param == "N":
        cfg = replace(cfg, order=int(value))
    elif param in ("gamma", "Gamma", "Omega", "T"):
        kernel[param] = float(value)
        if param == "gamma" and hold == "gamma_Gamma":
            base = config.kernel
            product = float(base["gamma"]) * float(base["Gamma"])
            kernel["Gamma"] = product / float(value)
    return cfg


def run_sweep(config: RunConfig, outdir, quiet: bool) -> int:
    param = config.sweep["param"]
    values = config.sweep["values"]
    hold = config.sweep.get("hold")
    entries = []
    index_path = outdir / "index.json"
    try:
        for value in values:
            cfg = _sweep_config(config, param, value, hold)
            cfg.validate()
            name = f"{param}={value:g}.csv" if isinstance(value, float) else f"{param}={value}.csv"
            t0 = time.perf_counter()
            series = run_bloch(cfg)
            elapsed = time.perf_counter() - t0
            path = outdir / name
            write_csv(path, series)
            write_manifest(path, cfg, series, elapsed)
            entries.append({"param": param, "value": value, "file": name})
            if not quiet:
                print(f"[sweep] {name} done in {elapsed:.2f} s", file=sys.stderr)
    except NmblochError:
        _write_index(index_path, config, entries, complete=False)
        raise
    _write_index(index_path, config, entries, complete=True)
    return 0


def _write_index(path, config: RunConfig, entries, complete: bool):
    with open(path, "w") as fh:
        json.dump({"sweep": config.sweep, "complete": complete, "runs": entries},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: RunConfig, quiet: bool = False) -> int:
    """Execute a validated config; returns the process exit code."""
    outdir = Path(config.output)
    outdir.mkdir(parents=True, exist_ok=True)
    if config.mode == "sweep":
        return run_sweep(config, outdir, quiet)
    if config.mode == "compare":
        written, summary = run_compare(config, outdir)
        if not quiet:
            print(f"[compare] wrote {len(written)} files; sup-norms: {summary}",
                  file=sys.stderr)
        return 0
    runner = {"bloch": run_bloch, "oracle": run_oracle, "mc": run_mc}[config.mode]
    t0 = time.perf_counter()
    series = runner(config)
    elapsed = time.perf_counter() - t0
    path = outdir / f"{config.mode}.csv"
    write_csv(path, series)
    write_manifest(path, config, series, elapsed)
    if not quiet:
        print(f"[{config.mode}] {path} written in {elapsed:.2f} s", file=sys.stderr)
    return 0


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmbloch",
        description="Spin-boson dynamics: hierarchy solver, exact-bath oracle, "
                    "Monte Carlo trajectories.",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output", help="output directory (overrides config)")
    parser.add_argument("--mode", choices=MODES, help="override config mode")
    parser.add_argument("--order", type=int, help="override hierarchy order")
    parser.add_argument("--dt", type=float, help="override integration step")
    parser.add_argument("--t-max", type=float, dest="t_max", help="override horizon")
    parser.add_argument("--seed", type=int, help="override random seed")
    parser.add_argument("--n-traj", type=int, dest="n_traj", help="override trajectory count")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        raw = load_config(args.config)
        for name in ("output", "mode", "order", "dt", "t_max", "seed", "n_traj"):
            val = getattr(args, name)
            if val is not None:
                raw[name] = val
        config = RunConfig.from_dict(raw)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config, quiet=args.quiet)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NmblochError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
