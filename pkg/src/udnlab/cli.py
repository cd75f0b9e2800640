"""Command-line front end.

    udnlab coverage     one scenario, one CSV row
    udnlab sweep        log-grid sweep over BS or UE density
    udnlab optimize-bs  smallest BS density within epsilon of the peak ASE
    udnlab optimize-ue  UE density with the largest ASE
    udnlab preset NAME  a predefined sweep (see --help)

Results go to a CSV file (--out, default stdout) and a one-line summary to
stderr.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import mcengine, scaling
from .association import AssociationPolicy
from .channel import PathLossModel, Variant
from .mcengine import Scenario
from .rng import default_seed

CSV_HEADER = ["model", "bs_density_per_km2", "ue_density_per_km2", "active_bs_density_per_km2",
              "height_diff_m", "gamma0_db", "coverage_prob", "coverage_ci95", "ase_bps_hz_km2",
              "ase_ci95", "trials", "seed"]

COMMANDS = ("coverage", "sweep", "optimize-bs", "optimize-ue", "preset")
MIN_TRIALS = 100

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    overrides: dict
    # fixed densities of the other axis, one sweep each (None: a single sweep)
    family: tuple | None = None


PRESETS = {p.name: p for p in [
    Preset("fig2-baseline", "single-slope path loss, full load, BS density sweep",
           dict(model="single-slope", bs_density_min=1.0, bs_density_max=1e6, points_per_decade=4)),
    Preset("fig2-dualslope", "LoS/NLoS path loss, full load, BS density sweep",
           dict(model="dual-slope", bs_density_min=1.0, bs_density_max=1e6, points_per_decade=4)),
    Preset("fig2-nearfield", "LoS/NLoS path loss bounded at 1 m, full load",
           dict(model="near-field", near_field_m=1.0, bs_density_min=1.0, bs_density_max=1e6,
                points_per_decade=4)),
    Preset("fig2-height", "LoS/NLoS path loss with 8.5 m antenna height difference, full load",
           dict(model="height-aware", height_m=8.5, bs_density_min=1.0, bs_density_max=1e6,
                points_per_decade=4)),
    Preset("fig6-imc", "height-aware path loss with idle-mode BSs, 300 UEs/km2",
           dict(model="height-aware", height_m=8.5, idle_mode=True, ue_density=300.0,
                bs_density_min=1.0, bs_density_max=1e6, points_per_decade=4)),
    Preset("fig8-ue-sweep", "UE density sweep at 1e6 BSs/km2 with idle mode",
           dict(model="height-aware", height_m=8.5, idle_mode=True, bs_density=1e6,
                ue_density_min=1e2, ue_density_max=1e4, points_per_decade=5)),
    Preset("fig9-grid", "UE density sweeps at four BS densities with idle mode",
           dict(model="height-aware", height_m=8.5, idle_mode=True,
                ue_density_min=1e2, ue_density_max=1e4, points_per_decade=4),
           family=(1e3, 1e4, 1e5, 1e6)),
]}


@dataclass
class RunConfig:
    command: str = "coverage"
    preset: str | None = None
    model: str = "dual-slope"
    bs_density: float = 1e3
    bs_density_min: float | None = None
    bs_density_max: float | None = None
    ue_density: float = 300.0
    ue_density_min: float | None = None
    ue_density_max: float | None = None
    points_per_decade: int = 10
    gamma0_db: float = 0.0
    height_m: float = 8.5
    near_field_m: float | None = None
    tx_dbm: float = 24.0
    noise_dbm: float | None = -95.0
    idle_mode: bool = False
    trials: int = 10_000
    seed: int = 0
    workers: int = 1
    epsilon: float = 0.05
    out: str | None = None
    figure: bool = False
    estimator: str = "direct"

    def scenario(self) -> Scenario:
        m = Variant(self.model)
        if m is Variant.SINGLE_SLOPE:
            plm = PathLossModel.single_slope()
        elif m is Variant.DUAL_SLOPE:
            plm = PathLossModel.dual_slope()
        elif m is Variant.NEAR_FIELD:
            plm = PathLossModel.near_field(self.near_field_m if self.near_field_m is not None else 1.0)
        else:
            plm = PathLossModel.height_aware(self.height_m, self.near_field_m)
        idle = self.idle_mode
        return Scenario(bs_density_per_km2=self.bs_density,
                        ue_density_per_km2=self.ue_density if idle else math.inf,
                        tx_power_dbm=self.tx_dbm, noise_dbm=self.noise_dbm,
                        path_loss_model=plm, association=AssociationPolicy(),
                        idle_mode=idle, sinr_threshold_db=self.gamma0_db,
                        trials=self.trials, master_seed=self.seed)


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


# ---------------------------------------------------------------------------
# parsing and validation


def _to_bool(key, v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {v!r}")


def _noise(key, v):
    if v is None:
        return None
    if isinstance(v, str) and v.strip().lower() in ("off", "none"):
        return None
    return _num(key, v)


def _num(key, v):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {v!r}") from None
    if math.isnan(x):
        raise ConfigError(key, "must not be NaN")
    return x


def _int(key, v):
    x = _num(key, v)
    if x != int(x):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    return int(x)


_COERCE = {
    "command": lambda k, v: str(v), "preset": lambda k, v: None if v is None else str(v),
    "model": lambda k, v: str(v), "out": lambda k, v: None if v is None else str(v),
    "estimator": lambda k, v: str(v),
    "points_per_decade": _int, "trials": _int, "seed": _int, "workers": _int,
    "idle_mode": _to_bool, "figure": _to_bool, "noise_dbm": _noise,
}
_OPTIONAL = {"bs_density_min", "bs_density_max", "ue_density_min", "ue_density_max",
             "near_field_m"}


def _coerce(key, v):
    if key in _OPTIONAL and v is None:
        return None
    return _COERCE.get(key, _num)(key, v)


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines (``#`` comments) or a JSON object."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "JSON config must be an object")
    else:
        raw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"line {n}: expected key = value")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(k, "unknown configuration key")
        out[key] = v
    return out


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
    if cfg.command == "preset":
        if cfg.preset is None:
            raise ConfigError("preset", "a preset name is required")
        if cfg.preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {cfg.preset!r}; one of {', '.join(PRESETS)}")
    try:
        Variant(cfg.model)
    except ValueError:
        raise ConfigError("model", f"must be one of {', '.join(v.value for v in Variant)}") from None
    for key in ("bs_density", "ue_density", "bs_density_min", "bs_density_max",
                "ue_density_min", "ue_density_max"):
        v = getattr(cfg, key)
        if v is not None and not (math.isfinite(v) and v > 0):
            raise ConfigError(key.replace("_", "-"), f"must be a finite density > 0, got {v!r}")
    for lo, hi in (("bs_density_min", "bs_density_max"), ("ue_density_min", "ue_density_max")):
        a, b = getattr(cfg, lo), getattr(cfg, hi)
        if a is not None and b is not None and a > b:
            raise ConfigError(lo.replace("_", "-"), f"must not exceed {hi.replace('_', '-')}")
    if cfg.points_per_decade < 1:
        raise ConfigError("points-per-decade", "must be >= 1")
    if cfg.trials < MIN_TRIALS:
        raise ConfigError("trials", f"must be >= {MIN_TRIALS}")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if not 0 < cfg.epsilon < 1:
        raise ConfigError("epsilon", "must be in (0, 1)")
    if not (math.isfinite(cfg.height_m) and cfg.height_m >= 0):
        raise ConfigError("height-m", "must be >= 0")
    if cfg.near_field_m is not None and not (math.isfinite(cfg.near_field_m) and cfg.near_field_m > 0):
        raise ConfigError("near-field-m", "must be > 0")
    for key in ("gamma0_db", "tx_dbm"):
        if not math.isfinite(getattr(cfg, key)):
            raise ConfigError(key.replace("_", "-"), "must be finite")
    if cfg.noise_dbm is not None and not math.isfinite(cfg.noise_dbm):
        raise ConfigError("noise-dbm", "must be finite or 'off'")
    if cfg.estimator not in ("direct", "conditional"):
        raise ConfigError("estimator", "must be 'direct' or 'conditional'")
    if cfg.figure and cfg.out in (None, "-"):
        raise ConfigError("figure", "needs --out so the PNG can be written next to the CSV")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be >= 0")
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="udnlab", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter,
                epilog="config file keys: " + ", ".join(CONFIG_KEYS) +
                       "\npresets: " + "; ".join(f"{k} ({v.description})" for k, v in PRESETS.items()))
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("preset_name", nargs="?", help="preset name for the preset command")
    p.add_argument("--config", help="key = value file or JSON object; flags override it")
    p.add_argument("--preset")
    p.add_argument("--model", help="single-slope | dual-slope | near-field | height-aware")
    for name in ("bs-density", "bs-density-min", "bs-density-max", "ue-density",
                 "ue-density-min", "ue-density-max", "points-per-decade", "gamma0-db",
                 "height-m", "near-field-m", "tx-dbm", "noise-dbm", "trials", "seed",
                 "workers", "epsilon"):
        p.add_argument(f"--{name}")
    p.add_argument("--idle-mode", action="store_const", const=True, default=None)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--figure", action="store_const", const=True, default=None,
                   help="also render a PNG next to the CSV")
    p.add_argument("--estimator", help="direct (default) or conditional")
    return p


def parse_config(argv=None, env_seed: bool = True) -> RunConfig:
    """Defaults < preset < config file < flags.  Raises ConfigError."""
    ns = build_parser().parse_args(argv)
    values: dict = {}
    file_vals = read_config_file(ns.config) if ns.config else {}
    flags = {k: v for k, v in vars(ns).items()
             if k not in ("config", "preset_name", "command") and v is not None}
    preset = ns.preset_name or flags.get("preset") or file_vals.get("preset")
    if ns.command != "preset" and ns.preset_name is not None:
        raise ConfigError("arguments", f"unexpected argument {ns.preset_name!r}")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; one of {', '.join(PRESETS)}")
        values.update(PRESETS[preset].overrides)
    values.update(file_vals)
    values.update(flags)
    values["command"] = ns.command
    if preset is not None:
        values["preset"] = preset
    if "seed" not in values and env_seed:
        try:
            values["seed"] = default_seed(0)
        except ValueError:
            raise ConfigError("UDNLAB_SEED", "must be an integer") from None
    cfg = RunConfig()
    kw = {k: _coerce(k, v) for k, v in values.items()}
    return validate(replace(cfg, **kw))


# ---------------------------------------------------------------------------
# running


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        if math.isnan(x):
            return "nan"
        return repr(float(x))
    return str(x)


def _row(pt_scn: Scenario, cov, ase) -> dict:
    nan = math.nan
    m = pt_scn.path_loss_model
    return {
        "model": m.label,
        "bs_density_per_km2": float(pt_scn.bs_density_per_km2),
        "ue_density_per_km2": float(pt_scn.ue_density_per_km2),
        "active_bs_density_per_km2": ase.active_bs_density_per_km2 if ase else nan,
        "height_diff_m": float(m.height_diff_m),
        "gamma0_db": float(pt_scn.sinr_threshold_db),
        "coverage_prob": cov.probability if cov else nan,
        "coverage_ci95": cov.ci95_halfwidth if cov else nan,
        "ase_bps_hz_km2": ase.ase_bps_hz_km2 if ase else nan,
        "ase_ci95": ase.ci95_halfwidth if ase else nan,
        "trials": int(pt_scn.trials),
        "seed": int(pt_scn.master_seed),
    }


class _CsvSink:
    def __init__(self, out: str | None):
        self.path = out
        if out in (None, "-"):
            self.fh = sys.stdout
            self.own = False
        else:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(out, "w", newline="")
            self.own = True
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(CSV_HEADER)
        self.rows: list[dict] = []

    def write(self, row: dict):
        self.rows.append(row)
        self.w.writerow([_fmt(row[k]) for k in CSV_HEADER])
        self.fh.flush()

    def close(self):
        if self.own:
            self.fh.close()


def _evaluator(cfg: RunConfig):
    def run(scn: Scenario):
        cond = cfg.estimator == "conditional"
        batch = mcengine.run_trials(scn, workers=cfg.workers, conditional=cond)
        method = "conditional" if cond else "direct"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cov = batch.coverage(method=method)
        return cov, batch.ase(method=method)
    return run


def _sweep_specs(cfg: RunConfig, base: Scenario):
    preset = PRESETS.get(cfg.preset) if cfg.command == "preset" else None
    ue_axis = cfg.ue_density_min is not None or cfg.ue_density_max is not None
    if ue_axis:
        lo = cfg.ue_density_min if cfg.ue_density_min is not None else cfg.ue_density_max
        hi = cfg.ue_density_max if cfg.ue_density_max is not None else cfg.ue_density_min
        base = base.replace(idle_mode=True, ue_density_per_km2=lo)
        fixed = preset.family if preset and preset.family else (cfg.bs_density,)
        return [scaling.SweepSpec(base.replace(bs_density_per_km2=f), scaling.Axis.UE_DENSITY,
                                  lo, hi, cfg.points_per_decade, seed_offset=1000 * j)
                for j, f in enumerate(fixed)], "ue_density_per_km2"
    lo = cfg.bs_density_min if cfg.bs_density_min is not None else cfg.bs_density
    hi = cfg.bs_density_max if cfg.bs_density_max is not None else lo
    return [scaling.SweepSpec(base, scaling.Axis.BS_DENSITY, lo, hi, cfg.points_per_decade)], \
        "bs_density_per_km2"


def _grid_or_none(lo, hi, ppd):
    if lo is None and hi is None:
        return None
    lo = lo if lo is not None else hi
    hi = hi if hi is not None else lo
    return scaling.log_grid(lo, hi, ppd)


def run(cfg: RunConfig) -> int:
    """Execute a validated config.  Returns the process exit code."""
    if cfg.command in ("optimize-bs", "optimize-ue"):
        cfg = replace(cfg, idle_mode=True)
    try:
        base = cfg.scenario()
    except ValueError as exc:
        print(f"udnlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sink = _CsvSink(cfg.out)
    ev = _evaluator(cfg)
    x_key = "bs_density_per_km2"
    summary = ""
    n_ok = 0
    try:
        if cfg.command == "coverage":
            try:
                cov, a = ev(base)
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                sink.write(_row(base, None, None))
                print(f"udnlab: numerical failure: {exc}", file=sys.stderr)
                return EXIT_NUMERIC
            sink.write(_row(base, cov, a))
            n_ok = 1
            summary = (f"coverage={cov.probability:.4f}+-{cov.ci95_halfwidth:.4f} "
                       f"ase={a.ase_bps_hz_km2:.4g}+-{a.ci95_halfwidth:.3g} bps/Hz/km2")
        elif cfg.command in ("sweep", "preset"):
            specs, x_key = _sweep_specs(cfg, base)
            results = []

            def emit(pt):
                sink.write(_row(pt.scenario, pt.coverage, pt.ase))
                if pt.error:
                    print(f"udnlab: point {pt.density:g} failed: {pt.error}", file=sys.stderr)

            for spec in specs:
                results.append(scaling.sweep(spec, ev, on_point=emit))
            pts = [p for r in results for p in r.valid()]
            n_ok = len(pts)
            if pts:
                best = max(pts, key=lambda p: p.ase.ase_bps_hz_km2)
                summary = (f"{n_ok} points, peak ASE {best.ase.ase_bps_hz_km2:.4g} bps/Hz/km2 at "
                           f"{x_key.split('_')[0]} density {best.density:.4g}")
        elif cfg.command == "optimize-bs":
            grid = _grid_or_none(cfg.bs_density_min, cfg.bs_density_max, cfg.points_per_decade)
            res = scaling.optimize_bs_density(cfg.ue_density, cfg.epsilon,
                                              base, grid, ev)
            for p in res.points():
                sink.write(_row(p.scenario, p.coverage, p.ase))
            n_ok = sum(p.ok for p in res.points())
            summary = (f"lambda*={res.optimum_density:.6g} BSs/km2 ase={res.optimum_ase:.4g} "
                       f"peak ASE={res.peak_ase:.4g} bps/Hz/km2 epsilon={cfg.epsilon:g}")
        elif cfg.command == "optimize-ue":
            x_key = "ue_density_per_km2"
            grid = _grid_or_none(cfg.ue_density_min, cfg.ue_density_max, cfg.points_per_decade)
            res = scaling.optimize_ue_density(cfg.bs_density, base, grid, ev)
            for p in res.points():
                sink.write(_row(p.scenario, p.coverage, p.ase))
            n_ok = sum(p.ok for p in res.points())
            summary = (f"rho*={res.optimum_density:.6g} UEs/km2 "
                       f"peak ASE={res.peak_ase:.4g} bps/Hz/km2 at lambda={cfg.bs_density:g}")
    except scaling.OptimizationError as exc:
        print(f"udnlab: numerical failure: {exc}", file=sys.stderr)
        if not sink.rows:
            sink.write(_row(base, None, None))
        sink.close()
        return EXIT_NUMERIC
    except (ArithmeticError, ValueError, RuntimeError, MemoryError) as exc:
        sink.write(_row(base, None, None))
        sink.close()
        print(f"udnlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sink.close()
    if n_ok == 0:
        print("udnlab: numerical failure: no grid point produced a result", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.figure:
        from . import report
        png = report.render(sink.rows, report.figure_path(cfg.out), x_key,
                            title=cfg.preset or cfg.command)
        summary += f" figure={png}"
    print(f"udnlab {cfg.command}: {summary}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"udnlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
