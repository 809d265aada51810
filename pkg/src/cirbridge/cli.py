"""Batch command-line front end.

Subcommands: check, moments, simulate, superpose, pdf, normalize, fit,
blowup.  Configuration precedence is flags > config file (KEY=VALUE lines,
`#` comments) > built-in defaults.  Every successful run writes a
<command>_manifest.json recording the resolved configuration, input digests,
outputs and duration; re-running with the same configuration reproduces all
outputs byte for byte.

Exit codes: 0 success; 1 usage error; 2 well-posedness violated (check only);
3 I/O or data-format error; 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .calibrate import FitConfig, fit_model
from .data import (
    empirical_curves,
    load_day_counts,
    normalize_days,
    write_curves_csv,
)
from .errors import CirBridgeError, ParseError
from .model import (
    BridgeModel,
    check_well_posedness,
    classify_feller,
    default_diagnostic_grid,
)
from .moments import closed_moment_curves, variance_closed
from .simulate import (
    SimConfig,
    empirical_moments,
    estimate_log_pdf,
    save_ensemble_bin,
    save_ensemble_csv,
    simulate_ensemble,
    simulate_superposition,
)

__all__ = ["main"]

_MODEL_KEYS = ("a", "r", "mu", "omega", "alpha")

# the full protocol from the source experiments; desk-scale work should pass
# --steps/--paths explicitly
_SIM_DEFAULTS = {"steps": 50_000, "paths": 1_000_000, "stride": 500}
_BLOWUP_SIM_DEFAULTS = {"steps": 5_000, "paths": 100_000, "stride": 50}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}: line {lineno}: expected KEY=VALUE")
            key, _, value = stripped.partition("=")
            values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


class _Resolver:
    """flags > config file > defaults, with per-key casting."""

    def __init__(self, args: argparse.Namespace, file_values: dict[str, str]):
        self.args = args
        self.file_values = file_values
        self.resolved: dict = {}

    def get(self, key: str, default=None, cast=float, required=False):
        value = getattr(self.args, key, None)
        if value is None and key in self.file_values:
            raw = self.file_values[key]
            value = (raw.lower() in ("1", "true", "yes")) if cast is bool else cast(raw)
        if value is None:
            value = default
        if value is None and required:
            raise _UsageError(f"missing required option --{key.replace('_', '-')}")
        self.resolved[key] = value
        return value


def _model_from(res: _Resolver) -> BridgeModel:
    vals = {k: res.get(k, cast=float, required=True) for k in _MODEL_KEYS}
    horizon = res.get("horizon", default=1.0, cast=float)
    try:
        return BridgeModel(horizon=horizon, **vals)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _sim_config_from(res: _Resolver, defaults=_SIM_DEFAULTS) -> SimConfig:
    try:
        return SimConfig(
            n_steps=res.get("steps", defaults["steps"], int),
            n_paths=res.get("paths", defaults["paths"], int),
            master_seed=res.get("seed", 0, int),
            scheme=res.get("scheme", "frozen-exact", str),
            record_stride=res.get("stride", defaults["stride"], int),
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


class _Run:
    """Collects inputs/outputs and writes the manifest at the end."""

    def __init__(self, command: str, res: _Resolver, out_dir: Path):
        self.command = command
        self.res = res
        self.out_dir = out_dir
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.started = time.monotonic()

    def note_input(self, path):
        self.inputs[str(path)] = _sha256(path)

    def out_path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def finish(self):
        manifest = {
            "command": self.command,
            "config": {
                k: v for k, v in sorted(self.res.resolved.items()) if v is not None
            },
            "master_seed": self.res.resolved.get("seed"),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_seconds": time.monotonic() - self.started,
            "package_version": __version__,
            "backend": _backend.backend_name(),
        }
        path = self.out_dir / f"{self.command}_manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_moment_csv(path, curves, extra_variance: bool = False):
    with open(path, "w", newline="") as fh:
        if extra_variance:
            fh.write("s,mean,std,variance\n")
            for i, s in enumerate(curves.grid):
                v = curves.std[i] * curves.std[i]
                fh.write(f"{_fmt(s)},{_fmt(curves.mean[i])},{_fmt(curves.std[i])},{_fmt(v)}\n")
        else:
            fh.write("s,mean,std\n")
            for i, s in enumerate(curves.grid):
                fh.write(f"{_fmt(s)},{_fmt(curves.mean[i])},{_fmt(curves.std[i])}\n")


def _maybe_save_paths(run: _Run, res: _Resolver, ensemble, prefix: str):
    mode = res.get("save_paths", "none", str)
    if mode == "csv":
        save_ensemble_csv(ensemble, run.out_path(f"{prefix}_paths.csv"))
    elif mode == "bin":
        save_ensemble_bin(ensemble, run.out_path(f"{prefix}_paths.bin"))
    elif mode != "none":
        raise _UsageError(f"--save-paths must be none, csv or bin, got {mode!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_check(res: _Resolver, run: _Run) -> int:
    model = _model_from(res)
    n = res.get("grid_points", 1000, int)
    curve = closed_moment_curves(model, default_diagnostic_grid(model, n), with_std=False)
    report = check_well_posedness(model, curve)
    profile = classify_feller(model, curve) if model.a > 0 else None
    doc = {
        "model": {k: getattr(model, k) for k in _MODEL_KEYS + ("horizon",)},
        "assumption": asdict(report),
        "feller": None,
    }
    if profile is not None:
        doc["feller"] = {
            "violated_everywhere": profile.violated_everywhere,
            "satisfied_intervals": profile.satisfied_intervals,
            "grid": profile.grid.tolist(),
            "values": profile.values.tolist(),
        }
    print(json.dumps(doc, indent=2, sort_keys=True))
    run.finish()
    return 0 if report.overall else 2


def _cmd_moments(res: _Resolver, run: _Run) -> int:
    model = _model_from(res)
    n = res.get("grid_points", 1001, int)
    grid = model.horizon * np.linspace(0.0, 1.0, n)
    curves = closed_moment_curves(model, grid)
    _write_moment_csv(run.out_path("moments.csv"), curves, extra_variance=True)
    run.finish()
    return 0


def _cmd_simulate(res: _Resolver, run: _Run) -> int:
    model = _model_from(res)
    config = _sim_config_from(res)
    threads = res.get("threads", _backend.default_threads(), int)
    ensemble = simulate_ensemble(model, config, threads=threads)
    _write_moment_csv(run.out_path("simulate_moments.csv"), empirical_moments(ensemble))
    _maybe_save_paths(run, res, ensemble, "simulate")
    run.finish()
    return 0


def _cmd_superpose(res: _Resolver, run: _Run) -> int:
    model = _model_from(res)
    config = _sim_config_from(res)
    threads = res.get("threads", _backend.default_threads(), int)
    n = res.get("n_sources", 2, int)
    raw = res.get("weights", None, str)
    weights = None
    if raw:
        weights = np.array([float(tok) for tok in raw.split(",")])
    ensemble = simulate_superposition(model, n, weights, config, threads=threads)
    _write_moment_csv(run.out_path("superpose_moments.csv"), empirical_moments(ensemble))
    _maybe_save_paths(run, res, ensemble, "superpose")
    run.finish()
    return 0


def _cmd_pdf(res: _Resolver, run: _Run) -> int:
    model = _model_from(res)
    config = _sim_config_from(res)
    threads = res.get("threads", _backend.default_threads(), int)
    times = [float(tok) for tok in res.get("times", "0.1,0.3,0.5,0.7,0.9", str).split(",")]
    n_bins = res.get("pdf_bins", 60, int)
    ensemble = simulate_ensemble(model, config, threads=threads)
    table = estimate_log_pdf(ensemble, times, n_bins)
    with open(run.out_path("logpdf.csv"), "w", newline="") as fh:
        fh.write("time,bin_left,bin_right,log_density\n")
        for i, t in enumerate(table.times):
            for j in range(table.bin_edges.size - 1):
                if np.isnan(table.log_density[i, j]):
                    continue  # empty bins are absent, not -inf
                fh.write(
                    f"{_fmt(t)},{_fmt(table.bin_edges[j])},"
                    f"{_fmt(table.bin_edges[j + 1])},{_fmt(table.log_density[i, j])}\n"
                )
    run.finish()
    return 0


def _cmd_normalize(res: _Resolver, run: _Run) -> int:
    counts = res.get("counts", cast=str, required=True)
    day_table = res.get("day_table", cast=str, required=True)
    n_bins = res.get("grid_bins", 100, int)
    run.note_input(counts)
    run.note_input(day_table)
    days = load_day_counts(counts, day_table)
    normalized = normalize_days(days)
    with open(run.out_path("normalized.csv"), "w", newline="") as fh:
        fh.write("day_id,s,z\n")
        for day in normalized.days:
            for s, z in zip(day.s, day.z):
                fh.write(f"{day.day_id},{_fmt(s)},{_fmt(z)}\n")
    summary = {
        "retained_days": [d.day_id for d in normalized.days],
        "excluded_days": normalized.excluded_days,
    }
    if len(normalized.days) >= 2:
        curves = empirical_curves(normalized, n_bins)
        write_curves_csv(curves, run.out_path("empirical_curves.csv"))
    else:
        summary["note"] = "fewer than 2 retained days; no empirical curves"
    run.out_path("normalize_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    print(json.dumps(summary, sort_keys=True))
    run.finish()
    return 0


def _cmd_fit(res: _Resolver, run: _Run) -> int:
    counts = res.get("counts", cast=str, required=True)
    day_table = res.get("day_table", cast=str, required=True)
    n_bins = res.get("grid_bins", 100, int)
    run.note_input(counts)
    run.note_input(day_table)
    config = FitConfig(
        restarts=res.get("restarts", 8, int),
        freeze_omega_zero=res.get("freeze_omega_zero", False, bool),
        freeze_alpha_one=res.get("freeze_alpha_one", False, bool),
        restart_seed=res.get("restart_seed", 0, int),
    )
    days = load_day_counts(counts, day_table)
    curves = empirical_curves(normalize_days(days), n_bins)
    result = fit_model(curves, config)
    doc = result.to_json_dict()
    run.out_path("fit_result.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )
    fitted = closed_moment_curves(result.model, curves.grid)
    with open(run.out_path("fit_curves.csv"), "w", newline="") as fh:
        fh.write("s,mean_empirical,std_empirical,mean_fitted,std_fitted\n")
        for i, s in enumerate(curves.grid):
            fh.write(
                f"{_fmt(s)},{_fmt(curves.mean[i])},{_fmt(curves.std[i])},"
                f"{_fmt(fitted.mean[i])},{_fmt(fitted.std[i])}\n"
            )
    print(json.dumps(doc, indent=2, sort_keys=True))
    run.finish()
    return 0


def _cmd_blowup(res: _Resolver, run: _Run) -> int:
    model = _model_from(res)
    config = _sim_config_from(res, _BLOWUP_SIM_DEFAULTS)
    threads = res.get("threads", _backend.default_threads(), int)
    alphas = [float(tok) for tok in res.get("alphas", "0.5,1.0,1.5,2.0", str).split(",")]
    lo = res.get("tail_lo", 0.9, float)
    hi = res.get("tail_hi", 1.0, float)
    with open(run.out_path("blowup.csv"), "w", newline="") as fh:
        fh.write("alpha,t,std_theory,std_mc\n")
        for alpha in alphas:
            swept = BridgeModel(
                a=model.a, r=model.r, mu=model.mu, omega=model.omega,
                alpha=alpha, horizon=model.horizon,
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ensemble = simulate_ensemble(swept, config, threads=threads)
            emp = empirical_moments(ensemble)
            window = (emp.grid >= lo) & (emp.grid < hi)
            for t, s_mc in zip(emp.grid[window], emp.std[window]):
                s_th = float(np.sqrt(variance_closed(t, swept)))
                fh.write(f"{_fmt(alpha)},{_fmt(t)},{_fmt(s_th)},{_fmt(s_mc)}\n")
    run.finish()
    return 0


_COMMANDS = {
    "check": _cmd_check,
    "moments": _cmd_moments,
    "simulate": _cmd_simulate,
    "superpose": _cmd_superpose,
    "pdf": _cmd_pdf,
    "normalize": _cmd_normalize,
    "fit": _cmd_fit,
    "blowup": _cmd_blowup,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="cirbridge", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=str, help="KEY=VALUE configuration file")
        p.add_argument("--out-dir", type=str, help="output directory (default .)")
        for key in _MODEL_KEYS:
            p.add_argument(f"--{key}", type=float)
        p.add_argument("--horizon", type=float)

    def add_sim(p):
        p.add_argument("--steps", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--scheme", type=str, choices=["frozen-exact", "truncated-euler"])
        p.add_argument("--stride", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--save-paths", dest="save_paths", type=str,
                       choices=["none", "csv", "bin"])

    p = sub.add_parser("check", help="well-posedness and Feller diagnostics")
    add_common(p)
    p.add_argument("--grid-points", dest="grid_points", type=int)

    p = sub.add_parser("moments", help="closed-form mean/std/variance table")
    add_common(p)
    p.add_argument("--grid-points", dest="grid_points", type=int)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble and its moments")
    add_common(p)
    add_sim(p)

    p = sub.add_parser("superpose", help="sum of independent sub-bridges")
    add_common(p)
    add_sim(p)
    p.add_argument("--n-sources", dest="n_sources", type=int)
    p.add_argument("--weights", type=str, help="comma-separated, summing to 1")

    p = sub.add_parser("pdf", help="log-PDF histograms at selected times")
    add_common(p)
    add_sim(p)
    p.add_argument("--times", type=str)
    p.add_argument("--pdf-bins", dest="pdf_bins", type=int)

    p = sub.add_parser("normalize", help="normalize day counts, empirical curves")
    add_common(p)
    p.add_argument("--counts", type=str)
    p.add_argument("--day-table", dest="day_table", type=str)
    p.add_argument("--grid-bins", dest="grid_bins", type=int)

    p = sub.add_parser("fit", help="two-step least-squares calibration")
    add_common(p)
    p.add_argument("--counts", type=str)
    p.add_argument("--day-table", dest="day_table", type=str)
    p.add_argument("--grid-bins", dest="grid_bins", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--restart-seed", dest="restart_seed", type=int)
    p.add_argument("--freeze-omega-zero", dest="freeze_omega_zero",
                   action="store_const", const=True)
    p.add_argument("--freeze-alpha-one", dest="freeze_alpha_one",
                   action="store_const", const=True)

    p = sub.add_parser("blowup", help="theoretical vs MC std over a tail window")
    add_common(p)
    add_sim(p)
    p.add_argument("--alphas", type=str)
    p.add_argument("--tail-lo", dest="tail_lo", type=float)
    p.add_argument("--tail-hi", dest="tail_hi", type=float)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        file_values = {}
        if getattr(args, "config", None):
            file_values = _read_config_file(args.config)
        res = _Resolver(args, file_values)
        out_dir = Path(res.get("out_dir", ".", str))
        out_dir.mkdir(parents=True, exist_ok=True)
        run = _Run(args.command, res, out_dir)
        return _COMMANDS[args.command](res, run)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CirBridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
