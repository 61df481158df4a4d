"""Command-line front end: config-driven tables, figures, simulation and fits.

Every run writes one table (CSV by default, JSON with ``--format json``)
and then a ``<stem>.manifest.json`` listing the resolved config, outputs,
versions and seed.  The manifest is written last, so its presence means
the run completed.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import correlations as corr
from .coefficients import mean_coefficients
from .exceptions import (
    ConfigError,
    FitFailed,
    NumericalFailure,
    PrecisionNotReached,
    SpecklampError,
    SynthesisError,
    ValidationError,
)
from .figures import FIGURES, REGISTRY_VERSION, Table, figure_table
from .model import load_config, model_from_config
from .montecarlo import run_quadrature_oracle, worker_count
from .spectroscopy import fit_ase_variance, fit_autocorrelation
from .statistics import NoiseCurve, photocount_autocorrelation, photocount_variance

__all__ = ["SCHEMA_VERSION", "COMMANDS", "RunManifest", "UsageError", "run", "main"]

SCHEMA_VERSION = "1"
COMMANDS = ("coeffs", "corr", "variance", "autocorr", "simulate", "fit", "figures")

# sections the CLI accepts on top of the model config
_EXTRA = {
    "coeffs": {"sweep"},
    "corr": {"grid"},
    "variance": {"sweep"},
    "autocorr": {"grid"},
    "simulate": {"simulation"},
}
_SIMULATION_KEYS = {"realizations", "points_per_tc", "min_points"}
_FIT_KEYS = {"data", "model", "x", "a", "eta", "fit_x", "fit_scale", "scale", "log_sigma"}


class UsageError(SpecklampError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specklamp", description="Photocount statistics of random laser amplifiers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON config file")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "simulate":
            s.add_argument("--seed", type=int, default=0, help="RNG seed (unsigned 64-bit)")
        if name == "figures":
            s.add_argument("--id", dest="fig_id", required=True, help=f"one of {', '.join(FIGURES)}")
    return p


class RunManifest(dict):
    """Record of a completed run, serialized as sorted JSON."""

    def __init__(self, command, config, outputs, seed=None, warnings_=()):
        super().__init__(
            command=command,
            config=config,
            outputs=list(outputs),
            versions={
                "specklamp": __version__,
                "schema": SCHEMA_VERSION,
                "figure_registry": REGISTRY_VERSION,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            seed=seed,
            warnings=list(warnings_),
        )

    def dumps(self) -> str:
        return json.dumps(self, indent=2, sort_keys=True) + "\n"


# --- config handling ------------------------------------------------------------------------


def _split(config: dict, command: str) -> tuple[dict, dict]:
    extra_allowed = _EXTRA.get(command, set())
    extra = {k: config[k] for k in config if k in extra_allowed}
    model_cfg = {k: v for k, v in config.items() if k not in extra_allowed}
    return model_cfg, extra


def _resolve_model(cfg: dict) -> dict:
    out = copy.deepcopy(cfg)
    model_from_config(out, _quiet=True)  # key checks
    out["gain"].setdefault("eta", -1.0)
    out["detection"].setdefault("Ia", 0.0)
    out["detection"].setdefault("Qa", 0.0)
    return out


def _sweep_configs(cfg: dict, sweep: dict | None) -> tuple[str | None, list, list[dict]]:
    if sweep is None:
        return None, [None], [cfg]
    if set(sweep) != {"path", "values"}:
        raise ConfigError("sweep takes exactly 'path' (e.g. 'gain.x') and 'values'")
    parts = str(sweep["path"]).split(".")
    values = list(sweep["values"])
    if len(parts) != 2 or not values:
        raise ConfigError("sweep path must be '<section>.<key>' with a non-empty value list")
    section, key = parts
    if section not in cfg or not isinstance(cfg[section], dict):
        raise ConfigError(f"sweep section {section!r} not in config")
    out = []
    for v in values:
        c = copy.deepcopy(cfg)
        c[section][key] = v
        out.append(c)
    return key, values, out


def _grid(extra: dict, default: np.ndarray) -> np.ndarray:
    g = extra.get("grid")
    if g is None:
        return default
    if set(g) == {"t_over_tc"}:
        t = np.asarray(g["t_over_tc"], dtype=float)
    elif set(g) == {"log10_t_over_tc"}:
        lo, hi, n = g["log10_t_over_tc"]
        t = np.logspace(float(lo), float(hi), int(n))
    else:
        raise ConfigError("grid takes exactly one of 't_over_tc' (list) or 'log10_t_over_tc' ([lo, hi, n])")
    if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ConfigError("grid must be a non-empty increasing list of non-negative times")
    return t


def _map(fn, items):
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(fn, items))


# --- subcommands ---------------------------------------------------------------------------


def _require(config):
    if config is None:
        raise UsageError("this command needs --config")
    return config


def _cmd_coeffs(config):
    cfg, extra = _split(_require(config), "coeffs")
    key, values, cfgs = _sweep_configs(cfg, extra.get("sweep"))

    def row(c):
        m = model_from_config(c)
        mc = mean_coefficients(m)
        return [m.x, mc.Tb, mc.Rb, mc.Vb, mc.Tab, mc.g, mc.nb, mc.phi]

    rows = _map(row, cfgs)
    cols = ("x", "Tb", "Rb", "Vb", "Tab", "g", "nb", "phi")
    return _with_sweep(key, values, cols, rows), _resolved(cfg, extra), None


def _cmd_variance(config):
    cfg, extra = _split(_require(config), "variance")
    key, values, cfgs = _sweep_configs(cfg, extra.get("sweep"))

    def row(c):
        b = photocount_variance(model_from_config(c))
        return [b.nb, b.phi, b.shot, b.interference, b.classical_tt, b.cross_tv, b.ase_vv, b.total]

    rows = _map(row, cfgs)
    cols = ("nb", "phi", "shot", "interference", "classical_TT", "cross_TV", "ase_VV", "delta_b2")
    return _with_sweep(key, values, cols, rows), _resolved(cfg, extra), None


def _with_sweep(key, values, cols, rows):
    if key is None or key in cols:
        return Table(cols, rows)
    return Table((key,) + cols, [[float(v)] + r for v, r in zip(values, rows)])


def _resolved(cfg, extra):
    out = _resolve_model(cfg)
    out.update(copy.deepcopy(extra))
    return out


def _cmd_corr(config):
    cfg, extra = _split(_require(config), "corr")
    m = model_from_config(cfg)
    t = _grid(extra, np.concatenate([[0.0], np.logspace(-3, 4, 71)]))
    y = np.sqrt(t)
    x, a, g = m.x, m.a, m.g
    cols = ("t_over_tc", "y", "C1", "C2", "C_TT", "C_TV", "C_VV")
    rows = np.column_stack([
        t, y, corr.c1_tt(x, y, a), corr.c2_tt(x, y, g), corr.c_tt(x, y, a, g), corr.c_tv(x, y, g),
        corr.c_vv(x, y, g),
    ])
    return Table(cols, rows), _resolved(cfg, extra), None


def _cmd_autocorr(config):
    cfg, extra = _split(_require(config), "autocorr")
    m = model_from_config(cfg)
    lo = np.log10(2.0 * m.tau_over_tc)
    t = _grid(extra, np.logspace(lo, lo + 6.0, 61))
    cols = ("t_over_tc", "C_nn")
    return Table(cols, np.column_stack([t, photocount_autocorrelation(m, t)])), _resolved(cfg, extra), None


def _cmd_simulate(config, seed):
    cfg, extra = _split(_require(config), "simulate")
    sim = dict(extra.get("simulation", {}))
    bad = set(sim) - _SIMULATION_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in 'simulation': {sorted(bad)}")
    sim.setdefault("realizations", 1000)
    sim.setdefault("points_per_tc", 20)
    sim.setdefault("min_points", 200)
    if seed < 0 or seed >= 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    m = model_from_config(cfg)
    res = run_quadrature_oracle(m, int(sim["realizations"]), seed, points_per_tc=int(sim["points_per_tc"]),
                                min_points=int(sim["min_points"]))
    cols = ("nb", "nb2", "var_nb", "delta_b2", "stderr", "delta_b2_analytic", "zscore", "realizations")
    rows = [[res.mean_n, res.mean_n2, res.variance, res.delta2, res.stderr, res.analytic, res.zscore,
             res.realizations]]
    resolved = _resolve_model(cfg)
    resolved["simulation"] = sim
    return Table(cols, rows), resolved, seed


def _cmd_fit(config):
    fit = _require(config)
    if set(fit) != {"fit"}:
        raise ConfigError("fit config takes a single 'fit' section")
    opts = dict(fit["fit"])
    bad = set(opts) - _FIT_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in 'fit': {sorted(bad)}")
    if "data" not in opts or opts.get("model") not in ("ase", "autocorrelation"):
        raise ConfigError("fit needs 'data' (CSV path) and 'model' ('ase' or 'autocorrelation')")
    curve = NoiseCurve.from_csv(opts["data"])
    kw = {k: opts[k] for k in opts if k not in ("data", "model")}
    if opts["model"] == "ase":
        if "fit_x" in kw:
            raise ConfigError("'fit_x' applies to the autocorrelation model only")
        if "x" not in kw:
            raise ConfigError("the ase model needs the gain 'x'")
        res = fit_ase_variance(curve, **kw)
    else:
        if "a" in kw or "eta" in kw:
            raise ConfigError("'a' and 'eta' apply to the ase model only")
        res = fit_autocorrelation(curve, **kw)
    names = list(res.names)
    sd = res.stderr()
    cols = tuple(names) + tuple(f"sd_{n}" for n in names) + ("residual", "iterations", "converged",
                                                             "ill_conditioned")
    rows = [[res.params[n] for n in names] + [sd[n] for n in names]
            + [res.residual, res.iterations, float(res.converged), float(res.ill_conditioned)]]
    return Table(cols, rows), {"fit": opts}, None, res


def _cmd_figures(fig_id):
    table, spec = figure_table(fig_id)
    resolved = {"figure": fig_id, "caption": spec.caption, "artifact_choices": spec.choices}
    return table, resolved, None


# --- output --------------------------------------------------------------------------------


def _render(table: Table, fmt: str) -> str:
    if not np.all(np.isfinite(table.rows)):
        bad = np.argwhere(~np.isfinite(table.rows))[0]
        raise NumericalFailure(f"non-finite value in row {bad[0]}, column {table.columns[bad[1]]!r}")
    if fmt == "json":
        return json.dumps({"columns": list(table.columns), "rows": table.rows.tolist()}, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def _execute(args) -> tuple[list[Path], list[str]]:
    config = load_config(args.config) if args.config is not None else None
    extra_outputs = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.command == "figures":
            if config is not None:
                raise UsageError("figures takes no --config; parameters come from the registry")
            table, resolved, seed = _cmd_figures(args.fig_id)
            stem = args.fig_id
        elif args.command == "simulate":
            table, resolved, seed = _cmd_simulate(config, args.seed)
            stem = "simulate"
        elif args.command == "fit":
            table, resolved, seed, res = _cmd_fit(config)
            stem = "fit"
            extra_outputs[f"{stem}.result.json"] = res.to_json() + "\n"
        else:
            fn = {"coeffs": _cmd_coeffs, "corr": _cmd_corr, "variance": _cmd_variance,
                  "autocorr": _cmd_autocorr}[args.command]
            table, resolved, seed = fn(config)
            stem = args.command
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    text = _render(table, args.format)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = []
    name = f"{stem}.{args.format}"
    (out / name).write_text(text)
    written.append(name)
    for fname, body in extra_outputs.items():
        (out / fname).write_text(body)
        written.append(fname)
    manifest = RunManifest(args.command, resolved, written, seed, notes)
    (out / f"{stem}.manifest.json").write_text(manifest.dumps())
    return [out / n for n in written], notes


def run(argv=None) -> int:
    """Run the CLI on ``argv`` and return the exit code."""
    try:
        args = _parser().parse_args(argv)
        paths, notes = _execute(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (NumericalFailure, FitFailed, PrecisionNotReached, SynthesisError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (SpecklampError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    for p in paths:
        print(p)
    return 0


def main(argv=None) -> None:
    raise SystemExit(run(argv))
