"""Command-line front end: ``feederperc <command> [options]``.

Exit codes: 0 success, 1 configuration/input error, 2 numerical failure.
Errors are also written to stderr as a one-line JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .corrnet import write_network
from .feeder import FeederError, resolve_feeder
from .netmetrics import write_metrics_csv
from .percolation import DEFAULT_TRIALS, write_curve, write_result
from .pipeline import (
    Analysis,
    analyze,
    bundled_table,
    case_summary,
    combination_summary,
    feature_table,
    simulate,
    slug,
    sweep_case_live,
    sweep_case_replay,
    sweep_combinations_live,
    sweep_combinations_replay,
    write_sweep_csv,
)
from .powerflow import PanelError, PowerFlowError, read_panel, read_weather, write_panel
from .rfimportance import (
    DEFAULT_MIN_LEAF,
    DEFAULT_MTRY,
    DEFAULT_TREES,
    FeatureTableError,
    importance,
    read_feature_table,
    train_forest,
    write_feature_table,
    write_report,
)
from .scenario import CASES, ScenarioError, ScenarioSpec, combination_spec, graph_name, load_scenario

log = logging.getLogger("feederperc")

DEFAULTS: dict[str, Any] = {
    "feeder": "synth123",
    "case": "P",
    "pv_pct": 0,
    "combination": None,
    "scenario": None,
    "threshold": 0.0,
    "trials": DEFAULT_TRIALS,
    "seed": 0,
    "out": "out",
    "replay": False,
    "steps": 96,
    "weather": None,
    "workers": 1,
    "panels": None,
    "name": None,
    "table": None,
    "trees": DEFAULT_TREES,
    "mtry": DEFAULT_MTRY,
    "min_leaf": DEFAULT_MIN_LEAF,
    "mode": "mdi",
    "node_map": None,
}


class ConfigError(ValueError):
    pass


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    cfg: dict[str, Any] = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{args.config}: unknown key(s) {sorted(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = val
    if int(cfg["trials"]) < 1:
        raise ConfigError("trials must be >= 1")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def _config_hash(cfg: dict[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out}: {exc.strerror}") from None
    return out


def _scenario(cfg) -> ScenarioSpec:
    if cfg["scenario"]:
        return load_scenario(cfg["scenario"])
    if cfg["combination"]:
        return combination_spec(cfg["combination"], case=cfg["case"], seed=int(cfg["seed"]))
    return ScenarioSpec(cfg["case"], float(cfg["pv_pct"]) / 100.0, seed=int(cfg["seed"]))


def _weather(cfg):
    return read_weather(cfg["weather"]) if cfg["weather"] else None


def _panel_name(spec: ScenarioSpec) -> str:
    return f"panel_{spec.label}.csv" if spec.label else f"panel_{spec.case}_{spec.pct}.csv"


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _manifest(out: Path, cfg: dict, command: str) -> None:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(out))] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg) if k not in ("out",)},
        "config_hash": _config_hash({k: v for k, v in cfg.items() if k != "out"}),
        "master_seed": int(cfg["seed"]),
        "versions": {
            "feederperc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _write_analysis(out: Path, an: Analysis) -> None:
    s = slug(an.name)
    (out / "curves").mkdir(exist_ok=True)
    (out / "networks").mkdir(exist_ok=True)
    write_curve(an.percolation, out / "curves" / f"curve_{s}.csv")
    write_result(an.percolation, out / "curves" / f"result_{s}.json")
    write_network(an.network, out / "networks" / f"network_{s}.edges")


# -- commands ---------------------------------------------------------------------


def cmd_simulate(cfg) -> int:
    feeder = resolve_feeder(cfg["feeder"])
    spec = _scenario(cfg)
    panel = simulate(feeder, spec, int(cfg["steps"]), _weather(cfg))
    out = _out_dir(cfg)
    path = out / _panel_name(spec)
    write_panel(panel, path)
    _emit({"panel": str(path), "nodes": len(panel.node_ids), "steps": len(panel.times)})
    return 0


def cmd_analyze(cfg) -> int:
    kw = dict(threshold=float(cfg["threshold"]), trials=int(cfg["trials"]), seed=int(cfg["seed"]),
              workers=int(cfg["workers"]))
    if cfg["panels"]:
        if len(cfg["panels"]) != 2:
            raise ConfigError("--panels needs exactly two CSV files")
        a, b = (read_panel(p) for p in cfg["panels"])
        name = cfg["name"] or f"{Path(cfg['panels'][0]).stem}-{Path(cfg['panels'][1]).stem}"
    else:
        feeder = resolve_feeder(cfg["feeder"])
        spec = _scenario(cfg)
        base = ScenarioSpec("P", 0.4, seed=spec.seed) if spec.label else ScenarioSpec(spec.case, 0.0, seed=spec.seed)
        a = simulate(feeder, base, int(cfg["steps"]), _weather(cfg))
        b = simulate(feeder, spec, int(cfg["steps"]), _weather(cfg))
        name = cfg["name"] or graph_name(base, spec)
    an = analyze(a, b, name, **kw)
    out = _out_dir(cfg)
    write_metrics_csv([(an.name, an.metrics, an.percolation.rho_c)], out / "metrics.csv")
    _write_analysis(out, an)
    _manifest(out, cfg, "analyze")
    _emit({"graph": name, "rho_c": an.percolation.rho_c, "n_edges": an.network.n_edges})
    return 0


def _sweep(cfg, out: Path, combo: bool, cases: list[str]) -> dict:
    kw = dict(threshold=float(cfg["threshold"]), trials=int(cfg["trials"]), seed=int(cfg["seed"]),
              workers=int(cfg["workers"]))
    summary: dict[str, Any] = {"mode": "replay" if cfg["replay"] else "live"}
    analyses: list[Analysis] = []
    if combo:
        res = sweep_combinations_replay() if cfg["replay"] else sweep_combinations_live(
            resolve_feeder(cfg["feeder"]), int(cfg["steps"]), **kw)
        write_sweep_csv(res.rows, out / "sweep_combinations.csv", combination=True)
        summary["combinations"] = combination_summary(res)
        analyses += [r.analysis for r in res.rows if r.analysis]
    if cases:
        rows, summary["cases"] = [], {}
        feeder = None if cfg["replay"] else resolve_feeder(cfg["feeder"])
        for case in cases:
            res = sweep_case_replay(case) if cfg["replay"] else sweep_case_live(
                feeder, case, int(cfg["steps"]), **kw)
            rows += res.rows
            summary["cases"][case] = case_summary(case, res)
            analyses += [r.analysis for r in res.rows if r.analysis]
        write_sweep_csv(rows, out / "sweep_cases.csv", combination=False)
    if analyses:
        write_metrics_csv([(a.name, a.metrics, a.percolation.rho_c) for a in analyses], out / "metrics.csv")
        for a in analyses:
            _write_analysis(out, a)
    summary["_analyses"] = analyses
    return summary


def _sweep_targets(cfg) -> tuple[bool, list[str]]:
    combo = cfg["combination"] == "all"
    if cfg["combination"] and not combo:
        raise ConfigError("sweep takes --combination all")
    case = cfg["case"]
    if combo:
        return True, []
    if case == "all":
        return False, list(CASES)
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}")
    return False, [case]


def cmd_sweep(cfg) -> int:
    combo, cases = _sweep_targets(cfg)
    out = _out_dir(cfg)
    summary = _sweep(cfg, out, combo, cases)
    summary.pop("_analyses")
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _manifest(out, cfg, "sweep")
    _emit(summary)
    return 0


def _load_table(spec: str):
    if spec in ("table3", "table4"):
        return bundled_table(spec)
    return read_feature_table(spec)


def cmd_importance(cfg) -> int:
    if not cfg["table"]:
        raise ConfigError("importance needs --table (a CSV path, or table3/table4 for the bundled data)")
    table = _load_table(cfg["table"])
    forest = train_forest(table, int(cfg["trees"]), int(cfg["min_leaf"]), int(cfg["mtry"]),
                          int(cfg["seed"]), workers=int(cfg["workers"]))
    rep = importance(forest, mode=cfg["mode"])
    out = _out_dir(cfg)
    write_report(rep, out / "importance.json")
    _emit(rep.to_dict())
    return 0


def cmd_ingest(cfg) -> int:
    if not cfg["panels"] or len(cfg["panels"]) != 1:
        raise ConfigError("ingest takes exactly one panel CSV")
    node_map = None
    if cfg["node_map"]:
        node_map = {}
        for line in Path(cfg["node_map"]).read_text().splitlines():
            if line.strip() and not line.startswith("label"):
                label, nid = line.split(",")
                node_map[label.strip()] = int(nid)
    panel = read_panel(cfg["panels"][0], node_map)
    out = _out_dir(cfg)
    path = out / f"ingested_{Path(cfg['panels'][0]).stem}.csv"
    write_panel(panel, path)
    _emit({"panel": str(path), "nodes": len(panel.node_ids), "steps": len(panel.times),
           "node_ids": list(panel.node_ids)})
    return 0


def cmd_report(cfg) -> int:
    out = _out_dir(cfg)
    summary = _sweep(cfg, out, True, list(CASES))
    analyses = summary.pop("_analyses")
    summary["importance"] = {}
    if cfg["replay"]:
        tables = {"cases": bundled_table("table3"), "combinations": bundled_table("table4")}
    else:
        case_rows = [a for a in analyses if not a.name.startswith("P_40%-C")]
        combo_rows = [a for a in analyses if a.name.startswith("P_40%-C")]
        tables = {"cases": feature_table(case_rows), "combinations": feature_table(combo_rows)}
    for key, table in tables.items():
        if table is None:
            summary["importance"][key] = {"skipped": "undefined network metrics in feature rows"}
            continue
        write_feature_table(table, out / f"features_{key}.csv")
        forest = train_forest(table, int(cfg["trees"]), int(cfg["min_leaf"]), int(cfg["mtry"]),
                              int(cfg["seed"]), workers=int(cfg["workers"]))
        rep = importance(forest, mode=cfg["mode"])
        write_report(rep, out / f"importance_{key}.json")
        summary["importance"][key] = {"order": rep.to_dict()["order"]}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _manifest(out, cfg, "report")
    _emit(summary)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "importance": cmd_importance,
    "ingest": cmd_ingest,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; explicit flags take precedence")
    common.add_argument("--feeder", help="built-in feeder name or feeder JSON path (default synth123)")
    common.add_argument("--case", help="P, HC, HR, IB (sweep also accepts 'all')")
    common.add_argument("--pv-pct", dest="pv_pct", type=int, help="PV penetration in percent of meters")
    common.add_argument("--combination", help="placement label C1..C15 ('all' for sweep)")
    common.add_argument("--scenario", help="scenario JSON file")
    common.add_argument("--threshold", type=float, help="correlation threshold T (default 0)")
    common.add_argument("--trials", type=int, help=f"percolation trials Q (default {DEFAULT_TRIALS})")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--replay", action="store_true", default=None,
                        help="use the bundled reference thresholds instead of simulating")
    common.add_argument("--steps", type=int, help="timesteps per day (default 96)")
    common.add_argument("--weather", help="weather CSV (time,irradiance_wm2,temp_c)")
    common.add_argument("--workers", type=int, help="worker processes (default 1)")
    common.add_argument("--panels", nargs="+", help="panel CSV file(s)")
    common.add_argument("--name", help="graph name for analyze with --panels")
    common.add_argument("--table", help="feature table CSV, or table3/table4")
    common.add_argument("--trees", type=int)
    common.add_argument("--mtry", type=int)
    common.add_argument("--min-leaf", dest="min_leaf", type=int)
    common.add_argument("--mode", choices=["mdi", "permutation"])
    common.add_argument("--node-map", dest="node_map", help="CSV label,node_id for ingest")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="feederperc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate one scenario and write its meter panel CSV",
        "analyze": "correlate two panels, compute network metrics and percolation threshold",
        "sweep": "percolation threshold across PV levels or placement combinations",
        "importance": "random-forest feature importance of metrics for the threshold",
        "ingest": "validate an externally produced panel CSV",
        "report": "full bundle: all sweeps, importance and a run manifest",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return p


def _fail(exc: BaseException, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    step = getattr(exc, "step", None)
    if step is not None:
        err["timestep"] = step
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _settings(args)
        return COMMANDS[args.command](cfg)
    except PowerFlowError as exc:
        return _fail(exc, 2)
    except (ConfigError, FeederError, ScenarioError, PanelError, FeatureTableError, KeyError, ValueError,
            OSError) as exc:
        return _fail(exc, 1)
    except (FloatingPointError, ArithmeticError) as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
