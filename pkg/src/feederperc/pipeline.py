"""End-to-end steps shared by the command-line tools.

Live mode simulates panels on a feeder and analyses them; replay mode reads
the reference percolation thresholds bundled with the package instead.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .corrnet import CorrelationNetwork, correlation_matrix, threshold_network
from .feeder import FeederModel
from .netmetrics import NetworkMetrics, metrics
from .percolation import DEFAULT_TRIALS, PercolationResult, bond_percolation
from .powerflow import TimeSeriesPanel, WeatherSample, run_timeseries
from .rfimportance import FeatureTable, read_feature_table
from .scenario import (
    CASES,
    PV_FRACTIONS,
    ScenarioSpec,
    apply_scenario,
    combination_spec,
    combinations_table,
    graph_name,
    parse_graph_name,
)

SWEEP_FRACTIONS = tuple(f for f in PV_FRACTIONS if f > 0)


def data_path(name: str) -> Path:
    return Path(str(resources.files("feederperc") / "data" / name))


@lru_cache(maxsize=1)
def bundled_source_nodes() -> dict:
    return json.loads(data_path("source_nodes.json").read_text())


def bundled_table(name: str) -> FeatureTable:
    """``table3`` (cases) or ``table4`` (combinations)."""
    if name not in ("table3", "table4"):
        raise ValueError(f"unknown bundled table {name!r}")
    return read_feature_table(data_path(f"{name}.csv"))


def slug(name: str) -> str:
    return name.replace("%", "").replace("-", "__")


def simulate(
    feeder: FeederModel,
    spec: ScenarioSpec,
    steps: int = 96,
    weather: Sequence[WeatherSample] | None = None,
) -> TimeSeriesPanel:
    model = apply_scenario(feeder, spec, strict_meters=spec.label is None)
    return run_timeseries(model, weather=weather, steps=steps)


@dataclass
class Analysis:
    name: str
    network: CorrelationNetwork
    metrics: NetworkMetrics
    percolation: PercolationResult


def analyze(
    a: TimeSeriesPanel,
    b: TimeSeriesPanel,
    name: str,
    threshold: float = 0.0,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    workers: int = 1,
) -> Analysis:
    g = threshold_network(correlation_matrix(a, b), threshold, provenance=name)
    res = bond_percolation(g, trials, seed, workers=workers)
    return Analysis(name, g, metrics(g), res)


def source_meters(panel: TimeSeriesPanel, tol: float = 1e-6) -> list[int]:
    """Meters that export power (negative incoming power) at some timestep."""
    return [n for n, row in zip(panel.node_ids, panel.values) if np.min(row) < -tol]


# -- sweeps ---------------------------------------------------------------------


@dataclass
class SweepRow:
    name: str
    key: str  # case or combination label
    pv_pct: int
    rho_c: float
    analysis: Analysis | None = None


@dataclass
class SweepOutcome:
    rows: list[SweepRow]
    source_nodes: list[int] = field(default_factory=list)


def sweep_case_live(feeder: FeederModel, case: str, steps: int = 96, **kw) -> SweepOutcome:
    base_spec = ScenarioSpec(case, 0.0, seed=kw.get("seed", 0))
    base = simulate(feeder, base_spec, steps)
    rows, sources = [], set()
    for frac in SWEEP_FRACTIONS:
        spec = ScenarioSpec(case, frac, seed=base_spec.seed)
        panel = simulate(feeder, spec, steps)
        sources.update(source_meters(panel))
        name = graph_name(base_spec, spec)
        an = analyze(base, panel, name, **kw)
        rows.append(SweepRow(name, case, spec.pct, an.percolation.rho_c, an))
    return SweepOutcome(rows, sorted(sources))


def sweep_combinations_live(feeder: FeederModel, steps: int = 96, **kw) -> SweepOutcome:
    base_spec = ScenarioSpec("P", 0.4, seed=kw.get("seed", 0))
    base = simulate(feeder, base_spec, steps)
    rows, sources = [], set()
    for c in combinations_table():
        spec = combination_spec(c.label, seed=base_spec.seed)
        panel = simulate(feeder, spec, steps)
        sources.update(source_meters(panel))
        name = graph_name(base_spec, spec)
        an = analyze(base, panel, name, **kw)
        rows.append(SweepRow(name, c.label, 40, an.percolation.rho_c, an))
    return SweepOutcome(rows, sorted(sources))


def _replay_rows(table: FeatureTable) -> list[SweepRow]:
    rows = []
    for name, pt in zip(table.labels, table.y):
        _, right = parse_graph_name(name)
        if right.startswith("C"):
            rows.append(SweepRow(name, right, 40, float(pt)))
        else:
            case, _, pct = right.partition("_")
            rows.append(SweepRow(name, case, int(pct.rstrip("%")), float(pt)))
    return rows


def sweep_case_replay(case: str) -> SweepOutcome:
    rows = [r for r in _replay_rows(bundled_table("table3")) if r.key == case]
    return SweepOutcome(sorted(rows, key=lambda r: r.pv_pct), bundled_source_nodes()["source_nodes"])


def sweep_combinations_replay() -> SweepOutcome:
    return SweepOutcome(_replay_rows(bundled_table("table4")), bundled_source_nodes()["source_nodes"])


# -- summaries ------------------------------------------------------------------


def trend(values: Sequence[float]) -> str:
    diffs = np.diff(np.asarray(values, dtype=float))
    if len(diffs) == 0 or np.all(diffs == 0):
        return "flat"
    if np.all(diffs >= 0):
        return "non-decreasing"
    if np.all(diffs <= 0):
        return "non-increasing"
    return "mixed"


def hosting_capacity(rows: Sequence[SweepRow]) -> int:
    """Highest PV percentage reached before the threshold first drops."""
    rows = sorted(rows, key=lambda r: r.pv_pct)
    cap = rows[0].pv_pct
    for prev, cur in zip(rows, rows[1:]):
        if cur.rho_c < prev.rho_c:
            break
        cap = cur.pv_pct
    return cap


def critical_nodes(rows: Sequence[SweepRow], k: int = 3) -> list[int]:
    """PV nodes shared by the ``k`` weakest placements and absent from every above-median one."""
    nodes = {c.label: set(c.nodes) for c in combinations_table()}
    ranked = sorted(rows, key=lambda r: (r.rho_c, r.key))
    weakest = [r.key for r in ranked[:k]]
    median = float(np.median([r.rho_c for r in rows]))
    strong = [r.key for r in rows if r.rho_c > median]
    common = set.intersection(*(nodes[w] for w in weakest))
    for s in strong:
        common -= nodes[s]
    return sorted(common)


def case_summary(case: str, out: SweepOutcome) -> dict:
    rows = sorted(out.rows, key=lambda r: r.pv_pct)
    return {
        "case": case,
        "pv_pct": [r.pv_pct for r in rows],
        "rho_c": [r.rho_c for r in rows],
        "trend": trend([r.rho_c for r in rows]),
        "hosting_capacity_pct": hosting_capacity(rows),
        "source_nodes": list(out.source_nodes),
    }


def combination_summary(out: SweepOutcome) -> dict:
    rows = out.rows
    # first occurrence wins on ties, in table order
    best = max(rows, key=lambda r: r.rho_c)
    worst = min(rows, key=lambda r: r.rho_c)
    return {
        "argmax": best.key,
        "max_rho_c": best.rho_c,
        "argmin": worst.key,
        "min_rho_c": worst.rho_c,
        "ranking": [r.key for r in sorted(rows, key=lambda r: (-r.rho_c, int(r.key[1:])))],
        "critical_nodes": critical_nodes(rows),
        "source_nodes": list(out.source_nodes),
    }


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path, combination: bool) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if combination:
            w.writerow(["combination", "rho_c"])
            for r in rows:
                w.writerow([r.key, f"{r.rho_c:.9g}"])
        else:
            w.writerow(["case", "pv_pct", "rho_c"])
            for r in sorted(rows, key=lambda r: (CASES.index(r.key), r.pv_pct)):
                w.writerow([r.key, r.pv_pct, f"{r.rho_c:.9g}"])


def feature_table(analyses: Sequence[Analysis]) -> FeatureTable | None:
    """Feature rows from live analyses; ``None`` if any metric is undefined."""
    X, y, labels = [], [], []
    for a in analyses:
        row = a.metrics.as_row()
        vals = [row[f] for f in ("AD", "CC", "MD", "AC", "PLF")]
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vals):
            return None
        X.append(vals)
        y.append(a.percolation.rho_c)
        labels.append(a.name)
    return FeatureTable(np.array(X, dtype=float), np.array(y), labels)
