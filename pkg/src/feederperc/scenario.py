"""Operating cases, PV penetration levels and placement combinations."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .feeder import FeederModel, PvSpec

log = logging.getLogger(__name__)

CASES = ("P", "HC", "HR", "IB")
PV_FRACTIONS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
N_METERS = 40

DEFAULT_HC_FACTOR = 1.5
DEFAULT_DELTA_IB = 0.3
HR_RESISTANCE = 2.0


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    case: str = "P"
    pv_fraction: float = 0.0
    pv_nodes: tuple[int, ...] | None = None
    seed: int = 0
    hc_factor: float = DEFAULT_HC_FACTOR
    delta_ib: float = DEFAULT_DELTA_IB
    label: str | None = None  # combination label when pv_nodes come from the table

    def __post_init__(self) -> None:
        if self.case not in CASES:
            raise ScenarioError(f"unknown case {self.case!r}; expected one of {CASES}")
        if not any(math.isclose(self.pv_fraction, f) for f in PV_FRACTIONS):
            raise ScenarioError(f"pv_fraction must be one of {PV_FRACTIONS}, got {self.pv_fraction}")
        if self.pv_nodes is not None:
            object.__setattr__(self, "pv_nodes", tuple(int(n) for n in self.pv_nodes))
            want = round(self.pv_fraction * N_METERS)
            if len(self.pv_nodes) != want:
                raise ScenarioError(
                    f"{len(self.pv_nodes)} PV nodes given but pv_fraction {self.pv_fraction} needs {want}"
                )
        if not self.hc_factor > 0:
            raise ScenarioError("hc_factor must be positive")
        if not 0 <= self.delta_ib < 1:
            raise ScenarioError("delta_ib must lie in [0, 1)")

    @property
    def pct(self) -> int:
        return round(self.pv_fraction * 100)

    @property
    def tag(self) -> str:
        """Short name like ``P_40%`` or ``C5``."""
        return self.label or f"{self.case}_{self.pct}%"


@dataclass(frozen=True)
class Combination:
    label: str
    nodes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) != 16:
            raise ScenarioError(f"{self.label}: expected 16 nodes, got {len(self.nodes)}")


def _ib_factors(n: int, seed: int, delta: float) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1B]))
    return 1.0 + delta * (2.0 * rng.random(n) - 1.0)


def apply_scenario(
    base: FeederModel, spec: ScenarioSpec, pv: PvSpec | None = None, strict_meters: bool = True
) -> FeederModel:
    """Return ``base`` transformed to the requested case with PV attached.

    Topology never changes. ``strict_meters=False`` lets an explicit PV node
    list name a non-meter bus (logged), which the bundled placement table
    needs for one of its nodes.
    """
    pv = pv or PvSpec()
    swing = base.swing.id
    meters = base.meter_ids
    meter_set = set(meters)
    bus_set = set(base.bus_ids)

    if spec.pv_nodes is not None:
        nodes = []
        for n in spec.pv_nodes:
            if n == swing:
                raise ScenarioError(f"PV node {n} is the swing bus")
            if n not in bus_set:
                raise ScenarioError(f"PV node {n} is not a bus of feeder {base.name!r}")
            if n not in meter_set:
                if strict_meters:
                    raise ScenarioError(f"PV node {n} is not a meter bus")
                log.warning("PV node %d is not a meter bus; attaching anyway", n)
            if n in nodes:
                log.warning("PV node %d listed twice in %s; attaching once", n, spec.tag)
                continue
            nodes.append(n)
        pv_nodes = set(nodes)
    else:
        pv_nodes = set(meters[: math.ceil(round(spec.pv_fraction * len(meters), 9))])

    lines = base.lines
    if spec.case == "HR":
        lines = tuple(replace(ln, resistance=HR_RESISTANCE) if ln.overhead else ln for ln in lines)

    loaded = [b.id for b in base.buses if b.load is not None]
    ib = dict(zip(loaded, _ib_factors(len(loaded), spec.seed, spec.delta_ib)))

    buses = []
    for b in base.buses:
        load = b.load
        if load is not None and spec.case == "HC":
            load = replace(load, base_p=load.base_p * spec.hc_factor, base_q=load.base_q * spec.hc_factor)
        elif load is not None and spec.case == "IB":
            load = replace(load, scale=load.scale * float(ib[b.id]))
        buses.append(replace(b, load=load, pv=pv if b.id in pv_nodes else b.pv))
    if spec.case == "P" and not pv_nodes:
        return base
    return replace(base, buses=tuple(buses), lines=lines)


@lru_cache(maxsize=1)
def _table() -> dict:
    ref = resources.files("feederperc") / "data" / "combinations.json"
    return json.loads(ref.read_text())


def combinations_table() -> list[Combination]:
    """The fifteen 40% placements C1..C15, exactly as bundled."""
    data = _table()["combinations"]
    return [Combination(k, tuple(v)) for k, v in data.items()]


def combination(label: str) -> Combination:
    for c in combinations_table():
        if c.label == label:
            return c
    raise ScenarioError(f"unknown combination {label!r}")


def combination_spec(label: str, case: str = "P", seed: int = 0) -> ScenarioSpec:
    c = combination(label)
    return ScenarioSpec(case=case, pv_fraction=0.4, pv_nodes=c.nodes, seed=seed, label=c.label)


def graph_name(a: ScenarioSpec, b: ScenarioSpec) -> str:
    """Pair name such as ``P_0%-HC_0%`` or ``P_40%-C5``."""
    return f"{a.tag}-{b.tag}"


def parse_graph_name(name: str) -> tuple[str, str]:
    left, _, right = name.partition("-")
    if not right:
        raise ScenarioError(f"malformed graph name {name!r}")
    return left, right


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Scenario JSON: ``case``, ``pv_fraction``, optional ``pv_nodes``/``combination``, ``seed``."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected an object")
    unknown = set(data) - {"case", "pv_fraction", "pv_nodes", "seed", "hc_factor", "delta_ib", "combination"}
    if unknown:
        raise ScenarioError(f"{path}: unknown field(s) {sorted(unknown)}")
    kw = {k: data[k] for k in ("case", "pv_fraction", "seed", "hc_factor", "delta_ib") if k in data}
    nodes: Sequence[int] | None = data.get("pv_nodes")
    label = None
    if "combination" in data:
        combo = data["combination"]
        if isinstance(combo, str):
            c = combination(combo)
            nodes, label = c.nodes, c.label
        else:
            nodes = combo
        kw.setdefault("pv_fraction", 0.4)
    try:
        return ScenarioSpec(pv_nodes=tuple(nodes) if nodes is not None else None, label=label, **kw)
    except TypeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
