"""Radial feeder model: buses, lines, loads and PV units.

A :class:`FeederModel` is a single-phase positive-sequence equivalent of a
distribution feeder. Models are immutable once validated and can be shared
freely between worker processes.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

BUS_KINDS = ("swing", "load", "junction")

# Rated PV output at standard test conditions (1000 W/m^2, 25 degC).
PV_RATED_KW = 30.0
PV_RATED_IRRADIANCE = 1000.0
PV_RATED_TEMP = 25.0


class FeederError(ValueError):
    """Base class for feeder parse and validation failures."""


class FeederParseError(FeederError):
    pass


class FeederValidationError(FeederError):
    pass


@dataclass(frozen=True)
class LoadSpec:
    base_p: float
    base_q: float
    profile_id: str
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not self.base_p >= 0:
            raise FeederValidationError(f"load base_p must be >= 0, got {self.base_p}")
        if not self.scale > 0:
            raise FeederValidationError(f"load scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class PvSpec:
    """Linear irradiance/temperature PV model with reactive bounds.

    Output in kW is ``alpha1*S + alpha2*T + alpha3*S*T`` (S in W/m^2, T in
    degC), clamped at zero. The defaults give 30 kW at 1000 W/m^2 and 25 degC.
    """

    alpha1: float = 0.0315
    alpha2: float = 0.0
    alpha3: float = -0.00006
    q_lb: float = -10.0
    q_ub: float = 10.0

    def __post_init__(self) -> None:
        if self.q_lb > self.q_ub:
            raise FeederValidationError(f"PV q_lb {self.q_lb} exceeds q_ub {self.q_ub}")

    @property
    def rated_kw(self) -> float:
        s, t = PV_RATED_IRRADIANCE, PV_RATED_TEMP
        return self.alpha1 * s + self.alpha2 * t + self.alpha3 * s * t


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    load: LoadSpec | None = None
    pv: PvSpec | None = None
    is_meter: bool = False

    def __post_init__(self) -> None:
        if self.kind not in BUS_KINDS:
            raise FeederValidationError(f"bus {self.id}: unknown kind {self.kind!r}")
        if self.kind == "load" and self.load is None:
            raise FeederValidationError(f"bus {self.id}: kind=load requires a load spec")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float = 0.0
    status: int = 1
    overhead: bool = True

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise FeederValidationError(f"line {self.from_bus}-{self.to_bus}: from == to")
        if not (self.resistance > 0 and math.isfinite(self.resistance)):
            raise FeederValidationError(
                f"line {self.from_bus}-{self.to_bus}: resistance must be > 0, got {self.resistance}"
            )
        if not (self.reactance >= 0 and math.isfinite(self.reactance)):
            raise FeederValidationError(
                f"line {self.from_bus}-{self.to_bus}: reactance must be >= 0, got {self.reactance}"
            )
        if self.status not in (0, 1):
            raise FeederValidationError(f"line {self.from_bus}-{self.to_bus}: status must be 0 or 1")

    @property
    def impedance(self) -> complex:
        return complex(self.resistance, self.reactance)


@dataclass(frozen=True)
class FeederModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    v_lb: float = 0.95
    v_ub: float = 1.05
    base_kv: float = 4.16
    s_base_kva: float = 1000.0
    name: str = ""
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "_index", {b.id: b for b in self.buses})
        validate(self)

    def bus(self, bus_id: int) -> Bus:
        return self._index[bus_id]

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def swing(self) -> Bus:
        return next(b for b in self.buses if b.kind == "swing")

    @property
    def meter_ids(self) -> list[int]:
        """Meter bus ids in canonical (ascending) order."""
        return sorted(b.id for b in self.buses if b.is_meter)

    @property
    def active_lines(self) -> list[Line]:
        return [ln for ln in self.lines if ln.status == 1]

    @property
    def z_base(self) -> float:
        return self.base_kv**2 * 1000.0 / self.s_base_kva


def _adjacency(model: FeederModel) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {b.id: [] for b in model.buses}
    for ln in model.active_lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    return adj


def validate(model: FeederModel) -> None:
    """Check the structural invariants, raising FeederValidationError on the first failure."""
    ids = [b.id for b in model.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise FeederValidationError(f"duplicate bus id(s) {dup}")
    swings = [b.id for b in model.buses if b.kind == "swing"]
    if len(swings) > 1:
        raise FeederValidationError(f"multiple swing buses {swings}")
    if not swings:
        raise FeederValidationError("no swing bus")
    if not model.v_lb < model.v_ub:
        raise FeederValidationError(f"v_lb {model.v_lb} must be below v_ub {model.v_ub}")
    if not model.base_kv > 0 or not model.s_base_kva > 0:
        raise FeederValidationError("base_kv and s_base_kva must be positive")
    idset = set(ids)
    for ln in model.lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in idset:
                raise FeederValidationError(f"line {ln.from_bus}-{ln.to_bus} references unknown bus {end}")
    adj = _adjacency(model)
    seen = {swings[0]}
    queue = deque([swings[0]])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    missing = sorted(idset - seen)
    if missing:
        raise FeederValidationError(f"unreachable bus(es) {missing}")
    n_active = len(model.active_lines)
    if n_active != len(ids) - 1:
        raise FeederValidationError(
            f"feeder is not radial: {n_active} active lines for {len(ids)} buses"
        )


def tree_order(model: FeederModel) -> tuple[list[int], dict[int, int], dict[int, Line]]:
    """Breadth-first order from the swing bus.

    Returns the bus ids in BFS order, a parent map (child -> parent) and the
    line connecting each non-swing bus to its parent.
    """
    by_pair: dict[frozenset, Line] = {}
    for ln in model.active_lines:
        by_pair[frozenset((ln.from_bus, ln.to_bus))] = ln
    adj = _adjacency(model)
    root = model.swing.id
    order = [root]
    parent: dict[int, int] = {}
    upline: dict[int, Line] = {}
    queue = deque([root])
    seen = {root}
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v in seen:
                continue
            seen.add(v)
            parent[v] = u
            upline[v] = by_pair[frozenset((u, v))]
            order.append(v)
            queue.append(v)
    return order, parent, upline


# -- serialization -----------------------------------------------------------


def to_dict(model: FeederModel) -> dict[str, Any]:
    buses = []
    for b in model.buses:
        buses.append(
            {
                "id": b.id,
                "kind": b.kind,
                "is_meter": b.is_meter,
                "load": asdict(b.load) if b.load else None,
                "pv": asdict(b.pv) if b.pv else None,
            }
        )
    lines = [
        {
            "from": ln.from_bus,
            "to": ln.to_bus,
            "resistance": ln.resistance,
            "reactance": ln.reactance,
            "status": ln.status,
            "overhead": ln.overhead,
        }
        for ln in model.lines
    ]
    return {
        "name": model.name,
        "base_kv": model.base_kv,
        "s_base_kva": model.s_base_kva,
        "v_lb": model.v_lb,
        "v_ub": model.v_ub,
        "buses": buses,
        "lines": lines,
    }


def dumps(model: FeederModel) -> str:
    return json.dumps(to_dict(model), indent=1, sort_keys=True)


def save_feeder(model: FeederModel, path: str | Path) -> None:
    Path(path).write_text(dumps(model) + "\n")


def _get(obj: dict, key: str, where: str, kind=float, default=...):
    if key not in obj or obj[key] is None:
        if default is ...:
            raise FeederParseError(f"{where}.{key}: missing")
        return default
    try:
        if kind is bool and not isinstance(obj[key], bool):
            raise TypeError
        return kind(obj[key])
    except (TypeError, ValueError):
        raise FeederParseError(f"{where}.{key}: expected {kind.__name__}, got {obj[key]!r}") from None


def from_dict(data: dict[str, Any]) -> FeederModel:
    if not isinstance(data, dict):
        raise FeederParseError("feeder document must be an object")
    for key in ("buses", "lines"):
        if not isinstance(data.get(key), list):
            raise FeederParseError(f"{key}: missing or not an array")
    buses = []
    for i, raw in enumerate(data["buses"]):
        where = f"buses[{i}]"
        if not isinstance(raw, dict):
            raise FeederParseError(f"{where}: expected an object")
        load = pv = None
        if raw.get("load") is not None:
            lw = f"{where}.load"
            ld = raw["load"]
            load = LoadSpec(
                base_p=_get(ld, "base_p", lw),
                base_q=_get(ld, "base_q", lw, default=0.0),
                profile_id=_get(ld, "profile_id", lw, kind=str),
                scale=_get(ld, "scale", lw, default=1.0),
            )
        if raw.get("pv") is not None:
            pw = f"{where}.pv"
            pd = raw["pv"]
            dflt = PvSpec()
            pv = PvSpec(
                alpha1=_get(pd, "alpha1", pw, default=dflt.alpha1),
                alpha2=_get(pd, "alpha2", pw, default=dflt.alpha2),
                alpha3=_get(pd, "alpha3", pw, default=dflt.alpha3),
                q_lb=_get(pd, "q_lb", pw, default=dflt.q_lb),
                q_ub=_get(pd, "q_ub", pw, default=dflt.q_ub),
            )
        buses.append(
            Bus(
                id=_get(raw, "id", where, kind=int),
                kind=_get(raw, "kind", where, kind=str),
                load=load,
                pv=pv,
                is_meter=_get(raw, "is_meter", where, kind=bool, default=False),
            )
        )
    lines = []
    for i, raw in enumerate(data["lines"]):
        where = f"lines[{i}]"
        if not isinstance(raw, dict):
            raise FeederParseError(f"{where}: expected an object")
        lines.append(
            Line(
                from_bus=_get(raw, "from", where, kind=int),
                to_bus=_get(raw, "to", where, kind=int),
                resistance=_get(raw, "resistance", where),
                reactance=_get(raw, "reactance", where, default=0.0),
                status=_get(raw, "status", where, kind=int, default=1),
                overhead=_get(raw, "overhead", where, kind=bool, default=True),
            )
        )
    return FeederModel(
        buses=tuple(buses),
        lines=tuple(lines),
        v_lb=_get(data, "v_lb", "feeder", default=0.95),
        v_ub=_get(data, "v_ub", "feeder", default=1.05),
        base_kv=_get(data, "base_kv", "feeder", default=4.16),
        s_base_kva=_get(data, "s_base_kva", "feeder", default=1000.0),
        name=_get(data, "name", "feeder", kind=str, default=""),
    )


def loads(text: str) -> FeederModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(data)


def load_feeder(path: str | Path) -> FeederModel:
    """Read and validate a feeder JSON file."""
    path = Path(path)
    if not path.exists():
        raise FeederParseError(f"{path}: no such file")
    return loads(path.read_text())


# -- built-in feeders --------------------------------------------------------

# The bundled placement table references these buses; 195 is kept off the meter list so
# the meter count stays at 40.
SYNTH123_METERS = (
    3, 8, 13, 14, 15, 18, 21, 23, 25, 26, 27, 36, 40, 44, 54, 57, 61, 67, 72, 78,
    81, 87, 89, 91, 93, 97, 101, 105, 108, 110, 135, 149, 151, 152, 160, 197, 250,
    300, 450, 610,
)  # fmt: skip
SYNTH123_SWING = 150
# Meters with no downstream load; they only ever carry PV export.
SYNTH123_EMPTY_METERS = (151, 250, 300, 450)
# Meters with a small load, so PV turns them into net sources around noon.
SYNTH123_LIGHT_METERS = (61, 610)
SYNTH123_PEAK_KW = 3524.557
LOAD_Q_RATIO = 1940.830 / 3524.557

_TRUNK_R, _TRUNK_X = 0.02, 0.015
_OVERHEAD_R, _OVERHEAD_X = 0.036, 0.08


def _synth123() -> FeederModel:
    from .profiles import PROFILE_LIBRARY, resample

    meters = list(SYNTH123_METERS)
    taken = set(meters) | {SYNTH123_SWING, 195}
    pool = [i for i in range(1, 124) if i not in taken]
    n_junctions = 33
    n_lateral = 49
    junctions = pool[:n_junctions]
    laterals = [195] + pool[n_junctions : n_junctions + n_lateral - 1]
    assert len(junctions) + len(laterals) + len(meters) + 1 == 123

    profile_ids = sorted(PROFILE_LIBRARY)
    loaded_meters = [m for m in meters if m not in SYNTH123_EMPTY_METERS + SYNTH123_LIGHT_METERS]

    lines: list[Line] = []
    prev = SYNTH123_SWING
    for j in junctions:
        lines.append(Line(prev, j, _TRUNK_R, _TRUNK_X, overhead=False))
        prev = j

    # raw (uncalibrated) loads: bus id -> (kW, profile id)
    raw: dict[int, tuple[float, str]] = {}
    k = 0

    def add_load(bus_id: int) -> None:
        nonlocal k
        kw = 40.0 + 35.0 * ((7 * k) % 11) / 10.0
        raw[bus_id] = (kw, profile_ids[(5 * k + k // len(profile_ids)) % len(profile_ids)])
        k += 1

    lateral_iter = iter(laterals)
    for i, m in enumerate(meters):
        junction = junctions[(i * n_junctions) // len(meters)]
        lines.append(Line(junction, m, _OVERHEAD_R, _OVERHEAD_X, overhead=True))
        if m not in loaded_meters:
            continue
        add_load(m)
        depth = 2 if loaded_meters.index(m) < 15 else 1
        up = m
        for _ in range(depth):
            lb = next(lateral_iter)
            lines.append(Line(up, lb, _OVERHEAD_R, _OVERHEAD_X, overhead=True))
            add_load(lb)
            up = lb

    steps = 96
    total = sum(kw * resample(PROFILE_LIBRARY[pid], steps) for kw, pid in raw.values())
    light_kw = 12.0
    light_profile = "flat"
    light = len(SYNTH123_LIGHT_METERS) * light_kw * resample(PROFILE_LIBRARY[light_profile], steps)
    # calibrate the coincident peak of all loads to the Table 1 demand
    factor = (SYNTH123_PEAK_KW - light.max()) / total.max()
    for m in SYNTH123_LIGHT_METERS:
        raw[m] = (light_kw / factor, light_profile)

    buses = [Bus(SYNTH123_SWING, "swing")]
    for bid in sorted(set(junctions) | set(laterals) | set(meters)):
        is_meter = bid in SYNTH123_METERS
        if bid in raw:
            kw, pid = raw[bid]
            p = round(kw * factor, 3)
            load = LoadSpec(base_p=p, base_q=round(p * LOAD_Q_RATIO, 3), profile_id=pid)
            buses.append(Bus(bid, "load", load=load, is_meter=is_meter))
        else:
            buses.append(Bus(bid, "junction", is_meter=is_meter))
    return FeederModel(buses=tuple(buses), lines=tuple(lines), name="synth123")


def _twobus() -> FeederModel:
    # 0.01 + j0.02 pu on a 4.16 kV / 1 MVA base
    zb = 4.16**2
    return FeederModel(
        buses=(
            Bus(1, "swing"),
            Bus(2, "load", load=LoadSpec(100.0, 0.0, "flat"), is_meter=True),
        ),
        lines=(Line(1, 2, 0.01 * zb, 0.02 * zb),),
        name="twobus",
    )


BUILTIN_FEEDERS = {"synth123": _synth123, "twobus": _twobus}


def builtin_feeder(name: str) -> FeederModel:
    """Return a registered built-in feeder by name."""
    try:
        factory = BUILTIN_FEEDERS[name]
    except KeyError:
        raise FeederError(
            f"unknown built-in feeder {name!r}; choose from {sorted(BUILTIN_FEEDERS)}"
        ) from None
    return factory()


def resolve_feeder(spec: str) -> FeederModel:
    """Built-in name or path to a feeder file."""
    if spec in BUILTIN_FEEDERS:
        return builtin_feeder(spec)
    return load_feeder(spec)


def attached_loads(model: FeederModel) -> Iterable[Bus]:
    return (b for b in model.buses if b.load is not None)
