"""Quasi-static power flow on radial feeders.

Each snapshot is solved with a backward/forward sweep written in matrix
form: the backward sweep accumulates bus current injections into branch
currents, the forward sweep walks voltage drops down from the swing bus.
Both steps are folded into one bus-to-bus drop matrix built once per model.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .feeder import FeederModel, PvSpec, tree_order
from .profiles import PROFILE_LIBRARY, clear_sky_irradiance, resample

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
DEFAULT_STEPS = 96
DEFAULT_START = "2023-06-21T00:00:00"


class PowerFlowError(RuntimeError):
    """A snapshot in a time series failed to converge."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class PanelError(ValueError):
    pass


@dataclass(frozen=True)
class WeatherSample:
    irradiance: float
    temperature: float = 25.0

    def __post_init__(self) -> None:
        if not self.irradiance >= 0:
            raise ValueError(f"irradiance must be >= 0, got {self.irradiance}")


def pv_output(pv: PvSpec, w: WeatherSample) -> float:
    """Real PV output in kW, clamped at zero and exactly zero without sun."""
    if w.irradiance == 0:
        return 0.0
    s, t = w.irradiance, w.temperature
    return max(0.0, pv.alpha1 * s + pv.alpha2 * t + pv.alpha3 * s * t)


@dataclass(frozen=True)
class SnapshotSolution:
    """Solved operating point of one snapshot.

    Arrays are indexed like ``bus_ids`` (buses) and ``lines`` (line tuples
    ``(m, n)`` oriented from the upstream bus ``m`` to the downstream bus
    ``n``). Powers are in kW / kVAR; flows are measured at the sending end,
    ``p_mn`` leaving ``m`` and ``p_nm`` leaving ``n``.
    """

    bus_ids: tuple[int, ...]
    vm: np.ndarray
    va: np.ndarray
    lines: tuple[tuple[int, int], ...]
    p_mn: np.ndarray
    q_mn: np.ndarray
    p_nm: np.ndarray
    q_nm: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    q_pv: Mapping[int, float]
    converged: bool
    iterations: int
    residual: float

    def index(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)

    def incoming_p(self, bus_id: int) -> float:
        """Real power arriving at ``bus_id`` through its upstream line."""
        for k, (_, n) in enumerate(self.lines):
            if n == bus_id:
                return float(self.p_nm[k] * -1.0)
        raise KeyError(f"bus {bus_id} has no upstream line")

    @property
    def source_p(self) -> float:
        return float(self.p_inj[0])


@dataclass
class _Network:
    bus_ids: tuple[int, ...]
    pos: dict[int, int]
    lines: tuple[tuple[int, int], ...]
    y: np.ndarray  # series admittance per line [pu]
    li: np.ndarray  # upstream bus position per line
    lj: np.ndarray  # downstream bus position per line
    drop: np.ndarray  # (n-1, n-1) voltage-drop matrix [pu]
    s_base: float


@lru_cache(maxsize=32)
def _network(model: FeederModel) -> _Network:
    order, parent, upline = tree_order(model)
    pos = {b: i for i, b in enumerate(order)}
    n = len(order)
    zb = model.z_base
    lines = tuple((parent[b], b) for b in order[1:])
    z = np.array([upline[b].impedance / zb for b in order[1:]], dtype=complex)
    # path[i, k] = 1 if branch k (feeding bus order[k+1]) lies on the path root -> order[i+1]
    path = np.zeros((n - 1, n - 1))
    for i, b in enumerate(order[1:]):
        node = b
        while node != order[0]:
            path[i, pos[node] - 1] = 1.0
            node = parent[node]
    drop = (path * z) @ path.T
    li = np.array([pos[m] for m, _ in lines])
    lj = np.array([pos[k] for _, k in lines])
    return _Network(tuple(order), pos, lines, 1.0 / z, li, lj, drop, model.s_base_kva)


def _flows(net: _Network, v: np.ndarray):
    vm, vn = v[net.li], v[net.lj]
    s_mn = vm * np.conj(net.y * (vm - vn))
    s_nm = vn * np.conj(net.y * (vn - vm))
    return s_mn, s_nm


def _residual(net: _Network, v: np.ndarray, s_inj: np.ndarray) -> tuple[float, np.ndarray]:
    s_mn, s_nm = _flows(net, v)
    out = np.zeros(len(v), dtype=complex)
    np.add.at(out, net.li, s_mn)
    np.add.at(out, net.lj, s_nm)
    mism = s_inj - out
    return float(np.max(np.abs(mism[1:]))) if len(v) > 1 else 0.0, out


def solve_snapshot(
    model: FeederModel,
    loads_t: Mapping[int, complex | tuple[float, float]],
    pv_t: Mapping[int, float] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    q_pv_t: Mapping[int, float] | None = None,
) -> SnapshotSolution:
    """Solve one steady-state snapshot.

    ``loads_t`` maps bus id to consumed power (kW, kVAR) given as a complex
    number or a pair; ``pv_t`` maps bus id to PV real output in kW. ``tol``
    bounds the per-bus power-balance mismatch in pu. A snapshot that does not
    settle within ``max_iter`` sweeps comes back with ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    net = _network(model)
    n = len(net.bus_ids)
    sb = net.s_base
    s_load = np.zeros(n, dtype=complex)
    for b, s in loads_t.items():
        s_load[net.pos[b]] += complex(*s) if isinstance(s, tuple) else complex(s)
    s_gen = np.zeros(n, dtype=complex)
    for b, p in (pv_t or {}).items():
        s_gen[net.pos[b]] += p
    for b, q in (q_pv_t or {}).items():
        s_gen[net.pos[b]] += 1j * q
    s_inj = (s_gen - s_load) / sb  # net injection, per unit

    v = np.ones(n, dtype=complex)
    converged = False
    it = 0
    resid = math.inf
    with np.errstate(all="ignore"):
        resid, _ = _residual(net, v, s_inj)
        while it < max_iter and not resid <= tol:
            it += 1
            current = np.conj(s_inj[1:] / v[1:])  # injected current, negative for loads
            v[1:] = v[0] + net.drop @ current
            if not np.all(np.isfinite(v)) or np.min(np.abs(v[1:]), initial=1.0) < 0.05:
                break
            resid, _ = _residual(net, v, s_inj)
        converged = bool(np.all(np.isfinite(v)) and resid <= tol)
        s_mn, s_nm = _flows(net, v)
        _, out = _residual(net, v, s_inj)
    s_inj_full = s_inj.copy()
    s_inj_full[0] = out[0]  # slack supplies whatever the network draws
    q_pv = {b: float(q) for b, q in (q_pv_t or {}).items()}
    for b in (pv_t or {}):
        q_pv.setdefault(b, 0.0)
    if not converged:
        log.debug("snapshot did not converge after %d sweeps (residual %.3g)", it, resid)
    return SnapshotSolution(
        bus_ids=net.bus_ids,
        vm=np.abs(v),
        va=np.angle(v),
        lines=net.lines,
        p_mn=s_mn.real * sb,
        q_mn=s_mn.imag * sb,
        p_nm=s_nm.real * sb,
        q_nm=s_nm.imag * sb,
        p_inj=s_inj_full.real * sb,
        q_inj=s_inj_full.imag * sb,
        q_pv=q_pv,
        converged=converged,
        iterations=it,
        residual=resid,
    )


@dataclass(frozen=True)
class Violation:
    bus: int
    kind: str  # under_voltage | over_voltage | q_below | q_above
    value: float
    bound: float


def check_limits(sol: SnapshotSolution, model: FeederModel) -> list[Violation]:
    """Voltage-band and PV reactive-limit violations of a converged snapshot."""
    if not sol.converged:
        raise ValueError("check_limits needs a converged snapshot")
    out = []
    for b, vm in zip(sol.bus_ids, sol.vm):
        if vm < model.v_lb:
            out.append(Violation(b, "under_voltage", float(vm), model.v_lb))
        elif vm > model.v_ub:
            out.append(Violation(b, "over_voltage", float(vm), model.v_ub))
    for b, q in sorted(sol.q_pv.items()):
        pv = model.bus(b).pv
        if pv is None:
            continue
        if q < pv.q_lb:
            out.append(Violation(b, "q_below", q, pv.q_lb))
        elif q > pv.q_ub:
            out.append(Violation(b, "q_above", q, pv.q_ub))
    return out


# -- time series ---------------------------------------------------------------


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Real power [kW] at meter nodes; rows are nodes, columns timesteps."""

    node_ids: tuple[int, ...]
    times: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "node_ids", tuple(int(i) for i in self.node_ids))
        object.__setattr__(self, "times", tuple(self.times))
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.node_ids), len(self.times)):
            raise PanelError(
                f"panel values have shape {vals.shape}, expected "
                f"({len(self.node_ids)}, {len(self.times)})"
            )
        if len(set(self.node_ids)) != len(self.node_ids):
            raise PanelError("duplicate node ids in panel")
        if not np.all(np.isfinite(vals)):
            raise PanelError("panel has missing or non-finite entries")

    def row(self, node_id: int) -> np.ndarray:
        return self.values[self.node_ids.index(node_id)]

    def canonical(self) -> "TimeSeriesPanel":
        order = np.argsort(self.node_ids, kind="stable")
        return TimeSeriesPanel(tuple(self.node_ids[i] for i in order), self.times, self.values[order])


def timestamps(steps: int, start: str = DEFAULT_START) -> tuple[str, ...]:
    t0 = datetime.fromisoformat(start)
    dt = timedelta(hours=24) / steps
    return tuple((t0 + k * dt).isoformat() for k in range(steps))


def default_weather(steps: int) -> list[WeatherSample]:
    return [WeatherSample(float(s), 25.0) for s in clear_sky_irradiance(steps)]


def read_weather(path: str | Path) -> list[WeatherSample]:
    """Weather CSV with header ``time,irradiance_wm2,temp_c``."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"time", "irradiance_wm2", "temp_c"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(WeatherSample(float(row["irradiance_wm2"]), float(row["temp_c"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def run_timeseries(
    model: FeederModel,
    profiles: Mapping[str, Sequence[float]] | None = None,
    weather: Sequence[WeatherSample] | None = None,
    steps: int = DEFAULT_STEPS,
    start: str = DEFAULT_START,
    tol: float = DEFAULT_TOL,
) -> TimeSeriesPanel:
    """Solve one snapshot per step and collect incoming real power at meters.

    ``profiles`` defaults to the built-in shape library; ``weather`` defaults
    to clear-sky irradiance at 25 degC and must hold ``steps`` samples if given.
    """
    if steps < 2:
        raise ValueError("need at least 2 steps")
    profiles = PROFILE_LIBRARY if profiles is None else profiles
    weather = default_weather(steps) if weather is None else list(weather)
    if len(weather) != steps:
        raise ValueError(f"weather has {len(weather)} samples, expected {steps}")
    shapes = {}
    for b in model.buses:
        if b.load is None:
            continue
        pid = b.load.profile_id
        if pid not in profiles:
            raise KeyError(f"bus {b.id}: unknown load profile {pid!r}")
        if pid not in shapes:
            shapes[pid] = resample(profiles[pid], steps)
    loaded = [b for b in model.buses if b.load is not None]
    pv_buses = [b for b in model.buses if b.pv is not None]
    meters = model.meter_ids
    net = _network(model)
    meter_line = {n: k for k, (_, n) in enumerate(net.lines)}
    values = np.empty((len(meters), steps))
    for t in range(steps):
        loads_t = {}
        for b in loaded:
            f = b.load.scale * shapes[b.load.profile_id][t]
            loads_t[b.id] = complex(b.load.base_p * f, b.load.base_q * f)
        pv_t = {b.id: pv_output(b.pv, weather[t]) for b in pv_buses}
        sol = solve_snapshot(model, loads_t, pv_t, tol=tol)
        if not sol.converged:
            raise PowerFlowError(f"power flow diverged at timestep {t}", step=t)
        for r, m in enumerate(meters):
            values[r, t] = -sol.p_nm[meter_line[m]]
    return TimeSeriesPanel(tuple(meters), timestamps(steps, start), values)


# -- panel CSV ----------------------------------------------------------------


def write_panel(panel: TimeSeriesPanel, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", *panel.times])
        for nid, row in zip(panel.node_ids, panel.values):
            w.writerow([nid, *(f"{x:.6f}" for x in row)])


def read_panel(path: str | Path, node_map: Mapping[str, int] | None = None) -> TimeSeriesPanel:
    """Read and validate a panel CSV, returning rows in ascending node order.

    ``node_map`` optionally translates external node labels to integer ids.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise PanelError(f"{path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PanelError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0].strip() != "node_id":
        raise PanelError(f"{path}: first header column must be 'node_id'")
    times = tuple(h.strip() for h in header[1:])
    if len(times) < 2:
        raise PanelError(f"{path}: need at least 2 timestep columns")
    for t in times:
        try:
            datetime.fromisoformat(t)
        except ValueError:
            raise PanelError(f"{path}: header column {t!r} is not an ISO-8601 timestamp") from None
    ids, vals = [], []
    seen = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise PanelError(f"{path}: ragged row at line {lineno} ({len(row)} fields, expected {len(header)})")
        label = row[0].strip()
        try:
            nid = node_map[label] if node_map is not None else int(label)
        except (KeyError, ValueError):
            raise PanelError(f"{path}: line {lineno}: unknown node label {label!r}") from None
        if nid in seen:
            raise PanelError(f"{path}: duplicate node id {nid} at lines {seen[nid]} and {lineno}")
        seen[nid] = lineno
        try:
            vals.append([float(c) for c in row[1:]])
        except ValueError:
            raise PanelError(f"{path}: line {lineno}: non-numeric value") from None
        if not all(math.isfinite(x) for x in vals[-1]):
            raise PanelError(f"{path}: line {lineno}: missing or non-finite value")
        ids.append(nid)
    if not ids:
        raise PanelError(f"{path}: no data rows")
    return TimeSeriesPanel(tuple(ids), times, np.array(vals)).canonical()
