"""Correlation networks from pairs of meter time-series panels."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .powerflow import PanelError, TimeSeriesPanel

# Relative spread below which a series counts as constant.
_FLAT_RTOL = 1e-12


def _is_flat(x: np.ndarray) -> bool:
    span = float(np.max(x) - np.min(x))
    return span <= _FLAT_RTOL * max(1.0, float(np.max(np.abs(x))))


def pearson(x, y) -> float | None:
    """Pearson correlation of two equal-length series.

    Returns ``None`` when either series has zero variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"series lengths differ: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise ValueError("need at least two samples")
    if _is_flat(x) or _is_flat(y):
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Entry ``(m, n)`` correlates row ``m`` of panel A with row ``n`` of panel B.

    Undefined entries (a constant row on either side) are NaN.
    """

    node_ids: tuple[int, ...]
    values: np.ndarray

    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)


def correlation_matrix(a: TimeSeriesPanel, b: TimeSeriesPanel) -> CorrelationMatrix:
    if a.node_ids != b.node_ids:
        raise PanelError("panels cover different node sets")
    if a.times != b.times or a.values.shape != b.values.shape:
        raise PanelError(f"panel shapes differ: {a.values.shape} vs {b.values.shape}")
    xa = a.values - a.values.mean(axis=1, keepdims=True)
    xb = b.values - b.values.mean(axis=1, keepdims=True)
    na = np.sqrt(np.einsum("ij,ij->i", xa, xa))
    nb = np.sqrt(np.einsum("ij,ij->i", xb, xb))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = (xa @ xb.T) / np.outer(na, nb)
    c = np.clip(c, -1.0, 1.0)
    flat_a = np.array([_is_flat(r) for r in a.values])
    flat_b = np.array([_is_flat(r) for r in b.values])
    c[flat_a, :] = np.nan
    c[:, flat_b] = np.nan
    return CorrelationMatrix(a.node_ids, c)


@dataclass(frozen=True)
class CorrelationNetwork:
    node_ids: tuple[int, ...]
    adjacency: np.ndarray
    threshold: float = 0.0
    provenance: str = ""

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=bool)
        n = len(self.node_ids)
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "node_ids", tuple(self.node_ids))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def edges(self) -> np.ndarray:
        """(E, 2) array of node positions, row-major upper triangle order."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return np.column_stack([i, j])

    def edge_list(self) -> list[tuple[int, int]]:
        return [(self.node_ids[i], self.node_ids[j]) for i, j in self.edges()]

    @classmethod
    def from_edges(cls, n: int, edges, node_ids=None, **kw) -> "CorrelationNetwork":
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            adj[i, j] = adj[j, i] = True
        return cls(tuple(node_ids) if node_ids is not None else tuple(range(n)), adj, **kw)


def threshold_network(c: CorrelationMatrix, T: float = 0.0, provenance: str = "") -> CorrelationNetwork:
    """Edge (m, n) iff the larger of c[m, n], c[n, m] exceeds ``T``."""
    vals = np.where(np.isnan(c.values), -np.inf, c.values)
    sym = np.maximum(vals, vals.T)
    adj = sym > T
    np.fill_diagonal(adj, False)
    return CorrelationNetwork(c.node_ids, adj, float(T), provenance)


def write_network(g: CorrelationNetwork, path: str | Path) -> Path:
    """Edge list ``node_a,node_b`` per line plus a ``.json`` sidecar."""
    path = Path(path)
    with open(path, "w") as fh:
        for a, b in g.edge_list():
            fh.write(f"{a},{b}\n")
    side = path.with_suffix(".json")
    meta = {
        "threshold": g.threshold,
        "provenance": g.provenance,
        "n_nodes": g.n_nodes,
        "n_edges": g.n_edges,
        "node_ids": list(g.node_ids),
    }
    side.write_text(json.dumps(meta, indent=1) + "\n")
    return side


def read_network(path: str | Path) -> CorrelationNetwork:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    ids = meta["node_ids"]
    pos = {nid: k for k, nid in enumerate(ids)}
    edges = []
    for line in path.read_text().splitlines():
        if line.strip():
            a, b = (int(x) for x in line.split(","))
            edges.append((pos[a], pos[b]))
    return CorrelationNetwork.from_edges(
        len(ids), edges, ids, threshold=meta["threshold"], provenance=meta["provenance"]
    )
