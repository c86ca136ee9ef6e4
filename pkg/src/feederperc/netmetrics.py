"""Network parameters of a correlation network: AD, CC, MD, AC and PLF.

Undefined values (degenerate assortativity, divergent power-law fits) are
returned as ``None`` and written as ``NA``; they are never coerced to zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from .corrnet import CorrelationNetwork

FEATURES = ("AD", "CC", "MD", "AC", "PLF")
NA = "NA"

# Largest exponent the power-law fit will report; an optimum pinned at this
# bound means the likelihood keeps rising, i.e. the estimate diverges.
PLF_MAX = 200.0


@dataclass(frozen=True)
class NetworkMetrics:
    average_degree: float
    clustering_coefficient: float
    minimum_degree: int
    assortativity: float | None
    power_law_exponent: float | None

    def as_row(self) -> dict[str, float | int | None]:
        return {
            "AD": self.average_degree,
            "CC": self.clustering_coefficient,
            "MD": self.minimum_degree,
            "AC": self.assortativity,
            "PLF": self.power_law_exponent,
        }


def average_degree(g: CorrelationNetwork) -> float:
    if g.n_nodes < 1:
        raise ValueError("empty node set")
    return 2 * g.n_edges / g.n_nodes


def local_clustering(g: CorrelationNetwork) -> np.ndarray:
    """Per-node clustering; nodes with fewer than two neighbours get 0."""
    a = g.adjacency.astype(np.int64)
    k = a.sum(axis=1)
    links = np.einsum("ij,jk,ki->i", a, a, a) // 2  # edges among neighbours
    out = np.zeros(len(k))
    ok = k >= 2
    out[ok] = 2.0 * links[ok] / (k[ok] * (k[ok] - 1))
    return out


def clustering_coefficient(g: CorrelationNetwork) -> float:
    if g.n_nodes < 1:
        raise ValueError("empty node set")
    return float(local_clustering(g).mean())


def assortativity(g: CorrelationNetwork) -> float | None:
    """Degree assortativity over edges (Newman's r), ``None`` if degenerate."""
    e = g.edges()
    if len(e) == 0:
        return None
    k = g.degrees
    j_, k_ = k[e[:, 0]], k[e[:, 1]]
    L = len(e)
    # integer sums keep the degenerate test exact
    s_prod = int(np.sum(j_ * k_))
    s_half = int(np.sum(j_ + k_))  # twice the half-sum
    s_sq = int(np.sum(j_ * j_ + k_ * k_))  # twice the half-sum of squares
    # r = (L*s_prod - (s_half/2)^2) / (L*s_sq/2 - (s_half/2)^2), scaled by 4
    num = 4 * L * s_prod - s_half * s_half
    den = 2 * L * s_sq - s_half * s_half
    if den == 0:
        return None
    return num / den


def fit_power_law(samples: Iterable[int], x_min: int | None = None) -> float | None:
    """Discrete maximum-likelihood exponent of ``p(x) ~ x**-k`` for ``x >= x_min``.

    ``x_min`` defaults to the smallest positive sample. Returns ``None`` when
    fewer than two samples reach ``x_min`` or when all of them equal ``x_min``
    (the likelihood then grows without bound).
    """
    x = np.asarray([int(s) for s in samples], dtype=np.int64)
    pos = x[x > 0]
    if len(pos) == 0:
        return None
    if x_min is None:
        x_min = int(pos.min())
    tail = pos[pos >= x_min]
    if len(tail) < 2 or np.all(tail == x_min):
        return None
    n = len(tail)
    # summed over distinct values so the result ignores sample order
    vals, counts = np.unique(tail, return_counts=True)
    s_log = float(np.dot(counts, np.log(vals)))

    def nll(alpha: float) -> float:
        return n * math.log(zeta(alpha, x_min)) + alpha * s_log

    res = minimize_scalar(nll, bounds=(1.0 + 1e-9, PLF_MAX), method="bounded", options={"xatol": 1e-10})
    alpha = float(res.x)
    if alpha > PLF_MAX - 1e-6:
        return None
    return alpha


def power_law_exponent(g: CorrelationNetwork) -> float | None:
    return fit_power_law(g.degrees)


def metrics(g: CorrelationNetwork) -> NetworkMetrics:
    k = g.degrees
    return NetworkMetrics(
        average_degree=average_degree(g),
        clustering_coefficient=clustering_coefficient(g),
        minimum_degree=int(k.min()) if len(k) else 0,
        assortativity=assortativity(g),
        power_law_exponent=power_law_exponent(g),
    )


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return NA
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.6f}"


def write_metrics_csv(rows: Sequence[tuple[str, NetworkMetrics, float | None]], path: str | Path) -> None:
    """Rows of ``(graph name, metrics, percolation threshold)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph", *FEATURES, "PT"])
        for name, m, pt in rows:
            r = m.as_row()
            w.writerow([name, *(_fmt(r[f]) for f in FEATURES), _fmt(pt)])
