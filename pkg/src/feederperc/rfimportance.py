"""Random-forest regressor and impurity-based feature importance.

Trees are grown on bootstrap resamples with ``mtry`` features drawn at every
split, and the split maximising the reduction in squared error is kept.
Among equally good splits the lower feature index wins, so the forest is a
deterministic function of the table and the seed.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FEATURE_NAMES = ("AD", "CC", "MD", "AC", "PLF")
TARGET = "PT"

DEFAULT_TREES = 500
DEFAULT_MTRY = 3
DEFAULT_MIN_LEAF = 2


class FeatureTableError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureTable:
    X: np.ndarray
    y: np.ndarray
    labels: tuple[str, ...]
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labels", tuple(self.labels))
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise FeatureTableError(f"expected {len(self.feature_names)} feature columns, got shape {X.shape}")
        if len(y) != len(X) or len(self.labels) != len(X):
            raise FeatureTableError("row counts of features, target and labels differ")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise FeatureTableError("feature table has missing values")

    def __len__(self) -> int:
        return len(self.y)

    def canonical(self) -> "FeatureTable":
        """Rows sorted by label, then by feature values and target."""
        keys = sorted(
            range(len(self)), key=lambda i: (self.labels[i], tuple(self.X[i]), self.y[i])
        )
        return FeatureTable(self.X[keys], self.y[keys], [self.labels[i] for i in keys], self.feature_names)


def read_feature_table(path: str | Path) -> FeatureTable:
    """CSV with header ``graph,AD,CC,MD,AC,PLF,PT``."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FeatureTableError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        want = ["graph", *FEATURE_NAMES, TARGET]
        if header is None or [h.strip() for h in header] != want:
            raise FeatureTableError(f"{path}: header must be {','.join(want)}")
        labels, X, y = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(want):
                raise FeatureTableError(f"{path}: row {lineno} has {len(row)} fields, expected {len(want)}")
            vals = []
            for col, cell in zip(want[1:], row[1:]):
                cell = cell.strip()
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if cell == "" or not math.isfinite(v):
                    raise FeatureTableError(f"{path}: row {lineno}, column {col}: missing or invalid value {cell!r}")
                vals.append(v)
            labels.append(row[0].strip())
            X.append(vals[:-1])
            y.append(vals[-1])
    if not labels:
        raise FeatureTableError(f"{path}: no data rows")
    return FeatureTable(np.array(X), np.array(y), labels)


def write_feature_table(t: FeatureTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph", *t.feature_names, TARGET])
        for lab, x, y in zip(t.labels, t.X, t.y):
            w.writerow([lab, *(repr(float(v)) for v in x), repr(float(y))])


# -- trees ---------------------------------------------------------------------


@dataclass
class Tree:
    feature: list[int] = field(default_factory=list)  # -1 marks a leaf
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: np.ndarray = field(default_factory=lambda: np.zeros(len(FEATURE_NAMES)))
    n_samples: int = 0
    oob: np.ndarray | None = None

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for r, x in enumerate(X):
            k = 0
            while self.feature[k] >= 0:
                k = self.left[k] if x[self.feature[k]] <= self.threshold[k] else self.right[k]
            out[r] = self.value[k]
        return out


def _best_split(X, y, idx, feats, min_leaf):
    yc = y[idx] - y[idx].mean()
    n = len(idx)
    parent = float(np.dot(yc, yc))
    tie = 1e-12 * max(parent, 1e-300)
    best = None  # (gain, feature, threshold)
    for f in sorted(feats):
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], yc[order]
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        nl = np.arange(1, n)
        ok = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (n - nl >= min_leaf)
        if not ok.any():
            continue
        sl, sl2 = cs[:-1], cs2[:-1]
        sr, sr2 = cs[-1] - sl, cs2[-1] - sl2
        sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / (n - nl))
        gain = np.where(ok, parent - sse, -np.inf)
        k = int(np.argmax(gain))
        g = float(gain[k])
        if best is None or g > best[0] + tie:
            best = (g, f, 0.5 * (xs[k] + xs[k + 1]))
    if best is None or best[0] <= tie:
        return None
    return best


def _grow(X, y, idx, rng, mtry, min_leaf) -> Tree:
    t = Tree(n_samples=len(idx))
    n_feat = X.shape[1]
    stack = [(idx, None, False)]
    while stack:
        node_idx, par, is_right = stack.pop()
        k = len(t.feature)
        t.feature.append(-1)
        t.threshold.append(math.nan)
        t.left.append(-1)
        t.right.append(-1)
        t.value.append(float(y[node_idx].mean()))
        if par is not None:
            if is_right:
                t.right[par] = k
            else:
                t.left[par] = k
        if len(node_idx) < 2 * min_leaf:
            continue
        feats = rng.choice(n_feat, size=mtry, replace=False)
        split = _best_split(X, y, node_idx, feats, min_leaf)
        if split is None:
            continue
        gain, f, thr = split
        t.feature[k] = int(f)
        t.threshold[k] = float(thr)
        t.gain[f] += gain
        mask = X[node_idx, f] <= thr
        # right pushed first so the left child gets the next index
        stack.append((node_idx[~mask], k, True))
        stack.append((node_idx[mask], k, False))
    return t


def _fit_tree(args) -> Tree:
    X, y, seed, b, mtry, min_leaf = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    n = len(y)
    boot = rng.integers(0, n, size=n)
    tree = _grow(X, y, boot, rng, mtry, min_leaf)
    inbag = np.zeros(n, dtype=bool)
    inbag[boot] = True
    tree.oob = np.flatnonzero(~inbag)
    return tree


@dataclass
class Forest:
    trees: list[Tree]
    table: FeatureTable
    n_trees: int
    mtry: int
    min_leaf: int
    seed: int

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def oob_r2(self) -> float:
        X, y = self.table.X, self.table.y
        acc = np.zeros(len(y))
        cnt = np.zeros(len(y))
        for t in self.trees:
            if len(t.oob):
                acc[t.oob] += t.predict(X[t.oob])
                cnt[t.oob] += 1
        ok = cnt > 0
        pred = acc[ok] / cnt[ok]
        sst = float(np.sum((y[ok] - y[ok].mean()) ** 2))
        return 1.0 - float(np.sum((y[ok] - pred) ** 2)) / sst if sst > 0 else math.nan


def train_forest(
    t: FeatureTable,
    n_trees: int = DEFAULT_TREES,
    min_leaf: int = DEFAULT_MIN_LEAF,
    mtry: int = DEFAULT_MTRY,
    seed: int = 0,
    workers: int = 1,
) -> Forest:
    """Fit ``n_trees`` regression trees on bootstrap resamples of ``t``.

    Rows are put in canonical order first, so shuffling the input table does
    not change the forest.
    """
    n_feat = len(t.feature_names)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 1 <= mtry <= n_feat:
        raise ValueError(f"mtry must lie in [1, {n_feat}]")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if len(t) < 2 * min_leaf:
        raise FeatureTableError(f"table has {len(t)} rows; need at least {2 * min_leaf}")
    t = t.canonical()
    jobs = [(t.X, t.y, seed, b, mtry, min_leaf) for b in range(n_trees)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            trees = list(ex.map(_fit_tree, jobs, chunksize=max(1, n_trees // (4 * workers))))
    else:
        trees = [_fit_tree(j) for j in jobs]
    return Forest(trees, t, n_trees, mtry, min_leaf, seed)


@dataclass(frozen=True)
class ImportanceReport:
    scores: tuple[float, ...]
    ranks: tuple[int, ...]
    n_trees: int
    seed: int
    min_leaf: int
    mtry: int = DEFAULT_MTRY
    mode: str = "mdi"
    no_splits: bool = False
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scores"] = dict(zip(self.feature_names, self.scores))
        d["ranks"] = dict(zip(self.feature_names, self.ranks))
        d["order"] = rank_features(self)
        return d


def _ranks(scores: Sequence[float]) -> tuple[int, ...]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranks = [0] * len(scores)
    for r, i in enumerate(order, start=1):
        ranks[i] = r
    return tuple(ranks)


def _report(raw: np.ndarray, forest: Forest, mode: str) -> ImportanceReport:
    total = float(raw.sum())
    no_splits = not total > 0
    scores = np.zeros_like(raw) if no_splits else raw / total
    scores = tuple(float(s) for s in scores)
    return ImportanceReport(
        scores, _ranks(scores), forest.n_trees, forest.seed, forest.min_leaf, forest.mtry, mode,
        no_splits, forest.table.feature_names,
    )


def importance(forest: Forest, mode: str = "mdi", seed: int | None = None) -> ImportanceReport:
    """Feature scores normalised to sum to one.

    ``mode="mdi"`` averages the squared-error reduction of each feature's
    splits over trees (each tree's reductions divided by its sample count).
    ``mode="permutation"`` instead measures the rise in out-of-bag squared
    error when a feature column is shuffled, clipped at zero.
    """
    if mode == "mdi":
        raw = np.mean([t.gain / t.n_samples for t in forest.trees], axis=0)
        return _report(raw, forest, mode)
    if mode != "permutation":
        raise ValueError(f"unknown importance mode {mode!r}")
    rng = np.random.default_rng(forest.seed if seed is None else seed)
    X, y = forest.table.X, forest.table.y
    raw = np.zeros(X.shape[1])
    for t in forest.trees:
        if len(t.oob) < 2:
            continue
        Xo, yo = X[t.oob], y[t.oob]
        base = np.mean((t.predict(Xo) - yo) ** 2)
        for f in range(X.shape[1]):
            Xp = Xo.copy()
            Xp[:, f] = rng.permutation(Xp[:, f])
            raw[f] += np.mean((t.predict(Xp) - yo) ** 2) - base
    return _report(np.clip(raw / len(forest.trees), 0.0, None), forest, mode)


def rank_features(r: ImportanceReport) -> list[str]:
    """Feature names by descending score; equal scores keep feature order."""
    order = sorted(range(len(r.scores)), key=lambda i: (-r.scores[i], i))
    return [r.feature_names[i] for i in order]


def write_report(r: ImportanceReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(r.to_dict(), indent=1) + "\n")
