"""Bond and explosive percolation on periodic square lattices and random graphs.

Prints the threshold estimate, peak susceptibility and wall time for each run.

    python scripts/lattice_benchmark.py --sizes 16 32 64 --trials 500
"""

import argparse
import time

import numpy as np

from feederperc.corrnet import CorrelationNetwork
from feederperc.percolation import bond_percolation, explosive_percolation


def square_lattice(L: int) -> CorrelationNetwork:
    idx = np.arange(L * L).reshape(L, L)
    right = np.column_stack([idx.ravel(), np.roll(idx, -1, axis=1).ravel()])
    down = np.column_stack([idx.ravel(), np.roll(idx, -1, axis=0).ravel()])
    return CorrelationNetwork.from_edges(L * L, np.vstack([right, down]).tolist())


def random_graph(n: int, mean_degree: float, seed: int) -> CorrelationNetwork:
    rng = np.random.default_rng(seed)
    m = int(round(mean_degree * n / 2))
    seen: set[tuple[int, int]] = set()
    while len(seen) < m:
        a, b = rng.integers(n, size=2)
        if a != b:
            seen.add((min(a, b), max(a, b)))
    return CorrelationNetwork.from_edges(n, sorted(seen))


def report(label, fn, g, trials, seed, workers):
    t0 = time.perf_counter()
    r = fn(g, trials, seed, workers=workers)
    print(f"{label:<28} E={g.n_edges:<6d} rho_c={r.rho_c:.4f} chi_max={r.chi_max:8.2f} "
          f"{time.perf_counter() - t0:6.2f} s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32])
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--explosive", action="store_true", help="also run the product-rule process")
    a = ap.parse_args()
    for L in a.sizes:
        g = square_lattice(L)
        report(f"lattice {L}x{L} bond", bond_percolation, g, a.trials, a.seed, a.workers)
        if a.explosive:
            report(f"lattice {L}x{L} explosive", explosive_percolation, g, a.trials, a.seed, a.workers)
    for c in (2.0, 4.0, 8.0):
        g = random_graph(2000, c, a.seed)
        report(f"random N=2000 c={c:g} (1/c={1 / c:.3f})", bond_percolation, g, min(a.trials, 200), a.seed,
               a.workers)


if __name__ == "__main__":
    main()
