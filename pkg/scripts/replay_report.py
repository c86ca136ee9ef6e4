"""Orderings, critical nodes and feature ranks from the bundled reference tables.

    python scripts/replay_report.py --seeds 20
"""

import argparse

from feederperc.pipeline import (
    bundled_table,
    case_summary,
    combination_summary,
    sweep_case_replay,
    sweep_combinations_replay,
)
from feederperc.rfimportance import importance, rank_features, train_forest
from feederperc.scenario import CASES


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5, help="forest seeds per table")
    ap.add_argument("--trees", type=int, default=500)
    a = ap.parse_args()

    for case in CASES:
        s = case_summary(case, sweep_case_replay(case))
        print(f"{case:<3} PT={s['rho_c']} trend={s['trend']} hosting={s['hosting_capacity_pct']}%")
    c = combination_summary(sweep_combinations_replay())
    print(f"best={c['argmax']} ({c['max_rho_c']}) worst={c['argmin']} ({c['min_rho_c']})")
    print(f"ranking={' > '.join(c['ranking'])}")
    print(f"critical nodes={c['critical_nodes']} source nodes={c['source_nodes']}")

    for name in ("table3", "table4"):
        t = bundled_table(name)
        tops = []
        for seed in range(a.seeds):
            r = importance(train_forest(t, n_trees=a.trees, seed=seed))
            tops.append(rank_features(r)[0])
            if seed == 0:
                scores = ", ".join(f"{f}={v:.3f}" for f, v in zip(r.feature_names, r.scores))
                print(f"{name} seed 0: {scores}")
        print(f"{name}: top feature per seed {tops}")


if __name__ == "__main__":
    main()
