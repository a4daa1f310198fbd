"""Attacked accuracy as a function of the node or feature budget on the SBM.

Writes a CSV with columns value, mean_accuracy, stddev.

    python3 scripts/budget_sweep.py --axis node_budget --values 0.005,0.01,0.02,0.03 --out sweep.csv
"""

import argparse

from influence_attack.pipeline import AttackConfig, run_sweep
from influence_attack.surrogate import TrainConfig
from influence_attack.synthetic import SbmConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--axis", choices=("node_budget", "feature_budget"), default="node_budget")
    ap.add_argument("--values", default="0.005,0.01,0.02,0.03,0.05")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    cfg = AttackConfig(
        sbm=SbmConfig(),
        surrogate=TrainConfig(learning_rate=3.0, epochs=2000),
        node_budget_fraction=0.01,
        feature_budget_fraction=0.1,
        degree_remove_fraction=0.1,
        trials=args.trials,
    )
    values = [float(v) for v in args.values.split(",")]
    for value, mean, std in run_sweep(cfg, args.axis, values, args.out):
        print(f"{value}\t{mean:.4f}\t{std:.4f}")


if __name__ == "__main__":
    main()
