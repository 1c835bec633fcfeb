"""Privacy/leakage trade-off over the epsilon grid.

Thin wrapper over ``explainleak dp-sweep`` that also repeats the sweep for
several master seeds and prints mean attack AUC and test accuracy per epsilon.

    python scripts/dp_sweep.py --grid 0.5,1,2,8,inf --seeds 0-2
"""

import argparse
import math
from pathlib import Path

import numpy as np

from explainleak.harness.config import ExperimentConfig, load_config, with_overrides
from explainleak.harness.experiment import epsilon_label, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--grid", default="0.5,1,2,8,inf")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--attack", default="l1_lrt/IXG")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/dp")
    args = ap.parse_args()

    base = load_config(args.config) if args.config else ExperimentConfig().validate()
    grid = [math.inf if g.strip() == "inf" else float(g) for g in args.grid.split(",")]
    lo, _, hi = args.seeds.partition("-")
    seeds = range(int(lo), int(hi or lo) + 1)
    print(f"{'epsilon':>8} {'sigma':>8} {'AUC':>7} {'TPR@0.01':>9} {'test acc':>9}")
    for eps in grid:
        aucs, tprs, accs, sigma = [], [], [], float("nan")
        for seed in seeds:
            cfg = with_overrides(base, seed=seed, epsilon=eps)
            d = run_experiment(cfg, Path(args.out) / f"eps_{epsilon_label(eps)}" / f"seed_{seed}", args.workers).to_dict()
            cell = d["attacks"][args.attack]
            aucs.append(cell["auc"]["mean"])
            tprs.append(cell["tpr_at_fpr_0.01"]["mean"])
            accs.append(d["models"]["mean_test_accuracy"])
            sigma = d["models"].get("noise_multiplier", 0.0)
        print(f"{epsilon_label(eps):>8} {sigma:>8.3f} {np.mean(aucs):>7.3f} {np.mean(tprs):>9.4f} {np.mean(accs):>9.3f}",
              flush=True)


if __name__ == "__main__":
    main()
