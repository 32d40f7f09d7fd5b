"""Three-action regret sweep: every rule, g in {10, 15, 20, 30, 50}.

    python scripts/fig2_sweep.py --runs 500 --seed 1 --out results/fig2

Writes records.csv and aggregates.json and prints one line per (rule, g).
"""

import argparse
import os

from hla_lab import experiments as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=ex.DEFAULT_SEED)
    ap.add_argument("--eta", type=float, default=ex.FIG2_ETA)
    ap.add_argument("--lr", type=float, default=ex.FIG2_LR)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="results/fig2")
    args = ap.parse_args()

    config = ex.SweepConfig(runs=args.runs, seed=args.seed, eta=args.eta, lr=args.lr)
    result = ex.run_sweep(config, jobs=args.jobs)
    ex.write_records_csv(os.path.join(args.out, "records.csv"), result.records, config)
    ex.write_aggregates_json(os.path.join(args.out, "aggregates.json"), result.aggregates)

    print(f"{'rule':<6}{'g':>5}{'mean':>9}{'std':>8}{'global':>8}{'local':>8}{'miscoord':>10}{'other':>7}")
    for (rule, g), s in result.aggregates.items():
        print(f"{rule:<6}{g:>5g}{s.mean_value:>9.3f}{s.std_value:>8.3f}{s.frac_global:>8.3f}"
              f"{s.frac_local:>8.3f}{s.frac_miscoord:>10.3f}{s.frac_other:>7.3f}")


if __name__ == "__main__":
    main()
