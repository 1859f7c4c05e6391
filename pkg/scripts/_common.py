import argparse
import sys

from subnyq.harness import ExperimentConfig, run_sweep


def run(description, **defaults):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--trials", type=int, default=defaults.pop("trials", 200))
    p.add_argument("--snapshots", type=int, default=defaults.pop("snapshots", 1024))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--algorithm", default="both")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    a = p.parse_args()
    cfg = ExperimentConfig(trials=a.trials, snapshots=a.snapshots, seed=a.seed, workers=a.workers,
                           algorithm=a.algorithm, out=a.out, **defaults)
    res = run_sweep(cfg)
    if not a.out:
        sys.stdout.write(res.to_csv())
