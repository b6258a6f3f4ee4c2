"""Picard gaps of the mean-field solver on the mean-reversion field.

    python scripts/fixed_point_contraction.py --law-size 512 --seeds 0,1,2

For each seed, prints the gap sequence and the successive ratios, which
should sit below one.
"""
import argparse
from pathlib import Path

import numpy as np

from meanfield_lab import ExperimentConfig, fixed_point

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=ROOT / "configs" / "mean_reversion.json")
    parser.add_argument("--law-size", type=int, default=512)
    parser.add_argument("--seeds", default="2024")
    parser.add_argument("--tol", type=float, default=1e-5)
    parser.add_argument("--max-iter", type=int, default=15)
    args = parser.parse_args()

    exp = ExperimentConfig.load(args.config)
    f = exp.build_field()
    for seed in (int(s) for s in args.seeds.split(",")):
        cfg = exp.sim_config(N=args.law_size, seed=seed)
        _, report = fixed_point(f, exp.init, cfg, args.tol, args.max_iter, space=exp.space)
        gaps = np.asarray(report.gaps)
        ratios = gaps[1:] / gaps[:-1]
        print(f"seed {seed}: converged={report.converged} iterations={report.iterations}")
        print("  gaps  ", " ".join(f"{g:.3e}" for g in gaps))
        print("  ratios", " ".join(f"{r:.3f}" for r in ratios))


if __name__ == "__main__":
    main()
