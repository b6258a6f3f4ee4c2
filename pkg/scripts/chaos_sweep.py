"""Coupling error versus N for the leader/follower field.

    python scripts/chaos_sweep.py --reps 64 --out runs/chaos.json

Prints one row per N (mean err, standard error, max-over-agents mean) and the
fitted log-log slope.  The full default grid takes about two minutes on one core.
"""
import argparse
import json
from pathlib import Path

from meanfield_lab import ExperimentConfig, chaos_sweep
from meanfield_lab.sde_engine import default_workers

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=ROOT / "configs" / "leader_follower.json")
    parser.add_argument("--n-grid", default="8,16,32,64,128")
    parser.add_argument("--reps", type=int, default=64)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--reference-w2", action="store_true", help="also estimate E[W2^2(empirical, law)]")
    parser.add_argument("--out", type=Path)
    args = parser.parse_args()

    exp = ExperimentConfig.load(args.config)
    n_grid = [int(v) for v in args.n_grid.split(",")]
    seed = exp.seed if args.seed is None else args.seed
    knobs = exp.knobs if exp.kind == "chaos" else {}
    sweep = chaos_sweep(
        exp.build_field(),
        exp.sim_config(N=max(n_grid), seed=seed),
        n_grid,
        args.reps,
        seed,
        exp.init,
        space=exp.space,
        law_factor=knobs.get("law_factor", 4),
        law_tol=knobs.get("law_tol", 1e-4),
        law_max_iter=knobs.get("law_max_iter", 20),
        reference_w2=args.reference_w2,
        workers=default_workers(),
    )
    print(f"law: {sweep.law_size} paths, gaps {sweep.law_report['gaps'] if sweep.law_report else '-'}")
    print(f"{'N':>5} {'err':>11} {'stderr':>10} {'max_mean':>10} {'ratio':>8}")
    for r in sweep.results:
        ratio = "" if r.constant_ratio is None else f"{r.constant_ratio:8.3f}"
        print(f"{r.N:>5} {r.err:11.4e} {r.stderr:10.2e} {r.max_agent_mean:10.3e} {ratio}")
    print("slope:", "undefined" if sweep.slope is None else f"{sweep.slope:.3f}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(sweep.summary(), indent=2))


if __name__ == "__main__":
    main()
