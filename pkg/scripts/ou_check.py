"""Euler-Maruyama against the Ornstein-Uhlenbeck closed form.

    python scripts/ou_check.py --n 10000 --steps 250,500,1000

dX = -X dt + sqrt(2) c dW from a fixed start x0 has mean x0 e^{-T} and
variance c^2 (1 - e^{-2T}).  Prints the relative errors at each step count.
"""
import argparse
import math

from meanfield_lab import InitialLaw, SimConfig, builtin_field, solve_n_particle


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=10_000)
    parser.add_argument("--steps", default="250,500,1000")
    parser.add_argument("--x0", type=float, default=5.0)
    parser.add_argument("--c", type=float, default=0.5)
    parser.add_argument("--T", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=4)
    args = parser.parse_args()

    f = builtin_field("strategy_mean_reversion", {"sigma": math.sqrt(2) * args.c}, theta=args.T, d=1, M=2)
    mean = args.x0 * math.exp(-args.T)
    var = args.c**2 * (1 - math.exp(-2 * args.T))
    print(f"target mean={mean:.6f} var={var:.6f}")
    for K in (int(k) for k in args.steps.split(",")):
        cfg = SimConfig(d=1, m=1, M=2, N=args.n, T=args.T, K=K, theta=args.T, seed=args.seed)
        init = InitialLaw(1, 2, position_mean=(args.x0,), position_std=0.0).draw(cfg.seed, range(cfg.N))
        xT = solve_n_particle(init, f, cfg, store_path=False).positions[:, -1, 0]
        print(
            f"K={K:>5} mean={xT.mean():.6f} ({xT.mean() / mean - 1:+.2%}) "
            f"var={xT.var():.6f} ({xT.var() / var - 1:+.2%})"
        )


if __name__ == "__main__":
    main()
