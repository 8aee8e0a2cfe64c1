"""Averaged-iterate optimality gap against the quantized-SGD bound, per seed.

Usage: python3 scripts/convergence_check.py [--seeds 10] [--rounds 200]
"""

import argparse
from dataclasses import replace

from heterosag.analysis import ErrorBoundInput, sigma_heterosag
from heterosag.sim import RoundConfig, run_training, convergence_bound


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--rounds", type=int, default=200)
    args = ap.parse_args()
    cfg = RoundConfig(G=5, n=2, m=20, K=(2, 6, 8, 10, 12), rounds=args.rounds)
    sigma = sigma_heterosag(ErrorBoundInput(cfg.N, cfg.G, cfg.m, cfg.K, n=cfg.n)).value
    print(f"# sigma = {sigma:.6g}")
    print("seed,gap,bound,ratio")
    for seed in range(args.seeds):
        lhs, rhs = convergence_bound(run_training(replace(cfg, seed=seed)), sigma)
        print(f"{seed},{lhs:.6g},{rhs:.6g},{lhs / rhs:.4g}")


if __name__ == "__main__":
    main()
