"""Final loss under each attack with mean and median aggregation.

Usage: python3 scripts/byzantine_sweep.py [--seeds 0 1] [--groups 9]
"""

import argparse
from dataclasses import replace

from heterosag.byzantine import AttackSpec, max_byzantine
from heterosag.sim import RoundConfig, TaskSpec, run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--groups", type=int, default=9)
    ap.add_argument("--rounds", type=int, default=150)
    ap.add_argument("--samples", type=int, default=200)
    args = ap.parse_args()
    G = args.groups
    byz = tuple(range(max_byzantine(G)))
    task = TaskSpec(kind="logistic_blobs", samples_per_user=args.samples)
    base = RoundConfig(G=G, n=1, m=6, K=tuple(2 ** (10 + g) for g in range(G)), r1=-8.0, r2=8.0,
                       rounds=args.rounds, lr=1.0, task=task)
    print("seed,attack,aggregator,byzantine,final_loss,ratio_to_clean")
    for seed in args.seeds:
        cfg = replace(base, seed=seed)
        clean = run_training(cfg).final_loss
        print(f"{seed},none,mean,0,{clean:.6g},1")
        for kind in ("gaussian", "sign_flip", "label_flip"):
            for agg in ("mean", "median"):
                loss = run_training(replace(cfg, attack=AttackSpec(kind, byz), aggregator=agg)).final_loss
                print(f"{seed},{kind},{agg},{len(byz)},{loss:.6g},{loss / clean:.4g}")


if __name__ == "__main__":
    main()
