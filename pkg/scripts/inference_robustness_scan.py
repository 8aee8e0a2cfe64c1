"""Compare exhaustive inference robustness with the closed form for G = 2..N.

Usage: python3 scripts/inference_robustness_scan.py [--max-groups 14]
"""

import argparse

from heterosag.plan import build_ss_matrix, inference_robustness_bruteforce, inference_robustness_closed_form


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-groups", type=int, default=14)
    args = ap.parse_args()
    print("G,delta_exhaustive,delta_closed_form,agree,argmin_columns")
    for G in range(2, args.max_groups + 1):
        got, subset = inference_robustness_bruteforce(build_ss_matrix(G))
        want = inference_robustness_closed_form(G)
        cols = " ".join(map(str, subset))
        print(f"{G},{got},{want},{got == want},{cols}")


if __name__ == "__main__":
    main()
