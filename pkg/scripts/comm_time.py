"""Communication time of the heterogeneous, homogeneous and unquantized scenarios.

Counts upload bits only unless --download-bits is given. Prints CSV.

Usage: python3 scripts/comm_time.py [--rounds 200] [--model-size 79510]
"""

import argparse

from heterosag.sim import comparison_to_csv, run_comparison, comm_time_scenarios


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=200)
    ap.add_argument("--model-size", type=int, default=79510)
    ap.add_argument("--download-bits", type=int, default=0, help="bits per element for the broadcast model")
    args = ap.parse_args()
    rows = run_comparison(comm_time_scenarios(rounds=args.rounds), train=False,
                          comm_model_size=args.model_size, download_bits_per_element=args.download_bits)
    print(comparison_to_csv(rows), end="")
    by = {r.name: r.communication_time for r in rows}
    print(f"# clear/heterogeneous time ratio: {by['no_quantization'] / by['heterogeneous']:.3f}")


if __name__ == "__main__":
    main()
