"""Command-line entry point: plan, verify, analyze, simulate, compare.

Exit codes: 0 success, 1 configuration error, 2 protocol failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .analysis import scheme_comparison
from .config import load_config, scenario_configs
from .errors import ConfigError, ProtocolError
from .plan import (build_ss_matrix, build_ss_matrix_hetero, format_matrix_csv,
                   inference_robustness_bruteforce, inference_robustness_closed_form,
                   verify_properties)
from .sim import comparison_to_csv, run_comparison, run_training


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _matrix_from_args(args):
    if args.subgroups:
        return build_ss_matrix_hetero(_int_list(args.subgroups))
    if args.groups is None:
        raise ConfigError("give --groups or --subgroups")
    return build_ss_matrix(args.groups)


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_plan(args) -> int:
    B = _matrix_from_args(args)
    if args.format == "csv":
        _write(format_matrix_csv(B), args.out)
        return 0
    lines = [B.to_text(), ""]
    closed = inference_robustness_closed_form(B.dim)
    if B.dim <= 20:
        delta, subset = inference_robustness_bruteforce(B)
        lines.append(f"delta (exhaustive) = {delta} = {float(delta):.6f}, attained by columns {list(subset)}")
    lines.append(f"delta (closed form) = {closed} = {float(closed):.6f}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_verify(args) -> int:
    B = _matrix_from_args(args)
    rep = verify_properties(B)
    _write(rep.summary() + f"\nall properties hold: {rep.all_hold}\n", args.out)
    return 0


def cmd_analyze(args) -> int:
    loaded = load_config(args.config, args.set)
    rows = scheme_comparison(loaded.round.plan(), p=loaded.round.dropout or 0.1)
    keys = list(rows[0])
    if args.format == "csv":
        text = ",".join(keys) + "\n" + "".join(",".join(str(r[k]) for k in keys) + "\n" for r in rows)
    else:
        width = max(len(k) for k in keys)
        text = "".join(f"{k:<{width}}  " + "  ".join(f"{str(r[k]):>22}" for r in rows) + "\n" for k in keys)
    _write(text, args.out)
    return 0


def cmd_simulate(args) -> int:
    loaded = load_config(args.config, args.set)
    cfg = replace(loaded.round, seed=args.seed)
    result = run_training(cfg)
    _write(result.to_csv(), args.out)
    return 0


def cmd_compare(args) -> int:
    loaded = load_config(args.config, args.set)
    configs = scenario_configs(loaded)
    if args.seed is not None:
        configs = [replace(c, seed=args.seed) for c in configs]
    rows = run_comparison(configs, train=not args.no_train, comm_model_size=loaded.comm_model_size,
                          comm_rounds=loaded.comm_rounds,
                          download_bits_per_element=loaded.download_bits)
    _write(comparison_to_csv(rows), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heterosag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("plan", cmd_plan, "print an SS matrix and its inference robustness"),
                               ("verify", cmd_verify, "check the structural properties of an SS matrix")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--groups", type=int, help="number of equal groups G")
        sp.add_argument("--subgroups", help="subgroup counts per group, e.g. 1,2,2")
        sp.add_argument("--format", choices=("text", "csv"), default="text")
        sp.add_argument("--out", help="write here instead of stdout")
        sp.set_defaults(func=fn)

    def with_config(sp):
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config entry (repeatable)")
        sp.add_argument("--out", help="output path (default stdout)")

    sp = sub.add_parser("analyze", help="SecAg vs HeteroSAg comparison table")
    with_config(sp)
    sp.add_argument("--format", choices=("text", "csv"), default="text")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="run federated training and write the round log as CSV")
    with_config(sp)
    sp.add_argument("--seed", type=int, required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="compare quantization scenarios and communication time")
    with_config(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-train", action="store_true", help="only compute communication time")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ProtocolError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
