"""millforge command line: verify, bench, plan-reuse, estimate.

Exit codes: 0 success, 1 verification failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from .bits import ConfigError
from .costs import crh_cpu_cost, crh_pipelined_cost, crh_ratios
from .nonlinear import OPS, MillionaireConfig
from .report import DEFAULT_SEED, bench, verify_suite
from .reuse import (MatrixParseError, build_reuse_plan, comparison_merge_matrix, counts_summary, n_final,
                    parse_matrix)
from .transport import PRESETS

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("MILLFORGE_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"MILLFORGE_SEED must be an integer, got {raw!r}") from None


def _protocol_flags(p: argparse.ArgumentParser, *, op_default: str, count_default: int):
    p.add_argument("--variant", choices=("baseline", "tami", "both"), default="both")
    p.add_argument("--interleaved", action="store_true", help="trusted variant: receiver-only merge opening")
    p.add_argument("--bits", type=int, default=32, help="ring width l")
    p.add_argument("--chunk", type=int, default=4, help="leaf chunk width q")
    p.add_argument("--op", choices=OPS, default=op_default)
    p.add_argument("--count", type=int, default=count_default)
    p.add_argument("--seed", type=int, default=None, help=f"default {DEFAULT_SEED} or $MILLFORGE_SEED")
    p.add_argument("--lockstep", action="store_true", help="single-threaded deterministic scheduler")
    p.add_argument("--out", choices=("json", "csv", "table"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="millforge", description="Two-party comparison protocol engine and benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="oracle sweeps; exit 1 on any mismatch")
    _protocol_flags(v, op_default="millionaire", count_default=10_000)
    v.add_argument("--tape-seeds", type=int, default=256)
    v.add_argument("--corrupt-tape", action="store_true", help="negative control: flip receiver pads")

    b = sub.add_parser("bench", help="run a batched workload and report costs")
    _protocol_flags(b, op_default="relu", count_default=1000)
    b.add_argument("--network", choices=(*PRESETS, "all"), default="all")
    b.add_argument("--parallel", type=int, default=1, help="independent concurrent sessions")
    b.add_argument("--timing", action="store_true", help="include measured CPU time (not reproducible)")

    r = sub.add_parser("plan-reuse", help="randomness-reuse counts and plan for an exponent matrix")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("matrix", nargs="?", help="matrix file, or - for stdin")
    src.add_argument("--compare-n", type=int, help="use the n-chunk comparison merge matrix")
    r.add_argument("--printed-bounds", action="store_true",
                   help="also report the count with the subset-size limit l <= i-1")
    r.add_argument("--out", choices=("json", "csv", "table"), default="json")

    e = sub.add_parser("estimate", help="CRH cost model and end-to-end time estimates")
    _protocol_flags(e, op_default="relu", count_default=1000)
    e.add_argument("--blocks", type=int, default=4, help="CRH block count N")
    e.add_argument("--network", choices=(*PRESETS, "all"), default="all")
    return ap


def _configs(args) -> list[MillionaireConfig]:
    variants = ("baseline", "tami") if args.variant == "both" else (args.variant,)
    return [MillionaireConfig(args.bits, args.chunk, v, args.interleaved and v == "tami") for v in variants]


def _presets(name: str) -> list[str]:
    return list(PRESETS) if name == "all" else [name]


def _table(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[str(r.get(k, "")) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.ljust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _emit(out: str, payload, rows: list[dict]) -> None:
    if out == "json":
        sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    elif out == "csv":
        sys.stdout.write(_csv(rows))
    else:
        sys.stdout.write(_table(rows))


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    results, rows, ok = [], [], True
    for cfg in _configs(args):
        outcomes = verify_suite(cfg, args.op, seed=seed, random_cases=args.count, tape_seeds=args.tape_seeds,
                                scheduler="lockstep" if args.lockstep else "threads",
                                corrupt=args.corrupt_tape)
        for o in outcomes:
            ok &= o.ok
            rows.append({"variant": cfg.variant, "suite": o.name, "cases": o.cases,
                         "mismatches": o.mismatches, "status": "pass" if o.ok else "FAIL"})
        results.append({"config": cfg.as_dict(), "op": args.op, "seed": seed,
                        "suites": [o.as_dict() for o in outcomes]})
    _emit(args.out, {"ok": ok, "results": results}, rows)
    return EXIT_OK if ok else EXIT_FAIL


def _bench_rows(report, presets) -> list[dict]:
    return [{
        "variant": report.variant, "op": report.op, "bits": report.config["bits"],
        "chunk": report.config["chunk"], "count": report.count, "preset": p, "correct": report.correct,
        "rounds": report.rounds, "bytes_s2r": report.bytes_s2r, "bytes_r2s": report.bytes_r2s,
        "simulated_ms": round(report.simulated_ms[p], 6),
        "estimate_ms": round(report.estimate[p]["total_s"] * 1e3, 6),
    } for p in presets]


def _run_benches(args):
    seed = args.seed if args.seed is not None else _default_seed()
    return [bench(cfg, args.op, args.count, seed=seed, scheduler="lockstep" if args.lockstep else "threads",
                  parallel=getattr(args, "parallel", 1), timing=getattr(args, "timing", False))
            for cfg in _configs(args)]


def cmd_bench(args) -> int:
    if args.count < 1 or args.parallel < 1:
        raise ConfigError("--count and --parallel must be >= 1")
    reports = _run_benches(args)
    presets = _presets(args.network)
    rows = [row for r in reports for row in _bench_rows(r, presets)]
    payload = [r.as_dict() for r in reports]
    _emit(args.out, payload[0] if len(payload) == 1 else payload, rows)
    return EXIT_OK if all(r.correct for r in reports) else EXIT_FAIL


def cmd_plan_reuse(args) -> int:
    if args.compare_n is not None:
        E = comparison_merge_matrix(args.compare_n)
    else:
        text = sys.stdin.read() if args.matrix == "-" else open(args.matrix, encoding="utf-8").read()
        E = parse_matrix(text)
    summary = counts_summary(E)
    if args.printed_bounds:
        summary["n_final_printed_bounds"] = n_final(E, printed_bounds=True)[1]
    plan = build_reuse_plan(E)
    payload = {"counts": summary, "plan": plan.to_json()}
    rows = [{"row": i, "active": plan.to_json()["rows"][i]["active"], "new_subsets": k,
             "subsets": len(plan.rows[i][1])} for i, k in enumerate(summary["n_final_per_row"])]
    if args.out == "json":
        _emit("json", payload, rows)
    else:
        totals = {k: summary[k] for k in ("n_naive", "n_opt", "n_final", "oracle")}
        _emit(args.out, payload, rows)
        sys.stdout.write(" ".join(f"{k}={v}" for k, v in totals.items()) + "\n")
    return EXIT_OK if summary["oracle"] != "MISMATCH" else EXIT_FAIL


def cmd_estimate(args) -> int:
    if args.blocks < 1:
        raise ConfigError("--blocks must be >= 1")
    cc, ct = crh_cpu_cost(args.blocks)
    pc, pt = crh_pipelined_cost(args.blocks)
    cycle_ratio, transfer_ratio = crh_ratios(args.blocks)
    crh = {"blocks": args.blocks, "cpu": {"cycles": cc, "transfers": ct},
           "pipelined": {"cycles": float(pc), "transfers": float(pt)},
           "cycle_ratio": cycle_ratio, "transfer_ratio": transfer_ratio}
    reports = _run_benches(args)
    presets = _presets(args.network)
    rows, ends = [], []
    for r in reports:
        for p in presets:
            est = r.estimate[p]
            rows.append({"variant": r.variant, "preset": p, "compute_ms": round(max(est["compute_s"].values()) * 1e3, 6),
                         "network_ms": round(est["network_s"] * 1e3, 6), "total_ms": round(est["total_s"] * 1e3, 6)})
        ends.append({"variant": r.variant, "op": r.op, "count": r.count,
                     "estimate": {p: r.estimate[p] for p in presets}})
    payload = {"crh": crh, "end_to_end": ends}
    if len(reports) == 2:
        base, fast = reports
        payload["speedup"] = {p: base.estimate[p]["total_s"] / fast.estimate[p]["total_s"] for p in presets}
    _emit(args.out, payload, rows)
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "bench": cmd_bench, "plan-reuse": cmd_plan_reuse, "estimate": cmd_estimate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except MatrixParseError as exc:
        print(f"millforge: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError, OSError) as exc:
        print(f"millforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
