"""Command-line front end: solve, generate, verify, bench."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from . import bench
from .errors import DeepBendersError, ParseError
from .master import BdConfig
from .separation import Variant

EXIT_OK, EXIT_USAGE, EXIT_SOLVE, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sizes(text: str):
    out = []
    for part in text.split(","):
        try:
            n, k = part.lower().split("x")
            out.append((int(n), int(k)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"size must look like 10x15, got {part!r}")
    return out


def _seeds(text: str):
    try:
        if "," in text:
            return [int(s) for s in text.split(",")]
        return list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")


def _cst(text: str):
    try:
        return bench.parse_cst(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deepbenders", description="Benders decomposition with deepest cuts")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one instance")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance file (text format or OR-Library cap)")
    src.add_argument("--cst", type=_cst, help="random CFLP instance n,k,r,seed")
    s.add_argument("--format", choices=["auto", "text", "cap"], default="auto")
    s.add_argument("--strategy", type=str.lower, default="cb",
                   choices=[v.value for v in Variant])
    s.add_argument("--mode", choices=["direct", "gpa"], default="direct")
    s.add_argument("--switch-gap", type=float, default=None)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", type=int, default=10000)
    s.add_argument("--out", help="append the result row to this CSV")
    s.add_argument("--verify", action="store_true", help="compare with brute force (n <= 20)")

    g = sub.add_parser("generate", help="write a random CFLP instance")
    g.add_argument("--cst", type=_cst, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=["text", "cap"], default="text")

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--sizes", type=_sizes, default=[(6, 8), (8, 12), (10, 15)])
    v.add_argument("--seeds", type=_seeds, default=[0, 1])
    v.add_argument("--ratios", type=lambda t: [float(x) for x in t.split(",")], default=[5.0, 10.0])

    b = sub.add_parser("bench", help="run an experiment file")
    b.add_argument("--config", required=True)
    b.add_argument("--out", help="override the output CSV path")
    b.add_argument("--workers", type=int, default=None)
    return p


def _load(args):
    from .cflp import read_orlib_cap, to_problem_data
    from .model import read_instance
    if args.cst is not None:
        src = bench.InstanceSource(cst=args.cst)
        return bench.load_source(src) + (src.label,)
    fmt = args.format
    if fmt == "cap":
        cf = read_orlib_cap(args.instance)
        return to_problem_data(cf), cf, cf.name
    try:
        inst = read_instance(args.instance)
        return inst, None, inst.name
    except ParseError:
        if fmt == "text":
            raise
        cf = read_orlib_cap(args.instance)
        return to_problem_data(cf), cf, cf.name


def cmd_solve(args) -> int:
    try:
        inst, cf, label = _load(args)
    except (OSError, ParseError) as exc:
        print(f"cannot read instance: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cfg = BdConfig(switch_gap=args.switch_gap, sep_tol=args.tol, max_iter=args.max_iters)
    try:
        rep = bench.solve_instance(inst, args.strategy, args.mode, cfg, cf)
    except DeepBendersError as exc:
        print(f"solve failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    y = "" if rep.y_star is None else "".join(str(int(round(v))) for v in rep.y_star)
    print(json.dumps({"instance": label, "status": rep.status, "objective": rep.objective,
                      "iterations": rep.iterations, "optimality_cuts": rep.optimality_cuts,
                      "feasibility_cuts": rep.feasibility_cuts,
                      "wall_ms": round(rep.wall_time * 1e3, 3), "y": y}))
    code = EXIT_OK if rep.status in ("Optimal", "Infeasible") else EXIT_SOLVE
    row = bench.ResultRow(label, inst.n, cf.k if cf else "", cf.ratio if cf else "",
                          args.cst[3] if args.cst else "", args.strategy, args.mode,
                          args.switch_gap is not None, rep.status, rep.iterations,
                          rep.optimality_cuts, rep.feasibility_cuts, rep.wall_time * 1e3,
                          rep.objective if rep.status == "Optimal" else math.nan)
    if args.verify:
        if inst.n > bench.ORACLE_MAX_N:
            print(f"brute force skipped: n = {inst.n} > {bench.ORACLE_MAX_N}", file=sys.stderr)
        else:
            truth = bench.brute_force_oracle(inst)
            row.oracle = truth.objective
            if truth.status == "Infeasible":
                row.verified = rep.status == "Infeasible"
            else:
                row.verified = (rep.status == "Optimal" and abs(rep.objective - truth.objective)
                                <= bench.VERIFY_TOL * max(1.0, abs(truth.objective)))
            print(f"oracle {truth.objective}: {'verified' if row.verified else 'MISMATCH'}")
            if not row.verified:
                code = EXIT_VERIFY
    if args.out:
        bench.write_csv([row], args.out)
    return code


def cmd_generate(args) -> int:
    from .cflp import generate_cst, write_cst, write_orlib_cap
    cf = generate_cst(*args.cst)
    n, k, r, seed = args.cst
    if args.format == "cap":
        with open(args.out, "w") as fh:
            fh.write(write_orlib_cap(cf))
    else:
        write_cst(cf, args.out, {"n": n, "k": k, "r": r, "seed": seed, "name": cf.name})
    print(args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    rep = bench.verify_properties(seeds=args.seeds, sizes=args.sizes, r_values=args.ratios)
    for line in rep.lines():
        print(line)
    print(f"{'all suites passed' if rep.passed else 'FAILED'} in {rep.seconds:.1f} s")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_bench(args) -> int:
    try:
        cfg = bench.load_config(args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bad experiment file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        cfg.output = args.out
    if args.workers:
        cfg.workers = args.workers
    rows = bench.run_experiments(cfg)
    bad = [r for r in rows if r.verified is False]
    errors = [r for r in rows if r.error]
    print(f"{len(rows)} rows written to {cfg.output}; {len(errors)} errors; "
          f"{len(bad)} verification failures")
    return EXIT_VERIFY if bad else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    handler = {"solve": cmd_solve, "generate": cmd_generate, "verify": cmd_verify,
               "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except DeepBendersError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
