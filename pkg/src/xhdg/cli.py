"""Command-line entry point: convergence studies, property suite, field dumps."""

from __future__ import annotations

import argparse
import logging
import sys

from .driver import dump_fields, run_study, solve_case, write_csv
from .problems import CASES, make_case

log = logging.getLogger("xhdg")


def _mesh_list(text: str) -> list[int]:
    try:
        ns = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")
    if not ns or any(n < 1 for n in ns):
        raise argparse.ArgumentTypeError("mesh sizes must be positive")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise argparse.ArgumentTypeError("mesh sizes must be strictly increasing")
    return ns


def _add_case_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, choices=CASES)
    p.add_argument("--k", type=int, default=1, choices=(1, 2), help="polynomial degree")
    knob = p.add_mutually_exclusive_group()
    knob.add_argument("--nu2", type=float, help="Poisson ratio inside the circle (circle-interface)")
    knob.add_argument("--nu", type=float, help="Poisson ratio (circle-domain)")
    knob.add_argument("--lambda", dest="lam", type=float, help="Lame lambda (nonconvex-domain)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xhdg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="convergence study written as CSV")
    _add_case_args(run)
    run.add_argument("--n", type=_mesh_list, help="mesh sizes, e.g. 8,16,32,64")
    run.add_argument("--method", default="direct", choices=("direct", "cg"))
    run.add_argument("--out", required=True, help="output CSV path")

    sub.add_parser("verify", help="run the property suite")

    dump = sub.add_parser("dump-fields", help="write u and sigma at quadrature points")
    _add_case_args(dump)
    dump.add_argument("--n", type=int, required=True, help="mesh size")
    dump.add_argument("--out", required=True, help="output text path")
    return parser


def _problem(args):
    return make_case(args.case, nu2=args.nu2, nu=args.nu, lam=args.lam)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            prob = _problem(args)
            rows = run_study(prob, args.k, args.n or list(prob.default_n), method=args.method)
            write_csv(rows, args.out)
            for r in rows:
                print(f"N={r.N:4d} err_u={r.err_u:.4e} order_u={r.order_u:6.3f} "
                      f"err_sigma={r.err_sigma:.4e} order_sigma={r.order_sigma:6.3f}")
            return 0
        if args.command == "verify":
            from .verify import run_all

            results = run_all()
            failed = [r for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            return 1 if failed else 0
        if args.command == "dump-fields":
            if args.n < 1:
                raise ValueError("mesh size must be positive")
            sol = solve_case(_problem(args), args.n, args.k)
            rows = dump_fields(sol, args.out)
            print(f"wrote {rows} points to {args.out}")
            return 0
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
