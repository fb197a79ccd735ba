"""Command-line entry point: solve, oracle, rewrite, gen, bench."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import (
    BENCH_RESTARTS,
    DegenerateBudget,
    OutcomeMismatch,
    generate,
    load_dir,
    run_comparison,
    write_csv,
)
from .core import ProgramError
from .oracle import OracleCapExceeded, named_models, stable_models
from .parser import ParseError, parse, print_program
from .rewrite import SumsCapExceeded, parse_steps, rewrite_program
from .search import ResourceLimit, Solver, SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_LIMIT, EXIT_SAT, EXIT_UNSAT = 0, 1, 2, 10, 20


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _answer(names) -> str:
    return "ANSWER: " + " ".join(sorted(names))


def cmd_solve(args, out) -> int:
    program = parse(_read(args.file))
    program = rewrite_program(program, parse_steps(args.rewrite))
    cfg = SolverConfig(
        propagator=args.propagator,
        limit=args.n,
        stability=args.check_stability,
        seed=args.seed,
        timeout_ms=args.timeout_ms,
        restarts=args.restarts,
    )
    solver = Solver(program, cfg)
    names = program.names
    code = None
    try:
        for model in solver.solve():
            print(_answer(names[a] for a in model), file=out, flush=True)
        print(solver.status, file=out)
        code = EXIT_SAT if solver.models_found else EXIT_UNSAT
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        print("UNKNOWN", file=out)
        solver._finish()
        code = EXIT_LIMIT
    if args.stats:
        for k, v in sorted(solver.stats.items()):
            print(f"STAT {k} {v}", file=out)
    return code


def cmd_oracle(args, out) -> int:
    program = parse(_read(args.file))
    models = sorted(sorted(m) for m in named_models(program, stable_models(program)))
    for m in models:
        print(_answer(m), file=out)
    print("COMPLETE" if models else "UNSATISFIABLE", file=out)
    return EXIT_SAT if models else EXIT_UNSAT


def cmd_rewrite(args, out) -> int:
    program = parse(_read(args.file))
    result = rewrite_program(program, parse_steps(args.steps), emit_intermediate=args.emit_intermediate)
    out.write(print_program(result))
    return EXIT_OK


def cmd_gen(args, out) -> int:
    if args.kind != "ca":
        raise UsageError(f"unknown generator {args.kind!r} (available: ca)")
    text = generate(args.users, args.components, args.seed, args.bounds_per_user, args.price_max)
    if args.o:
        Path(args.o).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_bench(args, out) -> int:
    modes = ("standard", "shared") if args.propagator == "both" else (args.propagator,)
    instances = load_dir(args.dir)
    if not instances:
        print(f"no .gasp files in {args.dir}", file=sys.stderr)
    reports = run_comparison(instances, modes, limit=args.n, timeout_ms=args.timeout_ms,
                             repeats=args.repeats, restarts=args.restarts)
    for r in reports:
        print(r.line(), file=out)
    if args.o:
        write_csv(reports, args.o)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sharedagg", description="ground ASP solver with shared sum-aggregate propagation")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="enumerate stable models")
    s.add_argument("file")
    s.add_argument("--propagator", choices=["shared", "standard"], default="shared")
    s.add_argument("--rewrite", default="all", help="all, none or a list from merge,i,ii,iii,iv")
    s.add_argument("-n", type=int, default=1, help="number of models, 0 for all")
    s.add_argument("--stats", action="store_true")
    s.add_argument("--check-stability", choices=["auto", "always", "off"], default="auto")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--timeout-ms", type=float, default=None)
    s.add_argument("--restarts", default="off", help="off or luby:BASE")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="brute-force stable models (small programs only)")
    o.add_argument("file")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("rewrite", help="print the rewritten program")
    r.add_argument("file")
    r.add_argument("--emit-intermediate", action="store_true",
                   help="keep ordering constraints whose body contains #false")
    r.add_argument("--steps", default="all")
    r.set_defaults(func=cmd_rewrite)

    g = sub.add_parser("gen", help="generate a benchmark instance")
    g.add_argument("kind")
    g.add_argument("--users", type=int, required=True)
    g.add_argument("--components", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--bounds-per-user", type=int, required=True)
    g.add_argument("--price-max", type=int, default=100)
    g.add_argument("-o", default=None)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="compare propagator modes on a directory of instances")
    b.add_argument("--dir", required=True)
    b.add_argument("--timeout-ms", type=float, default=60000.0)
    b.add_argument("--propagator", choices=["both", "shared", "standard"], default="both")
    b.add_argument("-n", type=int, default=1)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--restarts", default=BENCH_RESTARTS)
    b.add_argument("-o", default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("sharedagg: a subcommand is required (solve, oracle, rewrite, gen, bench)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if getattr(args, "n", 1) < 0:
            raise UsageError("-n must be >= 0")
        return args.func(args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ProgramError, DegenerateBudget, OutcomeMismatch, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OracleCapExceeded, SumsCapExceeded) as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT


def entry() -> None:
    sys.exit(main())
