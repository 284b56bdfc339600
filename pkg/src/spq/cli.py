"""Command-line front end: eval, validate, frontier, best-time, slope, gen."""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

from .engine import LexOrderViolation, evaluate
from .fixtures import resolve_plan, resolve_query
from .four_cycle import eval_four_cycle
from .generate import SHAPES, generate_instance
from .plans import InvalidPlan, PlanFormatError, dumps_plan, exponents, loads_plan, validate
from .query import QueryError, QuerySyntaxError, parse_query
from .relation import DataMismatch, load_database, save_database, write_tsv
from .search import CLASSES, SearchBudget, best_time_given_space, pareto_frontier
from .semiring import SEMIRINGS, get_semiring
from .slope import DEFAULT_TOLERANCE, four_cycle_runner, plan_runner, run_slope

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_INVALID_PLAN = 3
EXIT_DATA = 4
EXIT_BUDGET = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _sizes(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers: {text!r}") from None


def _load_query(ref: str):
    try:
        return parse_query(resolve_query(ref))
    except FileNotFoundError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    except QuerySyntaxError as exc:
        raise CliError(EXIT_PARSE, f"{ref}:{exc}") from None
    except QueryError as exc:
        raise CliError(EXIT_PARSE, f"{ref}: {exc}") from None


def _load_plan(ref: str):
    try:
        return loads_plan(resolve_plan(ref))
    except FileNotFoundError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    except (PlanFormatError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"{ref}: {exc}") from None


def _stem(ref: str) -> str:
    return os.path.splitext(os.path.basename(ref))[0]


def _check_plan(q, plan) -> None:
    errs = validate(q, plan)
    if errs:
        raise CliError(EXIT_INVALID_PLAN, "invalid plan:\n  " + "\n  ".join(errs))


def _budget(args, space=None) -> SearchBudget:
    return SearchBudget(args.budget_plans, args.budget_seconds, space)


# ---------------------------------------------------------------- commands


def cmd_eval(args) -> int:
    q = _load_query(args.query)
    k = get_semiring(args.semiring)
    if (args.plan is None) == (args.cls is None) and not args.four_cycle:
        raise CliError(EXIT_PARSE, "give exactly one of --plan or --class")
    plan = None
    if args.plan is not None and not args.four_cycle:
        plan = _load_plan(args.plan)
        _check_plan(q, plan)
    try:
        db = load_database(args.data, q, k)
        if args.four_cycle:
            result = eval_four_cycle(q, db, k)
        else:
            if plan is None:
                space = args.space_budget if args.space_budget is not None else Fraction(10**9)
                best = best_time_given_space(q, args.cls, space, _budget(args))
                if best.witness is None:
                    raise CliError(EXIT_BUDGET if not best.exhaustive else EXIT_INVALID_PLAN,
                                   "no plan found within the space budget")
                plan = best.witness
            result = evaluate(q, db, k, plan, assert_lex=args.assert_lex)
    except DataMismatch as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    except QueryError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    except LexOrderViolation as exc:
        raise CliError(EXIT_FAIL, f"lexicographic order assertion failed: {exc}") from None
    decode = db.decode if db.dictionary is not None else None
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_tsv(result.output, fh, k, decode)
    else:
        write_tsv(result.output, sys.stdout, k, decode)
    if args.meter:
        sys.stderr.write(result.meter.report())
    return EXIT_OK


def cmd_validate(args) -> int:
    q = _load_query(args.query)
    plan = _load_plan(args.plan)
    _check_plan(q, plan)
    e = exponents(q, plan)
    print(f"valid {plan.kind} plan: s={e.s} t={e.t}")
    return EXIT_OK


def _write_witness(directory: str, stem: str, plan) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{stem}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_plan(plan))
    return path


def cmd_frontier(args) -> int:
    q = _load_query(args.query)
    fr = pareto_frontier(q, args.cls, _budget(args, args.space_budget), jobs=args.jobs)
    out_dir = args.out_dir or f"frontier-{_stem(args.query)}-{args.cls.replace('[', '_').replace(']', '')}"
    if fr.note:
        print(f"# {fr.note}")
    for i, (e, plan) in enumerate(fr.points):
        path = _write_witness(out_dir, f"point{i}", plan)
        print(f"s={e.s} t={e.t} plan={path}")
    if not fr.exhaustive:
        print("NONEXHAUSTIVE")
        return EXIT_BUDGET
    return EXIT_OK


def cmd_best_time(args) -> int:
    q = _load_query(args.query)
    if args.space_budget is None:
        raise CliError(EXIT_PARSE, "--space-budget is required")
    best = best_time_given_space(q, args.cls, args.space_budget, _budget(args))
    if best.witness is None:
        print("infeasible" if best.exhaustive else "NONEXHAUSTIVE no plan found")
        return EXIT_OK if best.exhaustive else EXIT_BUDGET
    out_dir = args.out_dir or "."
    path = _write_witness(out_dir, f"best-{_stem(args.query)}-{args.cls.replace('[', '_').replace(']', '')}", best.witness)
    print(f"t={best.t} plan={path}")
    if not best.exhaustive:
        print("NONEXHAUSTIVE")
        return EXIT_BUDGET
    return EXIT_OK


def cmd_slope(args) -> int:
    q = _load_query(args.query)
    k = get_semiring(args.semiring)
    if args.four_cycle:
        runner = four_cycle_runner(q, k)
        predicted = (Fraction(1, 2), Fraction(3, 2))
        label = f"{q.name} heavy/light"
    else:
        if args.plan is None:
            raise CliError(EXIT_PARSE, "--plan or --four-cycle is required")
        plan = _load_plan(args.plan)
        _check_plan(q, plan)
        runner = plan_runner(q, plan, k, args.assert_lex)
        e = exponents(q, plan)
        predicted = (e.s, e.t)
        label = f"{q.name} {plan.kind}"
    if args.predicted_s is not None:
        predicted = (args.predicted_s, predicted[1])
    if args.predicted_t is not None:
        predicted = (predicted[0], args.predicted_t)
    try:
        report = run_slope(
            q, runner, args.sizes, predicted, seed=args.seed, shape=args.shape, k=k,
            space_tolerance=args.space_tolerance, time_tolerance=args.time_tolerance, label=label,
        )
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    text = report.to_tsv()
    out = args.out or f"slope-{_stem(args.query)}.tsv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)
    png = os.path.splitext(out)[0] + ".png"
    report.plot(png)
    sys.stdout.write(text)
    print(f"# report={out} plot={png}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_gen(args) -> int:
    q = _load_query(args.query)
    k = get_semiring(args.semiring)
    db = generate_instance(q, args.n, args.seed, args.shape, k)
    save_database(db, q, args.out, k)
    print(f"wrote {len(q.atoms)} relations, {db.size} tuples to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spq", description="Space-time tradeoffs for sum-product queries.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, semiring=False):
        sp.add_argument("--query", required=True, help="query file or fixture name")
        if semiring:
            sp.add_argument("--semiring", choices=sorted(SEMIRINGS), default="nat")

    def budget(sp):
        sp.add_argument("--budget-plans", type=int, default=50_000_000)
        sp.add_argument("--budget-seconds", type=float, default=7200.0)

    e = sub.add_parser("eval", help="evaluate a query on a data directory")
    common(e, True)
    e.add_argument("--data", required=True, help="directory with one <relation>.tsv per atom")
    e.add_argument("--plan", help="plan JSON file or fixture name")
    e.add_argument("--class", dest="cls", choices=CLASSES, help="search for a plan of this class instead")
    e.add_argument("--space-budget", type=_rational)
    e.add_argument("--four-cycle", action="store_true", help="use the heavy/light four-cycle evaluator")
    e.add_argument("--meter", action="store_true", help="report steps and cells on stderr")
    e.add_argument("--assert-lex", action="store_true", help="check lexicographic arrival at resettable caches")
    e.add_argument("--out", help="write the result TSV here instead of stdout")
    budget(e)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("validate", help="check a plan and print its exponents")
    common(v)
    v.add_argument("--plan", required=True)
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("frontier", help="Pareto frontier of a plan class")
    common(f)
    f.add_argument("--class", dest="cls", choices=CLASSES, required=True)
    f.add_argument("--space-budget", type=_rational)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--out-dir", help="directory for witness plan files")
    budget(f)
    f.set_defaults(func=cmd_frontier)

    b = sub.add_parser("best-time", help="least time exponent under a space budget")
    common(b)
    b.add_argument("--class", dest="cls", choices=CLASSES, required=True)
    b.add_argument("--space-budget", type=_rational)
    b.add_argument("--out-dir")
    budget(b)
    b.set_defaults(func=cmd_best_time)

    s = sub.add_parser("slope", help="fit log-log slopes of steps and cells over growing instances")
    common(s, True)
    s.add_argument("--plan")
    s.add_argument("--four-cycle", action="store_true")
    s.add_argument("--sizes", type=_sizes, default=[2**i for i in range(10, 17)])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shape", choices=SHAPES, default="random")
    s.add_argument("--space-tolerance", type=_rational, default=DEFAULT_TOLERANCE)
    s.add_argument("--time-tolerance", type=_rational, default=DEFAULT_TOLERANCE)
    s.add_argument("--predicted-s", type=_rational, help="override the predicted space exponent")
    s.add_argument("--predicted-t", type=_rational, help="override the predicted time exponent")
    s.add_argument("--assert-lex", action="store_true")
    s.add_argument("--out", help="report TSV path; the plot is written next to it")
    s.set_defaults(func=cmd_slope)

    g = sub.add_parser("gen", help="write a synthetic database")
    common(g, True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--shape", choices=SHAPES, default="random")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except InvalidPlan as exc:
        sys.stderr.write(f"error: invalid plan: {exc}\n")
        return EXIT_INVALID_PLAN


if __name__ == "__main__":
    sys.exit(main())
