"""Command-line entry point.

Exit codes: 0 success, 1 self-test failure, 2 usage or parse error,
3 numeric failure or exceeded budget.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from config import config
from discretize import Partition1D, RefinementChain, window_scheme
from errors import (
    KrnError,
    MalformedDocument,
    NumericFailure,
    PairBudgetExceeded,
    StateBudgetExceeded,
)
from models import KernelDocument, PosteriorReport
from pipeline import KernelToolkit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def real_pair(text: str) -> Tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected two numbers a,b, got {text!r}"
        ) from None
    return a, b


def int_list(text: str) -> List[int]:
    return [positive_int(v) for v in text.split(",")]


def monte_carlo_spec(text: str) -> Tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected samples,horizon,seed")
    samples, horizon = positive_int(parts[0]), positive_int(parts[1])
    try:
        seed = int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"seed must be an integer, got {parts[2]!r}"
        ) from None
    return samples, horizon, seed


def rectangle_spec(text: str) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    try:
        a, b, c, d = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b,c,d, got {text!r}") from None
    return (a, b), (c, d)


def load_kernel_document(text: str) -> KernelDocument:
    """Decode kernel JSON, reporting the line or field that is wrong"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedDocument(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    try:
        return KernelDocument.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        where = ".".join(str(part) for part in error["loc"]) or "document"
        raise MalformedDocument(f"{where}: {error['msg']}") from None


def load_partitions(path: str) -> RefinementChain:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedDocument(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, list) or not data:
        raise MalformedDocument("expected a non-empty JSON array of breakpoint arrays")
    return RefinementChain(
        tuple(Partition1D.from_json(json.dumps(points)) for points in data)
    )


def write_plot(report: PosteriorReport, script_path: str):
    """Write a gnuplot script and data file comparing the two densities"""
    script = Path(script_path)
    data = script.with_suffix(".dat")
    lines = ["# midpoint approximate_density"]
    for cell in report.cells:
        if cell.density is None:
            continue
        midpoint = (cell.left + cell.right) / 2
        lines.append(f"{midpoint!r} {cell.density!r}")
    data.write_text("\n".join(lines) + "\n", encoding="utf-8")

    plots = [f"'{data.name}' using 1:2 with histeps title 'approximate'"]
    if report.oracle is not None:
        plots.append(
            f"normal(x, {report.oracle.mean!r}, {report.oracle.variance!r})"
            " with lines title 'exact'"
        )
    script.write_text(
        "\n".join(
            [
                "normal(x, m, v) = exp(-(x - m)**2 / (2 * v)) / sqrt(2 * pi * v)",
                f"set title 'Posterior given {report.observation!r} ({report.scheme})'",
                "set xlabel 'x'",
                "set ylabel 'density'",
                "plot " + ", \\\n     ".join(plots),
                "",
            ]
        ),
        encoding="utf-8",
    )
    logger.info("plot written to %s and %s", script, data)


def cmd_bayes(args, toolkit: KernelToolkit) -> int:
    report = toolkit.posterior(
        args.m,
        args.n,
        args.prior,
        args.likelihood_var,
        args.obs,
        queries=args.query,
        exact=args.exact,
    )
    if args.emit_plot:
        write_plot(report, args.emit_plot)
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        print(report.model_dump_json(indent=2))
    return EXIT_OK


def cmd_dagger(args, toolkit: KernelToolkit) -> int:
    try:
        text = Path(args.kernel).read_text(encoding="utf-8")
    except OSError as e:
        raise MalformedDocument(f"cannot read {args.kernel}: {e.strerror}") from None
    print(toolkit.invert(load_kernel_document(text)).to_json())
    return EXIT_OK


def cmd_converge(args, toolkit: KernelToolkit) -> int:
    if args.partitions:
        chain = load_partitions(args.partitions)
    else:
        chain = RefinementChain(tuple(window_scheme(args.m, n) for n in args.levels))
    report = toolkit.converge(
        chain,
        args.interval or [(0.0, 1.0)],
        prior_text=args.prior,
        likelihood_var=args.likelihood_var,
        rectangle=args.rectangle,
    )
    sys.stdout.write(report.to_csv(include_timing=args.timing))
    return EXIT_OK


def cmd_netkat(args, toolkit: KernelToolkit) -> int:
    program = args.program
    if program.startswith("@"):
        try:
            program = Path(program[1:]).read_text(encoding="utf-8")
        except OSError as e:
            raise MalformedDocument(
                f"cannot read {program[1:]}: {e.strerror}"
            ) from None
    report = toolkit.netkat(
        program,
        args.level,
        args.input,
        args.query,
        monte_carlo=args.mc,
        state_budget=args.state_budget,
        pair_budget=args.pair_budget,
    )
    print(report.model_dump_json(indent=2))
    return EXIT_OK


def cmd_selftest(args, toolkit: KernelToolkit) -> int:
    outcomes = toolkit.selftest(seed=args.seed, cases=args.cases)
    for outcome in outcomes:
        print(outcome.summary_line())
        for failure in outcome.failures[:5]:
            print(f"  {failure}")
    failed = any(outcome.failures for outcome in outcomes)
    return EXIT_SELFTEST_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krn", description="Approximate and invert Markov kernels"
    )
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=config.LOG_LEVEL.upper(),
    )
    commands = parser.add_subparsers(dest="command", required=True)

    bayes = commands.add_parser("bayes", help="approximate Bayesian inversion")
    bayes.add_argument("--m", type=positive_int, required=True)
    bayes.add_argument("--n", type=positive_int, required=True)
    bayes.add_argument("--prior", default="normal:0:1")
    bayes.add_argument("--likelihood-var", type=float, default=1.0)
    bayes.add_argument("--obs", type=float, required=True)
    bayes.add_argument("--query", action="append", default=[])
    bayes.add_argument("--format", choices=["json", "csv"], default="json")
    bayes.add_argument("--quad-nodes", type=positive_int)
    bayes.add_argument("--tail-cutoff", type=float)
    bayes.add_argument("--exact", action="store_true")
    bayes.add_argument("--emit-plot", metavar="PATH")
    bayes.set_defaults(handler=cmd_bayes)

    dagger = commands.add_parser("dagger", help="invert a finite kernel file")
    dagger.add_argument("kernel", metavar="KERNEL_JSON")
    dagger.set_defaults(handler=cmd_dagger)

    converge = commands.add_parser("converge", help="refinement convergence sweep")
    converge.add_argument("--m", type=positive_int, default=7)
    converge.add_argument("--levels", type=int_list, default=[1, 2, 4, 8, 16])
    converge.add_argument("--interval", type=real_pair, action="append")
    converge.add_argument("--partitions", metavar="JSON")
    converge.add_argument("--rectangle", type=rectangle_spec)
    converge.add_argument("--prior", default="normal:0:1")
    converge.add_argument("--likelihood-var", type=float, default=1.0)
    converge.add_argument("--quad-nodes", type=positive_int)
    converge.add_argument("--tail-cutoff", type=float)
    converge.add_argument("--timing", action="store_true")
    converge.set_defaults(handler=cmd_converge)

    netkat = commands.add_parser("netkat", help="ProbNetKAT queries")
    netkat.add_argument("--program", required=True, help="program text or @file")
    netkat.add_argument("--level", type=positive_int, required=True)
    netkat.add_argument("--input", default="(0)")
    netkat.add_argument("--query", action="append", default=[])
    netkat.add_argument("--mc", type=monte_carlo_spec, metavar="SAMPLES,HORIZON,SEED")
    netkat.add_argument("--state-budget", type=positive_int)
    netkat.add_argument("--pair-budget", type=positive_int)
    netkat.set_defaults(handler=cmd_netkat)

    selftest = commands.add_parser("selftest", help="run the invariant suites")
    selftest.add_argument("--seed", type=int)
    selftest.add_argument("--cases", type=positive_int)
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        toolkit = KernelToolkit(
            config,
            nodes_per_cell=getattr(args, "quad_nodes", None),
            tail_cutoff=getattr(args, "tail_cutoff", None),
        )
        return args.handler(args, toolkit)
    except (StateBudgetExceeded, PairBudgetExceeded) as e:
        print(f"error: {e}; try --mc or a larger budget", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KrnError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
