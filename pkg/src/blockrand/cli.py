"""Command-line entry point: assign / estimate / moments / verify / simulate.

Exit codes: 0 success, 1 validation error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import estimators, moments, montecarlo, oracle
from .design import is_balanced, make_rng, sample_block, sample_complete, Assignment
from .errors import BlockRandError
from .formats import (
    SCHEMA_VERSION,
    assignment_csv,
    dump_json,
    load_corpus,
    load_design,
    load_study,
    load_table,
)
from .numeric import format_number
from .outcomes import sate_true

log = logging.getLogger("blockrand")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
SEED_ENV = "BLOCKRAND_SEED"


class UsageError(BlockRandError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    arithmetic: str = "double"
    output: str | None = None
    fmt: str = "json"
    verbosity: int = 0

    @property
    def exact(self) -> bool:
        return self.arithmetic == "rational"

    def require_seed(self) -> int:
        if self.seed is None:
            raise UsageError(f"{self.subcommand} needs --seed or the {SEED_ENV} environment variable")
        return self.seed


def _seed(value: str | None) -> int | None:
    if value is None:
        value = os.environ.get(SEED_ENV)
        if value is None:
            return None
        source = SEED_ENV
    else:
        source = "--seed"
    try:
        seed = int(value)
    except ValueError:
        raise UsageError(f"{source} must be a non-negative integer, got {value!r}") from None
    if seed < 0:
        raise UsageError(f"{source} must be a non-negative integer, got {seed}")
    return seed


def _treatments(text: str) -> tuple[int, int]:
    try:
        s, t = (int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--treatments must look like 's,t', got {text!r}") from None
    return s, t


def _common(p: argparse.ArgumentParser, arithmetic: bool = True) -> None:
    p.add_argument("--format", dest="fmt", choices=("json", "text"), default="json")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    p.add_argument("--verbose", "-v", action="count", default=0)
    if arithmetic:
        p.add_argument("--arithmetic", choices=("double", "rational"), default="double")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockrand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("assign", help="draw a balanced (block) randomized assignment as CSV")
    p.add_argument("--design", required=True)
    p.add_argument("--seed")
    p.add_argument("--mode", choices=("block", "complete"), default="block")
    _common(p, arithmetic=False)

    p = sub.add_parser("estimate", help="SATE point and variance estimates from observed data")
    p.add_argument("--data", required=True, help="CSV block_id,unit_index,treatment[,outcome]")
    p.add_argument("--design", required=True)
    p.add_argument("--treatments", required=True, help="s,t")
    p.add_argument("--estimator", choices=("diff", "ht", "both"), default="both")
    p.add_argument("--table", help="potential outcomes to reveal when the CSV has no outcome column")
    p.add_argument("--no-variance", action="store_true", help="point estimates only")
    _common(p)

    p = sub.add_parser("moments", help="closed-form SATE moments from a potential-outcome table")
    p.add_argument("--table", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--treatments", required=True)
    _common(p)

    p = sub.add_parser("verify", help="certify the identities exactly on a corpus")
    p.add_argument("--corpus", help="corpus JSON; default: built-in corpus")
    p.add_argument("--identity", action="append", choices=oracle.IDENTITIES)
    _common(p, arithmetic=False)

    p = sub.add_parser("simulate", help="Monte Carlo moments of the SATE estimators")
    p.add_argument("--table", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--treatments", required=True)
    p.add_argument("-R", "--replications", type=int, default=montecarlo.DEFAULT_REPLICATIONS)
    p.add_argument("--seed")
    p.add_argument("--statistics", default=None, help="comma list of diff,ht,varhat_diff,varhat_ht")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=montecarlo.DEFAULT_BATCH)
    _common(p)
    return parser


def _config(args) -> RunConfig:
    inputs = {k: getattr(args, k) for k in ("design", "data", "table", "corpus") if getattr(args, k, None)}
    return RunConfig(
        subcommand=args.command,
        inputs=inputs,
        seed=_seed(getattr(args, "seed", None)),
        arithmetic=getattr(args, "arithmetic", "double"),
        output=args.output,
        fmt=args.fmt,
        verbosity=args.verbose,
    )


def _text(report: dict, indent: int = 0) -> str:
    lines = []
    pad = "  " * indent
    for key, value in report.items():
        if isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            lines.append(_text(value, indent + 1))
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            lines.append(f"{pad}{key}:")
            for item in value:
                lines.append(_text(item, indent + 1))
                lines.append("")
        else:
            lines.append(f"{pad}{key}: {value}")
    return "\n".join(line for line in lines if line is not None).rstrip("\n")


def _emit(config: RunConfig, body: str) -> None:
    if config.output:
        Path(config.output).write_text(body, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(body)


def _emit_report(config: RunConfig, report: dict) -> None:
    body = dump_json(report) if config.fmt == "json" else _text(report) + "\n"
    _emit(config, body)


def _header(config: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": config.subcommand}


def cmd_assign(args, config: RunConfig) -> int:
    design = load_design(args.design)
    rng = make_rng(config.require_seed())
    if args.mode == "block":
        assignment = sample_block(design, rng)
    else:
        flat = sample_complete(design.n, design.r, rng).flat()
        assignment = Assignment.from_flat(flat, design.block_sizes)
    log.info("drew %s assignment for %d units", args.mode, design.n)
    _emit(config, assignment_csv(assignment))
    return EXIT_OK


def cmd_estimate(args, config: RunConfig) -> int:
    design = load_design(args.design)
    s, t = _treatments(args.treatments)
    table = load_table(args.table, config.exact, design) if args.table else None
    study = load_study(args.data, design, config.exact, table)
    kinds = ("diff", "ht") if args.estimator == "both" else (args.estimator,)
    flags = [] if is_balanced(study.assignment, design) else ["unbalanced_assignment"]
    rows = []
    for kind in kinds:
        est = estimators.estimate_sate(study, s, t, kind, variance=not args.no_variance)
        row_flags = list(flags)
        se = None
        if est.variance_estimate is not None:
            if est.negative_variance:
                row_flags.append("negative_variance_estimate")
            else:
                se = math.sqrt(float(est.variance_estimate))
        rows.append(
            {
                "estimator": kind,
                "point": format_number(est.point, config.exact),
                "variance_estimate": format_number(est.variance_estimate, config.exact),
                "se": se,
                "flags": row_flags,
            }
        )
    report = _header(config) | {"s": s, "t": t, "arithmetic": config.arithmetic, "estimates": rows}
    _emit_report(config, report)
    return EXIT_OK


def cmd_moments(args, config: RunConfig) -> int:
    design = load_design(args.design)
    table = load_table(args.table, config.exact, design)
    s, t = _treatments(args.treatments)
    num = lambda v: format_number(v, config.exact)  # noqa: E731
    terms = {
        "var_diff": moments.sate_variance_terms(table, s, t, "diff"),
        "var_ht": moments.sate_variance_terms(table, s, t, "ht"),
        "var_star_diff": moments.sate_variance_terms(table, s, t, "diff", star=True),
        "var_star_ht": moments.sate_variance_terms(table, s, t, "ht", star=True),
    }
    report = _header(config) | {"s": s, "t": t, "arithmetic": config.arithmetic}
    report["delta"] = num(sate_true(table, s, t))
    for key, values in terms.items():
        report[key] = num(sum(values[1:], values[0]))
    report["per_block"] = [
        {"block": c + 1, "size": size} | {key: num(values[c]) for key, values in terms.items()}
        for c, size in enumerate(design.block_sizes)
    ]
    _emit_report(config, report)
    return EXIT_OK


def cmd_verify(args, config: RunConfig) -> int:
    corpus = load_corpus(args.corpus) if args.corpus else oracle.default_corpus()
    report = oracle.verify_identities(corpus, args.identity)
    summary = report.summary()
    lines = [
        f"{'PASS' if row['fail'] == 0 else 'FAIL'}  {name}: {row['pass']} passed, {row['fail']} failed"
        for name, row in summary.items()
    ]
    verdict = "PASS" if report.passed else "FAIL"
    human = "\n".join(lines + [f"{verdict}: {len(report.checks)} checks on {len(corpus)} cases"]) + "\n"
    if config.fmt == "text":
        _emit(config, human)
    else:
        doc = _header(config) | {
            "passed": report.passed,
            "cases": len(corpus),
            "summary": summary,
            "checks": [
                {
                    "identity": c.identity,
                    "case": c.case,
                    "detail": c.detail,
                    "lhs": format_number(c.lhs, True),
                    "rhs": format_number(c.rhs, True),
                    "relation": c.relation,
                    "passed": c.passed,
                }
                for c in report.checks
            ],
        }
        _emit(config, dump_json(doc))
        sys.stderr.write(human)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_simulate(args, config: RunConfig) -> int:
    design = load_design(args.design)
    table = load_table(args.table, False, design)
    s, t = _treatments(args.treatments)
    seed = config.require_seed()
    if args.statistics:
        stats = tuple(x.strip() for x in args.statistics.split(",") if x.strip())
    elif design.supports_variance_estimation():
        stats = montecarlo.BUILTIN_STATISTICS
    else:
        stats = ("diff", "ht")
    values = montecarlo.simulate_values(
        table, s, t, stats, args.replications, seed, args.batch_size, args.workers
    )
    results = {name: montecarlo.summarize(name, v, seed).to_dict() for name, v in values.items()}
    theory = {
        "delta": float(sate_true(table, s, t)),
        "var_diff": float(moments.var_sate_diff(table, s, t)),
        "var_ht": float(moments.var_sate_ht(table, s, t)),
    }
    if design.supports_variance_estimation():
        theory["var_star_diff"] = float(moments.var_star(table, s, t, "diff"))
        theory["var_star_ht"] = float(moments.var_star(table, s, t, "ht"))
    report = _header(config) | {
        "s": s,
        "t": t,
        "seed": seed,
        "replications": args.replications,
        "results": results,
        "theoretical": theory,
    }
    if "diff" in values and "ht" in values:
        report["comparison"] = {
            "variance_difference_ht_minus_diff": results["ht"]["empirical_variance"]
            - results["diff"]["empirical_variance"],
            "identical_per_draw": bool((values["diff"] == values["ht"]).all()),
            "divisible": design.divisible(),
        }
    _emit_report(config, report)
    return EXIT_OK


COMMANDS = {
    "assign": cmd_assign,
    "estimate": cmd_estimate,
    "moments": cmd_moments,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = _config(args)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(config.verbosity, 2),
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](args, config)
    except BlockRandError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
