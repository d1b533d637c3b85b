"""rankstab: defects, stabilizers, witnesses and sweeps from the command line.

Exit codes:
    0  success
    1  unexpected failure
    2  presentation syntax or malformed JSON
    3  arity, size or field mismatch
    4  not stabilized, or a component solver broke its contract
    5  dimension arithmetic or precondition failure of a composition
"""
from typing import List, Optional, Sequence, Tuple, Dict, Any
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from exactmat import Mat, FieldMismatchError, DimensionMismatchError
from freealg import (
    Presentation, MatTuple, PresentationSyntaxError, ArityMismatchError, parse_presentation,
    parse_group_presentation, pretty_print, direct_product_presentation, matrix_algebra_presentation,
    free_product_presentation,
)
from approx import defect, PolyRankPreconditionError
from compress import CompressionPreconditionError, ImpossibleInputError
from stabilize import (
    NotStabilized, SolverContractError, DimensionArithmeticError, UnitRelationError, BoundViolationError,
    stabilize_findim,
)
from solvers import (
    BaseSolver, SolverController, FindimSolver, ExactInputSolver, ExactGroupSolver, GroupFromAlgebraSolver,
    STRATEGIES,
)
from witness import weyl_family, matrix_size_family, folner_data, folner_family, vacuous_certify, vacuous_presentation
from codec import (
    CodecError, read_json, load_tuple, dump_tuple, report_to_json, outcome_to_json, format_rational, to_jsonable,
)

logger = logging.getLogger("rankstab")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
SWEEP_COLUMNS = ["size", "trial", "defect", "recovered_distance", "verified"]
WITNESS_COLUMNS = ["family", "params", "size", "max_defect", "note"]
NOISE_ENTRY_BOUND = 3


class UsageError(ValueError):
    """A strategy or family was selected without the flags it needs."""


def read_presentation(path: str) -> Presentation:
    with open(path, "r") as f:
        return parse_presentation(f.read())


def parse_sizes(text: str) -> Tuple[int, int]:
    """"a..b" (or a single integer) as an inclusive range."""
    try:
        if ".." in text:
            low, high = text.split("..", 1)
            return int(low), int(high)
        return int(text), int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Sizes must look like a..b, got {text!r}")


def _component_solver(ref_path: Optional[str], m: int, m_cap: Optional[int]) -> BaseSolver:
    if ref_path is None:
        return ExactInputSolver()
    return FindimSolver(load_tuple(ref_path), m=m, m_cap=m_cap)


def cmd_defect(args) -> int:
    P = read_presentation(args.presentation)
    T = load_tuple(args.tuple)
    report = defect(P, T)
    print(json.dumps(report_to_json(report), indent=2))
    return 0


def _build_stabilize_job(args) -> Tuple[Any, SolverController]:
    """Target presentation and solver for the chosen strategy."""
    strategy = args.strategy
    if strategy == "findim":
        if args.ref is None:
            raise UsageError("--strategy findim needs --ref")
        P = read_presentation(args.presentation)
        return P, SolverController("findim", reference=load_tuple(args.ref), m=args.m, m_cap=args.m_cap)
    if strategy in ("zero-product", "exact"):
        return read_presentation(args.presentation), SolverController(strategy)
    if strategy == "direct-product":
        if args.right is None:
            raise UsageError("--strategy direct-product needs --right")
        PA, PB = read_presentation(args.presentation), read_presentation(args.right)
        controller = SolverController(
            "direct-product",
            left=_component_solver(args.ref, args.m, args.m_cap),
            right=_component_solver(args.right_ref, args.m, args.m_cap),
            left_presentation=PA, right_presentation=PB)
        return direct_product_presentation(PA, PB), controller
    if strategy == "matrix-algebra":
        if args.units is None:
            raise UsageError("--strategy matrix-algebra needs --units")
        inner = read_presentation(args.presentation)
        reference = load_tuple(args.ref) if args.ref else None
        controller = SolverController(
            "matrix-algebra", inner=_component_solver(args.ref, args.m, args.m_cap),
            inner_presentation=inner, m=args.units, reference=reference)
        return matrix_algebra_presentation(inner, args.units), controller
    if strategy == "group-algebra":
        with open(args.presentation, "r") as f:
            group = parse_group_presentation(f.read())
        group_solver = ExactGroupSolver() if args.ref is None else GroupFromAlgebraSolver(
            FindimSolver(load_tuple(args.ref), m=args.m, m_cap=args.m_cap))
        return group.algebra(), SolverController("group-algebra", group=group, group_solver=group_solver)
    if strategy == "free-product":
        if args.right is None or args.rep is None or args.rep2 is None:
            raise UsageError("--strategy free-product needs --right, --rep and --rep2")
        PA, PB = read_presentation(args.presentation), read_presentation(args.right)
        controller = SolverController(
            "free-product",
            left=_component_solver(args.ref, args.m, args.m_cap),
            right=_component_solver(args.right_ref, args.m, args.m_cap),
            left_presentation=PA, right_presentation=PB,
            rep=load_tuple(args.rep), rep_prime=load_tuple(args.rep2), g=args.g, g_prime=args.g2)
        return free_product_presentation(PA, PB), controller
    raise ValueError(f"Strategy must be one of: {', '.join(STRATEGIES)}")


def cmd_stabilize(args) -> int:
    P, controller = _build_stabilize_job(args)
    T = load_tuple(args.tuple)
    try:
        outcome = controller.solve(P, T, args.eps)
    except NotStabilized as e:
        logger.error(f"Not stabilized: {e}")
        print(json.dumps({"verified": False, "error": str(e),
                          "diagnostics": to_jsonable(e.diagnostics)},
                         indent=2))
        return 4
    if args.out:
        dump_tuple(outcome.solution, args.out)
        data = outcome_to_json(outcome, solution_file=args.out)
    else:
        data = outcome_to_json(outcome)
    print(json.dumps(data, indent=2))
    logger.info(f"Verified solution of size {outcome.n}, distances {list(outcome.distances)}")
    return 0


def _witness_row(args) -> Tuple[MatTuple, Dict[str, Any]]:
    family = args.family
    if family == "weyl":
        fam = weyl_family()
        T = fam(args.n)
        report = defect(fam.presentation, T)
        return T, {"params": f"n={args.n}", "max_defect": report.max_defect,
                   "note": f"expected {format_rational(fam.defect_formula(args.n))}"}
    if family == "matsize":
        fam = matrix_size_family(args.k)
        T = fam(args.n)
        report = defect(fam.presentation, T)
        return T, {"params": f"k={args.k};n={args.n}", "max_defect": report.max_defect,
                   "note": f"bound {format_rational(fam.defect_formula(args.n))}"}
    if family == "folner":
        data = folner_data(args.i)
        report = defect(folner_family().presentation, data.mats)
        return data.mats, {"params": f"i={args.i}", "max_defect": report.max_defect,
                           "note": f"dim_U={data.dim_interior};dim_V0={data.dim_deep_interior};"
                                   f"words={data.word_count}"}
    if family == "vacuous":
        if args.tuple is None:
            raise UsageError("witness vacuous needs --tuple")
        T = load_tuple(args.tuple)
        verdict = vacuous_certify(T)
        report = defect(vacuous_presentation(T.field), T)
        return T, {"params": f"n={T.n}", "max_defect": report.max_defect, "note": verdict.value}
    raise ValueError(f"Unknown witness family {family!r}")


def cmd_witness(args) -> int:
    T, row = _witness_row(args)
    if args.out:
        dump_tuple(T, args.out)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(WITNESS_COLUMNS)
    writer.writerow([args.family, row["params"], T.n, format_rational(row["max_defect"]), row["note"]])
    return 0


@dataclass(frozen=True)
class SweepRow:
    size: int
    trial: int
    defect: Fraction
    recovered_distance: Optional[int]
    verified: bool

    def as_csv(self) -> List[str]:
        distance = "" if self.recovered_distance is None else str(self.recovered_distance)
        return [str(self.size), str(self.trial), format_rational(self.defect), distance,
                "true" if self.verified else "false"]


def perturb(T: MatTuple, noise_rank: int, rng: np.random.Generator) -> MatTuple:
    """Add noise_rank random integer rank-one updates u vᵀ to every matrix."""
    mats = []
    for M in T:
        for _ in range(noise_rank):
            u = rng.integers(-NOISE_ENTRY_BOUND, NOISE_ENTRY_BOUND + 1, size=T.n)
            v = rng.integers(-NOISE_ENTRY_BOUND, NOISE_ENTRY_BOUND + 1, size=T.n)
            update = Mat.from_rows(T.field, [[int(a) * int(b) for b in v] for a in u], T.n)
            M = M + update
        mats.append(M)
    return MatTuple(T.field, T.n, tuple(mats))


def _sweep_trial(P: Presentation, ref: MatTuple, size: int, trial: int, noise_rank: int, seed: int,
                 m: int, eps: Fraction) -> SweepRow:
    rng = np.random.default_rng([seed, size, trial])
    A = perturb(ref.tensor_identity(size // ref.n), noise_rank, rng)
    measured = defect(P, A).max_defect
    try:
        outcome = stabilize_findim(P, m, ref, A, eps)
        return SweepRow(size, trial, measured, outcome.max_distance, True)
    except NotStabilized as e:
        logger.debug(f"size={size} trial={trial}: {e}")
        return SweepRow(size, trial, measured, None, False)


def run_sweep(P: Presentation, ref: MatTuple, sizes: Tuple[int, int], noise_rank: int, trials: int,
              seed: int, m: int = 1, eps: Fraction = Fraction(1, 4), threads: int = 1) -> List[SweepRow]:
    """One row per (size, trial) for every multiple of the reference size in the range.

    Each trial draws from its own stream seeded by (seed, size, trial), so the
    rows do not depend on the thread count.
    """
    if ref.n <= 0:
        raise CompressionPreconditionError("The reference solution must have positive size")
    low, high = sizes
    size_list = [s for s in range(max(low, ref.n), high + 1) if s % ref.n == 0]
    jobs = [(size, trial) for size in size_list for trial in range(trials)]
    logger.info(f"Sweep over sizes {size_list} with {trials} trials each on {threads} threads")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(lambda job: _sweep_trial(P, ref, job[0], job[1], noise_rank, seed, m, Fraction(eps)),
                             jobs))


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())
    return buffer.getvalue()


def cmd_sweep(args) -> int:
    if not args.ref:
        raise UsageError("sweep needs --ref (on the command line or in the config file)")
    P = read_presentation(args.presentation)
    ref = load_tuple(args.ref)
    rows = run_sweep(P, ref, args.sizes, args.noise_rank, args.trials, args.seed, m=args.m, eps=args.eps,
                     threads=args.threads)
    text = sweep_csv(rows)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_parse(args) -> int:
    P = read_presentation(args.presentation)
    sys.stdout.write(pretty_print(P))
    summary = {
        "flavor": P.flavor.value,
        "field": str(P.field),
        "generators": list(P.generator_names),
        "relator_count": P.relator_count,
        "max_degree": P.max_degree,
        "zero_constants": P.has_zero_constants,
    }
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankstab", description="Exact rank-stability toolkit")
    parser.add_argument("--config", help="JSON file with default values for any flag")
    parser.add_argument("--log-level", default="WARNING", help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("defect", help="Relator defects of a tuple")
    p.add_argument("presentation")
    p.add_argument("tuple")
    p.set_defaults(handler=cmd_defect)

    p = sub.add_parser("stabilize", help="Find an exact solution near a tuple")
    p.add_argument("presentation", help="Presentation (first factor, inner algebra or group for compositions)")
    p.add_argument("tuple")
    p.add_argument("--strategy", choices=STRATEGIES, default="findim")
    p.add_argument("--m", type=int, default=1, help="Degree bound for the invariant subspace")
    p.add_argument("--m-cap", type=int, default=None, help="Retry with larger m up to this value")
    p.add_argument("--ref", help="Exact reference solution (first factor for compositions)")
    p.add_argument("--eps", type=Fraction, default=Fraction(1, 4))
    p.add_argument("--right", help="Second factor presentation")
    p.add_argument("--right-ref", help="Exact reference solution of the second factor")
    p.add_argument("--units", type=int, help="Matrix algebra size m")
    p.add_argument("--rep", help="Exact representation of size k*g of the first factor")
    p.add_argument("--rep2", help="Exact representation of size k'*g' of the second factor")
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--g2", type=int, default=1)
    p.add_argument("--out", help="Write the solution tuple here instead of inline")
    p.set_defaults(handler=cmd_stabilize)

    p = sub.add_parser("witness", help="Generate an instability witness")
    p.add_argument("family", choices=["weyl", "matsize", "folner", "vacuous"])
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--i", type=int, default=2)
    p.add_argument("--tuple", help="(X, Y, Z) tuple for the vacuous certifier")
    p.add_argument("--out", help="Write the witness tuple here")
    p.set_defaults(handler=cmd_witness)

    p = sub.add_parser("sweep", help="Randomized perturb-and-repair experiment")
    p.add_argument("presentation")
    p.add_argument("--ref", help="Exact reference solution (may come from --config)")
    p.add_argument("--sizes", type=parse_sizes, default=(1, 1))
    p.add_argument("--noise-rank", type=int, default=1)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--eps", type=Fraction, default=Fraction(1, 4))
    p.add_argument("--threads", type=int, default=int(os.getenv("RANKSTAB_THREADS", "1")))
    p.add_argument("--out")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("parse", help="Normalize a presentation file")
    p.add_argument("presentation")
    p.set_defaults(handler=cmd_parse)
    parser.subcommand_parsers = sub.choices
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Optional[Sequence[str]]):
    """Install config-file values as subcommand defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    config = read_json(known.config)
    if not isinstance(config, dict):
        raise CodecError("Config file must hold a JSON object")
    for key in ("eps",):
        if key in config:
            config[key] = Fraction(str(config[key]))
    if "sizes" in config:
        config["sizes"] = parse_sizes(str(config["sizes"]))
    if "log_level" in config:
        parser.set_defaults(log_level=config["log_level"])
    for subparser in parser.subcommand_parsers.values():
        subparser.set_defaults(**config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format=LOG_FORMAT)
        return args.handler(args)
    except (PresentationSyntaxError, CodecError, UsageError, FileNotFoundError) as e:
        logger.error(f"Parse error: {e}")
        return 2
    except (ArityMismatchError, FieldMismatchError, DimensionMismatchError) as e:
        logger.error(f"Mismatch: {e}")
        return 3
    except (NotStabilized, SolverContractError, BoundViolationError) as e:
        logger.error(f"Not stabilized: {e}")
        return 4
    except (DimensionArithmeticError, CompressionPreconditionError, ImpossibleInputError, UnitRelationError,
            PolyRankPreconditionError) as e:
        logger.error(f"Precondition failed: {e}")
        return 5
    except Exception as e:
        logger.error(f"Unexpected failure: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
