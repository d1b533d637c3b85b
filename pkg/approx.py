from typing import List, Tuple, Optional
from dataclasses import dataclass
from fractions import Fraction
import logging

from exactmat import Mat, rank, hat_dist
from freealg import NcPoly, Presentation, MatTuple, ArityMismatchError, evaluate_many, _check_tuple

logger = logging.getLogger(__name__)


class PolyRankPreconditionError(ValueError):
    """Generator distances are not below the supplied lambda."""


@dataclass(frozen=True)
class DefectReport:
    """Normalized ranks of every relator evaluated at a tuple.

    Attributes:
        per_relator: (relator index, normalized rank) pairs in relator order
        ranks: absolute ranks in the same order
        max_defect: largest normalized rank (0 when there are no relators)
        n: size of the evaluated tuple
    """
    per_relator: Tuple[Tuple[int, Fraction], ...]
    ranks: Tuple[int, ...]
    max_defect: Fraction
    n: int

    @property
    def is_exact(self) -> bool:
        return all(r == 0 for r in self.ranks)

    @property
    def worst_relator(self) -> Optional[int]:
        """Index of the first relator attaining the max defect."""
        for index, value in self.per_relator:
            if value == self.max_defect:
                return index
        return None


def relator_ranks(P: Presentation, T: MatTuple) -> List[int]:
    _check_tuple(P.arity, P.field, T)
    return [rank(M) for M in evaluate_many(P.associative_relators(), T)]


def defect(P: Presentation, T: MatTuple) -> DefectReport:
    """Exact relator defects of T against P (Lie relators are expanded first)."""
    ranks = relator_ranks(P, T)
    n = T.n
    values = tuple((i, Fraction(r, n) if n else Fraction(0)) for i, r in enumerate(ranks))
    max_defect = max((v for _, v in values), default=Fraction(0))
    logger.debug(f"Defect at size {n}: ranks {ranks}, max {max_defect}")
    return DefectReport(values, tuple(ranks), max_defect, n)


def is_exact_solution(P: Presentation, T: MatTuple) -> bool:
    """True iff every relator evaluates to the zero matrix."""
    _check_tuple(P.arity, P.field, T)
    return all(M.is_zero() for M in evaluate_many(P.associative_relators(), T))


def hat_distances(A: MatTuple, B: MatTuple) -> Tuple[int, ...]:
    if A.arity != B.arity:
        raise ArityMismatchError(f"Comparing tuples of arity {A.arity} and {B.arity}")
    return tuple(hat_dist(a, b) for a, b in zip(A, B))


@dataclass(frozen=True)
class ApproxCheck:
    holds: bool
    distances: Tuple[int, ...]

    def __bool__(self) -> bool:
        return self.holds


def is_eps_approx(A: MatTuple, B: MatTuple, eps: Fraction) -> ApproxCheck:
    """B ε-approximates A iff every padded difference has rank strictly below ε·n (n = size of A)."""
    distances = hat_distances(A, B)
    bound = Fraction(eps) * A.n
    return ApproxCheck(all(d < bound for d in distances), distances)


def polyrank_bound(f: NcPoly, lam: int, n: int, n_prime: int, drop_size_term: bool = False) -> int:
    """Right-hand side l·m·λ + |n − n'| of the polynomial rank inequality.

    l and m are taken as at least 1, so constant and zero polynomials get a
    positive bound.
    """
    l = max(1, f.monomial_count)
    m = max(1, f.max_degree)
    size_term = 0 if drop_size_term else abs(n - n_prime)
    return l * m * lam + size_term


def check_polyrank_bound(f: NcPoly, A: MatTuple, B: MatTuple, lam: int) -> bool:
    """Check rank(f̂(A) − f̂(B)) < l·m·λ + |n − n'|, given hat_dist(A_i, B_i) < λ.

    For f without constant term the size summand is dropped and the sharper
    inequality is checked instead.

    Raises:
        PolyRankPreconditionError: if some generator distance is not below lam
    """
    distances = hat_distances(A, B)
    if any(d >= lam for d in distances):
        raise PolyRankPreconditionError(f"Generator distances {distances} are not all below {lam}")
    fa, fb = evaluate_many([f], A)[0], evaluate_many([f], B)[0]
    lhs = hat_dist(fa, fb)
    rhs = polyrank_bound(f, lam, A.n, B.n, drop_size_term=f.has_zero_constant)
    if lhs >= rhs:
        logger.warning(f"Polynomial rank bound violated: {lhs} >= {rhs}")
        return False
    return True


def weighted_defect_bound(first: DefectReport, second: DefectReport) -> Fraction:
    """Size-weighted max of two defects; bounds the defect of the direct sum."""
    total = first.n + second.n
    if total == 0:
        return Fraction(0)
    best = Fraction(0)
    for (_, a), (_, b) in zip(first.per_relator, second.per_relator):
        best = max(best, (a * first.n + b * second.n) / total)
    return best
