from typing import List, Tuple, Optional
from fractions import Fraction
import logging
import math

from exactmat import (
    Mat, Subspace, hstack, kernel, intersect, independent_prefix, rank, inverse, direct_sum,
)
from freealg import Presentation, MatTuple, ArityMismatchError
from approx import defect, is_eps_approx, is_exact_solution, hat_distances

logger = logging.getLogger(__name__)


class CompressionPreconditionError(ValueError):
    """Inputs violate the size or distance preconditions of a compression step."""


class ImpossibleInputError(ValueError):
    """An undersized exact solution cannot be padded because some relator has a constant term."""


class CompressionInvariantError(RuntimeError):
    """An internal guarantee of the compression construction failed."""


def band_limit(n: int, d: int, eps: Fraction) -> int:
    """⌊(1 + εd)n⌋ computed exactly."""
    return math.floor((1 + Fraction(eps) * d) * n)


def compress_align(A: MatTuple, B: MatTuple, eps: Fraction) -> Tuple[Mat, MatTuple]:
    """Align an oversized tuple B against A and cut it down to size ⌊(1+εd)n⌋.

    Returns E such that conjugating the padded A_i by E leaves them unchanged
    and the trailing columns of E⁻¹B_iE vanish, together with the top-left
    blocks C_i of E⁻¹B_iE.

    Args:
        A: tuple of size n
        B: tuple of size n' > (1+εd)n with hat_dist(A_i, B_i) < εn
        eps: approximation parameter

    Raises:
        CompressionPreconditionError: if B is not oversized or not ε-close to A
    """
    eps = Fraction(eps)
    if A.arity != B.arity:
        raise ArityMismatchError(f"Aligning tuples of arity {A.arity} and {B.arity}")
    field, d, n, n_prime = A.field, A.arity, A.n, B.n
    target = band_limit(n, d, eps)
    if not n_prime > (1 + eps * d) * n:
        raise CompressionPreconditionError(f"Size {n_prime} is not above (1+{eps}*{d})*{n}")
    check = is_eps_approx(A, B, eps)
    if not check.holds:
        raise CompressionPreconditionError(f"Distances {check.distances} are not all below {eps}*{n}")

    # W: the coordinates beyond n
    W = Subspace.span(field, n_prime, Mat.identity(field, n_prime).block(0, n_prime, n, n_prime))
    chosen = Mat.identity(field, n_prime).block(0, n_prime, 0, n)
    K = W
    for i, B_i in enumerate(B):
        images = B_i @ K.basis
        picks = independent_prefix(images)
        k_i = len(picks)
        logger.debug(f"Generator {i}: image of B_i on the current intersection has dim {k_i}")
        if k_i > eps * n:
            raise CompressionInvariantError(f"k_{i} = {k_i} exceeds {eps}*{n}")
        if picks:
            candidates = K.basis.select_columns(picks)
            keep = independent_prefix(candidates, start=chosen)
            chosen = hstack(chosen, candidates.select_columns(keep))
        K = intersect(K, kernel(B_i))

    m = chosen.n_cols
    if m > target:
        raise CompressionInvariantError(f"{m} chosen vectors exceed the window {target}")
    fill = independent_prefix(K.basis, start=chosen)
    E = hstack(chosen, K.basis.select_columns(fill))
    if E.n_cols != n_prime:
        raise CompressionInvariantError(f"Completion reached {E.n_cols} of {n_prime} columns")

    E_inv = inverse(E)
    conjugated = [E_inv @ B_i @ E for B_i in B]
    for M in conjugated:
        if not M.block(0, n_prime, target, n_prime).is_zero():
            raise CompressionInvariantError("Trailing columns of the aligned tuple are not zero")
    C = MatTuple(field, target, tuple(M.block(0, target, 0, target) for M in conjugated))
    logger.info(f"Compressed size {n_prime} to {target} ({m} vectors chosen)")
    return E, C


def size_band(n: int, d: int, eps: Fraction, delta: Fraction) -> Tuple[Fraction, Fraction]:
    """[(1−δ)/(1+εd)·n, (1+εd)·n]."""
    growth = 1 + Fraction(eps) * d
    return (1 - Fraction(delta)) / growth * n, growth * n


def resize_solution(P: Presentation, A: MatTuple, B: MatTuple, eps: Fraction,
                    delta: Optional[Fraction] = None) -> MatTuple:
    """Bring an exact solution B that ε-approximates A into the size band around n.

    Args:
        P: presentation B solves exactly
        A: approximate solution of size n
        B: exact solution of size n'
        eps: approximation parameter
        delta: defect bound with max_defect(A) < delta; defaults to the measured defect

    Returns:
        Exact solution of size m in the band that still ε-approximates A.

    Raises:
        CompressionPreconditionError: B is not exact, not ε-close, or the defect bound fails
        ImpossibleInputError: B is undersized and some relator has a constant term
    """
    eps = Fraction(eps)
    measured = defect(P, A).max_defect
    if delta is None:
        delta = measured
    elif not measured < Fraction(delta):
        raise CompressionPreconditionError(f"Defect {measured} is not below {delta}")
    delta = Fraction(delta)
    if not is_exact_solution(P, B):
        raise CompressionPreconditionError("B is not an exact solution")
    if not is_eps_approx(A, B, eps).holds:
        raise CompressionPreconditionError("B does not ε-approximate A")

    n, d, n_prime = A.n, A.arity, B.n
    low, high = size_band(n, d, eps, delta)
    if low <= n_prime <= high:
        logger.debug(f"Size {n_prime} already in band [{low}, {high}]")
        result = B
    elif n_prime > high:
        _, result = compress_align(A, B, eps)
        logger.info(f"Oversized solution {n_prime} compressed to {result.n}")
    else:
        if not P.has_zero_constants:
            raise ImpossibleInputError(
                f"Solution of size {n_prime} is below {low} but a relator has a constant term")
        result = MatTuple(B.field, n, tuple(direct_sum(M, Mat.zeros(B.field, n - n_prime)) for M in B))
        logger.info(f"Undersized solution {n_prime} padded with zeros to {n}")

    _verify_resized(P, A, result, eps, delta, low, high)
    return result


def _verify_resized(P: Presentation, A: MatTuple, C: MatTuple, eps: Fraction, delta: Fraction,
                    low: Fraction, high: Fraction):
    if not is_exact_solution(P, C):
        raise CompressionInvariantError("Resized tuple is not an exact solution")
    check = is_eps_approx(A, C, eps)
    if not check.holds:
        raise CompressionInvariantError(f"Resized tuple drifted: distances {check.distances}")
    if not low <= C.n <= high:
        raise CompressionInvariantError(f"Resized size {C.n} outside [{low}, {high}]")
    epsd = eps * A.arity
    if delta < epsd * epsd and C.n < (1 - epsd) * A.n:
        raise CompressionInvariantError(f"Resized size {C.n} below (1-εd)n")
