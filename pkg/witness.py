"""Standard presentations and the low-defect witness families that go with them."""
from typing import List, Dict, Tuple, Optional, Callable
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
import logging

from exactmat import Mat, FieldSpec, RATIONALS, Subspace, rank, kernel, vstack, hstack, complete_basis, inverse, direct_sum, kronecker
from freealg import Presentation, MatTuple, NcPoly, ArityMismatchError, matrix_units_presentation

logger = logging.getLogger(__name__)


def weyl_presentation(field: FieldSpec = RATIONALS) -> Presentation:
    """<x, y | xy − yx − 1>."""
    x, y = NcPoly.generator(field, 2, 0), NcPoly.generator(field, 2, 1)
    return Presentation(field, ("x", "y"), (x * y - y * x - NcPoly.constant(field, 2),))


def projective_weyl_presentation(field: FieldSpec = RATIONALS) -> Presentation:
    """<x, y, t | xt − tx, yt − ty, xy − yx − t²>."""
    x, y, t = (NcPoly.generator(field, 3, i) for i in range(3))
    return Presentation(field, ("x", "y", "t"), (x * t - t * x, y * t - t * y, x * y - y * x - t * t))


def vacuous_presentation(field: FieldSpec = RATIONALS) -> Presentation:
    """<x, y, z | xyz − 1, xzy>: no finite-dimensional representations and no approximate ones either."""
    x, y, z = (NcPoly.generator(field, 3, i) for i in range(3))
    return Presentation(field, ("x", "y", "z"), (x * y * z - NcPoly.constant(field, 3), x * z * y))


def zero_product_presentation(field: FieldSpec = RATIONALS) -> Presentation:
    x, y = NcPoly.generator(field, 2, 0), NcPoly.generator(field, 2, 1)
    return Presentation(field, ("x", "y"), (x * y,))


def weyl_witness(n: int, field: FieldSpec = RATIONALS) -> MatTuple:
    """X = nilpotent shift, Y = weighted lower shift with XY − YX = diag(1, ..., 1, −(n−1)).

    The Weyl relator has rank one here, so the defect is exactly 1/n.
    """
    if n < 2:
        raise ValueError(f"Weyl witness needs n >= 2, got {n}")
    X = [[0] * n for _ in range(n)]
    Y = [[0] * n for _ in range(n)]
    for k in range(n - 1):
        X[k][k + 1] = 1
        Y[k + 1][k] = k + 1
    return MatTuple(field, n, (Mat.from_rows(field, X), Mat.from_rows(field, Y)))


def matrix_size_witness(k: int, n: int, field: FieldSpec = RATIONALS) -> MatTuple:
    """E_ij = (e_ij ⊗ Id_n) ⊕ Id_1 in row-major order, size nk + 1.

    Every relator of M_k(F) has rank at most one on this tuple, while k does
    not divide nk + 1 so no exact solution of that size exists.
    """
    if k < 2 or n < 1:
        raise ValueError(f"Matrix-size witness needs k >= 2 and n >= 1, got k={k}, n={n}")
    eye_n, eye_1 = Mat.identity(field, n), Mat.identity(field, 1)
    mats = tuple(direct_sum(kronecker(Mat.unit(field, k, k, i, j), eye_n), eye_1)
                 for i in range(k) for j in range(k))
    return MatTuple(field, n * k + 1, mats)


# Følner witness for the projective Weyl algebra, acting through t ↦ 1.
# Monomials x^a y^b are ordered by total degree, then by a.

Monomial = Tuple[int, int]
INTERIOR_WORD_LENGTH = 2


def _monomials(degree: int) -> List[Monomial]:
    return [(a, d - a) for d in range(degree + 1) for a in range(d + 1)]


def _left_multiply(generator: int, monomial: Monomial) -> Dict[Monomial, int]:
    """Left multiplication by x, y or t in the Weyl algebra; y x^a = x^a y − a x^(a−1)."""
    a, b = monomial
    if generator == 0:
        return {(a + 1, b): 1}
    if generator == 1:
        result = {(a, b + 1): 1}
        if a:
            result[(a - 1, b)] = -a
        return result
    return {(a, b): 1}


def _multiplication_matrix(generator: int, degree: int, field: FieldSpec) -> Mat:
    """Left multiplication on monomials of degree ≤ degree; columns of top degree are truncated to zero."""
    basis = _monomials(degree)
    index = {mono: i for i, mono in enumerate(basis)}
    N = len(basis)
    rows = [[0] * N for _ in range(N)]
    for j, mono in enumerate(basis):
        if sum(mono) == degree:
            continue
        for image_mono, coeff in _left_multiply(generator, mono).items():
            rows[index[image_mono]][j] = coeff
    return Mat.from_rows(field, rows, N)


@dataclass(frozen=True)
class FolnerData:
    """Witness tuple with the dimensions that bound its defect.

    Attributes:
        mats: (A_x, A_y, A_t) of size n
        n: dim V, the span of monomials of degree ≤ i
        dim_interior: dim U, vectors v with x v, y v, t v in V
        dim_deep_interior: dim V°, vectors kept in V by every word of length ≤ 2
        word_count: number of words of length ≤ 2 in the generators
        deep_interior: V° itself
    """
    i: int
    mats: MatTuple
    n: int
    dim_interior: int
    dim_deep_interior: int
    word_count: int
    deep_interior: Subspace

    @property
    def boundary_dim(self) -> int:
        return self.n - self.dim_deep_interior


def folner_data(i: int) -> FolnerData:
    if i < 2:
        raise ValueError(f"Følner witness needs i >= 2, got {i}")
    field = RATIONALS
    n = (i + 1) * (i + 2) // 2
    ambient = i + INTERIOR_WORD_LENGTH
    N = (ambient + 1) * (ambient + 2) // 2
    ops = [_multiplication_matrix(g, ambient, field) for g in range(3)]
    leaving = [L.block(n, N, 0, n) for L in ops]
    interior = kernel(vstack(*leaving))

    embed = Mat.identity(field, N).block(0, N, 0, n)
    outside = Mat.identity(field, N).block(n, N, 0, N)
    words = [L @ embed for L in ops] + [L1 @ L2 @ embed for L1 in ops for L2 in ops]
    deep = kernel(vstack(*(outside @ w for w in words)))

    k = interior.dim
    E = complete_basis(interior)
    E_inv = inverse(E)
    zeros = Mat.zeros(field, n, n - k)
    mats = tuple(hstack(L.block(0, n, 0, n) @ interior.basis, zeros) @ E_inv for L in ops)
    logger.debug(f"Følner i={i}: n={n}, dim U={k}, dim V°={deep.dim}")
    word_count = 1 + 3 + 9
    return FolnerData(i, MatTuple(field, n, mats), n, k, deep.dim, word_count, deep)


def folner_witness(i: int) -> MatTuple:
    return folner_data(i).mats


class Verdict(str, Enum):
    NOT_APPROXIMATE = "NotApproximate"
    IMPLICATION_HOLDS = "ImplicationHolds"


class VacuousCertificateError(AssertionError):
    """rank(XYZ − Id) < n/4 but rank(XZY) ≤ n/4; this cannot happen."""


def vacuous_certify(T: MatTuple) -> Verdict:
    """Check the chain rank(XYZ − Id) < n/4 ⇒ rank(XZY) > n/4."""
    if T.arity != 3:
        raise ArityMismatchError(f"Expected (X, Y, Z), got {T.arity} matrices")
    X, Y, Z = T
    n = T.n
    near = rank(X @ Y @ Z - Mat.identity(T.field, n))
    if 4 * near >= n:
        return Verdict.NOT_APPROXIMATE
    twisted = rank(X @ Z @ Y)
    if not 4 * twisted > n:
        logger.error(f"rank(XYZ - I) = {near} but rank(XZY) = {twisted} at n = {n}")
        raise VacuousCertificateError(f"rank(XYZ - I) = {near} < n/4 but rank(XZY) = {twisted} <= n/4 (n = {n})")
    return Verdict.IMPLICATION_HOLDS


@dataclass(frozen=True)
class WitnessFamily:
    """A presentation with a parametrized witness tuple and its expected defect where known."""
    name: str
    presentation: Presentation
    generator: Callable[[int], MatTuple]
    defect_formula: Optional[Callable[[int], Fraction]] = None

    def __call__(self, index: int) -> MatTuple:
        T = self.generator(index)
        if T.arity != self.presentation.arity or T.field != self.presentation.field:
            raise ArityMismatchError(f"{self.name} produced a tuple that does not fit its presentation")
        return T


def weyl_family(field: FieldSpec = RATIONALS) -> WitnessFamily:
    return WitnessFamily("weyl", weyl_presentation(field), lambda n: weyl_witness(n, field),
                         lambda n: Fraction(1, n))


def matrix_size_family(k: int, field: FieldSpec = RATIONALS) -> WitnessFamily:
    return WitnessFamily("matsize", matrix_units_presentation(k, field),
                         lambda n: matrix_size_witness(k, n, field), lambda n: Fraction(1, n * k + 1))


def folner_family() -> WitnessFamily:
    return WitnessFamily("folner", projective_weyl_presentation(), folner_witness)
