from typing import List, Dict, Optional, Any, Tuple, Sequence, Callable
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
import logging
import math

from sympy.core.intfunc import igcdex

from exactmat import (
    Mat, Subspace, FieldSpec, rank, kernel, image, preimage, intersect, intersect_all, vstack, hstack,
    complete_basis, extend_columns, independent_prefix, direct_sum, kronecker, inverse, resize,
    hat_dist, permutation_matrix,
)
from freealg import (
    Presentation, GroupPresentation, MatTuple, NcPoly, ArityMismatchError,
    evaluate_many, direct_product_presentation, matrix_algebra_presentation,
    matrix_units_presentation, free_product_presentation,
)
from approx import defect, relator_ranks, is_exact_solution, hat_distances, check_polyrank_bound, polyrank_bound

logger = logging.getLogger(__name__)


class NotStabilized(RuntimeError):
    """A stabilizer could not produce a verified exact solution."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DimensionArithmeticError(ValueError):
    """Size congruences required by a composition are not met."""


class SolverContractError(RuntimeError):
    """A component solver returned something its contract forbids."""


class UnitRelationError(ValueError):
    """Matrices do not satisfy the matrix-unit relations exactly."""


class BoundViolationError(RuntimeError):
    """A rank or dimension bound the construction guarantees did not hold."""


@dataclass(frozen=True)
class StabilizeOutcome:
    """Exact solution near an input tuple.

    Attributes:
        solution: exact solution, possibly of a different size than the input
        distances: hat distance from each input matrix to its solution matrix
        verified: True once exactness and the distance bound were checked
        diagnostics: dimensions, padding, case taken and bounds, for logs and JSON
    """
    solution: MatTuple
    distances: Tuple[int, ...]
    verified: bool
    diagnostics: Dict[str, Any] = dc_field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.solution.n

    @property
    def max_distance(self) -> int:
        return max(self.distances, default=0)


ExactSolver = Callable[[Presentation, MatTuple, Fraction], StabilizeOutcome]
GroupSolver = Callable[[GroupPresentation, MatTuple, Fraction], StabilizeOutcome]


def verify_solution(P: Presentation, A: MatTuple, solution: MatTuple, eps: Fraction,
                    diagnostics: Optional[Dict[str, Any]] = None) -> StabilizeOutcome:
    """Check that solution is exact for P and within ε·n of A on every generator.

    Raises:
        NotStabilized: if either check fails; diagnostics are attached
    """
    diagnostics = dict(diagnostics or {})
    bound = Fraction(eps) * A.n
    diagnostics["input_size"] = A.n
    diagnostics["output_size"] = solution.n
    diagnostics["distance_bound"] = bound
    if not is_exact_solution(P, solution):
        report = defect(P, solution)
        diagnostics["residual_defect"] = report.max_defect
        logger.error(f"Candidate solution is not exact (defect {report.max_defect})")
        raise NotStabilized(f"Candidate solution is not exact (defect {report.max_defect})", diagnostics)
    distances = hat_distances(A, solution)
    diagnostics["max_distance"] = max(distances, default=0)
    if any(d > bound for d in distances):
        logger.error(f"Exact solution found but distances {distances} exceed {bound}")
        raise NotStabilized(f"Distance {max(distances)} exceeds {bound}; the input defect is too large",
                            diagnostics)
    return StabilizeOutcome(solution, distances, True, diagnostics)


def _require_exact(P: Presentation, T: MatTuple, what: str):
    if not is_exact_solution(P, T):
        raise ValueError(f"{what} is not an exact solution")


def invariant_subspaces(P: Presentation, m: int, A: MatTuple) -> Tuple[Subspace, Subspace]:
    """U = ∩ ker P_j(A) and W = ∩_{l≤m} Z_l with Z_0 = U, Z_l = ∩_i A_i⁻¹ Z_{l−1}."""
    field, n = A.field, A.n
    evaluations = evaluate_many(P.associative_relators(), A)
    U = kernel(vstack(*evaluations)) if evaluations else Subspace.full(field, n)
    Z, W = U, U
    for level in range(1, m + 1):
        Z = intersect_all([preimage(A_i, Z) for A_i in A], field, n)
        W = intersect(W, Z)
        logger.debug(f"Level {level}: dim Z = {Z.dim}, dim W = {W.dim}")
    return U, W


def stabilize_findim(P: Presentation, m: int, C: MatTuple, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
    """Repair an approximate solution of a finite-dimensional presentation.

    The generators of P should span the algebra. W is the largest subspace
    whose images under words of length ≤ m stay inside the common kernel of
    the relators; the action on W is kept and padded with copies of the
    reference solution C.

    Args:
        P: presentation with spanning generators
        m: degree bound for the word intersection
        C: exact reference solution of size s
        A: approximate solution of size n
        eps: distance budget, verified as hat distance ≤ ε·n

    Raises:
        NotStabilized: W is not invariant (increase m) or the result is too far
    """
    eps = Fraction(eps)
    _require_exact(P, C, "Reference tuple")
    if m < P.max_degree:
        logger.warning(f"Degree bound m={m} is below the relator degree {P.max_degree}")
    n, s, d = A.n, C.n, A.arity
    ranks = relator_ranks(P, A)
    U, W = invariant_subspaces(P, m, A)
    k = W.dim
    diagnostics: Dict[str, Any] = {"case": "findim", "m": m, "dim_U": U.dim, "dim_W": k,
                                   "relator_ranks": list(ranks)}

    for i, A_i in enumerate(A):
        if not W.contains(A_i @ W.basis):
            diagnostics["invariant"] = False
            diagnostics["hint"] = f"increase m (retry with m={m + 1})"
            logger.error(f"W is not invariant under generator {i} at m={m}")
            raise NotStabilized(f"W is not invariant under generator {i}; increase m", diagnostics)
    diagnostics["invariant"] = True

    words = sum(max(d, 1) ** l for l in range(m + 1)) if d else 1
    lower = n - words * len(ranks) * max(ranks, default=0)
    diagnostics["dim_W_lower_bound"] = lower
    logger.info(f"dim U = {U.dim}, dim W = {k}, lower bound {lower} (n = {n})")
    if k < lower:
        raise BoundViolationError(f"dim W = {k} is below the word-count bound {lower}")

    if k < n and s == 0:
        raise ValueError("The reference solution must have positive size")
    n_prime = n + ((k - n) % s) if s else n
    copies = (n_prime - k) // s if s else 0
    diagnostics.update({"padding": n_prime - n, "copies": copies, "reference_size": s})

    E = complete_basis(W)
    E_inv = inverse(E)
    extra = Mat.identity(A.field, n_prime - n)
    E_big, E_big_inv = direct_sum(E, extra), direct_sum(E_inv, extra)
    mats = []
    for A_i, C_i in zip(A, C):
        B_i = (E_inv @ A_i @ E).block(0, k, 0, k)
        B_padded = direct_sum(B_i, *([C_i] * copies))
        mats.append(E_big @ B_padded @ E_big_inv)
    solution = MatTuple(A.field, n_prime, tuple(mats))
    return verify_solution(P, A, solution, eps, diagnostics)


def stabilize_findim_retrying(P: Presentation, m: int, C: MatTuple, A: MatTuple, eps: Fraction,
                              m_cap: int = 6) -> StabilizeOutcome:
    """stabilize_findim with m raised one step at a time while W fails to be invariant."""
    last: Optional[NotStabilized] = None
    for current in range(m, max(m, m_cap) + 1):
        try:
            outcome = stabilize_findim(P, current, C, A, eps)
            outcome.diagnostics["m_tried"] = list(range(m, current + 1))
            return outcome
        except NotStabilized as e:
            last = e
            if e.diagnostics.get("invariant", True):
                raise
            logger.warning(f"m={current} too small, retrying")
    last.diagnostics["m_tried"] = list(range(m, max(m, m_cap) + 1))
    raise last


def stabilize_zero_product(A1: Mat, A2: Mat) -> Tuple[Mat, Mat]:
    """Exact solution of xy = 0 near (A1, A2): B1 = A1 + D, B2 = A2, rank D ≤ rank(A1A2)."""
    n = A1.size
    M = A1 @ A2
    picks = independent_prefix(A2)
    basis = A2.select_columns(picks)
    frame = extend_columns(basis)
    targets = hstack(-M.select_columns(picks), Mat.zeros(A1.field, n, n - len(picks)))
    D = targets @ inverse(frame)
    logger.debug(f"Zero-product correction of rank {rank(D)} (rank A1A2 = {rank(M)})")
    return A1 + D, A2


def round_idempotent(C: Mat) -> Mat:
    """Idempotent E with rank(E − C) ≤ rank(C² − C)."""
    n = C.size
    eye = Mat.identity(C.field, n)
    fixed = kernel(C - eye)
    killed = kernel(C)
    D = extend_columns(hstack(fixed.basis, killed.basis))
    r = fixed.dim
    projection = direct_sum(Mat.identity(C.field, r), Mat.zeros(C.field, n - r))
    return D @ projection @ inverse(D)


@dataclass(frozen=True)
class IdempotentSplit:
    """D E D⁻¹ = Id_r ⊕ 0 with the (1,1) and (2,2) blocks of D M D⁻¹."""
    D: Mat
    D_inv: Mat
    r: int
    block: Mat
    complement: Mat

    def reassemble(self) -> Mat:
        """D⁻¹(M° ⊕ 0)D."""
        n = self.D.size
        return self.D_inv @ direct_sum(self.block, Mat.zeros(self.D.field, n - self.r)) @ self.D


def idempotent_frame(E: Mat) -> Tuple[Mat, Mat, int]:
    """(D, D⁻¹, r) with D E D⁻¹ = Id_r ⊕ 0."""
    if E @ E != E:
        raise ValueError("Matrix is not idempotent")
    eye = Mat.identity(E.field, E.size)
    fixed = kernel(E - eye)
    V = hstack(fixed.basis, kernel(E).basis)
    return inverse(V), V, fixed.dim


def split_idempotent_block(E: Mat, M: Mat, frame: Optional[Tuple[Mat, Mat, int]] = None) -> IdempotentSplit:
    """Cut M along E; frame reuses a precomputed idempotent_frame(E)."""
    D, D_inv, r = frame if frame is not None else idempotent_frame(E)
    n = E.size
    conj = D @ M @ D_inv
    return IdempotentSplit(D, D_inv, r, conj.block(0, r, 0, r), conj.block(r, n, r, n))


def _unit_grid(units: Sequence[Mat], m: int) -> List[List[Mat]]:
    if len(units) != m * m:
        raise UnitRelationError(f"Expected {m * m} matrix units, got {len(units)}")
    return [[units[i * m + j] for j in range(m)] for i in range(m)]


def matrix_unit_frame(grid: Sequence[Sequence[Mat]]) -> Tuple[int, Mat, Mat]:
    """(q, D, D⁻¹) with D E_ij D⁻¹ = e_ij ⊗ Id_q for exact matrix units.

    D⁻¹ has the columns E_i1 b for b running over a basis of Image E_11.
    """
    m = len(grid)
    n = grid[0][0].size
    field = grid[0][0].field
    total = Mat.zeros(field, n)
    for i in range(m):
        total = total + grid[i][i]
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    expected = grid[i][l] if j == k else Mat.zeros(field, n)
                    if grid[i][j] @ grid[k][l] != expected:
                        raise UnitRelationError(f"E_{i + 1}{j + 1} E_{k + 1}{l + 1} violates the unit relations")
    if not total.is_identity():
        raise UnitRelationError("The diagonal units do not sum to the identity")
    b = image(grid[0][0]).basis
    q = b.n_cols
    if m * q != n:
        raise UnitRelationError(f"Units of size {n} do not split into {m} blocks of size {q}")
    V = hstack(*(grid[i][0] @ b for i in range(m)))
    return q, inverse(V), V


@dataclass(frozen=True)
class UnitRounding:
    q: int
    D: Mat
    block: Mat
    C: Mat
    distance: int
    commutator_rank: int
    size_gap: int
    bound: int


def round_matrix_units(units: Sequence[Mat], A: Mat, m: Optional[int] = None) -> UnitRounding:
    """Replace A by C = D⁻¹(Id_m ⊗ A°)D, which commutes with the exact units.

    Args:
        units: the m² matrices E_ij in row-major order, exact matrix units of size n'
        A: matrix of size n approximately commuting with the units
        m: number of unit rows; inferred from len(units) when omitted
    """
    m = m if m is not None else math.isqrt(len(units))
    grid = _unit_grid(units, m)
    q, D, D_inv = matrix_unit_frame(grid)
    field = A.field
    n, n_prime = A.size, m * q
    A_resized = resize(A, n_prime)
    block = (D @ A_resized @ D_inv).block(0, q, 0, q)
    C = D_inv @ kronecker(Mat.identity(field, m), block) @ D
    distance = hat_dist(A, C)
    size = max(n, n_prime)
    A_hat = resize(A, size)
    lam = 0
    for E in units:
        E_hat = resize(E, size)
        lam = max(lam, rank(A_hat @ E_hat - E_hat @ A_hat))
    gap = abs(n_prime - n)
    bound = m * m * (lam + 2 * gap)
    if distance > bound:
        logger.error(f"Unit rounding distance {distance} exceeds {bound}")
        raise NotStabilized(f"Unit rounding distance {distance} exceeds m^2(lambda + 2N) = {bound}",
                            {"case": "matrix-units", "q": q, "distance": distance, "commutator_rank": lam,
                             "size_gap": gap, "bound": bound})
    return UnitRounding(q, D, block, C, distance, lam, gap, bound)


def round_invertible(A: Mat, B: Optional[Mat] = None) -> Mat:
    """Invertible U agreeing with A off its kernel, so rank(U − A) ≤ n − rank(A).

    B, when given, is the approximate inverse; rank(AB − Id) is logged as the
    quality measure.
    """
    n = A.size
    null = kernel(A)
    s = null.dim
    X = extend_columns(null.basis)
    images = A @ X.block(0, n, s, n)
    Y_full = extend_columns(images)
    Y = hstack(Y_full.block(0, n, n - s, n), images)
    U = Y @ inverse(X)
    if B is not None:
        logger.debug(f"Rounded to invertible: rank(AB - I) = {rank(A @ B - Mat.identity(A.field, n))}, "
                     f"rank(U - A) = {rank(U - A)}")
    return U


def transport_solution(src: Presentation, dst: Presentation, G: Sequence[NcPoly], F: Sequence[NcPoly],
                       solver: ExactSolver, A: MatTuple, eps: Fraction,
                       inner_eps: Optional[Fraction] = None) -> StabilizeOutcome:
    """Stabilize dst through an isomorphism with src.

    Args:
        src: presentation the solver handles, generators x
        dst: presentation of A, generators y
        G: images of the src generators, as polynomials in the dst generators
        F: images of the dst generators, as polynomials in the src generators
        solver: exact solver for src
        A: approximate solution of dst
        eps: distance budget for the final verification
        inner_eps: budget handed to the solver (defaults to eps)
    """
    eps = Fraction(eps)
    if len(G) != src.arity or any(g.arity != dst.arity for g in G):
        raise ArityMismatchError("G must give one dst-polynomial per src generator")
    if len(F) != dst.arity or any(f.arity != src.arity for f in F):
        raise ArityMismatchError("F must give one src-polynomial per dst generator")
    pulled = MatTuple(A.field, A.n, tuple(evaluate_many(list(G), A)))
    inner = solver(src, pulled, Fraction(inner_eps) if inner_eps is not None else eps)
    if not inner.verified:
        raise SolverContractError("Solver returned an unverified outcome")
    B = inner.solution
    pushed = MatTuple(A.field, B.n, tuple(evaluate_many(list(F), B)))

    lam = inner.max_distance + 1
    S = sum(max(1, f.monomial_count) * max(1, f.max_degree) for f in F)
    diagnostics: Dict[str, Any] = {"case": "transport", "inner": inner.diagnostics,
                                   "transport_bound": S * lam + abs(B.n - A.n)}
    logger.info(f"Transport bound S*lambda + |n'-n| = {diagnostics['transport_bound']}")
    for f in F:
        if not check_polyrank_bound(f, pulled, B, lam):
            raise BoundViolationError("Polynomial rank bound failed during transport")
    try:
        return verify_solution(dst, A, pushed, eps, diagnostics)
    except NotStabilized as e:
        e.diagnostics["note"] = "isomorphism data G, F may be wrong"
        raise


def _invertible_or_raise(mats: Sequence[Mat], what: str):
    for j, V in enumerate(mats):
        if rank(V) != V.size:
            raise SolverContractError(f"{what} {j} is not invertible")


def stabilize_group_algebra(group: GroupPresentation, solver_grp: GroupSolver, A: MatTuple,
                            eps: Fraction) -> StabilizeOutcome:
    """Stabilize the F[G] presentation through a group solver.

    A holds the x-images followed by the y-images (approximate inverses).
    """
    eps = Fraction(eps)
    d = group.arity
    if A.arity != 2 * d:
        raise ArityMismatchError(f"F[G] tuple needs {2 * d} matrices, got {A.arity}")
    algebra = group.algebra()
    ranks = relator_ranks(algebra, A)
    inverse_ranks = ranks[len(group.relator_words):]
    rounded, chain = [], []
    for j in range(d):
        U = round_invertible(A[j], A[d + j])
        U_prime = round_invertible(A[d + j], A[j])
        gap = rank(U_prime - inverse(U))
        allowed = 4 * inverse_ranks[2 * j]
        chain.append(gap)
        if gap > allowed:
            raise BoundViolationError(f"rank(U'_{j} - U_{j}^-1) = {gap} exceeds {allowed}")
        rounded.append(U)
    logger.info(f"Rounded {d} generators to invertibles; inverse gaps {chain}")
    inner = solver_grp(group, MatTuple(A.field, A.n, tuple(rounded)), eps)
    V = list(inner.solution)
    _invertible_or_raise(V, "Group solution")
    inverses = [inverse(M) for M in V]
    for word in group.relator_words:
        if not group.evaluate_word(word, V, inverses).is_identity():
            raise SolverContractError(f"Group solution violates relator {group.format_word(word)}")
    solution = MatTuple(A.field, inner.n, tuple(V + inverses))
    diagnostics = {"case": "group-algebra", "inverse_gaps": chain, "inner": inner.diagnostics}
    return verify_solution(algebra, A, solution, eps, diagnostics)


def verify_group_solution(group: GroupPresentation, A: MatTuple, V: MatTuple, eps: Fraction,
                          diagnostics: Optional[Dict[str, Any]] = None) -> StabilizeOutcome:
    """Group-side verification: invertible, every relator word is the identity, distances ≤ ε·n."""
    diagnostics = dict(diagnostics or {})
    try:
        _invertible_or_raise(list(V), "Group solution")
    except SolverContractError as e:
        raise NotStabilized(str(e), diagnostics)
    inverses = [inverse(M) for M in V]
    for word in group.relator_words:
        if not group.evaluate_word(word, list(V), inverses).is_identity():
            raise NotStabilized(f"Relator {group.format_word(word)} does not hold", diagnostics)
    distances = hat_distances(A, V)
    bound = Fraction(eps) * A.n
    diagnostics.update({"input_size": A.n, "output_size": V.n, "distance_bound": bound,
                        "max_distance": max(distances, default=0)})
    if any(dist > bound for dist in distances):
        raise NotStabilized(f"Distance {max(distances)} exceeds {bound}", diagnostics)
    return StabilizeOutcome(V, distances, True, diagnostics)


def stabilize_group_from_algebra(group: GroupPresentation, solver_alg: ExactSolver, A: MatTuple,
                                 eps: Fraction) -> StabilizeOutcome:
    """Group solver obtained from an F[G] solver: feed (A, A⁻¹), keep the x-part."""
    d = group.arity
    if A.arity != d:
        raise ArityMismatchError(f"Group tuple needs {d} matrices, got {A.arity}")
    for j, M in enumerate(A):
        if rank(M) != A.n:
            raise ValueError(f"Group generator image {j} is not invertible")
    T = A.concat(MatTuple(A.field, A.n, tuple(inverse(M) for M in A)))
    inner = solver_alg(group.algebra(), T, eps)
    if not inner.verified:
        raise SolverContractError("Algebra solver returned an unverified outcome")
    V = inner.solution[:d]
    return verify_group_solution(group, A, V, eps, {"case": "group-from-algebra", "inner": inner.diagnostics})


def compute_bezout(g: int, g_prime: int) -> Tuple[int, int]:
    """Smallest nonnegative (k, k') with k·g − k'·g' = gcd(g, g')."""
    if g <= 0 or g_prime <= 0:
        raise DimensionArithmeticError("g and g' must be positive")
    x, y, c = igcdex(g, g_prime)
    x, y, c = int(x), int(y), int(c)
    # x g + y g' = c; general solution k = x + t g'/c, k' = -y + t g/c
    step_k, step_kp = g_prime // c, g // c
    t = max(-(x // step_k), -((-y) // step_kp))
    return x + t * step_k, -y + t * step_kp


def stabilize_free_product(P: Presentation, Q: Presentation, solA: MatTuple, solB: MatTuple,
                           rep: MatTuple, rep_prime: MatTuple, g: int, g_prime: int) -> MatTuple:
    """Combine exact component solutions into an exact solution of the free product.

    Sizes are matched with C_i = solA_i ⊕ (rep(x_i) ⊗ Id_q) and
    C'_j = solB_j ⊕ (rep'(y_j) ⊗ Id_q), q = (m' − m)/gcd(g, g').

    Raises:
        DimensionArithmeticError: naming the failing congruence
    """
    for T, pres, what in ((solA, P, "First solution"), (solB, Q, "Second solution"),
                          (rep, P, "First representation"), (rep_prime, Q, "Second representation")):
        _require_exact(pres, T, what)
    m, m_prime = solA.n, solB.n
    if m > m_prime:
        raise DimensionArithmeticError(f"m <= m' required (got {m} > {m_prime}); swap the factors")
    c = math.gcd(g, g_prime)
    if m % g:
        raise DimensionArithmeticError(f"m ≡ 0 (mod g) fails: {m} mod {g} = {m % g}")
    if m_prime % g_prime:
        raise DimensionArithmeticError(f"m' ≡ 0 (mod g') fails: {m_prime} mod {g_prime} = {m_prime % g_prime}")
    if rep.n % g or rep_prime.n % g_prime:
        raise DimensionArithmeticError(f"representation sizes {rep.n}, {rep_prime.n} are not multiples of g, g'")
    k, k_prime = rep.n // g, rep_prime.n // g_prime
    if k * g - k_prime * g_prime != c:
        raise DimensionArithmeticError(f"kg - k'g' = gcd(g, g') fails: {k * g} - {k_prime * g_prime} != {c}")
    if (m_prime - m) % c:
        raise DimensionArithmeticError(f"gcd(g, g') | m' - m fails: {c} does not divide {m_prime - m}")
    q = (m_prime - m) // c
    left = solA.direct_sum(rep.tensor_identity(q))
    right = solB.direct_sum(rep_prime.tensor_identity(q))
    combined = left.concat(right)
    if not is_exact_solution(free_product_presentation(P, Q), combined):
        raise NotStabilized("Combined free-product tuple is not exact", {"q": q})
    logger.info(f"Free product combined at size {combined.n} with q = {q}")
    return combined


def _pad_solution(P: Presentation, T: MatTuple, size: int, reference: Optional[MatTuple] = None) -> MatTuple:
    """Grow an exact solution to at least size with reference copies or zeros."""
    if T.n >= size:
        return T
    if reference is not None and reference.n > 0:
        copies = -(-(size - T.n) // reference.n)
        padded = T
        for _ in range(copies):
            padded = padded.direct_sum(reference)
        return padded
    if not P.has_zero_constants:
        raise NotStabilized(f"Cannot pad a size-{T.n} solution to {size}: relators have constant terms")
    return T.direct_sum(MatTuple(T.field, size - T.n, tuple(Mat.zeros(T.field, size - T.n) for _ in T)))


def _checked(outcome: StabilizeOutcome, what: str) -> StabilizeOutcome:
    if not outcome.verified:
        raise SolverContractError(f"{what} returned an unverified outcome")
    return outcome


def stabilize_direct_product(solverA: ExactSolver, solverB: ExactSolver, PA: Presentation, PB: Presentation,
                             T: MatTuple, eps: Fraction) -> StabilizeOutcome:
    """Stabilize A × B from stabilizers of A and B.

    T lists the x-images, the y-images, then the images of e1 and e2.
    """
    eps = Fraction(eps)
    d, t = PA.arity, PB.arity
    if T.arity != d + t + 2:
        raise ArityMismatchError(f"Product tuple needs {d + t + 2} matrices, got {T.arity}")
    field, n = T.field, T.n
    product = direct_product_presentation(PA, PB)
    xs, ys = T[:d], T[d:d + t]
    E1 = round_idempotent(T[d + t])
    frame = idempotent_frame(E1)
    D, D_inv, k = frame
    threshold = eps / 2 * n
    diagnostics: Dict[str, Any] = {"k": k, "threshold": threshold}

    if k <= threshold:
        diagnostics["case"] = "I"
        inner = _checked(solverB(PB, ys, eps), "Second solver")
        size = inner.n
        A_out = [Mat.zeros(field, size)] * d
        B_out = list(inner.solution)
        E1_out = Mat.zeros(field, size)
    elif k >= n - threshold:
        diagnostics["case"] = "II"
        inner = _checked(solverA(PA, xs, eps), "First solver")
        size = inner.n
        A_out = list(inner.solution)
        B_out = [Mat.zeros(field, size)] * t
        E1_out = Mat.identity(field, size)
    else:
        diagnostics["case"] = "III"
        A_block = MatTuple(field, k, tuple(split_idempotent_block(E1, M, frame).block for M in xs))
        B_block = MatTuple(field, n - k, tuple(split_idempotent_block(E1, M, frame).complement for M in ys))
        inner_a = _checked(solverA(PA, A_block, eps), "First solver")
        inner_b = _checked(solverB(PB, B_block, eps), "Second solver")
        sol_a = _pad_solution(PA, inner_a.solution, k)
        sol_b = _pad_solution(PB, inner_b.solution, n - k)
        k1, k2 = sol_a.n, sol_b.n
        size = k1 + k2
        targets = []
        for i in range(size):
            if i < k:
                targets.append(i)
            elif i < k1:
                targets.append(n + i - k)
            elif i < k1 + n - k:
                targets.append(k + i - k1)
            else:
                targets.append(i)
        perm = permutation_matrix(field, targets)
        extra = Mat.identity(field, size - n)
        M = direct_sum(D_inv, extra) @ perm
        M_inv = perm.transpose() @ direct_sum(D, extra)
        zero_a, zero_b = Mat.zeros(field, k1), Mat.zeros(field, k2)
        A_out = [M @ direct_sum(X, zero_b) @ M_inv for X in sol_a]
        B_out = [M @ direct_sum(zero_a, Y) @ M_inv for Y in sol_b]
        E1_out = M @ direct_sum(Mat.identity(field, k1), zero_b) @ M_inv
        diagnostics.update({"k1": k1, "k2": k2})

    E2_out = Mat.identity(field, size) - E1_out
    logger.info(f"Direct product case {diagnostics['case']} (k = {k}, n = {n}), output size {size}")
    solution = MatTuple(field, size, tuple(A_out + B_out + [E1_out, E2_out]))
    return verify_solution(product, T, solution, eps, diagnostics)


def standard_units(m: int, field: FieldSpec) -> MatTuple:
    """The m² matrix units e_ij of M_m(F), row-major."""
    return MatTuple(field, m, tuple(Mat.unit(field, m, m, i, j) for i in range(m) for j in range(m)))


def stabilize_matrix_algebra(solver: ExactSolver, P: Presentation, m: int, T: MatTuple, eps: Fraction,
                             reference: Optional[MatTuple] = None, units_degree: int = 1) -> StabilizeOutcome:
    """Stabilize M_m(A) from a stabilizer of A.

    T lists the x-images then the m² unit images (row-major). The units are
    stabilized first; the x-images are then cut down to q×q blocks, solved,
    and tensored back up.

    Args:
        reference: exact solution of P used to pad when the inner solver returns fewer than q rows
        units_degree: degree bound for stabilizing the matrix units
    """
    eps = Fraction(eps)
    d = P.arity
    if T.arity != d + m * m:
        raise ArityMismatchError(f"M_{m} tuple needs {d + m * m} matrices, got {T.arity}")
    field = T.field
    units_out = stabilize_findim(matrix_units_presentation(m, field), units_degree,
                                 standard_units(m, field), T[d:], eps)
    grid = _unit_grid(list(units_out.solution), m)
    q, D, D_inv = matrix_unit_frame(grid)
    n1 = units_out.n
    blocks = MatTuple(field, q, tuple((D @ resize(X, n1) @ D_inv).block(0, q, 0, q) for X in T[:d]))
    inner = _checked(solver(P, blocks, eps), "Component solver")
    sol = _pad_solution(P, inner.solution, q, reference)
    q_prime = sol.n

    targets = []
    for b in range(m):
        for t in range(q_prime):
            targets.append(b * q + t if t < q else m * q + b * (q_prime - q) + (t - q))
    perm = permutation_matrix(field, targets)
    extra = Mat.identity(field, m * (q_prime - q))
    M = direct_sum(D_inv, extra) @ perm
    M_inv = perm.transpose() @ direct_sum(D, extra)
    eye_m, eye_q = Mat.identity(field, m), Mat.identity(field, q_prime)
    x_out = [M @ kronecker(eye_m, X) @ M_inv for X in sol]
    unit_out = [M @ kronecker(Mat.unit(field, m, m, i, j), eye_q) @ M_inv for i in range(m) for j in range(m)]
    solution = MatTuple(field, m * q_prime, tuple(x_out + unit_out))
    diagnostics = {"case": "matrix-algebra", "m": m, "q": q, "q_prime": q_prime,
                   "units": units_out.diagnostics, "inner": inner.diagnostics}
    logger.info(f"Matrix algebra M_{m}: blocks of size {q}, solved at {q_prime}")
    return verify_solution(matrix_algebra_presentation(P, m), T, solution, eps, diagnostics)


def demote_matrix_algebra(solver_m: ExactSolver, P: Presentation, m: int, A: MatTuple,
                          eps: Fraction) -> StabilizeOutcome:
    """Stabilize A from a stabilizer of M_m(A): tensor up, solve, read off the commutant block."""
    eps = Fraction(eps)
    field, n, d = A.field, A.n, P.arity
    if A.arity != d:
        raise ArityMismatchError(f"Tuple of arity {A.arity} for {d} generators")
    eye_m, eye_n = Mat.identity(field, m), Mat.identity(field, n)
    lifted = [kronecker(eye_m, X) for X in A]
    units = [kronecker(Mat.unit(field, m, m, i, j), eye_n) for i in range(m) for j in range(m)]
    T = MatTuple(field, m * n, tuple(lifted + units))
    inner = _checked(solver_m(matrix_algebra_presentation(P, m), T, eps), "Matrix algebra solver")
    grid = _unit_grid(list(inner.solution[d:]), m)
    q, D, D_inv = matrix_unit_frame(grid)
    blocks = []
    for C in inner.solution[:d]:
        conj = D @ C @ D_inv
        block = conj.block(0, q, 0, q)
        if conj != kronecker(eye_m, block):
            raise SolverContractError("Solution does not commute with its matrix units")
        blocks.append(block)
    solution = MatTuple(field, q, tuple(blocks))
    return verify_solution(P, A, solution, eps, {"case": "demote", "m": m, "inner": inner.diagnostics})
