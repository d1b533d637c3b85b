from typing import Optional, Literal, Union, Any
from abc import ABC, abstractmethod
from fractions import Fraction
import logging

from freealg import Presentation, GroupPresentation, MatTuple, ArityMismatchError
from stabilize import (
    StabilizeOutcome, verify_solution, verify_group_solution,
    stabilize_findim, stabilize_findim_retrying, stabilize_zero_product, stabilize_direct_product,
    stabilize_matrix_algebra, stabilize_group_algebra, stabilize_group_from_algebra,
    stabilize_free_product,
)

logger = logging.getLogger(__name__)

AnyPresentation = Union[Presentation, GroupPresentation]


class BaseSolver(ABC):
    """Exact solver: maps an approximate solution to a verified exact one nearby."""

    @abstractmethod
    def solve(self, P: AnyPresentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        """Return a verified outcome or raise NotStabilized"""
        pass

    def __call__(self, P: AnyPresentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return self.solve(P, A, Fraction(eps))


class ExactInputSolver(BaseSolver):
    """Accepts inputs that already solve the presentation; for free algebras that is every input."""

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return verify_solution(P, A, A, eps, {"case": "exact-input"})


class FindimSolver(BaseSolver):
    """Finite-dimensional stabilizer with a fixed reference solution.

    With m_cap set, m is raised up to m_cap while the invariant subspace check fails.
    """

    def __init__(self, reference: MatTuple, m: int = 1, m_cap: Optional[int] = None):
        self.reference = reference
        self.m = m
        self.m_cap = m_cap

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        if self.m_cap is not None:
            return stabilize_findim_retrying(P, self.m, self.reference, A, eps, m_cap=self.m_cap)
        return stabilize_findim(P, self.m, self.reference, A, eps)


class ZeroProductSolver(BaseSolver):
    """Solver for <x, y | xy>."""

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        if A.arity != 2:
            raise ArityMismatchError(f"Zero-product solver needs 2 matrices, got {A.arity}")
        B1, B2 = stabilize_zero_product(A[0], A[1])
        return verify_solution(P, A, MatTuple(A.field, A.n, (B1, B2)), eps, {"case": "zero-product"})


class DirectProductSolver(BaseSolver):
    def __init__(self, left: BaseSolver, right: BaseSolver, left_presentation: Presentation,
                 right_presentation: Presentation):
        self.left = left
        self.right = right
        self.left_presentation = left_presentation
        self.right_presentation = right_presentation

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return stabilize_direct_product(self.left, self.right, self.left_presentation,
                                        self.right_presentation, A, eps)


class MatrixAlgebraSolver(BaseSolver):
    def __init__(self, inner: BaseSolver, inner_presentation: Presentation, m: int,
                 reference: Optional[MatTuple] = None, units_degree: int = 1):
        self.inner = inner
        self.inner_presentation = inner_presentation
        self.m = m
        self.reference = reference
        self.units_degree = units_degree

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return stabilize_matrix_algebra(self.inner, self.inner_presentation, self.m, A, eps,
                                        reference=self.reference, units_degree=self.units_degree)


class ExactGroupSolver(BaseSolver):
    """Group solver accepting invertible tuples that already satisfy every relator word."""

    def solve(self, G: GroupPresentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return verify_group_solution(G, A, A, eps, {"case": "exact-group"})


class GroupFromAlgebraSolver(BaseSolver):
    """Group solver obtained from a solver for the group algebra."""

    def __init__(self, algebra_solver: BaseSolver):
        self.algebra_solver = algebra_solver

    def solve(self, G: GroupPresentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return stabilize_group_from_algebra(G, self.algebra_solver, A, eps)


class GroupAlgebraSolver(BaseSolver):
    """Solver for F[G] driven by a group solver."""

    def __init__(self, group: GroupPresentation, group_solver: BaseSolver):
        self.group = group
        self.group_solver = group_solver

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return stabilize_group_algebra(self.group, self.group_solver, A, eps)


class FreeProductSolver(BaseSolver):
    """Solves both factors, then matches sizes with exact representations of sizes kg and k'g'."""

    def __init__(self, left: BaseSolver, right: BaseSolver, left_presentation: Presentation,
                 right_presentation: Presentation, rep: MatTuple, rep_prime: MatTuple,
                 g: int = 1, g_prime: int = 1):
        self.left = left
        self.right = right
        self.left_presentation = left_presentation
        self.right_presentation = right_presentation
        self.rep = rep
        self.rep_prime = rep_prime
        self.g = g
        self.g_prime = g_prime

    def solve(self, P: Presentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        d = self.left_presentation.arity
        if A.arity != d + self.right_presentation.arity:
            raise ArityMismatchError(f"Free product tuple of arity {A.arity}")
        first = self.left(self.left_presentation, A[:d], eps)
        second = self.right(self.right_presentation, A[d:], eps)
        combined = stabilize_free_product(self.left_presentation, self.right_presentation,
                                          first.solution, second.solution, self.rep, self.rep_prime,
                                          self.g, self.g_prime)
        diagnostics = {"case": "free-product", "left": first.diagnostics, "right": second.diagnostics}
        return verify_solution(P, A, combined, eps, diagnostics)


STRATEGIES = ("findim", "zero-product", "exact", "direct-product", "matrix-algebra", "group-algebra",
              "free-product")


class SolverController:
    """Strategy-selected solver"""

    def __init__(self,
                 strategy: Literal["findim", "zero-product", "exact", "direct-product", "matrix-algebra",
                                   "group-algebra", "free-product"] = "findim",
                 **options: Any):
        if strategy == "findim":
            self.solver = FindimSolver(**options)
        elif strategy == "zero-product":
            self.solver = ZeroProductSolver()
        elif strategy == "exact":
            self.solver = ExactInputSolver()
        elif strategy == "direct-product":
            self.solver = DirectProductSolver(**options)
        elif strategy == "matrix-algebra":
            self.solver = MatrixAlgebraSolver(**options)
        elif strategy == "group-algebra":
            self.solver = GroupAlgebraSolver(**options)
        elif strategy == "free-product":
            self.solver = FreeProductSolver(**options)
        else:
            raise ValueError(f"Strategy must be one of: {', '.join(repr(s) for s in STRATEGIES)}")
        self.strategy = strategy
        logger.debug(f"Using {type(self.solver).__name__} for strategy {strategy}")

    def solve(self, P: AnyPresentation, A: MatTuple, eps: Fraction) -> StabilizeOutcome:
        return self.solver(P, A, eps)
