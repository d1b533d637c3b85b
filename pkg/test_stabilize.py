import unittest
from fractions import Fraction
from unittest import mock

import numpy as np

from exactmat import Mat, RATIONALS, rank, inverse, kronecker, direct_sum
from freealg import (
    MatTuple, NcPoly, GroupPresentation, parse_presentation, matrix_units_presentation,
    direct_product_presentation, matrix_algebra_presentation,
)
from approx import is_exact_solution, defect
from stabilize import (
    NotStabilized, DimensionArithmeticError, UnitRelationError, BoundViolationError,
    invariant_subspaces, stabilize_findim, stabilize_findim_retrying, stabilize_zero_product,
    round_idempotent, idempotent_frame, split_idempotent_block, matrix_unit_frame, round_matrix_units,
    round_invertible, transport_solution, stabilize_group_algebra, stabilize_group_from_algebra,
    compute_bezout, stabilize_free_product, stabilize_direct_product, standard_units,
    stabilize_matrix_algebra, demote_matrix_algebra,
)
from solvers import FindimSolver, ExactInputSolver, ExactGroupSolver, MatrixAlgebraSolver
from witness import zero_product_presentation
from tests.test_utils import (
    F101, random_matrix, random_invertible, rank_one, perturb_tuple, perturb_generators, conjugate_tuple,
    jordan_reference, square_zero_solution, slow,
)


def square_zero():
    return parse_presentation("algebra Q; gens x; rels x^2;")


class TestFindim(unittest.TestCase):
    def setUp(self):
        """Square-zero presentation with the Jordan block as reference."""
        self.rng = np.random.default_rng(1234)
        self.P = square_zero()
        self.ref = jordan_reference()

    def test_exact_input_unchanged(self):
        """Test that an exact input is returned at distance zero."""
        A = conjugate_tuple(self.rng, square_zero_solution(RATIONALS, 4))
        outcome = stabilize_findim(self.P, 1, self.ref, A, Fraction(1, 4))
        self.assertTrue(outcome.verified)
        self.assertEqual(outcome.distances, (0,))
        self.assertEqual(outcome.diagnostics["dim_W"], 8)

    def test_noisy_input_repaired(self):
        """Test repair of rank-one noise on a size-16 square-zero tuple."""
        for _ in range(3):
            A = perturb_tuple(self.rng, conjugate_tuple(self.rng, square_zero_solution(RATIONALS, 8)), 1)
            outcome = stabilize_findim(self.P, 1, self.ref, A, Fraction(1, 2))
            self.assertTrue(is_exact_solution(self.P, outcome.solution))
            self.assertLessEqual(outcome.max_distance, 8)
            self.assertEqual((outcome.n - outcome.diagnostics["dim_W"]) % self.ref.n, 0)

    def test_prime_field(self):
        """Test the same repair over F_101."""
        P = parse_presentation("algebra Fp(101); gens x; rels x^2;")
        A = perturb_tuple(self.rng, square_zero_solution(F101, 8), 1)
        outcome = stabilize_findim(P, 1, jordan_reference(F101), A, Fraction(1, 2))
        self.assertTrue(is_exact_solution(P, outcome.solution))

    def test_invariant_subspaces_nested(self):
        """Test that W sits inside U."""
        A = perturb_tuple(self.rng, square_zero_solution(RATIONALS, 3), 1)
        U, W = invariant_subspaces(self.P, 2, A)
        self.assertTrue(U.contains_subspace(W))

    def test_distance_budget_enforced(self):
        """Test that a tiny eps makes verification fail with diagnostics."""
        A = MatTuple(RATIONALS, 4, (Mat.identity(RATIONALS, 4),))
        with self.assertRaises(NotStabilized) as ctx:
            stabilize_findim(self.P, 1, self.ref, A, Fraction(1, 100))
        self.assertIn("max_distance", ctx.exception.diagnostics)

    def test_reference_must_be_exact(self):
        """Test that an inexact reference is refused."""
        bad = MatTuple(RATIONALS, 1, (Mat.identity(RATIONALS, 1),))
        with self.assertRaises(ValueError):
            stabilize_findim(self.P, 1, bad, square_zero_solution(RATIONALS, 2), Fraction(1, 2))

    def test_word_count_bound_violation(self):
        """Test that dim W below the word-count bound raises BoundViolationError."""
        A = MatTuple(RATIONALS, 4, (Mat.identity(RATIONALS, 4),))
        with mock.patch("stabilize.relator_ranks", return_value=[0]):
            with self.assertRaises(BoundViolationError):
                stabilize_findim(self.P, 1, self.ref, A, Fraction(1, 2))


class TestFindimRates(unittest.TestCase):
    def setUp(self):
        """Square-zero and M_2 unit presentations with their references."""
        self.rng = np.random.default_rng(4321)
        self.eps = Fraction(1, 4)
        self.cases = [
            (square_zero(), jordan_reference()),
            (matrix_units_presentation(2), standard_units(2, RATIONALS)),
        ]

    def check_rate(self, P, ref: MatTuple, n: int, updates: int, trials: int):
        verified = 0
        for _ in range(trials):
            exact = conjugate_tuple(self.rng, ref.tensor_identity(n // ref.n))
            A = perturb_generators(self.rng, exact, updates)
            try:
                outcome = stabilize_findim(P, 1, ref, A, self.eps)
            except NotStabilized:
                continue
            verified += 1
            self.assertTrue(is_exact_solution(P, outcome.solution))
            self.assertLessEqual(outcome.max_distance, n // 4)
        self.assertGreaterEqual(verified, 0.95 * trials)

    def test_rates(self):
        """Test verified repairs of one rank-one update at size 16."""
        for P, ref in self.cases:
            self.check_rate(P, ref, 16, 1, 10)

    @slow
    def test_rates_full(self):
        """Test 100 repairs per presentation with two rank-one updates at size 32."""
        for P, ref in self.cases:
            self.check_rate(P, ref, 32, 2, 100)


class TestDegreeBound(unittest.TestCase):
    def setUp(self):
        """xy = 0 with A_x = E12, A_y = E21; W fails to be invariant at m = 0."""
        self.P = zero_product_presentation()
        self.A = MatTuple(RATIONALS, 2, (Mat.unit(RATIONALS, 2, 2, 0, 1), Mat.unit(RATIONALS, 2, 2, 1, 0)))
        self.ref = MatTuple(RATIONALS, 1, (Mat.zeros(RATIONALS, 1), Mat.zeros(RATIONALS, 1)))

    def test_m_too_small(self):
        """Test the invariance failure and the retry hint."""
        with self.assertRaises(NotStabilized) as ctx:
            stabilize_findim(self.P, 0, self.ref, self.A, Fraction(1, 2))
        self.assertFalse(ctx.exception.diagnostics["invariant"])
        self.assertIn("m=1", ctx.exception.diagnostics["hint"])

    def test_m_one_succeeds(self):
        """Test that one more level gives a verified solution."""
        outcome = stabilize_findim(self.P, 1, self.ref, self.A, Fraction(1, 2))
        self.assertEqual(outcome.diagnostics["dim_W"], 0)
        self.assertEqual(outcome.distances, (1, 1))

    def test_retrying(self):
        """Test that the retrying variant records the values of m it tried."""
        outcome = stabilize_findim_retrying(self.P, 0, self.ref, self.A, Fraction(1, 2), m_cap=3)
        self.assertEqual(outcome.diagnostics["m_tried"], [0, 1])

    def test_retrying_stops_on_distance_failure(self):
        """Test that a distance failure is not retried."""
        with self.assertRaises(NotStabilized) as ctx:
            stabilize_findim_retrying(self.P, 1, self.ref, self.A, Fraction(1, 10), m_cap=3)
        self.assertTrue(ctx.exception.diagnostics["invariant"])

    def test_chain_needs_two_levels(self):
        """Test a shift chain whose W becomes invariant only at m = 2."""
        A_x = Mat.unit(RATIONALS, 4, 4, 0, 0)
        A_y = Mat.unit(RATIONALS, 4, 4, 0, 1) + Mat.unit(RATIONALS, 4, 4, 1, 2) + Mat.unit(RATIONALS, 4, 4, 2, 3)
        A = MatTuple(RATIONALS, 4, (A_x, A_y))
        with self.assertRaises(NotStabilized) as ctx:
            stabilize_findim(self.P, 1, self.ref, A, Fraction(3, 4))
        self.assertIn("retry with m=2", ctx.exception.diagnostics["hint"])
        outcome = stabilize_findim(self.P, 2, self.ref, A, Fraction(3, 4))
        self.assertEqual(outcome.diagnostics["dim_W"], 1)
        self.assertEqual(outcome.distances, (0, 3))


class TestMatrixUnits(unittest.TestCase):
    def setUp(self):
        """Units of M_2 tensored with Id_q and conjugated."""
        self.rng = np.random.default_rng(99)
        self.P = matrix_units_presentation(2)

    def test_findim_on_noisy_units(self):
        """Test stabilizing units with one rank-one update."""
        units = conjugate_tuple(self.rng, standard_units(2, RATIONALS).tensor_identity(8))
        noisy = MatTuple(RATIONALS, 16, (units[0] + rank_one(self.rng, RATIONALS, 16),) + tuple(units)[1:])
        outcome = stabilize_findim(self.P, 1, standard_units(2, RATIONALS), noisy, Fraction(1, 2))
        self.assertTrue(is_exact_solution(self.P, outcome.solution))
        self.assertEqual(outcome.n % 2, 0)

    def test_frame(self):
        """Test that the frame conjugates units to e_ij ⊗ Id_q."""
        units = conjugate_tuple(self.rng, standard_units(2, RATIONALS).tensor_identity(3))
        grid = [[units[0], units[1]], [units[2], units[3]]]
        q, D, D_inv = matrix_unit_frame(grid)
        self.assertEqual(q, 3)
        for i in range(2):
            for j in range(2):
                expected = kronecker(Mat.unit(RATIONALS, 2, 2, i, j), Mat.identity(RATIONALS, 3))
                self.assertEqual(D @ grid[i][j] @ D_inv, expected)

    def test_frame_rejects_broken_units(self):
        """Test that a non-unit tuple raises UnitRelationError."""
        eye = Mat.identity(RATIONALS, 2)
        with self.assertRaises(UnitRelationError):
            matrix_unit_frame([[eye, eye], [eye, eye]])

    def test_round_matrix_units(self):
        """Test that the rounded matrix commutes with the units within the bound."""
        P = random_invertible(self.rng, RATIONALS, 6)
        units = standard_units(2, RATIONALS).tensor_identity(3).conjugate(P)
        X = random_matrix(self.rng, RATIONALS, 3)
        A = P @ kronecker(Mat.identity(RATIONALS, 2), X) @ inverse(P) + rank_one(self.rng, RATIONALS, 6)
        result = round_matrix_units(list(units), A)
        self.assertEqual(result.q, 3)
        for E in units:
            self.assertEqual(result.C @ E, E @ result.C)
        self.assertLessEqual(result.distance, result.bound)

    def check_rounding(self, m: int, q: int):
        P = random_invertible(self.rng, RATIONALS, m * q)
        units = standard_units(m, RATIONALS).tensor_identity(q).conjugate(P)
        X = random_matrix(self.rng, RATIONALS, q)
        A = P @ kronecker(Mat.identity(RATIONALS, m), X) @ inverse(P) + rank_one(self.rng, RATIONALS, m * q)
        result = round_matrix_units(list(units), A)
        self.assertEqual(result.q, q)
        for E in units:
            self.assertEqual(result.C @ E, E @ result.C)
        self.assertLessEqual(result.distance, result.bound)

    def test_round_matrix_units_random(self):
        """Test commuting output within m^2(lambda + 2N) for m in {2, 3}."""
        for _ in range(10):
            self.check_rounding(int(self.rng.integers(2, 4)), int(self.rng.integers(1, 5)))

    @slow
    def test_round_matrix_units_full(self):
        """Test 100 random roundings with m in {2, 3} and q up to 4."""
        for _ in range(100):
            self.check_rounding(int(self.rng.integers(2, 4)), int(self.rng.integers(1, 5)))

    def test_round_matrix_units_raises_past_bound(self):
        """Test that a distance above the bound raises NotStabilized with diagnostics."""
        units = standard_units(2, RATIONALS).tensor_identity(2)
        A = kronecker(Mat.identity(RATIONALS, 2), random_matrix(self.rng, RATIONALS, 2))
        with mock.patch("stabilize.hat_dist", return_value=100):
            with self.assertRaises(NotStabilized) as ctx:
                round_matrix_units(list(units), A)
        self.assertEqual(ctx.exception.diagnostics["bound"], 0)
        self.assertEqual(ctx.exception.diagnostics["distance"], 100)


class TestSmallRepairs(unittest.TestCase):
    def setUp(self):
        """Seeded generator."""
        self.rng = np.random.default_rng(5)

    def test_zero_product(self):
        """Test B1 A2 = 0 with a correction no larger than rank(A1 A2)."""
        for _ in range(10):
            A1 = random_matrix(self.rng, RATIONALS, 5)
            A2 = rank_one(self.rng, RATIONALS, 5) + rank_one(self.rng, RATIONALS, 5)
            B1, B2 = stabilize_zero_product(A1, A2)
            self.assertTrue((B1 @ B2).is_zero())
            self.assertEqual(B2, A2)
            self.assertLessEqual(rank(B1 - A1), rank(A1 @ A2))

    def test_round_idempotent_example(self):
        """Test diag(1,1,0,2) rounds to diag(1,1,0,0)."""
        C = Mat.diag(RATIONALS, [1, 1, 0, 2])
        self.assertEqual(round_idempotent(C), Mat.diag(RATIONALS, [1, 1, 0, 0]))

    def test_round_idempotent_bound(self):
        """Test E^2 = E and rank(E - C) <= rank(C^2 - C) on noisy idempotents."""
        for _ in range(10):
            P = random_invertible(self.rng, RATIONALS, 6)
            C = P @ Mat.diag(RATIONALS, [1, 1, 1, 0, 0, 0]) @ inverse(P) + rank_one(self.rng, RATIONALS, 6)
            E = round_idempotent(C)
            self.assertEqual(E @ E, E)
            self.assertLessEqual(rank(E - C), rank(C @ C - C))

    def check_planted_idempotent(self, n: int):
        t = int(self.rng.integers(0, min(3, n) + 1))
        ones = int(self.rng.integers(0, n - t + 1))
        stray = [int(v) for v in self.rng.choice([-2, -1, 2, 3], size=t)]
        P = random_invertible(self.rng, RATIONALS, n)
        C = P @ Mat.diag(RATIONALS, [1] * ones + [0] * (n - t - ones) + stray) @ inverse(P)
        self.assertEqual(rank(C @ C - C), t)
        E = round_idempotent(C)
        self.assertEqual(E @ E, E)
        self.assertLessEqual(rank(E - C), t)

    def test_round_idempotent_planted(self):
        """Test rounding with exactly t eigenvalues outside {0, 1}, t <= 3."""
        for _ in range(30):
            self.check_planted_idempotent(int(self.rng.integers(2, 9)))

    @slow
    def test_round_idempotent_planted_full(self):
        """Test 300 planted inputs of sizes 2 to 15."""
        for _ in range(300):
            self.check_planted_idempotent(int(self.rng.integers(2, 16)))

    def test_split_idempotent(self):
        """Test block extraction and reassembly against diag(1, 0)."""
        E = Mat.diag(RATIONALS, [1, 0])
        M = Mat.from_rows(RATIONALS, [[2, 3], [4, 5]])
        split = split_idempotent_block(E, M)
        self.assertEqual(split.r, 1)
        self.assertEqual(split.block, Mat.from_rows(RATIONALS, [[2]]))
        self.assertEqual(split.complement, Mat.from_rows(RATIONALS, [[5]]))
        self.assertEqual(split.reassemble(), Mat.diag(RATIONALS, [2, 0]))
        frame = idempotent_frame(E)
        self.assertEqual(split_idempotent_block(E, M, frame).complement, split.complement)

    def test_frame_rejects_non_idempotent(self):
        """Test that idempotent_frame checks its input."""
        with self.assertRaises(ValueError):
            idempotent_frame(Mat.diag(RATIONALS, [2, 0]))

    def test_round_invertible(self):
        """Test invertibility and rank(U - A) <= n - rank(A)."""
        A = Mat.diag(RATIONALS, [1, 1, 0])
        U = round_invertible(A)
        self.assertEqual(rank(U), 3)
        self.assertLessEqual(rank(U - A), 1)
        for _ in range(10):
            B = rank_one(self.rng, RATIONALS, 5) + rank_one(self.rng, RATIONALS, 5)
            V = round_invertible(B)
            self.assertEqual(rank(V), 5)
            self.assertLessEqual(rank(V - B), 5 - rank(B))
        X = random_invertible(self.rng, RATIONALS, 4)
        self.assertEqual(round_invertible(X), X)


class TestTransport(unittest.TestCase):
    def setUp(self):
        """<x | x^2> solved through <y | y^2> with x = 2y."""
        self.rng = np.random.default_rng(8)
        self.src = square_zero()
        self.dst = parse_presentation("algebra Q; gens y; rels y^2;")
        y = NcPoly.generator(RATIONALS, 1, 0)
        x = NcPoly.generator(RATIONALS, 1, 0)
        self.G = [y.scale(2)]
        self.F = [x.scale(Fraction(1, 2))]
        self.solver = FindimSolver(jordan_reference())

    def test_transport(self):
        """Test that the pushed-forward solution is exact and close."""
        A = perturb_tuple(self.rng, square_zero_solution(RATIONALS, 8), 1)
        outcome = transport_solution(self.src, self.dst, self.G, self.F, self.solver, A, Fraction(1, 2))
        self.assertTrue(is_exact_solution(self.dst, outcome.solution))
        self.assertEqual(outcome.diagnostics["case"], "transport")

    def test_wrong_isomorphism(self):
        """Test that bad isomorphism data is reported."""
        x = NcPoly.generator(RATIONALS, 1, 0)
        F = [x + NcPoly.constant(RATIONALS, 1)]
        A = square_zero_solution(RATIONALS, 4)
        with self.assertRaises(NotStabilized) as ctx:
            transport_solution(self.src, self.dst, self.G, F, self.solver, A, Fraction(1, 2))
        self.assertIn("note", ctx.exception.diagnostics)


class TestGroups(unittest.TestCase):
    def setUp(self):
        """The free group on one generator and Z/2."""
        self.rng = np.random.default_rng(21)
        self.Z = GroupPresentation(RATIONALS, ("a",), ())
        self.Z2 = GroupPresentation(RATIONALS, ("a",), (((0, 2),),))

    def test_group_algebra(self):
        """Test F[Z] with a noisy approximate inverse."""
        X = random_invertible(self.rng, RATIONALS, 6)
        Y = inverse(X) + rank_one(self.rng, RATIONALS, 6)
        A = MatTuple(RATIONALS, 6, (X, Y))
        outcome = stabilize_group_algebra(self.Z, ExactGroupSolver(), A, Fraction(1, 2))
        U, V = outcome.solution
        self.assertTrue((U @ V).is_identity())
        self.assertEqual(outcome.distances, (0, 1))

    def test_group_from_algebra(self):
        """Test that an involution goes through the F[Z/2] solver unchanged."""
        P = random_invertible(self.rng, RATIONALS, 4)
        A = MatTuple(RATIONALS, 4, (P @ Mat.diag(RATIONALS, [1, -1, 1, -1]) @ inverse(P),))
        outcome = stabilize_group_from_algebra(self.Z2, ExactInputSolver(), A, Fraction(1, 4))
        self.assertEqual(outcome.solution, A)
        self.assertEqual(outcome.distances, (0,))

    def test_group_from_algebra_needs_invertible(self):
        """Test that a singular generator image is refused."""
        A = MatTuple(RATIONALS, 2, (Mat.diag(RATIONALS, [1, 0]),))
        with self.assertRaises(ValueError):
            stabilize_group_from_algebra(self.Z2, ExactInputSolver(), A, Fraction(1, 4))


class TestFreeProduct(unittest.TestCase):
    def setUp(self):
        """Two square-zero factors, reps of sizes 2 and 1."""
        self.P = square_zero()
        self.Q = parse_presentation("algebra Q; gens y; rels y^2;")
        self.rep = jordan_reference()
        self.rep_prime = MatTuple(RATIONALS, 1, (Mat.zeros(RATIONALS, 1),))

    def test_compute_bezout(self):
        """Test minimal nonnegative solutions of kg - k'g' = gcd."""
        self.assertEqual(compute_bezout(1, 1), (1, 0))
        self.assertEqual(compute_bezout(2, 3), (2, 1))
        self.assertEqual(compute_bezout(4, 6), (2, 1))
        with self.assertRaises(DimensionArithmeticError):
            compute_bezout(0, 3)

    def test_sizes_matched(self):
        """Test that solutions of sizes 2 and 3 are padded to a common size."""
        solA = jordan_reference()
        solB = MatTuple(RATIONALS, 3, (direct_sum(jordan_reference()[0], Mat.zeros(RATIONALS, 1)),))
        combined = stabilize_free_product(self.P, self.Q, solA, solB, self.rep, self.rep_prime, 1, 1)
        self.assertEqual(combined.n, 4)
        self.assertEqual(combined.arity, 2)

    def test_wrong_order(self):
        """Test that m > m' is refused."""
        solA = MatTuple(RATIONALS, 3, (direct_sum(jordan_reference()[0], Mat.zeros(RATIONALS, 1)),))
        with self.assertRaises(DimensionArithmeticError):
            stabilize_free_product(self.P, self.Q, solA, jordan_reference(), self.rep, self.rep_prime, 1, 1)

    def test_wrong_representation_sizes(self):
        """Test that kg - k'g' must equal gcd(g, g')."""
        with self.assertRaises(DimensionArithmeticError):
            stabilize_free_product(self.P, self.Q, jordan_reference(), jordan_reference(),
                                   self.rep, jordan_reference(), 1, 1)


class TestDirectProduct(unittest.TestCase):
    def setUp(self):
        """A x B with both factors square-zero."""
        self.rng = np.random.default_rng(77)
        self.PA = square_zero()
        self.PB = parse_presentation("algebra Q; gens y; rels y^2;")
        self.solver = FindimSolver(jordan_reference())
        self.eps = Fraction(1, 2)

    def product_tuple(self, a: int, b: int) -> MatTuple:
        J = jordan_reference()[0]
        Ja = kronecker(J, Mat.identity(RATIONALS, a)) if a else Mat.zeros(RATIONALS, 0)
        Jb = kronecker(J, Mat.identity(RATIONALS, b)) if b else Mat.zeros(RATIONALS, 0)
        sa, sb = 2 * a, 2 * b
        x = direct_sum(Ja, Mat.zeros(RATIONALS, sb))
        y = direct_sum(Mat.zeros(RATIONALS, sa), Jb)
        e1 = direct_sum(Mat.identity(RATIONALS, sa), Mat.zeros(RATIONALS, sb))
        e2 = direct_sum(Mat.zeros(RATIONALS, sa), Mat.identity(RATIONALS, sb))
        return MatTuple(RATIONALS, sa + sb, (x, y, e1, e2))

    def test_case_three_exact(self):
        """Test that an exact split input comes back unchanged."""
        T = conjugate_tuple(self.rng, self.product_tuple(4, 4))
        outcome = stabilize_direct_product(self.solver, self.solver, self.PA, self.PB, T, self.eps)
        self.assertEqual(outcome.diagnostics["case"], "III")
        self.assertEqual(outcome.max_distance, 0)

    def test_case_three_noisy(self):
        """Test rank-one noise on the first factor."""
        T = conjugate_tuple(self.rng, self.product_tuple(4, 4))
        noisy = MatTuple(RATIONALS, T.n, (T[0] + rank_one(self.rng, RATIONALS, T.n),) + tuple(T)[1:])
        outcome = stabilize_direct_product(self.solver, self.solver, self.PA, self.PB, noisy, self.eps)
        self.assertTrue(outcome.verified)
        self.assertLessEqual(outcome.max_distance, 8)

    def test_case_three_noisy_idempotent(self):
        """Test rank-one noise on e1, which moves the splitting itself."""
        T = conjugate_tuple(self.rng, self.product_tuple(6, 6))
        noisy = MatTuple(RATIONALS, T.n, tuple(T)[:2] + (T[2] + rank_one(self.rng, RATIONALS, T.n), T[3]))
        outcome = stabilize_direct_product(self.solver, self.solver, self.PA, self.PB, noisy, self.eps)
        self.assertEqual(outcome.diagnostics["case"], "III")
        self.assertTrue(outcome.verified)
        E1 = outcome.solution[2]
        self.assertEqual(E1 @ E1, E1)
        self.assertLessEqual(outcome.max_distance, 12)

    @slow
    def test_closure_full(self):
        """Test 50 instances with rank-one noise on a random generator."""
        product = direct_product_presentation(self.PA, self.PB)
        for _ in range(50):
            T = perturb_generators(self.rng, conjugate_tuple(self.rng, self.product_tuple(6, 6)), 1)
            outcome = stabilize_direct_product(self.solver, self.solver, self.PA, self.PB, T, self.eps)
            self.assertTrue(outcome.verified)
            self.assertTrue(is_exact_solution(product, outcome.solution))

    def test_case_one(self):
        """Test that a vanishing first idempotent hands everything to the second solver."""
        T = self.product_tuple(0, 4)
        outcome = stabilize_direct_product(self.solver, self.solver, self.PA, self.PB, T, self.eps)
        self.assertEqual(outcome.diagnostics["case"], "I")
        self.assertTrue(outcome.solution[2].is_zero())

    def test_case_two(self):
        """Test that a full first idempotent hands everything to the first solver."""
        T = self.product_tuple(4, 0)
        outcome = stabilize_direct_product(self.solver, self.solver, self.PA, self.PB, T, self.eps)
        self.assertEqual(outcome.diagnostics["case"], "II")
        self.assertTrue(outcome.solution[2].is_identity())


class TestMatrixAlgebra(unittest.TestCase):
    def setUp(self):
        """M_2 over the square-zero algebra."""
        self.rng = np.random.default_rng(31)
        self.P = square_zero()
        self.inner = FindimSolver(jordan_reference())

    def lifted(self, q: int) -> MatTuple:
        x = kronecker(Mat.identity(RATIONALS, 2), square_zero_solution(RATIONALS, q // 2)[0])
        units = standard_units(2, RATIONALS).tensor_identity(q)
        return MatTuple(RATIONALS, 2 * q, (x,) + tuple(units))

    def test_exact(self):
        """Test that an exact M_2 tuple is kept."""
        T = conjugate_tuple(self.rng, self.lifted(4))
        outcome = stabilize_matrix_algebra(self.inner, self.P, 2, T, Fraction(1, 4))
        self.assertEqual(outcome.max_distance, 0)
        self.assertEqual(outcome.diagnostics["q"], 4)

    def test_noisy(self):
        """Test rank-one noise on the algebra generator."""
        T = conjugate_tuple(self.rng, self.lifted(8))
        noisy = MatTuple(RATIONALS, T.n, (T[0] + rank_one(self.rng, RATIONALS, T.n),) + tuple(T)[1:])
        outcome = stabilize_matrix_algebra(self.inner, self.P, 2, noisy, Fraction(3, 4))
        self.assertTrue(outcome.verified)
        self.assertTrue(defect(matrix_units_presentation(2), outcome.solution[1:]).is_exact)

    def test_noisy_unit(self):
        """Test rank-one noise on e11, which moves the unit frame."""
        T = self.lifted(18)
        noisy = MatTuple(RATIONALS, T.n, (T[0], T[1] + rank_one(self.rng, RATIONALS, T.n)) + tuple(T)[2:])
        outcome = stabilize_matrix_algebra(self.inner, self.P, 2, noisy, Fraction(1))
        self.assertTrue(outcome.verified)
        self.assertTrue(is_exact_solution(matrix_algebra_presentation(self.P, 2), outcome.solution))

    @slow
    def test_closure_full(self):
        """Test 50 instances with rank-one noise on a random generator."""
        presentation = matrix_algebra_presentation(self.P, 2)
        for _ in range(50):
            T = perturb_generators(self.rng, self.lifted(18), 1)
            outcome = stabilize_matrix_algebra(self.inner, self.P, 2, T, Fraction(1))
            self.assertTrue(outcome.verified)
            self.assertTrue(is_exact_solution(presentation, outcome.solution))

    def test_demote(self):
        """Test stabilizing A through a stabilizer of M_2(A)."""
        solver_m = MatrixAlgebraSolver(self.inner, self.P, 2)
        A = perturb_tuple(self.rng, square_zero_solution(RATIONALS, 4), 1)
        outcome = demote_matrix_algebra(solver_m, self.P, 2, A, Fraction(1, 2))
        self.assertTrue(is_exact_solution(self.P, outcome.solution))
        self.assertEqual(outcome.diagnostics["case"], "demote")


if __name__ == '__main__':
    unittest.main()
