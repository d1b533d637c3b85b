import unittest
from fractions import Fraction

import numpy as np

from exactmat import Mat, RATIONALS, hat_dist
from freealg import NcPoly, MatTuple, ArityMismatchError, parse_presentation, evaluate
from approx import (
    defect, relator_ranks, is_exact_solution, hat_distances, is_eps_approx, polyrank_bound,
    check_polyrank_bound, weighted_defect_bound, PolyRankPreconditionError,
)
from witness import weyl_presentation, weyl_witness
from tests.test_utils import random_matrix, perturb_tuple, jordan_reference, square_zero_solution


class TestDefect(unittest.TestCase):
    def setUp(self):
        """Weyl presentation and its standard witness."""
        self.P = weyl_presentation()

    def test_weyl_defect(self):
        """Test that the shift witness has defect exactly 1/n."""
        for n in (2, 3, 7):
            report = defect(self.P, weyl_witness(n))
            self.assertEqual(report.max_defect, Fraction(1, n))
            self.assertEqual(report.ranks, (1,))
            self.assertEqual(report.worst_relator, 0)
            self.assertFalse(report.is_exact)

    def test_exact_solution(self):
        """Test that the Jordan block solves x^2 exactly."""
        P = parse_presentation("algebra Q; gens x; rels x^2;")
        report = defect(P, square_zero_solution(RATIONALS, 3))
        self.assertTrue(report.is_exact)
        self.assertEqual(report.max_defect, 0)
        self.assertTrue(is_exact_solution(P, jordan_reference()))

    def test_relator_ranks_per_relator(self):
        """Test per-relator ranks keep relator order."""
        P = parse_presentation("algebra Q; gens x; rels x^2, x, x - 1;")
        self.assertEqual(relator_ranks(P, jordan_reference()), [0, 1, 2])
        report = defect(P, jordan_reference())
        self.assertEqual(report.worst_relator, 2)
        self.assertEqual(report.max_defect, 1)

    def test_lie_relators_expanded(self):
        """Test that a Lie presentation is measured through its expansion."""
        P = parse_presentation("lie Q; gens a, b; rels [a,b];")
        X = Mat.from_rows(RATIONALS, [[0, 1], [0, 0]])
        T = MatTuple(RATIONALS, 2, (X, X.transpose()))
        self.assertEqual(defect(P, T).ranks, (2,))

    def test_arity_mismatch(self):
        """Test that a tuple of the wrong arity is rejected."""
        with self.assertRaises(ArityMismatchError):
            defect(self.P, jordan_reference())

    def test_weighted_bound(self):
        """Test the size-weighted combination of two reports."""
        first = defect(self.P, weyl_witness(2))
        second = defect(self.P, weyl_witness(4))
        self.assertEqual(weighted_defect_bound(first, second), Fraction(2, 6))


class TestDistances(unittest.TestCase):
    def test_hat_distances(self):
        """Test padded distances between tuples of different sizes."""
        A = jordan_reference()
        B = A.identity_tensor(2)
        self.assertEqual(hat_distances(A, B), (1,))

    def test_eps_approx_is_strict(self):
        """Test that a distance equal to eps*n does not count as close."""
        A = MatTuple(RATIONALS, 4, (Mat.zeros(RATIONALS, 4),))
        B = MatTuple(RATIONALS, 4, (Mat.diag(RATIONALS, [1, 0, 0, 0]),))
        self.assertFalse(is_eps_approx(A, B, Fraction(1, 4)))
        self.assertTrue(is_eps_approx(A, B, Fraction(1, 2)))
        self.assertEqual(is_eps_approx(A, B, Fraction(1, 2)).distances, (1,))

    def test_arity_mismatch(self):
        """Test that comparing tuples of different arity raises."""
        A = jordan_reference()
        with self.assertRaises(ArityMismatchError):
            hat_distances(A, A.concat(A))


class TestPolyRank(unittest.TestCase):
    def setUp(self):
        """Polynomials in two variables and a seeded generator."""
        self.rng = np.random.default_rng(11)
        self.x = NcPoly.generator(RATIONALS, 2, 0)
        self.y = NcPoly.generator(RATIONALS, 2, 1)

    def test_bound_value(self):
        """Test l*m*lambda + |n - n'| with l, m at least one."""
        f = self.x * self.y + self.y
        self.assertEqual(polyrank_bound(f, 3, 5, 7), 2 * 2 * 3 + 2)
        self.assertEqual(polyrank_bound(NcPoly.zero(RATIONALS, 2), 3, 5, 5), 3)
        self.assertEqual(polyrank_bound(f, 3, 5, 7, drop_size_term=True), 12)

    def test_bound_holds_on_perturbations(self):
        """Test the inequality on random low-rank perturbations."""
        polys = [self.x * self.y + self.y, self.x * self.x * self.y - NcPoly.constant(RATIONALS, 2),
                 self.y * self.x - self.x * self.y]
        for _ in range(10):
            A = MatTuple(RATIONALS, 5, (random_matrix(self.rng, RATIONALS, 5), random_matrix(self.rng, RATIONALS, 5)))
            B = perturb_tuple(self.rng, A, 1)
            lam = max(hat_distances(A, B)) + 1
            for f in polys:
                self.assertTrue(check_polyrank_bound(f, A, B, lam))

    def random_poly(self, zero_constant: bool) -> NcPoly:
        f = NcPoly.zero(RATIONALS, 2)
        for _ in range(int(self.rng.integers(1, 5))):
            length = int(self.rng.integers(1 if zero_constant else 0, 4))
            word = tuple(int(g) for g in self.rng.integers(0, 2, size=length))
            coeff = int(self.rng.choice([-2, -1, 1, 2]))
            f = f + NcPoly.monomial(RATIONALS, 2, word, coeff)
        return f

    def test_bound_holds_on_planted_distances(self):
        """Test the inequality on 300 random (f, A, B), with and without constant terms and size changes."""
        for trial in range(300):
            zero_constant = trial % 2 == 0
            f = self.random_poly(zero_constant)
            n = int(self.rng.integers(2, 7))
            n_prime = n + int(self.rng.integers(-1, 2))
            A = MatTuple(RATIONALS, n, tuple(random_matrix(self.rng, RATIONALS, n, bound=2) for _ in range(2)))
            planted = int(self.rng.integers(0, 3))
            B = perturb_tuple(self.rng, A.resize(n_prime), planted)
            lam = max(hat_distances(A, B)) + 1
            self.assertTrue(check_polyrank_bound(f, A, B, lam), msg=f"trial {trial}: {f!r}")
            if f.has_zero_constant:
                lhs = hat_dist(evaluate(f, A), evaluate(f, B))
                self.assertLess(lhs, polyrank_bound(f, lam, n, n_prime, drop_size_term=True))

    def test_precondition(self):
        """Test that lambda must exceed every generator distance."""
        A = MatTuple(RATIONALS, 2, (Mat.zeros(RATIONALS, 2), Mat.zeros(RATIONALS, 2)))
        B = MatTuple(RATIONALS, 2, (Mat.identity(RATIONALS, 2), Mat.zeros(RATIONALS, 2)))
        with self.assertRaises(PolyRankPreconditionError):
            check_polyrank_bound(self.x, A, B, 2)


if __name__ == '__main__':
    unittest.main()
