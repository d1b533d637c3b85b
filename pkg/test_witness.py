import unittest
from fractions import Fraction

import numpy as np

from exactmat import Mat, RATIONALS, inverse
from freealg import MatTuple, ArityMismatchError, matrix_units_presentation
from approx import defect
from witness import (
    weyl_presentation, projective_weyl_presentation, vacuous_presentation,
    weyl_witness, matrix_size_witness, folner_data, folner_witness,
    vacuous_certify, Verdict, weyl_family, matrix_size_family, folner_family,
)
from tests.test_utils import F101, random_matrix, random_invertible, random_low_rank


class TestWeyl(unittest.TestCase):
    def test_defect_is_one_over_n(self):
        """Test the shift witness defect 1/n for every n from 2 to 60."""
        P = weyl_presentation()
        for n in range(2, 61):
            self.assertEqual(defect(P, weyl_witness(n)).max_defect, Fraction(1, n))

    def test_prime_field(self):
        """Test the witness below the characteristic over F_101."""
        P = weyl_presentation(F101)
        self.assertEqual(defect(P, weyl_witness(10, F101)).max_defect, Fraction(1, 10))

    def test_too_small(self):
        """Test that n = 1 is rejected."""
        with self.assertRaises(ValueError):
            weyl_witness(1)


class TestMatrixSize(unittest.TestCase):
    def test_defect(self):
        """Test max defect exactly 1/(nk+1) over k in {2, 3} and n up to 10."""
        for k in (2, 3):
            P = matrix_units_presentation(k)
            for n in range(1, 11):
                T = matrix_size_witness(k, n)
                self.assertEqual(T.n, n * k + 1)
                self.assertEqual(T.arity, k * k)
                self.assertEqual(defect(P, T).max_defect, Fraction(1, n * k + 1))

    def test_rejects_bad_parameters(self):
        """Test that k < 2 or n < 1 is rejected."""
        with self.assertRaises(ValueError):
            matrix_size_witness(1, 3)
        with self.assertRaises(ValueError):
            matrix_size_witness(2, 0)


class TestFolner(unittest.TestCase):
    def setUp(self):
        """Projective Weyl presentation."""
        self.P = projective_weyl_presentation()

    def test_dimensions(self):
        """Test dim V, dim U and the boundary dimension 2i + 1."""
        for i in (2, 4, 6):
            data = folner_data(i)
            self.assertEqual(data.n, (i + 1) * (i + 2) // 2)
            self.assertEqual(data.dim_interior, i * (i + 1) // 2)
            self.assertEqual(data.boundary_dim, 2 * i + 1)
            self.assertEqual(data.word_count, 13)

    def test_defect_formula(self):
        """Test the defect 2i/((i+1)(i+2)) and the boundary bound."""
        for i in (4, 6, 8):
            data = folner_data(i)
            report = defect(self.P, data.mats)
            self.assertEqual(report.max_defect, Fraction(2 * i, (i + 1) * (i + 2)))
            self.assertLessEqual(report.max_defect * data.n, data.word_count * data.boundary_dim)

    def test_defect_decreases(self):
        """Test strict decrease for every i from 4 to 12, the boundary bound at each i, and halving by 12."""
        values = []
        for i in range(4, 13):
            data = folner_data(i)
            omega = defect(self.P, data.mats).max_defect
            self.assertLessEqual(data.n * omega, data.word_count * data.boundary_dim, msg=f"i={i}")
            values.append(omega)
        for i, (a, b) in enumerate(zip(values, values[1:]), start=4):
            self.assertGreater(a, b, msg=f"i={i}")
        self.assertLess(values[-1], values[0] / 2)

    def test_size_28(self):
        """Test the i = 6 witness has size 28."""
        self.assertEqual(folner_witness(6).n, 28)

    def test_too_small(self):
        """Test that i < 2 is rejected."""
        with self.assertRaises(ValueError):
            folner_data(1)


class TestVacuous(unittest.TestCase):
    def setUp(self):
        """Seeded generator."""
        self.rng = np.random.default_rng(3)

    def test_presentation(self):
        """Test the shape of <x, y, z | xyz - 1, xzy>."""
        P = vacuous_presentation()
        self.assertEqual(P.arity, 3)
        self.assertEqual(P.relator_count, 2)

    def test_random_triples(self):
        """Test that the certificate never fails on random and structured triples."""
        eye = Mat.identity(RATIONALS, 8)
        zero = Mat.zeros(RATIONALS, 8)
        self.assertEqual(vacuous_certify(MatTuple(RATIONALS, 8, (eye, eye, eye))), Verdict.IMPLICATION_HOLDS)
        self.assertEqual(vacuous_certify(MatTuple(RATIONALS, 8, (zero, zero, zero))), Verdict.NOT_APPROXIMATE)
        for _ in range(30):
            mats = tuple(random_matrix(self.rng, RATIONALS, 8, bound=1) for _ in range(3))
            self.assertIn(vacuous_certify(MatTuple(RATIONALS, 8, mats)), list(Verdict))

    def test_near_identity_triples(self):
        """Test ImplicationHolds on 200 triples with rank(XYZ - Id) < n/4."""
        for _ in range(200):
            n = int(self.rng.integers(5, 11))
            X = random_invertible(self.rng, RATIONALS, n)
            Y = random_invertible(self.rng, RATIONALS, n)
            Z = inverse(X @ Y) + random_low_rank(self.rng, RATIONALS, n, (n - 1) // 4)
            self.assertEqual(vacuous_certify(MatTuple(RATIONALS, n, (X, Y, Z))), Verdict.IMPLICATION_HOLDS)

    def test_arity(self):
        """Test that the certificate needs exactly three matrices."""
        eye = Mat.identity(RATIONALS, 2)
        with self.assertRaises(ArityMismatchError):
            vacuous_certify(MatTuple(RATIONALS, 2, (eye, eye)))


class TestFamilies(unittest.TestCase):
    def test_families_match_formula(self):
        """Test that each family's tuples fit its presentation and formula."""
        for family, index in ((weyl_family(), 5), (matrix_size_family(2), 3)):
            T = family(index)
            self.assertEqual(defect(family.presentation, T).max_defect, family.defect_formula(index))
        folner = folner_family()
        self.assertIsNone(folner.defect_formula)
        self.assertEqual(folner(3).arity, 3)


if __name__ == '__main__':
    unittest.main()
