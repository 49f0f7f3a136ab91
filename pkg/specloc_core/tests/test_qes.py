import math
import unittest
from unittest import mock

import numpy as np

from specloc_core.errors import ArgumentError, Collision, DegenerateEigenvalue
from specloc_core.polyalg import CPoly, poly_derivative
from specloc_core.qes import (
    asymptotic_crossing,
    bethe_residuals,
    bethe_seeds,
    bethe_solve,
    c_constant_check,
    darboux,
    equivalence_check,
    h_prime,
    lambda_from_p,
    level_crossings,
    qes_matrix,
    qes_points,
    real_qes_branch,
    resolve_c_convention,
    spectral_poly,
)


def apply_operator(p: CPoly, n: int, b: float) -> CPoly:
    dp = poly_derivative(p)
    return -poly_derivative(dp) - 2.0 * (h_prime(b) * dp) + CPoly((-b * b, 2.0 * n)) * p


class MatrixTests(unittest.TestCase):
    def test_columns_are_images_of_monomials(self):
        n, b = 3, 0.7
        M = qes_matrix(n, b)
        for k in range(n + 1):
            image = apply_operator(CPoly((0.0,) * k + (1.0,)), n, b)
            self.assertLessEqual(image.degree, n)
            padded = np.zeros(n + 1, dtype=complex)
            padded[: len(image.coeffs)] = image.coeffs
            self.assertLess(np.max(np.abs(M[:, k] - padded)), 1e-12)

    def test_negative_size(self):
        with self.assertRaises(ArgumentError):
            qes_matrix(-1, 1.0)

    def test_complex_b(self):
        self.assertTrue(np.iscomplexobj(qes_matrix(2, 1 + 0.5j)))


class SpectralPolyTests(unittest.TestCase):
    def test_first_two_closed_forms(self):
        # Q_1 = lambda + b^2, Q_2 = (lambda + b^2)^2 - 4b
        for b in (0.0, 1.0, -0.6, 2.3):
            q1 = spectral_poly(0, b).Q
            self.assertLess(max(abs(x - y) for x, y in zip(q1.coeffs, (b * b, 1.0))), 1e-12)
            q2 = spectral_poly(1, b).Q
            expected = (b ** 4 - 4 * b, 2 * b * b, 1.0)
            self.assertLess(max(abs(x - y) for x, y in zip(q2.coeffs, expected)), 1e-10 * (1 + b ** 4))

    def test_roots_match_matrix_eigenvalues(self):
        M = qes_matrix(4, 1.3)
        spoly = spectral_poly(4, 1.3)
        for lam in np.linalg.eigvals(M):
            self.assertLess(abs(spoly(lam)), 1e-6 * (1.0 + abs(spoly.derivative(lam))))


class QESPointTests(unittest.TestCase):
    def test_pairs_at_b_one(self):
        points = qes_points(1, 1.0)
        self.assertEqual(len(points), 2)
        low, high = points
        self.assertLess(abs(low.lam + 3.0), 1e-10)
        self.assertLess(abs(high.lam - 1.0), 1e-10)
        self.assertLess(abs(low.roots[0] - 1.0), 1e-10)
        self.assertLess(abs(high.roots[0] + 1.0), 1e-10)
        self.assertEqual(high.n_real_roots, 1)
        self.assertEqual(high.J, 2)

    def test_ground_point(self):
        (point,) = qes_points(0, 1.5)
        self.assertLess(abs(point.lam + 2.25), 1e-12)
        self.assertEqual(point.p.coeffs, (1 + 0j,))

    def test_double_root_at_the_fold(self):
        (point,) = qes_points(1, 0.0)
        self.assertTrue(point.degenerate)
        self.assertLess(abs(point.lam), 1e-6)
        with self.assertRaises(DegenerateEigenvalue):
            qes_points(1, 0.0, strict=True)

    def test_rayleigh_quotient(self):
        self.assertLess(abs(lambda_from_p(1, 1.0, CPoly((1.0, 1.0))) - 1.0), 1e-12)


class BetheTests(unittest.TestCase):
    def test_single_root(self):
        self.assertLess(abs(bethe_solve(1, 1.0)[0] - 1.0), 1e-10)
        self.assertLess(abs(bethe_solve(1, 1.0, seeds=[-0.9])[0] + 1.0), 1e-10)

    def test_matches_linear_algebra(self):
        for branch in range(3):
            roots = bethe_solve(2, 1.5, seeds=bethe_seeds(2, 1.5, branch=branch))
            expected = sorted(qes_points(2, 1.5)[branch].roots, key=lambda z: (z.real, z.imag))
            for got, want in zip(roots, expected):
                self.assertLess(abs(got - want), 1e-7)
            self.assertLess(np.max(np.abs(bethe_residuals(np.array(roots), 1.5))), 1e-9)

    def test_empty_system(self):
        self.assertEqual(bethe_solve(0, 1.0), [])

    def test_chebyshev_seeds(self):
        seeds = bethe_seeds(3, 2.0, mode="chebyshev")
        self.assertEqual(len(seeds), 3)
        with self.assertRaises(ArgumentError):
            bethe_seeds(3, 2.0, mode="random")

    def test_colliding_seeds(self):
        with self.assertRaises(Collision):
            bethe_solve(2, 1.0, seeds=[0.5, 0.5])

    def test_wrong_seed_count(self):
        with self.assertRaises(ArgumentError):
            bethe_solve(2, 1.0, seeds=[0.5])


class EquivalenceTests(unittest.TestCase):
    def test_on_locus(self):
        for point in qes_points(3, 0.8):
            report = equivalence_check(point.p, 0.8)
            self.assertTrue(report.all_small(1e-7), report)

    def test_off_locus(self):
        report = equivalence_check(CPoly((0.0, 1.0)), 1.0)
        self.assertTrue(report.all_large())
        self.assertAlmostEqual(report.max_residue, 2.0, places=8)
        self.assertAlmostEqual(report.bethe_residual, 1.0, places=12)


class DarbouxTests(unittest.TestCase):
    def test_ground_state(self):
        report = darboux(0, 1.0)
        self.assertEqual(report.deviation, 0.0)
        self.assertEqual(report.V_new.coeffs[1], -2)

    def test_first_pair(self):
        # W(z - 1, z + 1) with h' = z^2 - 1 is the constant -2
        report = darboux(1, 1.0)
        self.assertLess(report.deviation, 1e-9)
        self.assertLess(abs(abs(report.W_poly.coeffs[0]) - 2.0), 1e-9)
        self.assertEqual(report.potential_error, 0.0)

    def test_higher_n(self):
        self.assertLess(darboux(3, 0.9).deviation, 1e-9)


class ConstantTests(unittest.TestCase):
    def test_convention(self):
        self.assertEqual(resolve_c_convention(), "reflected")

    def test_constant_matches_formula(self):
        for n, b in ((1, 1.0), (2, 1.2), (3, 0.5)):
            for record in c_constant_check(n, b):
                self.assertTrue(record.match, record)


class CrossingTests(unittest.TestCase):
    def test_asymptotic_value(self):
        self.assertAlmostEqual(asymptotic_crossing(1), -((0.75 * math.pi) ** (2.0 / 3.0)))

    def test_real_branch(self):
        self.assertEqual(real_qes_branch(1, 2.0), -4.0)
        self.assertLess(abs(real_qes_branch(2, 1.0) + 3.0), 1e-10)
        self.assertLess(abs(real_qes_branch(2, 1.0, near=0.9) - 1.0), 1e-10)

    def test_arguments(self):
        with self.assertRaises(ArgumentError):
            level_crossings(2, -5.0, 1)
        with self.assertRaises(ArgumentError):
            level_crossings(1, 1.0, 1)
        with self.assertRaises(ArgumentError):
            level_crossings(1, -1.0, 1, db=0.0)

    def test_scan_step_follows_the_branch_slope(self):
        seen = []

        def flat(family, lam, opts=None):
            seen.append(lam)
            return 1.0

        with mock.patch("specloc_core.qes.determinant_real", side_effect=flat):
            self.assertEqual(level_crossings(1, -6.0, 1), [])
        self.assertEqual(seen[0], 0.0)
        self.assertAlmostEqual(seen[1], -0.0004, places=12)
        self.assertAlmostEqual(seen[-1], -36.0, places=9)
        steps = np.abs(np.diff(seen))
        self.assertLess(steps.max(), 0.21)
        # lambda = -b^2, so the fixed db grid alone would move lambda by 0.24 near b = -6
        self.assertLess(steps[-1], 0.21)
        self.assertGreater(len(seen), 280)
