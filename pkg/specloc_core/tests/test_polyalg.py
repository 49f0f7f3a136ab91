import unittest

import numpy as np

from specloc_core.errors import ArgumentError, NoSolution, RadiusTooLarge, RootNotSimple
from specloc_core.polyalg import (
    CPoly,
    contour_residue_sum,
    parse_poly,
    poly_antiderivative,
    poly_derivative,
    poly_divrem,
    poly_eval,
    poly_mul,
    poly_reflect,
    poly_roots,
    residue_order2,
    solve_c_identity,
)


def hp(b):
    return CPoly((-b, 0.0, 1.0))


class CPolyTests(unittest.TestCase):
    def test_trailing_zeros_are_stripped(self):
        self.assertEqual(CPoly((1.0, 2.0, 0.0, 0.0)).coeffs, (1 + 0j, 2 + 0j))
        self.assertTrue(CPoly((0.0, 0.0)).is_zero())
        self.assertEqual(CPoly(()).degree, -1)

    def test_degree_and_leading(self):
        p = CPoly((1.0, 0.0, 3.0))
        self.assertEqual(p.degree, 2)
        self.assertEqual(p.leading, 3)
        self.assertEqual(p.monic().leading, 1)

    def test_parse_accepts_caret_and_imaginary_unit(self):
        self.assertEqual(parse_poly("z^3 - 2*z").coeffs, (0j, -2 + 0j, 0j, 1 + 0j))
        self.assertEqual(parse_poly("z**2 + 2*I*z").coeffs, (0j, 2j, 1 + 0j))

    def test_parse_rejects_other_symbols(self):
        with self.assertRaises(ArgumentError):
            parse_poly("z^2 + w")


class RingTests(unittest.TestCase):
    def test_eval(self):
        self.assertEqual(poly_eval(CPoly((-1.0, 0.0, 1.0)), 2), 3)
        self.assertEqual(poly_eval(CPoly(), 7 + 1j), 0)
        self.assertEqual(poly_eval(hp(1.0), 1j), -2)

    def test_eval_on_arrays_keeps_shape(self):
        values = poly_eval(CPoly((1.0,)), np.zeros((3, 2)))
        self.assertEqual(values.shape, (3, 2))
        self.assertTrue(np.all(values == 1))

    def test_reflect_odd_polynomial(self):
        self.assertEqual(poly_reflect(CPoly((0.0, -1.0, 0.0, 1.0))).coeffs, (0j, 1 + 0j, 0j, -1 + 0j))

    def test_divrem_exact(self):
        quot, rem = poly_divrem(CPoly((-1.0, 0.0, 1.0)), CPoly((-1.0, 1.0)))
        self.assertEqual(quot.coeffs, (1 + 0j, 1 + 0j))
        self.assertTrue(rem.is_zero())

    def test_divrem_reconstruction(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            p = CPoly.from_array(rng.normal(size=7) + 1j * rng.normal(size=7))
            q = CPoly.from_array(rng.normal(size=3) + 1j * rng.normal(size=3))
            quot, rem = poly_divrem(p, q)
            self.assertLess(rem.degree, q.degree)
            back = poly_mul(quot, q) + rem
            err = max(abs(a - b) for a, b in zip(back.coeffs, p.coeffs))
            self.assertLess(err, 1e-12 * p.max_coeff())

    def test_divrem_by_zero(self):
        with self.assertRaises(ZeroDivisionError):
            poly_divrem(CPoly((1.0,)), CPoly())

    def test_derivative_of_cubic_term(self):
        self.assertEqual(poly_derivative(CPoly((0.0, 0.0, 0.0, 1.0 / 3.0))).coeffs, (0j, 0j, 1 + 0j))

    def test_antiderivative_vanishes_at_zero(self):
        h = poly_antiderivative(hp(2.0))
        self.assertEqual(poly_eval(h, 0), 0)
        self.assertAlmostEqual(abs(poly_eval(h, 3.0) - (9.0 - 6.0)), 0.0)


class RootTests(unittest.TestCase):
    def test_simple_roots_sorted(self):
        roots = poly_roots(CPoly((-1.0, 0.0, 1.0)))
        self.assertAlmostEqual(abs(roots[0] + 1), 0.0, places=12)
        self.assertAlmostEqual(abs(roots[1] - 1), 0.0, places=12)

    def test_double_root(self):
        roots = poly_roots(CPoly((4.0, -4.0, 1.0)))
        self.assertEqual(len(roots), 2)
        for r in roots:
            self.assertLess(abs(r - 2), 1e-5)

    def test_linear_factor(self):
        self.assertEqual(poly_roots(CPoly((-1.0, 1.0))), [1 + 0j])

    def test_deterministic(self):
        p = CPoly((1.0, 2.0 - 1j, 0.5, 3.0, 1.0))
        self.assertEqual(poly_roots(p), poly_roots(p))

    def test_roots_of_wilkinson_like_polynomial(self):
        expected = np.arange(1, 11)
        roots = poly_roots(CPoly.from_roots(expected))
        for r, e in zip(roots, expected):
            self.assertLess(abs(r - e), 1e-5)

    def test_constant_rejected(self):
        with self.assertRaises(ArgumentError):
            poly_roots(CPoly((3.0,)))


class ResidueTests(unittest.TestCase):
    def test_pure_pole_has_no_residue(self):
        self.assertLess(abs(residue_order2(CPoly((0.0, 1.0)), CPoly(), 0j)), 1e-12)

    def test_residue_at_origin_is_two_b(self):
        for b in (1.0, 0.5, -2.0):
            res = residue_order2(CPoly((0.0, 1.0)), hp(b), 0j)
            self.assertAlmostEqual(abs(res - 2 * b), 0.0, places=10)

    def test_qes_factor_has_no_residue(self):
        self.assertLess(abs(residue_order2(CPoly((-1.0, 1.0)), hp(1.0), 1 + 0j)), 1e-10)

    def test_radius_independence(self):
        p = CPoly.from_roots([0.3, -1.1 + 0.4j])
        a = residue_order2(p, hp(0.7), 0.3 + 0j, radius=0.2)
        b = residue_order2(p, hp(0.7), 0.3 + 0j, radius=0.1)
        self.assertLess(abs(a - b), 1e-9)

    def test_residue_sum_matches_enclosing_contour(self):
        p = CPoly.from_roots([0.5, -0.4 + 0.3j, -0.2 - 0.6j])
        total = sum(residue_order2(p, hp(0.3), r) for r in poly_roots(p))
        self.assertLess(abs(total - contour_residue_sum(p, hp(0.3), 1.5)), 1e-8)

    def test_double_root_rejected(self):
        with self.assertRaises(RootNotSimple):
            residue_order2(CPoly((1.0, -2.0, 1.0)), hp(1.0), 1 + 0j)

    def test_radius_too_large(self):
        with self.assertRaises(RadiusTooLarge):
            residue_order2(CPoly.from_roots([0.0, 0.3]), hp(1.0), 0j, radius=0.2)


class ConstantIdentityTests(unittest.TestCase):
    def test_constant_polynomial(self):
        q, C = solve_c_identity(CPoly((1.0,)), hp(1.0))
        self.assertTrue(q.is_zero())
        self.assertEqual(C, 1)

    def test_first_qes_factor(self):
        q, C = solve_c_identity(CPoly((-1.0, 1.0)), hp(1.0))
        self.assertAlmostEqual(abs(C + 1), 0.0, places=9)
        self.assertAlmostEqual(abs(q.coeffs[0] + 0.5), 0.0, places=9)
        self.assertAlmostEqual(abs(q.coeffs[1] + 0.5), 0.0, places=9)

    def test_identity_holds_for_solution(self):
        p = CPoly((1.0, 1.0))
        q, C = solve_c_identity(p, hp(1.0))
        dp = poly_derivative(p)
        lhs = poly_mul(poly_mul(poly_reflect(p), poly_reflect(p)), poly_mul(p, p)) - C
        rhs = poly_derivative(q) * p - q * dp - 2.0 * (hp(1.0) * q * p)
        diff = lhs - rhs
        self.assertLess(diff.max_coeff(), 1e-9 * lhs.max_coeff())

    def test_off_locus_factor_has_no_solution(self):
        with self.assertRaises(NoSolution):
            solve_c_identity(CPoly((0.0, 1.0)), hp(1.0))
