import cmath
import math
import unittest

from specloc_core.errors import ArgumentError, NotSymmetric
from specloc_core.oscillator import make_family
from specloc_core.polyalg import CPoly
from specloc_core.shooting import (
    ShotOptions,
    determinant,
    determinant_real,
    eigenfunction_values,
    integrate_path,
    integrate_ray,
    parity_determinants,
    parity_split_available,
    schwarzian_check,
    seed_radius,
    shooting_angle,
    wkb_seed,
)
from specloc_core.spectrum import real_eigenvalues


def harmonic():
    return make_family("custom", V="z^2", rays="0,pi")


class SeedTests(unittest.TestCase):
    def test_seed_decays_outward(self):
        V = CPoly((0.0, 0.0, 1.0))
        y, dy = wkb_seed(V, 1.0, 0.0, 20.0)
        self.assertLess((dy / y).real, 0.0)

    def test_seed_radius_meets_modulus(self):
        V = CPoly((0.0, 0.0, 1.0))
        R = seed_radius(V, 1.0, 0.0)
        self.assertGreaterEqual(R * R - 1.0, 1e4)

    def test_sector_centre(self):
        problem = make_family("cubic-pt", a=0.0)
        self.assertAlmostEqual(shooting_angle(problem, math.pi / 2, True), 2 * math.pi / 5)
        self.assertAlmostEqual(shooting_angle(problem, math.pi / 2, False), math.pi / 2)


class ShotTests(unittest.TestCase):
    def test_shot_is_normalised(self):
        shot = integrate_ray(harmonic(), 1.7, 0.0)
        self.assertAlmostEqual(abs(shot.y0) + abs(shot.dy0), 1.0, places=12)
        self.assertGreater(shot.steps, 0)

    def test_ground_state_ratio(self):
        # y = exp(-z^2/2) at mu = 1 has y'(0) = 0
        shot = integrate_ray(harmonic(), 1.0, 0.0)
        self.assertLess(abs(shot.ratio), 1e-7)

    def test_repeated_shots_are_cached(self):
        self.assertIs(integrate_ray(harmonic(), 2.5, 0.0), integrate_ray(harmonic(), 2.5, 0.0))

    def test_radius_doubling_stability(self):
        a = integrate_ray(harmonic(), 1.3, 0.0, ShotOptions(R=8.0))
        b = integrate_ray(harmonic(), 1.3, 0.0, ShotOptions(R=16.0))
        self.assertLess(abs(a.ratio - b.ratio), 1e-7 * max(1.0, abs(b.ratio)))

    def test_log_derivative_leg_matches_linear_integration(self):
        problem = make_family("quartic-ii", b=0.5, J=1.5)
        a = integrate_ray(problem, 2.0, problem.theta_a, ShotOptions(riccati=True))
        b = integrate_ray(problem, 2.0, problem.theta_a, ShotOptions(riccati=False))
        self.assertLess(abs(a.ratio - b.ratio), 1e-7 * max(1.0, abs(b.ratio)))

    def test_qes_eigenfunction_ratio(self):
        # (z + 1) exp(z^3/3 - z) is the eigenfunction at lambda = 1 when b = 1, J = 2
        problem = make_family("quartic-ii", b=1.0, J=2.0)
        for theta in (problem.theta_a, problem.theta_b):
            self.assertLess(abs(integrate_ray(problem, 1.0, theta).ratio), 1e-7)

    def test_qes_eigenfunction_second_branch(self):
        # (z - 1) exp(z^3/3 - z) at lambda = -3
        problem = make_family("quartic-ii", b=1.0, J=2.0)
        self.assertLess(abs(integrate_ray(problem, -3.0, problem.theta_a).ratio + 2.0), 1e-7)

    def test_qes_eigenfunction_zero(self):
        problem = make_family("quartic-ii", b=1.0, J=2.0)
        (y0, _), (y_minus, _) = eigenfunction_values(problem, 1.0, [0.0, -1.0])
        self.assertLess(abs(y_minus), 1e-7 * abs(y0))

    def test_point_beyond_seed_radius(self):
        problem = harmonic()
        shot = integrate_ray(problem, 1.0, 0.0)
        with self.assertRaises(ArgumentError):
            eigenfunction_values(problem, 1.0, [2.0 * shot.R_used])


class DeterminantTests(unittest.TestCase):
    def test_vanishes_at_harmonic_levels(self):
        for mu in (1.0, 3.0, 5.0):
            self.assertLess(abs(determinant(harmonic(), mu)), 1e-7)
        self.assertGreater(abs(determinant(harmonic(), 2.0)), 1e-3)

    def test_real_determinant_changes_sign(self):
        problem = harmonic()
        self.assertLess(determinant_real(problem, 0.5) * determinant_real(problem, 1.5), 0.0)

    def test_real_determinant_for_swapped_rays(self):
        # ground state of -y'' + i x^3 y near 1.15627
        problem = make_family("cubic-pt", a=0.0)
        low = determinant_real(problem, problem.mu_of_lambda(1.0))
        high = determinant_real(problem, problem.mu_of_lambda(1.3))
        self.assertLess(low * high, 0.0)
        self.assertLess(abs(determinant(problem, problem.mu_of_lambda(1.1562710))), 1e-5)

    def test_seed_scale_leaves_eigenvalues_alone(self):
        scaled = ShotOptions(seed_scale=2 - 3j)
        base = real_eigenvalues(harmonic(), 0.0, 6.0)
        moved = real_eigenvalues(harmonic(), 0.0, 6.0, opts=scaled)
        self.assertEqual(len(base), 3)
        self.assertEqual(len(moved), 3)
        for a, b in zip(base, moved):
            self.assertLess(abs(a - b), 1e-7)

        problem = make_family("cubic-pt", a=0.0)
        base = real_eigenvalues(problem, 0.0, 5.0)
        moved = real_eigenvalues(problem, 0.0, 5.0, opts=scaled)
        self.assertEqual(len(base), 2)
        self.assertEqual(len(moved), 2)
        for a, b in zip(base, moved):
            self.assertLess(abs(a - b), 1e-7)
            # the complex determinant vanishes where the real one does
            mu = problem.mu_of_lambda(b)
            self.assertLess(abs(determinant(problem, mu)), 1e-5)
            self.assertLess(abs(determinant(problem, mu, scaled)), 1e-5)

    def test_determinant_is_2i_times_the_real_form(self):
        problem = make_family("cubic-pt", a=0.0)
        for lam in (0.5, 2.0, 3.0, 5.0):
            mu = problem.mu_of_lambda(lam)
            ratio = determinant(problem, mu) / (2j * determinant_real(problem, mu))
            self.assertGreater(ratio.real, 0.0, lam)
            self.assertLess(abs(ratio.imag), 1e-6 * abs(ratio), lam)

    def test_real_determinant_needs_symmetry(self):
        problem = make_family("custom", V="z^2 + 2*I*z", rays="0,pi")
        with self.assertRaises(NotSymmetric):
            determinant_real(problem, 1.0)

    def test_parity_split(self):
        problem = harmonic()
        self.assertTrue(parity_split_available(problem))
        self.assertFalse(parity_split_available(make_family("cubic-pt", a=0.0)))
        even, _ = parity_determinants(problem, 1.0)
        _, odd = parity_determinants(problem, 3.0)
        self.assertLess(abs(even), 1e-7)
        self.assertLess(abs(odd), 1e-7)


class PathTests(unittest.TestCase):
    def test_gaussian_along_polyline(self):
        V = CPoly((0.0, 0.0, 1.0))
        zs, ys, dys = integrate_path(V, 1.0, (1.0, 0.0), [0j, 1 + 1j, 2 + 0j], samples_per_edge=3, rtol=1e-12)
        self.assertEqual(len(zs), 9)
        for z, y, dy in zip(zs, ys, dys):
            exact = cmath.exp(-z * z / 2.0)
            self.assertLess(abs(y - exact), 1e-8 * max(1.0, abs(exact)))
            self.assertLess(abs(dy + z * exact), 1e-8 * max(1.0, abs(z * exact)))


class SchwarzianTests(unittest.TestCase):
    def test_second_order_convergence(self):
        report = schwarzian_check(harmonic(), 1.3, x0=0.3)
        self.assertLess(report.errors[-1], report.errors[0])
        for order in report.orders:
            self.assertGreater(order, 1.5)

    def test_step_sizes_that_are_not_powers_of_two(self):
        report = schwarzian_check(harmonic(), 2.1, x0=-0.4, h_values=(0.09, 0.03, 0.01))
        self.assertEqual(len(report.errors), 3)
        self.assertEqual(report.h_values, (0.09, 0.03, 0.01))
        self.assertLess(report.errors[-1], report.errors[0])
