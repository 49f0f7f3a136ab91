import unittest

import pytest

from specloc_core.errors import DegenerateEigenvalue
from specloc_core.locus import hausdorff, qes_evaluator, trace_both, trace_gamma_nm
from specloc_core.oscillator import make_family
from specloc_core.polyalg import CPoly
from specloc_core.qes import (
    c_constant_check,
    darboux,
    darboux_spectrum_check,
    equivalence_check,
    qes_points,
    spectral_poly,
)
from specloc_core.shooting import ShotOptions, determinant, integrate_ray
from specloc_core.spectrum import count_in_box, real_eigenvalues, reality_check


def sample_qes_points(count: int):
    points = []
    for n in range(1, 5):
        for b in (-1.5, -0.6, 0.7, 1.9):
            points.extend(pt for pt in qes_points(n, b) if not pt.degenerate)
    return points[:count]


@pytest.mark.slow
class ClosedFormTests(unittest.TestCase):
    def test_harmonic_levels_to_eleven(self):
        problem = make_family("custom", V="z^2", rays="0,pi")
        values = real_eigenvalues(problem, 0.0, 12.0, 120)
        self.assertEqual(len(values), 6)
        for got, want in zip(values, (1.0, 3.0, 5.0, 7.0, 9.0, 11.0)):
            self.assertLess(abs(got - want), 1e-6)

    def test_spectral_polynomials(self):
        for b in (-2.0, -1.0, 0.5, 1.0, 3.0):
            q1 = spectral_poly(0, b).Q.coeffs
            self.assertLess(max(abs(q1[0] - b * b), abs(q1[1] - 1.0)), 1e-10)
            q2 = spectral_poly(1, b).Q.coeffs
            expected = (b ** 4 - 4 * b, 2 * b * b, 1.0)
            self.assertLess(max(abs(x - y) for x, y in zip(q2, expected)), 1e-10 * (1 + b ** 4))

    def test_qes_roots_are_eigenvalues(self):
        problem = make_family("quartic-ii", b=1.0, J=2.0)
        scan = real_eigenvalues(problem, -6.0, 3.0, 90)
        for lam in (-3.0, 1.0):
            self.assertLess(abs(determinant(problem, problem.mu_of_lambda(lam))), 1e-7)
            self.assertLess(min(abs(v - lam) for v in scan), 1e-6)


@pytest.mark.slow
class EquivalenceAcceptanceTests(unittest.TestCase):
    def test_on_locus(self):
        points = sample_qes_points(20)
        self.assertEqual(len(points), 20)
        for pt in points:
            self.assertTrue(equivalence_check(pt.p, pt.b).all_small(1e-8), (pt.n, pt.b, pt.lam))

    def test_off_locus(self):
        for pt in sample_qes_points(20):
            shifted = pt.p + CPoly((0.1,))
            self.assertTrue(equivalence_check(shifted, pt.b).all_large(1e-3), (pt.n, pt.b, pt.lam))


@pytest.mark.slow
class ConstantAcceptanceTests(unittest.TestCase):
    def test_hand_values(self):
        (record,) = c_constant_check(0, 1.3)
        self.assertLess(abs(record.C_from_identity - 1.0), 1e-12)

    def test_every_nondegenerate_point(self):
        checked = 0
        for n in range(5):
            for b in (-2.0, -1.0, -0.3, 0.5, 1.0, 2.0):
                try:
                    records = c_constant_check(n, b)
                except DegenerateEigenvalue:
                    continue
                for record in records:
                    self.assertTrue(record.match, (n, b, record))
                    checked += 1
        self.assertGreater(checked, 40)


@pytest.mark.slow
class DarbouxAcceptanceTests(unittest.TestCase):
    def test_transform_and_spectra(self):
        for J in (1, 2):
            for b in (0.5, 1.0, 2.0):
                report = darboux(J - 1, b)
                self.assertLess(report.deviation, 1e-9)
                self.assertLess(report.potential_error, 1e-9)
                check = darboux_spectrum_check(J, b, count=5)
                self.assertLess(check.max_mismatch, 1e-6, (J, b))


@pytest.mark.slow
class RealityAcceptanceTests(unittest.TestCase):
    def test_first_eight_are_real(self):
        for J, b in ((0.5, 1.0), (1.0, 2.0), (2.0, 1.0), (-1.0, 1.0)):
            report = reality_check(b, J, 8)
            self.assertEqual(len(report.eigenvalues), 8)
            self.assertLess(report.max_imag, 1e-6, (J, b))
            self.assertTrue(report.consistent, (J, b))


@pytest.mark.slow
class NumericsAcceptanceTests(unittest.TestCase):
    def test_radius_doubling_moves_eigenvalues_little(self):
        problem = make_family("quartic-ii", b=0.5, J=1.5)
        base = real_eigenvalues(problem, -6.0, 6.0, 120)
        R = integrate_ray(problem, problem.mu_of_lambda(base[0]), problem.theta_a).R_used
        doubled = real_eigenvalues(problem, -6.0, 6.0, 120, opts=ShotOptions(R=2.0 * R))
        self.assertEqual(len(base), len(doubled))
        self.assertLess(max(abs(a - c) for a, c in zip(base, doubled)), 1e-7)

    def test_retrace_with_half_the_step(self):
        step = 0.05
        coarse = trace_gamma_nm(2, 0, (-2.0, 4.0), step)
        fine = trace_gamma_nm(2, 0, (-2.0, 4.0), step / 2.0)
        self.assertLess(hausdorff(coarse, fine), 2.0 * step)

    def test_retrace_from_an_interior_seed(self):
        step = 0.05
        first = trace_gamma_nm(2, 0, (-2.0, 4.0), step)
        self.assertEqual(first.stop_reason, "bounds|bounds")
        mid = first.points[len(first) // 3]
        second = trace_both(qes_evaluator(2), (mid.x, mid.lam), step, (-2.0, 4.0, -1e3, 1e3))
        self.assertEqual(second.stop_reason, "bounds|bounds")
        self.assertLess(hausdorff(first, second), 2.0 * step)

    def test_box_counts_are_integers(self):
        problem = make_family("quartic-ii", b=1.0, J=0.5)
        for box in ((-10.0, 0.0, -3.0, 3.0), (-10.0, 8.0, -3.0, 3.0)):
            count, _ = count_in_box(problem, box)
            scan = real_eigenvalues(problem, box[0], box[1], 180)
            self.assertEqual(count, len(scan))
