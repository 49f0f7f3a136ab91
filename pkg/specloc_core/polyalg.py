import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from numpy.polynomial import polynomial as npoly

from specloc_core.errors import (
    ArgumentError,
    NoSolution,
    NonConvergence,
    RadiusTooLarge,
    RootNotSimple,
)

log = logging.getLogger(__name__)

Number = Union[int, float, complex]

ROOT_TOL = 1e-12
ABERTH_MAX_ITER = 500
SIMPLE_ROOT_TOL = 1e-8
DEFAULT_QUAD_N = 64
MAX_RESIDUE_RADIUS = 0.5
IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class CPoly:
    """
    Complex polynomial in one variable, coefficients in ascending order.

    Trailing zeros are stripped on construction, so the zero polynomial
    is the empty tuple and `degree` is -1 for it.
    """

    coeffs: Tuple[complex, ...] = ()

    def __post_init__(self) -> None:
        values = [complex(c) for c in self.coeffs]
        while values and values[-1] == 0:
            values.pop()
        object.__setattr__(self, "coeffs", tuple(values))

    @classmethod
    def from_array(cls, values: Iterable[Number]) -> "CPoly":
        return cls(tuple(complex(v) for v in values))

    @classmethod
    def from_roots(cls, roots: Sequence[Number]) -> "CPoly":
        if len(roots) == 0:
            return cls((1.0,))
        return cls.from_array(npoly.polyfromroots(np.asarray(roots, dtype=complex)))

    @classmethod
    def monomial(cls, k: int, c: Number = 1.0) -> "CPoly":
        return cls((0.0,) * k + (c,))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> complex:
        return self.coeffs[-1] if self.coeffs else 0j

    def is_zero(self) -> bool:
        return not self.coeffs

    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs or (0j,), dtype=complex)

    def max_coeff(self) -> float:
        return max((abs(c) for c in self.coeffs), default=0.0)

    def monic(self) -> "CPoly":
        if self.is_zero():
            return self
        return self.scale(1.0 / self.leading)

    def scale(self, c: Number) -> "CPoly":
        return CPoly(tuple(c * a for a in self.coeffs))

    def is_real(self, tol: float = 0.0) -> bool:
        return all(abs(c.imag) <= tol * max(1.0, abs(c)) for c in self.coeffs)

    def __call__(self, z):
        return poly_eval(self, z)

    def __add__(self, other: Union["CPoly", Number]) -> "CPoly":
        return poly_add(self, _as_poly(other))

    __radd__ = __add__

    def __sub__(self, other: Union["CPoly", Number]) -> "CPoly":
        return poly_add(self, _as_poly(other).scale(-1.0))

    def __rsub__(self, other: Number) -> "CPoly":
        return poly_add(_as_poly(other), self.scale(-1.0))

    def __neg__(self) -> "CPoly":
        return self.scale(-1.0)

    def __mul__(self, other: Union["CPoly", Number]) -> "CPoly":
        if isinstance(other, CPoly):
            return poly_mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __str__(self) -> str:
        if self.is_zero():
            return "0"
        terms = []
        for k in range(self.degree, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            coeff = _format_coeff(c)
            if k == 0:
                terms.append(coeff)
            else:
                power = "z" if k == 1 else f"z^{k}"
                terms.append(power if coeff == "1" else f"{coeff}*{power}")
        return " + ".join(terms).replace("+ -", "- ")


def _format_coeff(c: complex) -> str:
    if c.imag == 0:
        return f"{c.real:.12g}"
    if c.real == 0:
        return f"{c.imag:.12g}i"
    return f"({c.real:.12g}{c.imag:+.12g}i)"


def _as_poly(value: Union[CPoly, Number]) -> CPoly:
    if isinstance(value, CPoly):
        return value
    return CPoly((value,))


def parse_poly(text: str, var: str = "z") -> CPoly:
    """Parse a potential such as ``"z^3 - 2*z"`` (``^`` and ``**`` both accepted)."""
    symbol = sp.Symbol(var)
    try:
        expr = sp.sympify(text.replace("^", "**"), locals={var: symbol, "i": sp.I, "I": sp.I})
        poly = sp.Poly(sp.expand(expr), symbol)
    except (sp.SympifyError, sp.PolynomialError, TypeError) as exc:
        raise ArgumentError(f"Can't read {text!r} as a polynomial in {var}: {exc}")
    if poly.free_symbols - {symbol}:
        raise ArgumentError(f"{text!r} has free symbols other than {var}")
    descending = [complex(sp.N(c)) for c in poly.all_coeffs()]
    return CPoly(tuple(reversed(descending)))


# ---------- Ring operations ----------

def poly_eval(p: CPoly, z):
    """Horner evaluation; works for scalars and numpy arrays alike."""
    acc = 0j
    for c in reversed(p.coeffs):
        acc = acc * z + c
    if np.ndim(z) == 0:
        return complex(acc)
    return acc * np.ones(np.shape(z), dtype=complex)


def poly_derivative(p: CPoly) -> CPoly:
    if p.degree < 1:
        return CPoly()
    return CPoly.from_array(npoly.polyder(p.array()))


def poly_antiderivative(p: CPoly) -> CPoly:
    """Antiderivative vanishing at 0."""
    if p.is_zero():
        return CPoly()
    return CPoly.from_array(npoly.polyint(p.array()))


def poly_mul(p: CPoly, q: CPoly) -> CPoly:
    if p.is_zero() or q.is_zero():
        return CPoly()
    return CPoly.from_array(npoly.polymul(p.array(), q.array()))


def poly_add(p: CPoly, q: CPoly) -> CPoly:
    return CPoly.from_array(npoly.polyadd(p.array(), q.array()))


def poly_reflect(p: CPoly) -> CPoly:
    """z -> -z"""
    return CPoly(tuple(c if k % 2 == 0 else -c for k, c in enumerate(p.coeffs)))


def poly_divrem(p: CPoly, q: CPoly) -> Tuple[CPoly, CPoly]:
    if q.is_zero():
        raise ZeroDivisionError("poly_divrem by the zero polynomial")
    if p.degree < q.degree:
        return CPoly(), p
    quot, rem = npoly.polydiv(p.array(), q.array())
    rem = rem[: max(q.degree, 0)]
    return CPoly.from_array(quot), CPoly.from_array(rem)


# ---------- Roots ----------

def _backward_scale(a: np.ndarray, z: complex) -> float:
    return float(npoly.polyval(abs(z), np.abs(a)))


def poly_roots(p: CPoly, tol: float = ROOT_TOL, max_iter: int = ABERTH_MAX_ITER) -> List[complex]:
    """
    All roots of p, with multiplicity, by Aberth-Ehrlich simultaneous iteration.

    Start values sit on the Cauchy-bound circle |z| = 1 + max|a_k/a_n|.
    A root is accepted once |p(r)| <= tol * sum |a_k| |r|^k; the result is
    sorted by (real, imag) so identical inputs give identical output.
    """
    n = p.degree
    if n < 1:
        raise ArgumentError("poly_roots needs a polynomial of degree >= 1", degree=n)

    a = p.monic().array()
    if n == 1:
        return [complex(-a[0])]

    da = npoly.polyder(a)
    radius = 1.0 + float(np.max(np.abs(a[:-1])))
    angles = 2.0 * np.pi * np.arange(n) / n + 0.4
    x = radius * np.exp(1j * angles)

    for iteration in range(max_iter):
        done = True
        for i in range(n):
            xi = x[i]
            pv = npoly.polyval(xi, a)
            if abs(pv) <= tol * _backward_scale(a, xi):
                continue
            done = False
            dpv = npoly.polyval(xi, da)
            others = np.delete(x, i)
            ratio = pv / dpv if dpv != 0 else pv
            denom = 1.0 - ratio * np.sum(1.0 / (xi - others))
            delta = ratio / denom if denom != 0 else ratio
            x[i] = xi - delta
        if done:
            log.debug("Aberth converged: degree=%d iterations=%d", n, iteration)
            break
    else:
        worst = max(abs(npoly.polyval(xi, a)) / _backward_scale(a, xi) for xi in x)
        raise NonConvergence(
            f"Aberth iteration did not converge in {max_iter} sweeps",
            degree=n,
            backward_error=worst,
        )

    x = _polish(x, a, da)
    return sorted((complex(r) for r in x), key=lambda r: (r.real, r.imag))


def _polish(x: np.ndarray, a: np.ndarray, da: np.ndarray, steps: int = 2) -> np.ndarray:
    polished = x.copy()
    for i, xi in enumerate(x):
        best = xi
        best_err = abs(npoly.polyval(xi, a))
        for _ in range(steps):
            dpv = npoly.polyval(best, da)
            if abs(dpv) < SIMPLE_ROOT_TOL * _backward_scale(da, best):
                break
            candidate = best - npoly.polyval(best, a) / dpv
            err = abs(npoly.polyval(candidate, a))
            if err >= best_err:
                break
            best, best_err = candidate, err
        polished[i] = best
    return polished


# ---------- Residues ----------

def circle_integral(f: Callable[[np.ndarray], np.ndarray], center: complex, radius: float, quad_n: int) -> complex:
    """(1/2 pi i) times the integral of f over |z - center| = radius, trapezoid rule."""
    theta = 2.0 * np.pi * np.arange(quad_n) / quad_n
    w = radius * np.exp(1j * theta)
    return complex(np.mean(f(center + w) * w))


def _weight(p: CPoly, hprime: CPoly) -> Callable[[np.ndarray], np.ndarray]:
    h = poly_antiderivative(hprime)
    return lambda z: np.exp(-2.0 * poly_eval(h, z)) / poly_eval(p, z) ** 2


def residue_order2(
    p: CPoly,
    hprime: CPoly,
    z0: complex,
    radius: float = None,
    quad_n: int = DEFAULT_QUAD_N,
) -> complex:
    """Residue of p^-2 e^{-2h} at the simple root z0, where h' = hprime and h(0) = 0."""
    dp = poly_derivative(p)
    slope_scale = _backward_scale(dp.array(), z0) if not dp.is_zero() else 0.0
    if abs(poly_eval(dp, z0)) <= SIMPLE_ROOT_TOL * max(slope_scale, 1e-300):
        raise RootNotSimple(f"p'(z0) vanishes at z0={z0}", z0=z0)

    others: List[complex] = []
    if p.degree >= 2:
        roots = poly_roots(p)
        nearest = min(range(len(roots)), key=lambda k: abs(roots[k] - z0))
        others = [r for k, r in enumerate(roots) if k != nearest]

    gap = min((abs(r - z0) for r in others), default=math.inf)
    if radius is None:
        radius = min(0.4 * gap, MAX_RESIDUE_RADIUS)
    if gap <= 2.0 * radius:
        raise RadiusTooLarge(
            f"another root lies within 2*radius of z0={z0}", radius=radius, gap=gap
        )

    return circle_integral(_weight(p, hprime), z0, radius, quad_n)


def contour_residue_sum(p: CPoly, hprime: CPoly, radius: float, quad_n: int = 512) -> complex:
    """Integral of p^-2 e^{-2h} over |z| = radius, which encloses every root of p."""
    return circle_integral(_weight(p, hprime), 0j, radius, quad_n)


# ---------- Constant identity ----------

def _identity_column(p: CPoly, dp: CPoly, hprime: CPoly, j: int) -> CPoly:
    zj = CPoly.monomial(j)
    return poly_derivative(zj) * p - zj * dp - 2.0 * (hprime * zj * p)


def solve_c_identity(p: CPoly, hprime: CPoly) -> Tuple[CPoly, complex]:
    """
    Solve p(-z)^2 p(z)^2 - C = q'p - qp' - 2h'qp for the polynomial q and scalar C.

    Coefficients are matched by a column-scaled least-squares solve; a residual
    above IDENTITY_TOL times the largest coefficient means there is no solution.
    """
    n = p.degree
    if n < 0:
        raise ArgumentError("solve_c_identity needs a nonzero p")
    if n == 0:
        c0 = p.coeffs[0]
        return CPoly(), c0 ** 4

    lhs = poly_reflect(p) * poly_reflect(p) * p * p
    dp = poly_derivative(p)
    q_degree = 3 * n - hprime.degree if not hprime.is_zero() else 3 * n + 1
    q_degree = max(q_degree, 0)

    columns = [_identity_column(p, dp, hprime, j) for j in range(q_degree + 1)]
    columns.append(CPoly((1.0,)))
    rows = max(lhs.degree, max(col.degree for col in columns)) + 1

    A = np.zeros((rows, len(columns)), dtype=complex)
    for j, col in enumerate(columns):
        A[: len(col.coeffs), j] = col.coeffs
    rhs = np.zeros(rows, dtype=complex)
    rhs[: len(lhs.coeffs)] = lhs.coeffs

    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    solution, *_ = np.linalg.lstsq(A / norms, rhs, rcond=None)
    solution = solution / norms

    residual = float(np.max(np.abs(A @ solution - rhs)))
    scale = max(float(np.max(np.abs(rhs))), 1.0)
    log.debug("C-identity solve: n=%d residual=%.3e scale=%.3e", n, residual, scale)
    if residual > IDENTITY_TOL * scale:
        raise NoSolution(
            "p(-z)^2 p(z)^2 - C = q'p - qp' - 2h'qp has no solution",
            residual=residual,
            scale=scale,
        )

    return CPoly.from_array(solution[:-1]), complex(solution[-1])
