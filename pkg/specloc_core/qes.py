"""
Quasi-exactly-solvable quartic L_J: -y'' + (z^4 - 2b z^2 + 2J z) y = lambda y.

For J = n + 1 the operator has n + 1 eigenfunctions of the form
p(z) exp(z^3/3 - b z) with deg p = n. Everything here works at a fixed
numeric b; continuation in b lives in the locus module.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import brentq

from specloc_core.errors import (
    ArgumentError,
    BranchTrackingLost,
    Collision,
    DegenerateEigenvalue,
    NoSolution,
    NonConvergence,
    WronskianNotConstant,
)
from specloc_core.oscillator import make_family
from specloc_core.polyalg import (
    CPoly,
    poly_derivative,
    poly_divrem,
    poly_eval,
    poly_roots,
    residue_order2,
    solve_c_identity,
)
from specloc_core.shooting import ShotOptions, determinant_real

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-5
BETHE_TOL = 1e-10
COLLISION_TOL = 1e-8
BETHE_MAX_ITER = 100
BETHE_SEED_OFFSET = 1e-3
WRONSKIAN_TOL = 1e-9
C_MATCH_TOL = 1e-8
CROSSING_DB = 0.02
CROSSING_DLAMBDA = 0.2
CROSSING_MIN_FRACTION = 16.0


def _as_b(b):
    b = complex(b)
    return b.real if b.imag == 0 else b


def h_prime(b) -> CPoly:
    """h'(z) = z^2 - b for h = z^3/3 - b z."""
    return CPoly((-b, 0.0, 1.0))


# ---------- Matrix and spectral polynomial ----------

def qes_matrix(n: int, b) -> np.ndarray:
    """
    Matrix of p -> -p'' - 2(z^2 - b)p' + (2n z - b^2)p on {1, z, ..., z^n}.

    Column k is the image of z^k; the z^(n+1) term cancels, so the space of
    polynomials of degree <= n is invariant and its eigenvalues are the QES
    eigenvalues of L_{n+1}.
    """
    if n < 0:
        raise ArgumentError(f"qes_matrix needs n >= 0, got {n}", n=n)
    b = _as_b(b)
    M = np.zeros((n + 1, n + 1), dtype=complex if isinstance(b, complex) else float)
    for k in range(n + 1):
        M[k, k] = -b * b
        if k >= 1:
            M[k - 1, k] = 2.0 * b * k
        if k >= 2:
            M[k - 2, k] = -k * (k - 1)
        if k < n:
            M[k + 1, k] = 2.0 * (n - k)
    return M


@dataclass(frozen=True)
class SpectralPolyAtB:
    n: int
    b: complex
    Q: CPoly
    dQ_dlambda: CPoly

    def __call__(self, lam):
        return poly_eval(self.Q, lam)

    def derivative(self, lam):
        return poly_eval(self.dQ_dlambda, lam)


def spectral_poly(n: int, b) -> SpectralPolyAtB:
    """
    det(lambda I - M(b)) as a monic polynomial in lambda.

    Sampled at n + 2 Chebyshev nodes on the Gershgorin interval of M, fitted
    in the Chebyshev basis and mapped back to the monomial basis.
    """
    M = qes_matrix(n, b)
    size = n + 1
    center = np.trace(M) / size
    off = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    radius = max(float(np.max(np.abs(np.diag(M) - center) + off)), 1.0)

    nodes = np.cos(np.pi * (np.arange(size + 1) + 0.5) / (size + 1))
    identity = np.eye(size)
    values = np.array([np.linalg.det((center + radius * x) * identity - M) for x in nodes])
    in_x = cheb.cheb2poly(cheb.chebfit(nodes, values, size))

    # lambda = center + radius * x
    shift = CPoly((-center / radius, 1.0 / radius))
    Q = CPoly()
    for c in reversed(in_x):
        Q = Q * shift + c
    coeffs = [c / Q.leading for c in Q.coeffs]
    coeffs[-1] = 1.0
    if np.isrealobj(M):
        coeffs = [c.real for c in coeffs]
    Q = CPoly(tuple(coeffs))
    return SpectralPolyAtB(n=n, b=_as_b(b), Q=Q, dQ_dlambda=poly_derivative(Q))


# ---------- QES points ----------

@dataclass(frozen=True)
class QESPoint:
    n: int
    b: complex
    lam: complex
    p: CPoly
    roots: Tuple[complex, ...] = ()
    degenerate: bool = False

    @property
    def J(self) -> int:
        return self.n + 1

    @property
    def n_real_roots(self) -> int:
        return sum(1 for r in self.roots if abs(r.imag) <= 1e-7 * (1.0 + abs(r)))


def _cluster(values: Sequence[complex]) -> List[List[complex]]:
    clusters: List[List[complex]] = []
    for v in values:
        for group in clusters:
            if abs(v - group[0]) < DEGENERATE_TOL * (1.0 + abs(v)):
                group.append(v)
                break
        else:
            clusters.append([v])
    return clusters


def kernel_poly(M: np.ndarray, lam: complex) -> CPoly:
    """Monic polynomial whose coefficient vector spans ker(M - lam I)."""
    _, _, vh = np.linalg.svd(M - lam * np.eye(M.shape[0]))
    vector = vh[-1].conj()
    return CPoly.from_array(vector / vector[-1])


def qes_residual(point: QESPoint) -> float:
    M = qes_matrix(point.n, point.b)
    c = np.zeros(point.n + 1, dtype=complex)
    c[: len(point.p.coeffs)] = point.p.coeffs
    return float(np.max(np.abs(M @ c - point.lam * c)))


def qes_points(n: int, b, strict: bool = False) -> List[QESPoint]:
    """
    One QESPoint per distinct root of Q_{n+1}(b, .), sorted by (re, im) of lambda.

    Multiple roots come back once, flagged `degenerate`; with strict=True
    they raise DegenerateEigenvalue instead.
    """
    spoly = spectral_poly(n, b)
    M = qes_matrix(n, b)
    points: List[QESPoint] = []
    for group in _cluster(poly_roots(spoly.Q)):
        lam = complex(np.mean(group))
        degenerate = len(group) > 1
        if degenerate:
            if strict:
                raise DegenerateEigenvalue(
                    f"Q_{n + 1} has a root of multiplicity {len(group)} at b={b}",
                    n=n,
                    b=b,
                    lam=lam,
                )
            log.warning("Degenerate QES eigenvalue lambda=%s (multiplicity %d) at n=%d b=%s", lam, len(group), n, b)
        p = kernel_poly(M, lam)
        roots = tuple(poly_roots(p)) if n >= 1 else ()
        points.append(QESPoint(n=n, b=_as_b(b), lam=lam, p=p, roots=roots, degenerate=degenerate))
    return points


def lambda_from_p(n: int, b, p: CPoly) -> complex:
    """Rayleigh quotient of the QES matrix on the coefficient vector of p."""
    c = np.zeros(n + 1, dtype=complex)
    c[: len(p.coeffs)] = p.coeffs
    M = qes_matrix(n, b)
    return complex(np.vdot(c, M @ c) / np.vdot(c, c))


# ---------- Bethe system ----------

def bethe_residuals(z: np.ndarray, b) -> np.ndarray:
    """r_k = sum_{j != k} 1/(z_k - z_j) + z_k^2 - b"""
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    inv = 1.0 / diff
    np.fill_diagonal(inv, 0.0)
    return inv.sum(axis=1) + z * z - b


def _min_separation(z: np.ndarray) -> float:
    if len(z) < 2:
        return math.inf
    diff = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(diff, np.inf)
    return float(diff.min())


def bethe_seeds(n: int, b, mode: str = "qes", branch: int = 0) -> List[complex]:
    """
    Starting values for bethe_solve.

    mode "qes" perturbs the roots of p of the `branch`-th QES point;
    mode "chebyshev" uses scaled Chebyshev points and never touches the
    linear-algebra path.
    """
    if n == 0:
        return []
    if mode == "qes":
        points = qes_points(n, b)
        roots = points[branch % len(points)].roots
        return [r + BETHE_SEED_OFFSET * complex(math.cos(k + 1), math.sin(k + 1)) for k, r in enumerate(roots)]
    if mode == "chebyshev":
        scale = 1.0 + math.sqrt(abs(complex(b)))
        return [
            scale * math.cos(math.pi * (k + 0.5) / n) + 1j * BETHE_SEED_OFFSET * (-1) ** k
            for k in range(n)
        ]
    raise ArgumentError(f"Unknown Bethe seed mode {mode!r}", mode=mode)


def bethe_solve(
    n: int,
    b,
    seeds: Optional[Sequence[complex]] = None,
    max_iter: int = BETHE_MAX_ITER,
    tol: float = BETHE_TOL,
) -> List[complex]:
    """
    Damped Newton on the Bethe residuals; roots sorted by (re, im).
    """
    if n == 0:
        return []
    b = _as_b(b)
    z = np.asarray(seeds if seeds is not None else bethe_seeds(n, b), dtype=complex)
    if len(z) != n:
        raise ArgumentError(f"bethe_solve needs {n} seeds, got {len(z)}", n=n)
    if _min_separation(z) < COLLISION_TOL:
        raise Collision("Bethe seeds are not pairwise distinct", n=n)

    r = bethe_residuals(z, b)
    for iteration in range(max_iter):
        err = float(np.max(np.abs(r)))
        if err < tol:
            log.debug("Bethe converged: n=%d b=%s iterations=%d residual=%.2e", n, b, iteration, err)
            return sorted((complex(x) for x in z), key=lambda x: (x.real, x.imag))

        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv2 = 1.0 / diff ** 2
        np.fill_diagonal(inv2, 0.0)
        jac = inv2.copy()
        np.fill_diagonal(jac, -inv2.sum(axis=1) + 2.0 * z)
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise Collision("Bethe Jacobian is singular", n=n, b=b)

        t = 1.0
        while True:
            trial = z + t * delta
            if _min_separation(trial) >= COLLISION_TOL:
                r_trial = bethe_residuals(trial, b)
                if np.max(np.abs(r_trial)) < err or t < 1e-3:
                    break
            elif t < 1e-3:
                raise Collision("Bethe iterates collided", n=n, b=b, separation=_min_separation(trial))
            t *= 0.5
        z, r = trial, r_trial

    raise NonConvergence(
        f"Bethe iteration did not converge in {max_iter} steps", n=n, b=b, residual=float(np.max(np.abs(r)))
    )


# ---------- Equivalent QES conditions ----------

def divisibility_check(p: CPoly, b) -> float:
    """Max coefficient of rem(p'' + 2 p' (z^2 - b), p)."""
    dp = poly_derivative(p)
    numerator = poly_derivative(dp) + 2.0 * (dp * h_prime(_as_b(b)))
    if numerator.is_zero() or p.degree < 1:
        return 0.0
    _, rem = poly_divrem(numerator, p)
    return rem.max_coeff()


@dataclass(frozen=True)
class EquivalenceReport:
    div_norm: float
    max_residue: float
    bethe_residual: float
    div_scaled: float
    residue_scaled: float

    def all_small(self, tol: float = 1e-8) -> bool:
        return max(self.div_scaled, self.residue_scaled, self.bethe_residual) < tol

    def all_large(self, tol: float = 1e-3) -> bool:
        return min(self.div_scaled, self.residue_scaled, self.bethe_residual) > tol


def equivalence_check(p: CPoly, b) -> EquivalenceReport:
    """
    The three QES conditions on a monic p with simple roots.

    residue_scaled multiplies each residue of p^-2 exp(-2h) by
    |p'(z_k)|^2 |exp(2h(z_k))|, which turns it into twice the Bethe residual
    at z_k; div_scaled divides the remainder by the numerator's size.
    """
    b = _as_b(b)
    hp = h_prime(b)
    div_norm = divisibility_check(p, b)
    if p.degree < 1:
        return EquivalenceReport(div_norm, 0.0, 0.0, div_norm, 0.0)

    dp = poly_derivative(p)
    numerator = poly_derivative(dp) + 2.0 * (dp * hp)
    roots = np.asarray(poly_roots(p))
    h = lambda z: z ** 3 / 3.0 - b * z

    residues = []
    scaled = []
    for z in roots:
        res = residue_order2(p, hp, complex(z))
        residues.append(abs(res))
        scaled.append(abs(res) * abs(poly_eval(dp, complex(z))) ** 2 * abs(np.exp(2.0 * h(complex(z)))))

    bethe = float(np.max(np.abs(bethe_residuals(roots, b))))
    return EquivalenceReport(
        div_norm=div_norm,
        max_residue=max(residues),
        bethe_residual=bethe,
        div_scaled=div_norm / max(1.0, numerator.max_coeff()),
        residue_scaled=max(scaled),
    )


# ---------- Darboux transform ----------

def _permutation_sign(perm: Tuple[int, ...]) -> int:
    inversions = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
    return -1 if inversions % 2 else 1


def wronskian_factor(polys: Sequence[CPoly], hp: CPoly) -> CPoly:
    """
    Polynomial factor of W(p_0 e^h, ..., p_n e^h) = e^{(n+1)h} det(r_ik).

    r_i0 = p_i and r_i,k+1 = r_ik' + h' r_ik.
    """
    size = len(polys)
    rows = []
    for p in polys:
        row = [p]
        for _ in range(size - 1):
            row.append(poly_derivative(row[-1]) + hp * row[-1])
        rows.append(row)

    total = CPoly()
    for perm in itertools.permutations(range(size)):
        term = CPoly((float(_permutation_sign(perm)),))
        for i, k in enumerate(perm):
            term = term * rows[i][k]
        total = total + term
    return total


@dataclass(frozen=True)
class DarbouxReport:
    n: int
    b: complex
    W_poly: CPoly
    V_new: CPoly
    V_expected: CPoly
    shift: complex
    deviation: float
    potential_error: float


def darboux(n: int, b) -> DarbouxReport:
    """
    Darboux transform of L_{n+1} by all of its QES eigenfunctions.

    W(phi_0..phi_n) = e^{(n+1)h} W~ with W~ constant, so the transformed
    potential is V - 2(n+1)h'' = z^4 - 2b z^2 - 2J z, the potential of L_{-J}.
    """
    b = _as_b(b)
    J = n + 1
    points = qes_points(n, b, strict=True)
    W = wronskian_factor([pt.p for pt in points], h_prime(b))
    if W.is_zero():
        raise WronskianNotConstant("Wronskian factor vanishes identically", n=n, b=b)

    scale = abs(W.coeffs[0]) if W.coeffs[0] != 0 else W.max_coeff()
    deviation = max((abs(c) for c in W.coeffs[1:]), default=0.0) / scale
    if deviation > WRONSKIAN_TOL:
        raise WronskianNotConstant(
            f"Wronskian factor is not constant: {W}", n=n, b=b, deviation=deviation
        )

    V = CPoly((0.0, 2.0 * J, -2.0 * b, 0.0, 1.0))
    V_new = V - CPoly((0.0, 4.0 * J))
    V_expected = CPoly((0.0, -2.0 * J, -2.0 * b, 0.0, 1.0))
    potential_error = (V_new - V_expected).max_coeff()
    log.info("Darboux n=%d b=%s: W~=%s, deviation %.2e", n, b, W, deviation)
    return DarbouxReport(
        n=n,
        b=b,
        W_poly=W,
        V_new=V_new,
        V_expected=V_expected,
        shift=0j,
        deviation=deviation,
        potential_error=potential_error,
    )


@dataclass(frozen=True)
class DarbouxSpectrumReport:
    J: int
    b: float
    qes: Tuple[complex, ...]
    original: Tuple[float, ...]
    non_qes: Tuple[float, ...]
    transformed: Tuple[float, ...]
    max_mismatch: float


def darboux_spectrum_check(
    J: int, b: float, count: int = 5, lam_max: float = 15.0, grid_step: float = 0.25
) -> DarbouxSpectrumReport:
    """
    Compare the real spectrum of L_{-J} with that of L_J minus its QES part.
    """
    from specloc_core.spectrum import real_eigenvalues, spectrum_floor

    qes = tuple(pt.lam for pt in qes_points(J - 1, b))
    lo = spectrum_floor(b, J)
    hi = lam_max
    while True:
        grid_n = max(16, int((hi - lo) / grid_step))
        original = real_eigenvalues(make_family("quartic-ii", b=b, J=J), lo, hi, grid_n)
        transformed = real_eigenvalues(make_family("quartic-ii", b=b, J=-J), lo, hi, grid_n)
        non_qes = [
            lam for lam in original if all(abs(lam - q) > 1e-5 * (1.0 + abs(q)) for q in qes)
        ]
        if (len(non_qes) >= count and len(transformed) >= count) or hi > 200.0:
            break
        hi *= 2.0

    pairs = list(zip(non_qes[:count], transformed[:count]))
    mismatch = max((abs(a - c) for a, c in pairs), default=math.inf)
    if len(pairs) < count:
        mismatch = math.inf
    return DarbouxSpectrumReport(
        J=J,
        b=b,
        qes=qes,
        original=tuple(original),
        non_qes=tuple(non_qes),
        transformed=tuple(transformed),
        max_mismatch=mismatch,
    )


# ---------- Constant identity ----------

@dataclass(frozen=True)
class CConstantRecord:
    lam: complex
    C_from_identity: complex
    C_from_formula: complex
    match: bool
    convention: str


def _c_formula(spoly: SpectralPolyAtB, lam: complex, convention: str) -> complex:
    n = spoly.n
    dQ = spoly.derivative(lam)
    if convention == "direct":
        return (-1) ** n * 2.0 ** (-2 * n) * dQ
    # Q monic in -lambda picks up (-1)^n from the chain rule and leading sign
    return 2.0 ** (-2 * n) * dQ


def _c_pair(point: QESPoint, convention: str) -> Tuple[complex, complex]:
    _, C = solve_c_identity(point.p, h_prime(point.b))
    return C, _c_formula(spectral_poly(point.n, point.b), point.lam, convention)


def _close(a: complex, b: complex, tol: float = C_MATCH_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b))


@lru_cache(maxsize=1)
def resolve_c_convention() -> str:
    """
    Decide, from n = 0 and n = 1, whether the constant formula reads Q at
    lambda or at -lambda. Recorded once and applied to every n.
    """
    for convention in ("direct", "reflected"):
        ok = all(
            _close(*_c_pair(point, convention))
            for n in (0, 1)
            for b in (1.0, 0.7)
            for point in qes_points(n, b, strict=True)
        )
        if ok:
            log.info("Constant formula convention resolved: %s", convention)
            return convention
    raise NoSolution("neither sign convention reproduces the constant at n = 0, 1")


def c_constant_check(n: int, b) -> List[CConstantRecord]:
    convention = resolve_c_convention()
    records = []
    for point in qes_points(n, b, strict=True):
        C_id, C_formula = _c_pair(point, convention)
        match = _close(C_id, C_formula)
        if not match:
            log.warning("Constant mismatch at n=%d b=%s lambda=%s: %s vs %s", n, b, point.lam, C_id, C_formula)
        records.append(
            CConstantRecord(
                lam=point.lam,
                C_from_identity=C_id,
                C_from_formula=C_formula,
                match=match,
                convention=convention,
            )
        )
    return records


# ---------- Level crossings ----------

@dataclass(frozen=True)
class LevelCrossing:
    k: int
    b_k: float
    lambda_k: float
    b_asymptotic: float
    ratio: float


def asymptotic_crossing(k: int) -> float:
    return -((0.75 * math.pi * k) ** (2.0 / 3.0))


def real_qes_branch(J: int, b: float, near: Optional[float] = None) -> float:
    """
    lambda(b) on the real QES branch of L_J that reaches b -> -infinity.

    J = 1 is explicit; otherwise the real root of Q_J(b, .) closest to
    `near` (the lowest one when near is None).
    """
    if J == 1:
        return -b * b
    roots = [
        r.real for r in poly_roots(spectral_poly(J - 1, b).Q) if abs(r.imag) < 1e-7 * (1.0 + abs(r))
    ]
    if not roots:
        raise BranchTrackingLost(f"Q_{J}(b, .) has no real root at b={b}", J=J, b=b)
    if near is None:
        return min(roots)
    return min(roots, key=lambda r: abs(r - near))


def level_crossings(
    J: int,
    b_min: float,
    k_max: int,
    db: float = CROSSING_DB,
    opts: Optional[ShotOptions] = None,
) -> List[LevelCrossing]:
    """
    Points b_k < 0 where the real QES eigenvalue of L_J is also an eigenvalue of L_{-J}.

    g(b) = F_real of L_{-J} at lambda(b) is scanned from b = 0 down to b_min
    and each sign change refined by brentq. The b step starts at db and
    shrinks where lambda(b) moves fast, so that lambda changes by at most
    CROSSING_DLAMBDA per step (never below db / CROSSING_MIN_FRACTION).
    """
    if J < 1 or J % 2 == 0:
        raise ArgumentError(f"level crossings need odd J >= 1, got {J}", J=J)
    if not (math.isfinite(b_min) and b_min < 0):
        raise ArgumentError(f"b_min must be finite and negative, got {b_min}", b_min=b_min)
    if db <= 0:
        raise ArgumentError(f"db must be positive, got {db}", db=db)

    def g(b: float, near: Optional[float]) -> Tuple[float, float]:
        lam = real_qes_branch(J, b, near)
        return determinant_real(make_family("quartic-ii", b=b, J=-J), lam, opts), lam

    crossings: List[LevelCrossing] = []
    prev_b = 0.0
    prev_g, prev_lam = g(prev_b, None)
    h = db
    while prev_b > b_min and len(crossings) < k_max:
        b = max(prev_b - h, b_min)
        value, lam = g(b, prev_lam)
        if value == 0.0 or prev_g * value < 0:
            if value == 0.0:
                b_k = b
            else:
                b_k = brentq(lambda x: g(x, prev_lam)[0], b, prev_b, xtol=1e-12, rtol=1e-12)
            lam_k = real_qes_branch(J, b_k, prev_lam)
            k = len(crossings) + 1
            b_asym = asymptotic_crossing(k)
            crossings.append(
                LevelCrossing(k=k, b_k=b_k, lambda_k=lam_k, b_asymptotic=b_asym, ratio=b_k / b_asym)
            )
            log.info("Level crossing k=%d at b=%.10g lambda=%.10g", k, b_k, lam_k)

        slope = abs(lam - prev_lam) / (prev_b - b)
        h = db if slope == 0 else min(db, max(db / CROSSING_MIN_FRACTION, CROSSING_DLAMBDA / slope))
        prev_b, prev_g, prev_lam = b, value, lam

    if len(crossings) < k_max:
        log.warning("Found %d of %d level crossings above b=%g", len(crossings), k_max, b_min)
    return crossings
