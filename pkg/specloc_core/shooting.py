import cmath
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from specloc_core.config import (
    ATOL_FACTOR,
    OVERFLOW_GUARD,
    SEED_MAX_RADIUS,
    SEED_MIN_RADIUS,
    SEED_RADIUS_GROWTH,
    check_rtol,
    get_settings,
)
from specloc_core.errors import ArgumentError, BranchAmbiguous, NotSymmetric, StepFailure
from specloc_core.oscillator import Problem, same_angle, sector_index, stokes_sectors, wrap_angle
from specloc_core.polyalg import CPoly, poly_derivative, poly_eval

log = logging.getLogger(__name__)

BRANCH_TOL = 1e-6

# Below this radius the inward integration switches from the log-derivative
# form to the linear system.
SWITCH_MODULUS = 100.0
SWITCH_RATIO = 0.05
SWITCH_MIN_RADIUS = 1.0
SWITCH_GROWTH = 1.1

SHOT_CACHE_SIZE = 8192


@dataclass(frozen=True)
class ShotOptions:
    rtol: Optional[float] = None
    R: Optional[float] = None
    seed_scale: complex = 1.0
    sector_centre: Optional[bool] = None
    riccati: bool = True


@dataclass(frozen=True)
class ShotResult:
    """
    The recessive solution along one ray, evaluated at z = 0.

    (y0, dy0) is normalised to |y0| + |dy0| = 1; the true values are
    (y0, dy0) * exp(log_scale). seed_phase is the phase the seed carried,
    so for rays on which the ODE is real, (y0, dy0) * conj(seed_phase)
    is real up to the ray's own rotation.
    """

    y0: complex
    dy0: complex
    R_used: float
    steps: int
    est_error: float
    angle: float
    log_scale: float = 0.0
    seed_phase: complex = 1.0
    switch_radius: float = 0.0

    @property
    def norm(self) -> float:
        return math.hypot(abs(self.y0), abs(self.dy0))

    @property
    def ratio(self) -> complex:
        return self.dy0 / self.y0


# ---------- Seed ----------

def wkb_seed(V: CPoly, mu: complex, theta: float, R: float) -> Tuple[complex, complex]:
    """Leading-order WKB data of the solution decaying outward along arg z = theta."""
    z = R * cmath.exp(1j * theta)
    q = poly_eval(V, z) - mu
    if q == 0:
        raise BranchAmbiguous(f"V - mu vanishes at the seed point z={z}", R=R)
    e = cmath.exp(1j * theta)
    s = cmath.sqrt(q)
    if (e * s).real < 0:
        s = -s
    if abs((e * s).real) < BRANCH_TOL * abs(s):
        raise BranchAmbiguous(
            f"decaying branch is ambiguous at R={R:g}, theta={theta:.6g}; increase R",
            R=R,
            theta=theta,
        )
    y = s ** -0.5
    return y, -s * y


def seed_radius(
    V: CPoly,
    mu: complex,
    theta: float,
    modulus: Optional[float] = None,
    ratio: Optional[float] = None,
) -> float:
    """Smallest R >= 5 on a geometric grid with |V - mu| >= modulus and a small WKB ratio."""
    settings = get_settings()
    modulus = settings.seed_modulus if modulus is None else modulus
    ratio = settings.wkb_ratio if ratio is None else ratio
    dV = poly_derivative(V)
    e = cmath.exp(1j * theta)

    R = SEED_MIN_RADIUS
    while R < SEED_MAX_RADIUS:
        z = R * e
        q = abs(poly_eval(V, z) - mu)
        if q >= modulus and abs(poly_eval(dV, z)) <= ratio * q ** 1.5:
            return R
        R *= SEED_RADIUS_GROWTH
    log.warning("Seed radius capped at %g for mu=%s, theta=%.6g", SEED_MAX_RADIUS, mu, theta)
    return SEED_MAX_RADIUS


def _switch_radius(V: CPoly, mu: complex, theta: float, R: float) -> float:
    dV = poly_derivative(V)
    e = cmath.exp(1j * theta)

    def wkb_ok(t: float) -> bool:
        q = abs(poly_eval(V, t * e) - mu)
        return q >= SWITCH_MODULUS and abs(poly_eval(dV, t * e)) <= SWITCH_RATIO * q ** 1.5

    t = R
    while t / SWITCH_GROWTH >= SWITCH_MIN_RADIUS and wkb_ok(t / SWITCH_GROWTH):
        t /= SWITCH_GROWTH
    return t


# ---------- Integrators ----------

def _horner(coeffs: Tuple[complex, ...], z: complex) -> complex:
    acc = 0j
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


def _riccati_leg(coeffs, mu, e, R, t_end, u0, rtol) -> Tuple[complex, complex, int, bool]:
    """
    Integrate u = y'/y and l = log y from t = R down to t_end along z = t e.

    The log-derivative stays smooth where the solution itself grows
    exponentially; the decaying perturbation mode makes it stiff, hence Radau
    on the real 4-vector (Re u, Im u, Re l, Im l).
    """

    def rhs(t, X):
        u = X[0] + 1j * X[1]
        du = e * (_horner(coeffs, t * e) - mu - u * u)
        dl = e * u
        return [du.real, du.imag, dl.real, dl.imag]

    def jac(t, X):
        a = -2.0 * e * (X[0] + 1j * X[1])
        return np.array(
            [
                [a.real, -a.imag, 0.0, 0.0],
                [a.imag, a.real, 0.0, 0.0],
                [e.real, -e.imag, 0.0, 0.0],
                [e.imag, e.real, 0.0, 0.0],
            ]
        )

    sol = solve_ivp(
        rhs, (R, t_end), [u0.real, u0.imag, 0.0, 0.0], method="Radau", jac=jac, rtol=rtol, atol=rtol
    )
    ok = sol.status == 0 and np.all(np.isfinite(sol.y[:, -1]))
    X = sol.y[:, -1]
    return X[0] + 1j * X[1], X[2] + 1j * X[3], len(sol.t) - 1, ok


def _linear_leg(coeffs, mu, e, t_start, Y0, rtol) -> Tuple[np.ndarray, float, int]:
    """Integrate (y, y') from t_start to 0 along z = t e, renormalising on overflow."""

    def rhs(t, Y):
        return [e * Y[1], e * (_horner(coeffs, t * e) - mu) * Y[0]]

    def overflow(t, Y):
        return math.log(abs(Y[0]) + abs(Y[1]) + 1e-300) - math.log(OVERFLOW_GUARD)

    overflow.terminal = True
    overflow.direction = 1

    Y = np.asarray(Y0, dtype=complex)
    t0 = t_start
    log_scale = 0.0
    steps = 0
    while True:
        sol = solve_ivp(
            rhs, (t0, 0.0), Y, method="DOP853", rtol=rtol, atol=rtol * ATOL_FACTOR, events=overflow
        )
        if sol.status == -1:
            raise StepFailure(f"integrator failed along the ray: {sol.message}", t=t0)
        steps += len(sol.t) - 1
        Y = sol.y[:, -1]
        if sol.status == 1:
            norm = abs(Y[0]) + abs(Y[1])
            Y = Y / norm
            log_scale += math.log(norm)
            t0 = sol.t[-1]
            log.debug("Renormalised at t=%.4g by exp(%.4g)", t0, math.log(norm))
            continue
        return Y, log_scale, steps


@lru_cache(maxsize=SHOT_CACHE_SIZE)
def _shoot(
    coeffs: Tuple[complex, ...],
    mu: complex,
    angle: float,
    rtol: float,
    R: Optional[float],
    seed_scale: complex,
    modulus: float,
    ratio: float,
    riccati: bool,
) -> ShotResult:
    V = CPoly(coeffs)
    e = cmath.exp(1j * angle)
    R_used = R if R is not None else seed_radius(V, mu, angle, modulus, ratio)

    y_s, dy_s = wkb_seed(V, mu, angle, R_used)
    norm = abs(y_s) + abs(dy_s)
    y_s, dy_s = seed_scale * y_s / norm, seed_scale * dy_s / norm
    seed_phase = y_s / abs(y_s)

    steps = 0
    log_scale = math.log(abs(y_s))
    Y0 = np.array([y_s, dy_s]) / abs(y_s)
    t_switch = R_used

    if riccati:
        t_candidate = _switch_radius(V, mu, angle, R_used)
        if t_candidate < R_used:
            u, ell, n_steps, ok = _riccati_leg(coeffs, mu, e, R_used, t_candidate, dy_s / y_s, rtol)
            if ok:
                direction = seed_phase * cmath.exp(1j * ell.imag)
                scale = 1.0 + abs(u)
                Y0 = np.array([direction, u * direction]) / scale
                log_scale += ell.real + math.log(scale)
                t_switch = t_candidate
                steps += n_steps
            else:
                log.warning("Log-derivative leg failed for mu=%s; integrating the linear system", mu)

    Y, extra_scale, n_steps = _linear_leg(coeffs, mu, e, t_switch, Y0, rtol)
    steps += n_steps
    final = abs(Y[0]) + abs(Y[1])
    if not math.isfinite(final) or final == 0:
        raise StepFailure("solution lost all precision along the ray", mu=mu)

    log.debug(
        "Shot mu=%s angle=%.5g R=%.3g switch=%.3g steps=%d", mu, angle, R_used, t_switch, steps
    )
    return ShotResult(
        y0=complex(Y[0] / final),
        dy0=complex(Y[1] / final),
        R_used=R_used,
        steps=steps,
        est_error=rtol * steps,
        angle=angle,
        log_scale=log_scale + extra_scale + math.log(final),
        seed_phase=seed_phase,
        switch_radius=t_switch,
    )


def clear_shot_cache() -> None:
    _shoot.cache_clear()


def shooting_angle(problem: Problem, theta: float, sector_centre: bool) -> float:
    """The ray actually integrated: theta itself or the centre of its Stokes sector."""
    if not sector_centre:
        return theta
    d = problem.V.degree
    j = sector_index(theta, d, problem.V.leading)
    if j is None:
        return theta
    centre = stokes_sectors(d, problem.V.leading)[j].center_angle
    return theta + wrap_angle(centre - theta)


def integrate_ray(problem: Problem, mu: complex, theta: float, opts: Optional[ShotOptions] = None) -> ShotResult:
    """
    Integrate y'' = (V - mu) y inward from the WKB seed at |z| = R to z = 0.

    The recessive solution is the same along every ray of its Stokes sector,
    so by default the shot runs along the sector centre, where it is
    non-oscillatory.
    """
    opts = opts or ShotOptions()
    settings = get_settings()
    rtol = check_rtol(settings.ode_rtol if opts.rtol is None else opts.rtol)
    centre = settings.shoot_sector_centre if opts.sector_centre is None else opts.sector_centre
    angle = shooting_angle(problem, theta, centre)
    return _shoot(
        problem.V.coeffs,
        complex(mu),
        angle,
        rtol,
        opts.R,
        complex(opts.seed_scale),
        settings.seed_modulus,
        settings.wkb_ratio,
        opts.riccati,
    )


# ---------- Determinants ----------

def determinant(problem: Problem, mu: complex, opts: Optional[ShotOptions] = None) -> complex:
    """Wronskian of the two recessive solutions at 0, divided by the shot norms."""
    a = integrate_ray(problem, mu, problem.theta_a, opts)
    b = integrate_ray(problem, mu, problem.theta_b, opts)
    return (a.y0 * b.dy0 - a.dy0 * b.y0) / (a.norm * b.norm)


def _self_conjugate(theta: float) -> bool:
    return same_angle(theta, -theta)


def determinant_real(problem: Problem, mu: float, opts: Optional[ShotOptions] = None) -> float:
    """
    Real function of real mu with the real eigenvalues as zeros.

    Rays swapped by conjugation need one shot: the reflected solution
    conj(y(conj z)) is the second one, and F = 2i * F_real. Rays on the real
    axis give real shots once the seed phase is removed.
    """
    mu = complex(mu)
    if not problem.is_conjugate_symmetric or mu.imag != 0:
        raise NotSymmetric(
            "determinant_real needs a conjugate-symmetric problem and real mu",
            problem=problem.label(),
            mu=mu,
        )

    if _self_conjugate(problem.theta_a) and _self_conjugate(problem.theta_b):
        a = integrate_ray(problem, mu.real, problem.theta_a, opts)
        b = integrate_ray(problem, mu.real, problem.theta_b, opts)
        pa, pb = a.seed_phase.conjugate(), b.seed_phase.conjugate()
        F = (a.y0 * pa) * (b.dy0 * pb) - (a.dy0 * pa) * (b.y0 * pb)
        return float(F.real / (a.norm * b.norm))

    shot = integrate_ray(problem, mu.real, problem.theta_a, opts)
    return float((shot.y0 * shot.dy0.conjugate()).imag / shot.norm ** 2)


def parity_split_available(problem: Problem, opts: Optional[ShotOptions] = None) -> bool:
    """
    True when V is real and even, the rays are opposite, and the ODE along
    the shooting ray is real, so that even and odd states separate.
    """
    if not (problem.V.is_real() and problem.is_even):
        return False
    if not same_angle(problem.theta_b, problem.theta_a + math.pi):
        return False
    opts = opts or ShotOptions()
    centre = get_settings().shoot_sector_centre if opts.sector_centre is None else opts.sector_centre
    angle = shooting_angle(problem, problem.theta_a, centre)
    return abs(math.sin(2.0 * angle)) < 1e-12


def parity_determinants(problem: Problem, mu: float, opts: Optional[ShotOptions] = None) -> Tuple[float, float]:
    """(F_even, F_odd): y'(0) and y(0) of the real-normalised ray solution."""
    if not parity_split_available(problem, opts):
        raise NotSymmetric("problem has no parity split", problem=problem.label())
    shot = integrate_ray(problem, float(mu), problem.theta_a, opts)
    phase = shot.seed_phase.conjugate()
    e = cmath.exp(1j * shot.angle)
    return float((e * shot.dy0 * phase).real), float((shot.y0 * phase).real)


# ---------- Paths through the plane ----------

def integrate_segment(
    V: CPoly,
    mu: complex,
    state: Tuple[complex, complex],
    z_start: complex,
    z_end: complex,
    taus: Optional[Sequence[float]] = None,
    rtol: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Carry (y, y') along the straight segment z_start -> z_end.

    Returns (values, final_state): values has shape (2, len(taus)) for the
    requested fractions of the segment.
    """
    rtol = get_settings().ode_rtol if rtol is None else rtol
    coeffs = V.coeffs
    delta = z_end - z_start

    def rhs(tau, Y):
        return [delta * Y[1], delta * (_horner(coeffs, z_start + tau * delta) - mu) * Y[0]]

    Y0 = np.asarray(state, dtype=complex)
    if delta == 0:
        values = np.repeat(Y0[:, None], len(taus) if taus is not None else 0, axis=1)
        return values, Y0
    t_eval = None if taus is None else np.asarray(taus, dtype=float)
    if t_eval is not None and len(t_eval) and t_eval[-1] != 1.0:
        t_eval = np.append(t_eval, 1.0)
    sol = solve_ivp(
        rhs, (0.0, 1.0), Y0, method="DOP853", rtol=rtol, atol=rtol * ATOL_FACTOR * (abs(Y0).sum()), t_eval=t_eval
    )
    if sol.status == -1:
        raise StepFailure(f"integrator failed on segment {z_start} -> {z_end}: {sol.message}")
    final = sol.y[:, -1]
    if taus is None:
        return np.zeros((2, 0), dtype=complex), final
    return sol.y[:, : len(taus)], final


def integrate_path(
    V: CPoly,
    mu: complex,
    state: Tuple[complex, complex],
    vertices: Sequence[complex],
    samples_per_edge: int = 0,
    rtol: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Carry (y, y') from vertices[0] along the polyline through the remaining vertices.

    Returns z, y, y' sampled at every vertex and at `samples_per_edge`
    interior points of each edge.
    """
    taus = np.linspace(0.0, 1.0, samples_per_edge + 2)[1:]
    zs = [complex(vertices[0])]
    ys = [complex(state[0])]
    dys = [complex(state[1])]
    current = tuple(state)
    for z_s, z_e in zip(vertices[:-1], vertices[1:]):
        values, final = integrate_segment(V, mu, current, complex(z_s), complex(z_e), taus, rtol)
        zs.extend(complex(z_s) + taus * (complex(z_e) - complex(z_s)))
        ys.extend(values[0])
        dys.extend(values[1])
        current = (final[0], final[1])
    return np.array(zs), np.array(ys), np.array(dys)


def eigenfunction_values(
    problem: Problem,
    mu: complex,
    points: Sequence[complex],
    opts: Optional[ShotOptions] = None,
) -> List[Tuple[complex, complex]]:
    """
    Values of the solution recessive along theta_a at the given points.

    Every point is reached by a straight segment from 0, starting from the
    same shot, so all values share one overall scale.
    """
    shot = integrate_ray(problem, mu, problem.theta_a, opts)
    rtol = None if opts is None else opts.rtol
    out: List[Tuple[complex, complex]] = []
    for z in points:
        z = complex(z)
        if abs(z) > shot.R_used:
            raise ArgumentError(f"point {z} lies outside |z| <= R_used={shot.R_used:g}")
        if z == 0:
            out.append((shot.y0, shot.dy0))
            continue
        _, final = integrate_segment(problem.V, mu, (shot.y0, shot.dy0), 0j, z, rtol=rtol)
        out.append((complex(final[0]), complex(final[1])))
    return out


# ---------- Schwarzian check ----------

@dataclass(frozen=True)
class SchwarzianReport:
    x0: float
    target: complex
    h_values: Tuple[float, ...]
    errors: Tuple[float, ...]
    orders: Tuple[float, ...]


def schwarzian_check(
    problem: Problem,
    mu: complex,
    x0: float = 0.0,
    h_values: Sequence[float] = (0.08, 0.04, 0.02),
    rtol: float = 1e-13,
) -> SchwarzianReport:
    """
    Finite-difference Schwarzian of f = y0/y1 against -2(V - mu).

    y0 is the recessive shot, y1 an independent solution with y1(0) != 0.
    Central stencils are O(h^2), so halving h should quarter the error.
    """
    shot = integrate_ray(problem, mu, problem.theta_a, ShotOptions(rtol=rtol))
    y_a = (shot.y0, shot.dy0)
    y_b = (1.0 + 0j, 0j) if abs(shot.dy0) > 1e-3 else (1.0 + 0j, 1.0 + 0j)

    h_max = max(h_values)
    # fractions of the two half-segments x0 -> x0 +- 2 h_max
    fractions = sorted({k * h / (2.0 * h_max) for h in h_values for k in (1, 2)})
    slot = {
        (i, k): fractions.index(k * h / (2.0 * h_max)) for i, h in enumerate(h_values) for k in (1, 2)
    }

    def samples(state) -> Dict[Tuple[int, int], complex]:
        _, at_x0 = integrate_segment(problem.V, mu, state, 0j, complex(x0), rtol=rtol)
        sides = {}
        for sign in (1, -1):
            values, _ = integrate_segment(
                problem.V, mu, at_x0, complex(x0), complex(x0 + sign * 2.0 * h_max), fractions, rtol
            )
            sides[sign] = values[0]
        at = {}
        for i in range(len(h_values)):
            at[(i, 0)] = at_x0[0]
            for k in (1, 2):
                at[(i, k)] = sides[1][slot[(i, k)]]
                at[(i, -k)] = sides[-1][slot[(i, k)]]
        return at

    ya = samples(y_a)
    yb = samples(y_b)
    target = -2.0 * (poly_eval(problem.V, complex(x0)) - mu)

    errors = []
    for i, h in enumerate(h_values):
        f = {k: ya[(i, k)] / yb[(i, k)] for k in (-2, -1, 0, 1, 2)}
        d1 = (f[1] - f[-1]) / (2.0 * h)
        d2 = (f[1] - 2.0 * f[0] + f[-1]) / h ** 2
        d3 = (f[2] - 2.0 * f[1] + 2.0 * f[-1] - f[-2]) / (2.0 * h ** 3)
        S = d3 / d1 - 1.5 * (d2 / d1) ** 2
        errors.append(abs(S - target) / max(1.0, abs(target)))

    orders = tuple(
        math.log(errors[i] / errors[i + 1]) / math.log(h_values[i] / h_values[i + 1])
        for i in range(len(errors) - 1)
        if errors[i + 1] > 0
    )
    return SchwarzianReport(
        x0=x0, target=target, h_values=tuple(h_values), errors=tuple(errors), orders=orders
    )
