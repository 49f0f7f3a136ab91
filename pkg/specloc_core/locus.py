import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from specloc_core.config import CORRECTOR_TOL, GRADIENT_FLOOR, TRACE_FD_STEP, get_settings
from specloc_core.errors import ArgumentError, CorrectorDiverged, SingularPoint, SpeclocError
from specloc_core.oscillator import make_family
from specloc_core.qes import kernel_poly, qes_matrix, spectral_poly
from specloc_core.polyalg import poly_roots
from specloc_core.shooting import ShotOptions, determinant_real
from specloc_core.spectrum import count_zeros, real_eigenvalues

log = logging.getLogger(__name__)

Evaluator = Callable[[float, float], float]
Bounds = Tuple[float, float, float, float]

MAX_CORRECTOR_ITER = 8
EASY_ITER = 3
EASY_STEPS_TO_GROW = 5
MIN_TANGENT_DOT = 0.5
DEFAULT_MAX_POINTS = 4000
ZERO_RECT = (-4.0, 4.0, -4.0, 4.0)
FOLD_XTOL = 1e-8


@dataclass(frozen=True)
class TracePoint:
    s: float
    x: float
    lam: float
    residual: float
    dx_ds: float


@dataclass
class CurveTrace:
    """
    A traced component of {H(x, lambda) = 0}, ordered by arclength.

    dx_ds is the x-component of the unit tangent in the trace's own
    orientation; its sign changes mark the turning points.
    """

    points: List[TracePoint] = field(default_factory=list)
    branch_label: str = ""
    closed: bool = False
    stop_reason: str = ""
    x_name: str = "x"
    fixed: Tuple[Tuple[str, float], ...] = ()
    zero_count: Optional[int] = None
    singular_points: List[Tuple[float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xs(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def arclength(self) -> float:
        """Length of the polyline, including the closing chord of a closed trace."""
        if not self.points:
            return 0.0
        length = self.points[-1].s
        if self.closed:
            first, last = self.points[0], self.points[-1]
            length += math.hypot(first.x - last.x, first.lam - last.lam)
        return length

    @property
    def H_residuals(self) -> List[float]:
        return [p.residual for p in self.points]

    @property
    def turning_indices(self) -> List[int]:
        """Indices i after which dx/ds changes sign; exact zeros are skipped over."""
        nonzero = [i for i, p in enumerate(self.points) if p.dx_ds != 0]
        d = {i: self.points[i].dx_ds for i in nonzero}
        idx = [i for i, j in zip(nonzero[:-1], nonzero[1:]) if d[i] * d[j] < 0]
        if self.closed and len(nonzero) > 2 and d[nonzero[-1]] * d[nonzero[0]] < 0:
            idx.append(nonzero[-1])
        return idx

    def lambdas_at(self, x: float) -> List[float]:
        """lambda on every crossing of the vertical line at x, linearly interpolated."""
        xs, ls = self.xs, self.lams
        if self.closed:
            xs, ls = np.append(xs, xs[0]), np.append(ls, ls[0])
        out = []
        for i in range(len(xs) - 1):
            a, b = xs[i] - x, xs[i + 1] - x
            if a == 0:
                out.append(float(ls[i]))
            elif a * b < 0:
                t = a / (a - b)
                out.append(float(ls[i] + t * (ls[i + 1] - ls[i])))
        return sorted(out)


def hausdorff(a: CurveTrace, b: CurveTrace) -> float:
    pa = np.column_stack([a.xs, a.lams])
    pb = np.column_stack([b.xs, b.lams])
    dist = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2))
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def separation(a: CurveTrace, b: CurveTrace) -> float:
    pa = np.column_stack([a.xs, a.lams])
    pb = np.column_stack([b.xs, b.lams])
    return float(np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)).min())


# ---------- Continuation ----------

class _Curve:
    """Finite-difference geometry of the zero set of H."""

    def __init__(self, H: Evaluator, step: float) -> None:
        self.H = H
        self.step = step

    def gradient(self, u: np.ndarray) -> np.ndarray:
        g = np.empty(2)
        for i in range(2):
            h = min(TRACE_FD_STEP * (1.0 + abs(u[i])), self.step / 100.0)
            e = np.zeros(2)
            e[i] = h
            g[i] = (self.H(*(u + e)) - self.H(*(u - e))) / (2.0 * h)
        return g

    def tangent(self, g: np.ndarray) -> np.ndarray:
        return np.array([-g[1], g[0]]) / np.linalg.norm(g)

    def project(self, u: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
        """Newton along the gradient onto H = 0; returns (point, geometric residual, gradient)."""
        for _ in range(2 * MAX_CORRECTOR_ITER):
            value = self.H(*u)
            g = self.gradient(u)
            norm = np.linalg.norm(g)
            if norm < GRADIENT_FLOOR:
                raise SingularPoint(
                    f"gradient vanishes at x={u[0]:.10g}, lambda={u[1]:.10g}", x=u[0], lam=u[1]
                )
            if abs(value) / norm < CORRECTOR_TOL:
                return u, abs(value) / norm, g
            u = u - value * g / norm ** 2
        raise CorrectorDiverged("projection onto the curve did not converge", x=u[0], lam=u[1])

    def correct(self, pred: np.ndarray, t: np.ndarray) -> Tuple[Optional[np.ndarray], int]:
        """Chord Newton on {H = 0, t.(v - pred) = 0}."""
        g = self.gradient(pred)
        if np.linalg.norm(g) < GRADIENT_FLOOR:
            raise SingularPoint(
                f"gradient vanishes at x={pred[0]:.10g}, lambda={pred[1]:.10g}", x=pred[0], lam=pred[1]
            )
        A = np.array([g, t])
        if abs(np.linalg.det(A)) < GRADIENT_FLOOR:
            return None, MAX_CORRECTOR_ITER
        v = pred.copy()
        for it in range(1, MAX_CORRECTOR_ITER + 1):
            value = self.H(*v)
            if not math.isfinite(value):
                return None, it
            delta = np.linalg.solve(A, [-value, -np.dot(t, v - pred)])
            v = v + delta
            if np.linalg.norm(delta) < CORRECTOR_TOL * (1.0 + np.linalg.norm(v)):
                if abs(self.H(*v)) / np.linalg.norm(g) < CORRECTOR_TOL:
                    return v, it
        return None, MAX_CORRECTOR_ITER


def _inside(u: np.ndarray, bounds: Bounds) -> bool:
    x0, x1, l0, l1 = bounds
    return x0 <= u[0] <= x1 and l0 <= u[1] <= l1


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def trace(
    H: Evaluator,
    start: Tuple[float, float],
    step: Optional[float] = None,
    bounds: Bounds = (-math.inf, math.inf, -math.inf, math.inf),
    max_points: int = DEFAULT_MAX_POINTS,
    direction: int = 1,
    on_failure: str = "stop",
) -> CurveTrace:
    """
    Pseudo-arclength continuation of H(x, lambda) = 0 from `start`.

    Stops on leaving `bounds`, on the point budget, on closing up (passing
    within step/2 of the start with a matching tangent), or on a failure.
    With on_failure="raise" a vanishing gradient or a diverging corrector
    raise SingularPoint / CorrectorDiverged; with "stop" they end the trace
    and are recorded in stop_reason, a singular point also with its
    location in singular_points.
    """
    step = get_settings().trace_step if step is None else step
    if step <= 0:
        raise ArgumentError(f"step must be positive, got {step}", step=step)
    curve = _Curve(H, step)

    u0, residual, g = curve.project(np.array(start, dtype=float))
    t0 = direction * curve.tangent(g)
    points = [TracePoint(s=0.0, x=u0[0], lam=u0[1], residual=residual, dx_ds=t0[0])]

    u, t = u0, t0
    s = 0.0
    h = step
    easy = 0
    closed = False
    stop_reason = "budget"
    singular: List[Tuple[float, float]] = []

    while len(points) < max_points:
        try:
            v, iterations = curve.correct(u + h * t, t)
            accepted = False
            if v is not None:
                g_new = curve.gradient(v)
                norm = np.linalg.norm(g_new)
                if norm < GRADIENT_FLOOR:
                    raise SingularPoint(
                        f"gradient vanishes at x={v[0]:.10g}, lambda={v[1]:.10g}", x=v[0], lam=v[1]
                    )
                t_new = curve.tangent(g_new)
                if np.dot(t_new, t) < 0:
                    t_new = -t_new
                accepted = np.dot(t_new, t) >= MIN_TANGENT_DOT
            if not accepted:
                if h <= step / 4.0 * (1.0 + 1e-12):
                    raise CorrectorDiverged(
                        f"corrector failed at the smallest step near x={u[0]:.10g}, lambda={u[1]:.10g}",
                        x=u[0],
                        lam=u[1],
                    )
                h = max(h / 2.0, step / 4.0)
                easy = 0
                log.debug("Step halved to %.3g at (%.6g, %.6g)", h, u[0], u[1])
                continue
        except SingularPoint as exc:
            if on_failure == "raise":
                raise
            log.warning("Trace stopped: %s", exc)
            singular.append((float(exc.details["x"]), float(exc.details["lam"])))
            stop_reason = "singular"
            break
        except CorrectorDiverged as exc:
            if on_failure == "raise":
                raise
            log.warning("Trace stopped: %s", exc)
            stop_reason = "diverged"
            break

        if not _inside(v, bounds):
            stop_reason = "bounds"
            break

        s += float(np.linalg.norm(v - u))
        if s > 4.0 * step and _segment_distance(u0, u, v) < step / 2.0 and np.dot(t_new, t0) > MIN_TANGENT_DOT:
            closed = True
            stop_reason = "closed"
            break

        residual = abs(H(*v)) / norm
        points.append(TracePoint(s=s, x=v[0], lam=v[1], residual=residual, dx_ds=t_new[0]))
        u, t = v, t_new

        easy = easy + 1 if iterations <= EASY_ITER else 0
        if easy >= EASY_STEPS_TO_GROW and h < 2.0 * step:
            h = min(2.0 * h, 2.0 * step)
            easy = 0

    log.info("Trace ended (%s) after %d points, arclength %.4g", stop_reason, len(points), s)
    return CurveTrace(points=points, closed=closed, stop_reason=stop_reason, singular_points=singular)


def trace_both(
    H: Evaluator,
    start: Tuple[float, float],
    step: Optional[float] = None,
    bounds: Bounds = (-math.inf, math.inf, -math.inf, math.inf),
    max_points: int = DEFAULT_MAX_POINTS,
) -> CurveTrace:
    """Trace both ways from start and join the halves into one arclength-ordered curve."""
    forward = trace(H, start, step, bounds, max_points, direction=1)
    if forward.closed:
        return forward
    seed = (forward.points[0].x, forward.points[0].lam)
    backward = trace(H, seed, step, bounds, max_points, direction=-1)

    joined: List[TracePoint] = []
    for p in reversed(backward.points[1:]):
        joined.append(replace(p, dx_ds=-p.dx_ds))
    joined.extend(forward.points)
    s = 0.0
    rebased = [replace(joined[0], s=0.0)]
    for prev, p in zip(joined[:-1], joined[1:]):
        s += math.hypot(p.x - prev.x, p.lam - prev.lam)
        rebased.append(replace(p, s=s))
    reasons = f"{backward.stop_reason}|{forward.stop_reason}"
    return CurveTrace(
        points=rebased,
        closed=False,
        stop_reason=reasons,
        singular_points=backward.singular_points + forward.singular_points,
    )


# ---------- Turning points ----------

def _x_on_curve(H: Evaluator, lam: float, x_guess: float, h: float) -> float:
    x = x_guess
    for _ in range(MAX_CORRECTOR_ITER):
        value = H(x, lam)
        slope = (H(x + h, lam) - H(x - h, lam)) / (2.0 * h)
        if slope == 0:
            break
        dx = value / slope
        x -= dx
        if abs(dx) < FOLD_XTOL * (1.0 + abs(x)):
            break
    return x


def turning_points(trace_: CurveTrace, H: Optional[Evaluator] = None) -> List[Tuple[float, float]]:
    """
    Local extrema of x along the trace.

    With H the extremum is refined by a bounded one-dimensional optimisation
    of x(lambda) on the curve; without it, by the vertex of the parabola
    through the neighbouring points.
    """
    pts = trace_.points
    out: List[Tuple[float, float]] = []
    for i in trace_.turning_indices:
        a = pts[i]
        b = pts[(i + 1) % len(pts)]
        c = pts[i - 1] if i > 0 else pts[-1]
        sign = 1.0 if a.dx_ds > 0 else -1.0  # +1: x reaches a maximum

        if H is not None:
            lo, hi = sorted((c.lam, b.lam)) if abs(b.lam - c.lam) > 0 else (a.lam - 1e-3, a.lam + 1e-3)
            h = min(TRACE_FD_STEP * (1.0 + abs(a.x)), 1e-4)
            guess = {"x": a.x}

            def neg_x(lam: float) -> float:
                guess["x"] = _x_on_curve(H, lam, guess["x"], h)
                return -sign * guess["x"]

            res = minimize_scalar(neg_x, bounds=(lo, hi), method="bounded", options={"xatol": FOLD_XTOL})
            out.append((float(-sign * res.fun), float(res.x)))
            continue

        s = np.array([c.s if i > 0 else c.s - trace_.arclength, a.s, b.s if b is not pts[0] else trace_.arclength])
        xs = np.array([c.x, a.x, b.x])
        ls = np.array([c.lam, a.lam, b.lam])
        cx = np.polyfit(s, xs, 2)
        s_star = -cx[1] / (2.0 * cx[0]) if cx[0] != 0 else a.s
        s_star = float(np.clip(s_star, s.min(), s.max()))
        out.append((float(np.polyval(cx, s_star)), float(np.polyval(np.polyfit(s, ls, 2), s_star))))
    return out


# ---------- Cubic family ----------

def cubic_evaluator(opts: Optional[ShotOptions] = None) -> Evaluator:
    def H(a: float, lam: float) -> float:
        problem = make_family("cubic-pt", a=a)
        return determinant_real(problem, problem.mu_of_lambda(lam), opts)

    return H


def _first_real_eigenvalues(problem, count: int, lo: float, grid_step: float, split_parity=None) -> List[float]:
    hi = lo + 20.0
    while True:
        found = real_eigenvalues(problem, lo, hi, max(16, int((hi - lo) / grid_step)), split_parity=split_parity)
        if len(found) >= count or hi - lo > 400.0:
            return found
        hi = lo + 2.0 * (hi - lo)


def _label_by_zeros(trace_: CurveTrace, problem, lam: float, expected: int) -> None:
    try:
        zc = count_zeros(problem, lam, ZERO_RECT)
    except SpeclocError as exc:
        log.warning("Zero count unavailable for %s: %s", trace_.branch_label, exc)
        return
    trace_.zero_count = zc.n_nonreal
    if zc.n_nonreal != expected:
        log.warning(
            "%s: eigenfunction has %d non-real zeros in %s, expected %d",
            trace_.branch_label,
            zc.n_nonreal,
            ZERO_RECT,
            expected,
        )


def trace_gamma_cubic(
    n: int,
    a_range: Tuple[float, float] = (-6.0, 8.0),
    step: Optional[float] = None,
    a_seed: float = 3.0,
    max_points: int = DEFAULT_MAX_POINTS,
    lam_bounds: Tuple[float, float] = (-200.0, 200.0),
    label_zeros: bool = True,
) -> CurveTrace:
    """
    The component Gamma_n of the real spectral locus of the cubic family.

    For a >= 0 Gamma_n covers its abscissas twice, so it is seeded from the
    eigenvalue of index 2n at a_seed and traced both ways.
    """
    if n < 0:
        raise ArgumentError(f"n must be >= 0, got {n}", n=n)
    step = get_settings().trace_step if step is None else step
    problem = make_family("cubic-pt", a=a_seed)
    lo = -2.0 * (1.0 + abs(a_seed)) ** 1.5
    eigen = _first_real_eigenvalues(problem, 2 * n + 1, lo, min(0.1, step))
    if len(eigen) <= 2 * n:
        raise ArgumentError(f"only {len(eigen)} real eigenvalues found at a={a_seed}", n=n)

    H = cubic_evaluator()
    bounds = (a_range[0], a_range[1], lam_bounds[0], lam_bounds[1])
    result = trace_both(H, (a_seed, eigen[2 * n]), step, bounds, max_points)
    result.branch_label = f"gamma_{n}"
    result.x_name = "a"
    if label_zeros:
        _label_by_zeros(result, problem, eigen[2 * n], 2 * n)
    return result


# ---------- Type-I quartic sections ----------

def quartic_i_evaluator(a0: float, opts: Optional[ShotOptions] = None) -> Evaluator:
    def H(c: float, lam: float) -> float:
        problem = make_family("quartic-i", a=a0, c=c)
        return determinant_real(problem, problem.mu_of_lambda(lam), opts)

    return H


def section_Sn(
    a0: float,
    n_max: int = 3,
    c_range: Optional[Tuple[float, float]] = None,
    step: Optional[float] = None,
    max_points: int = DEFAULT_MAX_POINTS,
    label_zeros: bool = True,
) -> List[CurveTrace]:
    """
    Sections of S_0..S_{n_max} by the plane a = a0.

    At c = 0 the potential is even, so each S_n meets the axis at the
    parity pair of eigenvalues with indices 2n and 2n + 1.
    """
    step = get_settings().trace_step if step is None else step
    if c_range is None:
        reach = max(10.0, 1.5 * (2.0 / 3.0) * max(a0, 1.0) ** 1.5)
        c_range = (-reach, reach)
    problem = make_family("quartic-i", a=a0, c=0.0)
    lo = -(a0 * a0) / 4.0 - 1.0 if a0 < 0 else -1.0
    eigen = _first_real_eigenvalues(problem, 2 * n_max + 2, lo, min(0.1, step), split_parity=True)

    H = quartic_i_evaluator(a0)
    traces = []
    for n in range(n_max + 1):
        if len(eigen) < 2 * n + 2:
            log.warning("Only %d eigenvalues at c=0; S_%d skipped", len(eigen), n)
            break
        gap = eigen[2 * n + 1] - eigen[2 * n]
        h = min(step, gap / 20.0)
        reach = max(abs(c_range[0]), abs(c_range[1]))
        bounds = (c_range[0], c_range[1], eigen[0] - 10.0 - reach ** 1.5, eigen[-1] + 10.0 + reach ** 1.5)
        result = trace(H, (0.0, eigen[2 * n]), h, bounds, max_points)
        if not result.closed:
            log.warning("S_%d section at a=%g did not close (%s)", n, a0, result.stop_reason)
        result.branch_label = f"S_{n}"
        result.x_name = "c"
        result.fixed = (("a", a0),)
        if label_zeros:
            _label_by_zeros(result, problem, eigen[2 * n], 2 * n)
        traces.append(result)
    return traces


# ---------- QES curves ----------

def qes_evaluator(n: int) -> Evaluator:
    """det(lambda I - M(b)), scaled to stay O(1) along the curve."""
    size = n + 1

    def H(b: float, lam: float) -> float:
        M = qes_matrix(n, b)
        return float(np.linalg.det(lam * np.eye(size) - M)) / (1.0 + abs(lam) + b * b) ** size

    return H


def qes_label(n: int, b: float, lam: float) -> int:
    """m such that p has n - 2m real roots at the QES point (b, lam)."""
    if n == 0:
        return 0
    roots = poly_roots(kernel_poly(qes_matrix(n, b), lam))
    n_real = sum(1 for r in roots if abs(r.imag) <= 1e-7 * (1.0 + abs(r)))
    return (n - n_real) // 2


def _qes_bounds(n: int, b_range: Tuple[float, float]) -> Bounds:
    big = max(abs(b_range[0]), abs(b_range[1]))
    reach = big * big + 4.0 * (n + 1) * (1.0 + big) + 10.0
    return (b_range[0], b_range[1], -reach, reach)


def _qes_seeds(n: int, b_seed: float) -> List[Tuple[float, int]]:
    roots = poly_roots(spectral_poly(n, b_seed).Q)
    seeds = [r.real for r in roots if abs(r.imag) < 1e-7 * (1.0 + abs(r))]
    return [(lam, qes_label(n, b_seed, lam)) for lam in sorted(seeds)]


def trace_gamma_nm(
    n: int,
    m: int,
    b_range: Tuple[float, float] = (-6.0, 8.0),
    step: Optional[float] = None,
    max_points: int = DEFAULT_MAX_POINTS,
) -> CurveTrace:
    """Gamma_{n,m}: the component of Q_{n+1}(b, lambda) = 0 on which p has n - 2m real roots."""
    if not 0 <= m <= n // 2:
        raise ArgumentError(f"m must lie in [0, {n // 2}], got {m}", n=n, m=m)
    step = get_settings().trace_step if step is None else step
    b_seed = b_range[1] - 10.0 * step
    seeds = [lam for lam, label in _qes_seeds(n, b_seed) if label == m]
    if not seeds:
        raise ArgumentError(f"no real QES eigenvalue with m={m} at b={b_seed}", n=n, m=m)
    result = trace_both(qes_evaluator(n), (b_seed, seeds[0]), step, _qes_bounds(n, b_range), max_points)
    result.branch_label = f"gamma_{n}_{m}"
    result.x_name = "b"
    result.fixed = (("J", float(n + 1)),)
    return result


def qes_real_components(
    n: int,
    b_range: Tuple[float, float] = (-6.0, 8.0),
    step: Optional[float] = None,
    max_points: int = DEFAULT_MAX_POINTS,
) -> List[CurveTrace]:
    """Every component of Z^QES_{n+1}(R) that reaches b = b_range[1], one trace each."""
    step = get_settings().trace_step if step is None else step
    b_seed = b_range[1] - 10.0 * step
    H = qes_evaluator(n)
    bounds = _qes_bounds(n, b_range)
    traces: List[CurveTrace] = []
    for lam, m in _qes_seeds(n, b_seed):
        point = np.array([b_seed, lam])
        if any(np.min(np.hypot(t.xs - point[0], t.lams - point[1])) < 2.0 * step for t in traces):
            continue
        result = trace_both(H, (b_seed, lam), step, bounds, max_points)
        result.branch_label = f"gamma_{n}_{m}"
        result.x_name = "b"
        result.fixed = (("J", float(n + 1)),)
        traces.append(result)
    log.info("Z^QES_%d(R): %d components in b in %s", n + 1, len(traces), b_range)
    return traces


def quartic_ii_evaluator(J: float, opts: Optional[ShotOptions] = None) -> Evaluator:
    def H(b: float, lam: float) -> float:
        problem = make_family("quartic-ii", b=b, J=J)
        return determinant_real(problem, problem.mu_of_lambda(lam), opts)

    return H


def trace_z_real(
    J: float,
    b_range: Tuple[float, float] = (-4.0, 4.0),
    lam_range: Tuple[float, float] = (-20.0, 20.0),
    step: Optional[float] = None,
    max_points: int = DEFAULT_MAX_POINTS,
) -> List[CurveTrace]:
    """
    Real spectral locus of L_J in the (b, lambda) window.

    For integer J >= 1 the QES components come from Q_J; the remaining
    components are continued on F_real from the real eigenvalues at
    b = b_range[1] not already covered.
    """
    step = get_settings().trace_step if step is None else step
    traces: List[CurveTrace] = []
    qes_values: List[float] = []
    if float(J).is_integer() and J >= 1:
        for t in qes_real_components(int(J) - 1, b_range, step, max_points):
            t.branch_label = f"z_{int(J)}_qes_{t.branch_label}"
            traces.append(t)

    b_seed = b_range[1] - 10.0 * step
    if traces:
        qes_values = [lam for lam, _ in _qes_seeds(int(J) - 1, b_seed)]
    problem = make_family("quartic-ii", b=b_seed, J=J)
    eigen = real_eigenvalues(problem, lam_range[0], lam_range[1], max(16, int((lam_range[1] - lam_range[0]) / 0.1)))
    H = quartic_ii_evaluator(J)
    bounds = (b_range[0], b_range[1], lam_range[0], lam_range[1])
    k = 0
    for lam in eigen:
        if any(abs(lam - q) < 1e-6 * (1.0 + abs(q)) for q in qes_values):
            continue
        if any(
            np.min(np.hypot(t.xs - b_seed, t.lams - lam)) < 2.0 * step for t in traces if len(t)
        ):
            continue
        result = trace_both(H, (b_seed, lam), step, bounds, max_points)
        result.branch_label = f"z_{_fmt_j(J)}_{k}"
        result.x_name = "b"
        result.fixed = (("J", float(J)),)
        traces.append(result)
        k += 1
    return traces


def _fmt_j(J: float) -> str:
    return str(int(J)) if float(J).is_integer() else f"{J:g}"
