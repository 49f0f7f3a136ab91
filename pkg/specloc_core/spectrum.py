import cmath
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from specloc_core.config import NEWTON_FD_STEP, get_settings
from specloc_core.errors import (
    ArgumentError,
    BoundaryZero,
    ContourThroughZero,
    NotSymmetric,
    PhaseNotReal,
    SubdivisionLimit,
)
from specloc_core.oscillator import Problem, make_family
from specloc_core.polyalg import poly_roots
from specloc_core.qes import spectral_poly
from specloc_core.shooting import (
    ShotOptions,
    determinant,
    determinant_real,
    integrate_path,
    integrate_ray,
    parity_determinants,
    parity_split_available,
)

log = logging.getLogger(__name__)

GRID_MIN = 16
PHASE_STEP_MAX = math.pi / 3
EDGE_PANELS = 16
MAX_CONTOUR_POINTS = 4096
WINDING_RESIDUAL = 0.1
NUDGE_FRACTION = 1e-3
NUDGE_TRIES = 3
DEFAULT_MAX_SUBDIV = 12
NEWTON_MAX_ITER = 40
BOUNDARY_TOL = 1e-6
PHASE_TOL = 1e-6
ZERO_SAMPLES = 200
STRIP_HALF_HEIGHT = 5.0
QES_MATCH_TOL = 1e-6

Box = Tuple[float, float, float, float]


@dataclass(frozen=True)
class EigenRecord:
    family: str
    params: Tuple[Tuple[str, float], ...]
    lam: complex
    index: Optional[int] = None
    n_real_zeros: Optional[int] = None
    n_nonreal_zeros: Optional[int] = None
    method: str = ""
    residual: float = 0.0


def eigen_records(problem: Problem, values: Sequence[complex], method: str, opts: Optional[ShotOptions] = None) -> List[EigenRecord]:
    records = []
    for i, lam in enumerate(sorted(values, key=lambda v: (complex(v).real, complex(v).imag))):
        lam = complex(lam)
        residual = abs(determinant(problem, problem.mu_of_lambda(lam), opts))
        records.append(
            EigenRecord(
                family=problem.family.value,
                params=problem.params,
                lam=lam,
                index=i if lam.imag == 0 else None,
                method=method,
                residual=residual,
            )
        )
    return records


def spectrum_floor(b: float, J: float) -> float:
    """Lower edge of the real scan for the QES quartic."""
    return -((abs(b) + abs(J) + 2.0) ** 2)


# ---------- Real eigenvalues ----------

class _SequentialExecutor:
    """Context manager that mimics ProcessPoolExecutor without new processes."""

    def __init__(self, *args, **kwargs):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        return False

    def map(self, fn, *iterables, chunksize=1):
        return map(fn, *iterables)


def _grid_value(lam: float, problem: Problem, parity: bool, opts: Optional[ShotOptions]) -> Tuple[float, ...]:
    mu = problem.mu_of_lambda(lam)
    if parity:
        return parity_determinants(problem, mu, opts)
    return (determinant_real(problem, mu, opts),)


def real_eigenvalues(
    problem: Problem,
    lambda_min: float,
    lambda_max: float,
    grid_n: int = 64,
    split_parity: Optional[bool] = None,
    tol: Optional[float] = None,
    workers: int = 1,
    opts: Optional[ShotOptions] = None,
) -> List[float]:
    """
    Real eigenvalues in [lambda_min, lambda_max] by sign changes of F_real.

    With the parity split (even V, opposite rays) the even and odd
    determinants are scanned separately, which resolves close doublets.
    Zeros of even order, and pairs of one parity closer than the grid
    spacing, are missed.
    """
    if grid_n < GRID_MIN:
        raise ArgumentError(f"grid_n must be >= {GRID_MIN}, got {grid_n}", grid_n=grid_n)
    if not lambda_min < lambda_max:
        raise ArgumentError(f"empty range [{lambda_min}, {lambda_max}]")
    if not problem.is_conjugate_symmetric:
        raise NotSymmetric("real eigenvalue scan needs a conjugate-symmetric problem", problem=problem.label())

    available = parity_split_available(problem, opts)
    if split_parity and not available:
        raise NotSymmetric("problem has no parity split", problem=problem.label())
    parity = available if split_parity is None else split_parity
    tol = get_settings().eig_tol if tol is None else tol

    grid = np.linspace(lambda_min, lambda_max, grid_n)
    evaluate = partial(_grid_value, problem=problem, parity=parity, opts=opts)
    executor = _SequentialExecutor if workers <= 1 else ProcessPoolExecutor
    with executor(max_workers=workers) as pool:
        values = np.array(list(pool.map(evaluate, grid, chunksize=max(1, grid_n // (4 * max(workers, 1))))))

    roots: List[float] = []
    for column in range(values.shape[1]):
        f = lambda lam, c=column: evaluate(lam)[c]
        for i in range(grid_n - 1):
            a, b = values[i, column], values[i + 1, column]
            if a == 0.0:
                roots.append(float(grid[i]))
            elif a * b < 0:
                scale = 1.0 + max(abs(grid[i]), abs(grid[i + 1]))
                roots.append(brentq(f, grid[i], grid[i + 1], xtol=0.01 * tol * scale, rtol=4e-16))
        if values[-1, column] == 0.0:
            roots.append(float(grid[-1]))

    roots.sort()
    merged: List[float] = []
    for r in roots:
        if merged and abs(r - merged[-1]) <= tol * (1.0 + abs(r)):
            continue
        merged.append(float(r))
    log.info("Found %d real eigenvalues of %s in [%g, %g]", len(merged), problem.label(), lambda_min, lambda_max)
    return merged


# ---------- Argument principle ----------

def _box_corners(box: Box) -> List[complex]:
    re0, re1, im0, im1 = box
    return [complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)]


def winding_number(f: Callable[[complex], complex], vertices: Sequence[complex], panels: int = EDGE_PANELS) -> Tuple[int, float]:
    """
    Winding of f around 0 along the closed polygon `vertices`.

    Each edge starts with `panels` equal panels; any panel whose phase
    increment reaches pi/3 is bisected until none does.
    """
    total = 0.0
    n_points = 0
    closed = list(vertices) + [vertices[0]]
    for start, end in zip(closed[:-1], closed[1:]):
        ts = list(np.linspace(0.0, 1.0, panels + 1))
        vals = [f(start + t * (end - start)) for t in ts]
        i = 0
        while i < len(ts) - 1:
            step = cmath.phase(vals[i + 1] / vals[i]) if vals[i] != 0 and vals[i + 1] != 0 else math.pi
            if abs(step) >= PHASE_STEP_MAX:
                n_points += 1
                if n_points > MAX_CONTOUR_POINTS or ts[i + 1] - ts[i] < 1e-9:
                    raise ContourThroughZero(
                        "phase along the contour can't be resolved; a zero lies on or next to it",
                        near=start + ts[i] * (end - start),
                    )
                t_mid = 0.5 * (ts[i] + ts[i + 1])
                ts.insert(i + 1, t_mid)
                vals.insert(i + 1, f(start + t_mid * (end - start)))
                continue
            total += step
            i += 1
    winding = total / (2.0 * math.pi)
    count = int(round(winding))
    return count, abs(winding - count)


class _LambdaDeterminant:
    def __init__(self, problem: Problem, opts: Optional[ShotOptions]) -> None:
        self.problem = problem
        self.opts = opts

    def __call__(self, lam: complex) -> complex:
        return determinant(self.problem, self.problem.mu_of_lambda(complex(lam)), self.opts)

    def derivative(self, lam: complex) -> complex:
        h = NEWTON_FD_STEP * (1.0 + abs(lam))
        return (self(lam + h) - self(lam - h)) / (2.0 * h)


def count_in_box(problem: Problem, box: Box, opts: Optional[ShotOptions] = None) -> Tuple[int, Box]:
    """Argument-principle count in the box, nudging the box outward when its edge meets a zero."""
    f = _LambdaDeterminant(problem, opts)
    current = box
    for attempt in range(NUDGE_TRIES + 1):
        try:
            count, residual = winding_number(f, _box_corners(current))
        except ContourThroughZero:
            count, residual = -1, 1.0
        if residual < WINDING_RESIDUAL:
            return count, current
        re0, re1, im0, im1 = current
        pad = NUDGE_FRACTION * (attempt + 1) * max(re1 - re0, im1 - im0)
        log.debug("Nudging box %s by %g", current, pad)
        current = (re0 - pad, re1 + pad, im0 - pad, im1 + pad)
    raise ContourThroughZero("argument-principle count stays unresolved after nudging", box=box)


def _newton(f: _LambdaDeterminant, lam: complex, tol: float) -> Optional[complex]:
    for _ in range(NEWTON_MAX_ITER):
        value = f(lam)
        slope = f.derivative(lam)
        if slope == 0:
            return None
        step = value / slope
        lam = lam - step
        if abs(step) < 0.01 * tol * (1.0 + abs(lam)):
            return lam
    return None


def _inside(lam: complex, box: Box, pad: float = 0.0) -> bool:
    re0, re1, im0, im1 = box
    return re0 - pad <= lam.real <= re1 + pad and im0 - pad <= lam.imag <= im1 + pad


def complex_eigenvalues_box(
    problem: Problem,
    box: Box,
    max_subdiv: int = DEFAULT_MAX_SUBDIV,
    opts: Optional[ShotOptions] = None,
    tol: Optional[float] = None,
) -> List[complex]:
    """
    All eigenvalues lambda in box = (re0, re1, im0, im1).

    Boxes holding more than one zero are split across their longer side;
    single-zero boxes are polished by Newton from the box centre.
    """
    re0, re1, im0, im1 = box
    if not (re0 < re1 and im0 < im1):
        raise ArgumentError(f"degenerate box {box}")
    tol = get_settings().eig_tol if tol is None else tol
    f = _LambdaDeterminant(problem, opts)

    def solve(cell: Box, count: int, depth: int) -> List[complex]:
        if count == 0:
            return []
        c0, c1, d0, d1 = cell
        if count == 1:
            centre = complex(0.5 * (c0 + c1), 0.5 * (d0 + d1))
            root = _newton(f, centre, tol)
            if root is not None and _inside(root, cell, 1e-9):
                return [root]
        if depth >= max_subdiv:
            raise SubdivisionLimit(f"{count} zeros remain unresolved in {cell}", box=cell, count=count)

        for fraction in (0.5, 0.45, 0.55, 0.4, 0.6):
            if c1 - c0 >= d1 - d0:
                cut = c0 + fraction * (c1 - c0)
                halves = [(c0, cut, d0, d1), (cut, c1, d0, d1)]
            else:
                cut = d0 + fraction * (d1 - d0)
                halves = [(c0, c1, d0, cut), (c0, c1, cut, d1)]
            try:
                counts = [winding_number(f, _box_corners(h)) for h in halves]
            except ContourThroughZero:
                continue
            if all(r < WINDING_RESIDUAL for _, r in counts) and sum(n for n, _ in counts) == count:
                found: List[complex] = []
                for half, (n, _) in zip(halves, counts):
                    found.extend(solve(half, n, depth + 1))
                return found
        raise SubdivisionLimit(f"no clean split of {cell}", box=cell, count=count)

    total, outer = count_in_box(problem, box, opts)
    roots = solve(outer, total, 0)
    roots.sort(key=lambda z: (z.real, z.imag))
    log.info("Box %s holds %d eigenvalues of %s", box, total, problem.label())
    return roots


# ---------- Zero counting ----------

@dataclass(frozen=True)
class ZeroCount:
    n_real: int
    n_nonreal: int
    total: int
    rect: Box


def _path_phase_increments(ys: np.ndarray) -> np.ndarray:
    return np.angle(ys[1:] / ys[:-1])


def count_zeros(
    problem: Problem,
    lam: complex,
    rect: Box,
    opts: Optional[ShotOptions] = None,
    samples: int = ZERO_SAMPLES,
) -> ZeroCount:
    """
    Zeros of the eigenfunction at lam inside rect = (x0, x1, y0, y1).

    The total comes from the winding of y around the rectangle, the real
    ones from sign changes of the real-normalised eigenfunction on [x0, x1].
    """
    x0, x1, y0, y1 = rect
    if not (x0 < 0 < x1 and y0 < 0 < y1) or abs(y0 + y1) > 1e-12 * max(1.0, abs(y1)):
        raise ArgumentError(f"rect must contain 0 and be symmetric about the real axis, got {rect}")

    mu = problem.mu_of_lambda(complex(lam))
    shot = integrate_ray(problem, mu, problem.theta_a, opts)
    rtol = None if opts is None else opts.rtol
    start = (shot.y0, shot.dy0)

    # 0 -> x1, then counterclockwise around the rectangle
    _, lead, dlead = integrate_path(problem.V, mu, start, [0j, complex(x1)], 0, rtol)
    corner_state = (lead[-1], dlead[-1])
    loop = [complex(x1), complex(x1, y1), complex(x0, y1), complex(x0, y0), complex(x1, y0), complex(x1)]

    per_edge = samples
    while True:
        zs, ys, dys = integrate_path(problem.V, mu, corner_state, loop, per_edge, rtol)
        near = np.abs(ys / dys)
        if np.any(near < BOUNDARY_TOL):
            k = int(np.argmin(near))
            raise BoundaryZero("eigenfunction has a zero on the rectangle boundary", z=complex(zs[k]), rect=rect)
        steps = _path_phase_increments(ys)
        if np.all(np.abs(steps) < PHASE_STEP_MAX):
            break
        if per_edge * len(loop) > MAX_CONTOUR_POINTS:
            raise BoundaryZero("phase along the rectangle can't be resolved", rect=rect)
        per_edge *= 2
    total = int(round(steps.sum() / (2.0 * math.pi)))

    n_real = _real_sign_changes(problem, mu, start, x0, x1, samples, rtol)
    log.debug("Zeros at lambda=%s in %s: total=%d real=%d", lam, rect, total, n_real)
    return ZeroCount(n_real=n_real, n_nonreal=total - n_real, total=total, rect=rect)


def _real_sign_changes(problem, mu, start, x0, x1, samples, rtol) -> int:
    _, right, _ = integrate_path(problem.V, mu, start, [0j, complex(x1)], 2 * samples, rtol)
    _, left, _ = integrate_path(problem.V, mu, start, [0j, complex(x0)], 2 * samples, rtol)
    values = np.concatenate([left[::-1], right[1:]])

    phase = 0.5 * cmath.phase(np.sum(values ** 2))
    rotated = values * cmath.exp(-1j * phase)
    residual = float(np.max(np.abs(rotated.imag)) / np.max(np.abs(values)))
    if residual > PHASE_TOL:
        raise PhaseNotReal(
            "eigenfunction is not real on the real axis up to a constant phase", residual=residual
        )
    signs = np.sign(rotated.real)
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


# ---------- Reality ----------

@dataclass(frozen=True)
class RealityReport:
    b: float
    J: float
    N: int
    eigenvalues: Tuple[complex, ...]
    is_qes: Tuple[bool, ...]
    box_count: int
    checked: str
    max_imag: float
    consistent: bool = True


def _is_integer(value: float) -> bool:
    return float(value).is_integer()


def reality_check(
    b: float,
    J: float,
    N: int = 8,
    strip: float = STRIP_HALF_HEIGHT,
    grid_step: float = 0.25,
    opts: Optional[ShotOptions] = None,
) -> RealityReport:
    """
    First N eigenvalues of L_J with the largest |Im lambda| among them.

    A real scan finds N + 1 real eigenvalues; one argument-principle count
    over [floor, midpoint of the N-th and (N+1)-th] x [-strip, strip] then
    shows whether any non-real ones hide below. For integer J >= 1 the QES
    eigenvalues are classified and only the non-QES ones are checked.
    A box count below N means the two methods disagree; the report then
    carries consistent=False.
    """
    if not 1 <= N <= 20:
        raise ArgumentError(f"N must lie in [1, 20], got {N}", N=N)
    problem = make_family("quartic-ii", b=b, J=J)
    lo = spectrum_floor(b, J)
    hi = lo + 40.0
    while True:
        real = real_eigenvalues(problem, lo, hi, max(GRID_MIN, int((hi - lo) / grid_step)), opts=opts)
        if len(real) > N:
            break
        hi = lo + 2.0 * (hi - lo)

    upper = 0.5 * (real[N - 1] + real[N])
    box = (lo, upper, -strip, strip)
    box_count, _ = count_in_box(problem, box, opts)
    eigen: List[complex] = [complex(v) for v in real[:N]]
    if box_count > N:
        found = complex_eigenvalues_box(problem, box, opts=opts)
        eigen = sorted(found, key=lambda z: (z.real, z.imag))[:N]
    consistent = box_count >= N
    if not consistent:
        log.warning("Box count %d is below the %d real eigenvalues found", box_count, N)

    qes_roots: List[complex] = []
    if _is_integer(J) and J >= 1:
        qes_roots = poly_roots(spectral_poly(int(J) - 1, b).Q)
    is_qes = tuple(
        any(abs(lam - q) < QES_MATCH_TOL * (1.0 + abs(q)) for q in qes_roots) for lam in eigen
    )
    checked = "non-qes" if qes_roots else "all"
    imag = [abs(lam.imag) for lam, flag in zip(eigen, is_qes) if not flag]
    return RealityReport(
        b=b,
        J=J,
        N=N,
        eigenvalues=tuple(eigen),
        is_qes=is_qes,
        box_count=box_count,
        checked=checked,
        max_imag=max(imag, default=0.0),
        consistent=consistent,
    )
