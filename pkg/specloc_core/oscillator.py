import cmath
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from specloc_core.errors import (
    AdjacentSectors,
    InvalidParams,
    NotNormalized,
    RayNotRecessive,
)
from specloc_core.polyalg import CPoly, parse_poly, poly_eval

log = logging.getLogger(__name__)

ANGLE_TOL = 1e-12
RECESSION_MARGIN = 1e-3
RECESSION_RADII = np.geomspace(10.0, 40.0, 16)


class FamilyTag(str, Enum):
    CUBIC_PT = "cubic-pt"
    QUARTIC_I = "quartic-i"
    QUARTIC_II = "quartic-ii"
    QUARTIC_EVEN = "quartic-even"
    CUSTOM = "custom"


# parameter names each family requires, in CLI order
FAMILY_PARAMS: Dict[FamilyTag, Tuple[str, ...]] = {
    FamilyTag.CUBIC_PT: ("a",),
    FamilyTag.QUARTIC_I: ("a", "c"),
    FamilyTag.QUARTIC_II: ("b", "J"),
    FamilyTag.QUARTIC_EVEN: ("a",),
    FamilyTag.CUSTOM: (),
}


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def same_angle(a: float, b: float, tol: float = ANGLE_TOL) -> bool:
    return abs(wrap_angle(a - b)) <= tol


@dataclass(frozen=True)
class StokesSector:
    d: int
    j: int
    center_angle: float
    half_width: float

    def contains(self, theta: float) -> bool:
        return abs(wrap_angle(theta - self.center_angle)) < self.half_width - ANGLE_TOL


def stokes_sectors(d: int, leading: complex = 1.0) -> List[StokesSector]:
    """
    The d+2 Stokes sectors of a degree-d potential with leading coefficient `leading`.

    For a monic potential sector j is centred at 2*pi*j/(d+2); a general
    leading coefficient c rotates every centre by -arg(c)/(d+2).
    """
    if d < 1:
        raise InvalidParams(f"Stokes sectors need degree >= 1, got {d}", d=d)
    m = d + 2
    shift = cmath.phase(leading) if leading != 0 else 0.0
    return [
        StokesSector(d=d, j=j, center_angle=(2.0 * math.pi * j - shift) / m, half_width=math.pi / m)
        for j in range(m)
    ]


def sector_index(theta: float, d: int, leading: complex = 1.0) -> Optional[int]:
    """Index of the open sector containing theta; None on a sector boundary."""
    m = d + 2
    shift = cmath.phase(leading) if leading != 0 else 0.0
    j = int(round((theta * m + shift) / (2.0 * math.pi))) % m
    sector = stokes_sectors(d, leading)[j]
    return j if sector.contains(theta) else None


def sectors_adjacent(j: int, k: int, d: int) -> bool:
    return (j - k) % (d + 2) in {1, d + 1}


@dataclass(frozen=True)
class Problem:
    """
    A boundary eigenvalue problem y'' = (V(z) - mu) y, recessive along two rays.

    The family's own eigenvalue lambda maps to the internal mu through
    mu = mu_sign * lambda + mu_shift.
    """

    V: CPoly
    theta_a: float
    theta_b: float
    family: FamilyTag = FamilyTag.CUSTOM
    params: Tuple[Tuple[str, float], ...] = ()
    mu_sign: float = 1.0
    mu_shift: complex = 0.0
    normalized_family: bool = False

    def mu_of_lambda(self, lam):
        return self.mu_sign * lam + self.mu_shift

    def lambda_of_mu(self, mu):
        return self.mu_sign * (mu - self.mu_shift)

    @property
    def degree(self) -> int:
        return self.V.degree

    def param(self, name: str) -> float:
        return dict(self.params)[name]

    @property
    def is_conjugate_symmetric(self) -> bool:
        if not self.V.is_real() or complex(self.mu_shift).imag != 0:
            return False
        a, b = self.theta_a, self.theta_b
        swapped = same_angle(-a, b) and same_angle(-b, a)
        fixed = same_angle(-a, a) and same_angle(-b, b)
        return swapped or fixed

    @property
    def is_even(self) -> bool:
        return all(c == 0 for c in self.V.coeffs[1::2])

    def label(self) -> str:
        inner = ",".join(f"{k}={_fmt_param(v)}" for k, v in self.params)
        return f"{self.family.value}({inner})"


def _fmt_param(value: float) -> str:
    return f"{value:.17g}" if isinstance(value, float) else str(value)


def _real_param(params: Dict[str, Union[float, complex]], name: str, tag: FamilyTag) -> float:
    if name not in params or params[name] is None:
        raise InvalidParams(f"{tag.value} needs parameter {name}", family=tag.value)
    value = complex(params[name])
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise InvalidParams(f"{name}={params[name]} is not finite", family=tag.value)
    if value.imag != 0:
        raise InvalidParams(f"{tag.value} takes real {name}, got {params[name]}", family=tag.value)
    return float(value.real)


def make_family(tag: Union[FamilyTag, str], **params) -> Problem:
    """
    Build one of the named problems.

    cubic-pt(a):    -y'' + (z^3 - a z) y = -lambda y, y(+-i inf) = 0
    quartic-i(a,c): -y'' + (-z^4 + a z^2 + c z) y = -lambda y, y(+-i inf) = 0
    quartic-ii(b,J): -y'' + (z^4 - 2b z^2 + 2J z) y = lambda y, rays +-pi/3
    quartic-even(a): -y'' + (z^4 + a z^2) y = lambda y, y(+-inf) = 0
    custom(V, rays): y'' = (V - lambda) y along the two given rays
    """
    tag = FamilyTag(tag)

    if tag is FamilyTag.CUBIC_PT:
        a = _real_param(params, "a", tag)
        return Problem(
            V=CPoly((0.0, -a, 0.0, 1.0)),
            theta_a=math.pi / 2,
            theta_b=-math.pi / 2,
            family=tag,
            params=(("a", a),),
            mu_sign=-1.0,
            normalized_family=True,
        )

    if tag is FamilyTag.QUARTIC_I:
        a = _real_param(params, "a", tag)
        c = _real_param(params, "c", tag)
        return Problem(
            V=CPoly((0.0, c, a, 0.0, -1.0)),
            theta_a=math.pi / 2,
            theta_b=-math.pi / 2,
            family=tag,
            params=(("a", a), ("c", c)),
            mu_sign=-1.0,
        )

    if tag is FamilyTag.QUARTIC_II:
        b = _real_param(params, "b", tag)
        J = _real_param(params, "J", tag)
        return Problem(
            V=CPoly((0.0, 2.0 * J, -2.0 * b, 0.0, 1.0)),
            theta_a=math.pi / 3,
            theta_b=-math.pi / 3,
            family=tag,
            params=(("b", b), ("J", J)),
            normalized_family=True,
        )

    if tag is FamilyTag.QUARTIC_EVEN:
        a = _real_param(params, "a", tag)
        return Problem(
            V=CPoly((0.0, 0.0, a, 0.0, 1.0)),
            theta_a=0.0,
            theta_b=math.pi,
            family=tag,
            params=(("a", a),),
            normalized_family=True,
        )

    V = params.get("V")
    rays = params.get("rays")
    if V is None or rays is None:
        raise InvalidParams("custom problems need V and rays", family=tag.value)
    if isinstance(V, str):
        V = parse_poly(V)
    if isinstance(rays, str):
        rays = parse_rays(rays)
    if len(rays) != 2 or not all(math.isfinite(t) for t in rays):
        raise InvalidParams(f"custom problems need two finite ray angles, got {rays}")
    if any(not (math.isfinite(c.real) and math.isfinite(c.imag)) for c in V.coeffs):
        raise InvalidParams("potential has non-finite coefficients")
    if V.degree < 1:
        raise InvalidParams("potential must have degree >= 1", degree=V.degree)
    return Problem(V=V, theta_a=float(rays[0]), theta_b=float(rays[1]), family=tag)


def parse_angle(text: str) -> float:
    """'pi/3', '-pi/2', '1.047' -> radians"""
    try:
        value = sp.sympify(text.strip(), locals={"pi": sp.pi})
        return float(sp.N(value))
    except (sp.SympifyError, TypeError, ValueError) as exc:
        raise InvalidParams(f"Can't read {text!r} as an angle: {exc}")


def parse_rays(text: Union[str, Sequence[float]]) -> Tuple[float, float]:
    if not isinstance(text, str):
        return tuple(float(t) for t in text)
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise InvalidParams(f"--rays takes two angles, got {text!r}")
    return parse_angle(parts[0]), parse_angle(parts[1])


@dataclass(frozen=True)
class ProblemDiagnostics:
    degree: int
    sector_a: int
    sector_b: int
    normalized: bool
    recession_margin: float
    notes: Tuple[str, ...] = field(default_factory=tuple)


def recession_margin(V: CPoly, theta: float, mu0: complex = 0.0, radii: Sequence[float] = RECESSION_RADII) -> float:
    """
    Smallest |Re(e^{i theta} s)|/|s| along the ray, s = sqrt(V - mu0) followed
    continuously in t. Negative when the decaying branch flips along the ray.
    """
    e = cmath.exp(1j * theta)
    prev = None
    sign = None
    margin = math.inf
    for t in radii:
        s = cmath.sqrt(poly_eval(V, t * e) - mu0)
        if prev is not None and abs(s - prev) > abs(s + prev):
            s = -s
        prev = s
        if abs(s) == 0:
            return 0.0
        proj = (e * s).real / abs(s)
        if sign is None:
            sign = 1.0 if proj >= 0 else -1.0
        margin = min(margin, sign * proj)
    return margin


def validate_problem(problem: Problem, mu0: complex = 0.0) -> ProblemDiagnostics:
    """Check sector placement, normalization and ray recession of a problem."""
    V = problem.V
    d = V.degree
    leading = V.leading

    j = sector_index(problem.theta_a, d, leading)
    k = sector_index(problem.theta_b, d, leading)
    for name, theta, idx in (("theta_a", problem.theta_a, j), ("theta_b", problem.theta_b, k)):
        if idx is None:
            raise RayNotRecessive(
                f"{name}={theta:.6g} lies on a Stokes-sector boundary of the degree-{d} potential",
                ray=name,
            )
    if j == k:
        raise AdjacentSectors(f"both rays lie in sector S{j}", sector_a=j, sector_b=k)
    if sectors_adjacent(j, k, d):
        raise AdjacentSectors(f"sectors S{j} and S{k} are adjacent", sector_a=j, sector_b=k)

    normalized = leading == 1 and (d < 1 or V.coeffs[d - 1] == 0)
    if problem.normalized_family and not normalized:
        raise NotNormalized(
            f"{problem.family.value} potential must be z^{d} + O(z^{d - 2}), got {V}",
            family=problem.family.value,
        )

    margin = min(
        recession_margin(V, problem.theta_a, mu0),
        recession_margin(V, problem.theta_b, mu0),
    )
    if margin < RECESSION_MARGIN:
        raise RayNotRecessive(
            "no solution decays exponentially along a boundary ray", margin=margin
        )

    log.debug("Validated %s: sectors S%d, S%d, margin %.3g", problem.label(), j, k, margin)
    return ProblemDiagnostics(
        degree=d, sector_a=j, sector_b=k, normalized=normalized, recession_margin=margin
    )
