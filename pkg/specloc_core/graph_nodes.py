import logging
import math
import re
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Tuple, TypedDict

import numpy as np
import pandas as pd
import sympy as sp

from specloc_core.config import Settings, check_rtol, get_settings
from specloc_core.errors import ArgumentError, DegenerateEigenvalue, SpeclocError
from specloc_core.locus import (
    ZERO_RECT,
    CurveTrace,
    qes_real_components,
    section_Sn,
    trace_gamma_cubic,
    trace_gamma_nm,
    trace_z_real,
    turning_points,
)
from specloc_core.oscillator import (
    FAMILY_PARAMS,
    FamilyTag,
    Problem,
    make_family,
    stokes_sectors,
    validate_problem,
)
from specloc_core.qes import (
    bethe_residuals,
    bethe_seeds,
    bethe_solve,
    c_constant_check,
    darboux,
    darboux_spectrum_check,
    equivalence_check,
    lambda_from_p,
    level_crossings,
    qes_points,
    spectral_poly,
)
from specloc_core.polyalg import CPoly
from specloc_core.shooting import ShotOptions, determinant, determinant_real, integrate_ray
from specloc_core.spectrum import (
    complex_eigenvalues_box,
    count_zeros,
    eigen_records,
    real_eigenvalues,
    reality_check,
)
from specloc_core.tables import (
    crossings_to_frame,
    eigen_to_frame,
    qes_to_frame,
    render_table,
    traces_to_frame,
)

log = logging.getLogger(__name__)

Pair = Tuple[float, float]
Box = Tuple[float, float, float, float]

COMMANDS = ("sectors", "eig", "det", "trace", "qes", "bethe", "darboux", "crossings", "reality")
PROBLEM_COMMANDS = {"sectors", "eig", "det"}
EIG_GRID_SPACING = 0.1
FLAG_NAMES = {"J": "--j", "b_min": "--bmin", "k_max": "--kmax"}
IMAGINARY_SUFFIX = re.compile(r"(?<=[0-9.])\s*[iI]\b")


@dataclass(frozen=True)
class RunConfig:
    """Validated flags of one invocation, with tolerances defaulted from Settings."""

    command: str
    family: Optional[str] = None
    params: Tuple[Tuple[str, float], ...] = ()
    potential: Optional[str] = None
    rays: Optional[str] = None
    n: Optional[int] = None
    m: Optional[int] = None
    d: Optional[int] = None
    mu: Optional[complex] = None
    value_range: Optional[Pair] = None
    lam_range: Optional[Pair] = None
    box: Optional[Box] = None
    ode_rtol: float = 1e-10
    eig_tol: float = 1e-8
    trace_step: float = 0.05
    radius: Optional[float] = None
    b_min: Optional[float] = None
    k_max: Optional[int] = None
    count: Optional[int] = None
    branch: int = 0
    zeros: bool = False
    workers: int = 1
    max_points: int = 4000
    out: Optional[str] = None
    fmt: str = "csv"

    def param(self, name: str) -> Optional[float]:
        return dict(self.params).get(name)

    def require(self, name: str) -> Any:
        value = self.param(name) if name in {"a", "b", "c", "J"} else getattr(self, name)
        if value is None:
            raise ArgumentError(
                f"{self.command} needs {FLAG_NAMES.get(name, '--' + name)}", command=self.command
            )
        return value

    def shot_options(self) -> ShotOptions:
        return ShotOptions(rtol=self.ode_rtol, R=self.radius)

    def header(self, argv: List[str]) -> str:
        return (
            f"specloc {' '.join(argv)} | rtol={self.ode_rtol:g} "
            f"eig_tol={self.eig_tol:g} step={self.trace_step:g}"
        )


class RunState(TypedDict, total=False):
    argv: List[str]
    args: Dict[str, Any]
    config: RunConfig
    problem: Optional[Problem]
    result: Dict[str, Any]
    output: Optional[str]
    error: Optional[str]
    exit_code: int


def _fail(state: RunState, exc: Exception) -> RunState:
    if isinstance(exc, SpeclocError):
        state["error"] = exc.describe()
        state["exit_code"] = exc.exit_code
    else:
        log.exception("Unexpected failure")
        state["error"] = f"error={type(exc).__name__} module=specloc message=System Error: {exc}"
        state["exit_code"] = 2
    return state


# ---------- Flag parsing ----------

def parse_number(text: str) -> complex:
    """'1', '-pi/2', '2+3i', '1e-3' -> complex"""
    cleaned = IMAGINARY_SUFFIX.sub("*I", text.strip().replace("^", "**"))
    try:
        value = sp.sympify(cleaned, locals={"i": sp.I, "I": sp.I, "pi": sp.pi})
        return complex(sp.N(value))
    except (sp.SympifyError, TypeError, ValueError) as exc:
        raise ArgumentError(f"Can't read {text!r} as a number: {exc}")


def _parse_real(text: str, flag: str) -> float:
    value = parse_number(text)
    if value.imag != 0 or not math.isfinite(value.real):
        raise ArgumentError(f"{flag} takes finite real numbers, got {text!r}", flag=flag)
    return value.real


def parse_reals(text: Optional[str], count: int, flag: str) -> Optional[Tuple[float, ...]]:
    if text is None:
        return None
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != count:
        raise ArgumentError(f"{flag} takes {count} comma-separated numbers, got {text!r}", flag=flag)
    return tuple(_parse_real(p, flag) for p in parts)


def _nonempty(pair: Optional[Tuple[float, ...]], flag: str) -> None:
    if pair is None:
        return
    for lo, hi in zip(pair[::2], pair[1::2]):
        if not lo < hi:
            raise ArgumentError(f"{flag} must be a nonempty interval, got {pair}", flag=flag)


def _positive(value: Optional[float], flag: str) -> None:
    if value is not None and not (math.isfinite(value) and value > 0):
        raise ArgumentError(f"{flag} must be positive, got {value}", flag=flag)


def run_config_from_args(args: Dict[str, Any], settings: Settings) -> RunConfig:
    command = args.get("command")
    if command not in COMMANDS:
        raise ArgumentError(f"Unknown command {command!r}", command=command)

    params = tuple(
        (name, float(args[key]))
        for name, key in (("a", "a"), ("b", "b"), ("c", "c"), ("J", "j"))
        if args.get(key) is not None
    )
    for name, value in params:
        if not math.isfinite(value):
            raise ArgumentError(f"--{name.lower()} must be finite, got {value}", flag=name)

    value_range = parse_reals(args.get("range"), 2, "--range")
    lam_range = parse_reals(args.get("lam_range"), 2, "--lam-range")
    box = parse_reals(args.get("box"), 4, "--box")
    for pair, flag in ((value_range, "--range"), (lam_range, "--lam-range"), (box, "--box")):
        _nonempty(pair, flag)

    ode_rtol = check_rtol(args["rtol"]) if args.get("rtol") is not None else settings.ode_rtol
    eig_tol = args["eig_tol"] if args.get("eig_tol") is not None else settings.eig_tol
    trace_step = args["step"] if args.get("step") is not None else settings.trace_step
    for value, flag in ((eig_tol, "--eig-tol"), (trace_step, "--step"), (args.get("radius"), "--radius")):
        _positive(value, flag)

    for key in ("n", "m", "count", "kmax", "d"):
        if args.get(key) is not None and args[key] < 0:
            raise ArgumentError(f"--{key} must be non-negative, got {args[key]}", flag=key)

    mu = parse_number(args["mu"]) if args.get("mu") is not None else None
    return RunConfig(
        command=command,
        family=args.get("family"),
        params=params,
        potential=args.get("potential"),
        rays=args.get("rays"),
        n=args.get("n"),
        m=args.get("m"),
        d=args.get("d"),
        mu=mu,
        value_range=value_range,
        lam_range=lam_range,
        box=box,
        ode_rtol=ode_rtol,
        eig_tol=eig_tol,
        trace_step=trace_step,
        radius=args.get("radius"),
        b_min=args.get("bmin"),
        k_max=args.get("kmax"),
        count=args.get("count"),
        branch=args.get("branch") or 0,
        zeros=bool(args.get("zeros")),
        workers=args.get("workers") or 1,
        max_points=args.get("max_points") or 4000,
        out=args.get("out"),
        fmt=args.get("format") or "csv",
    )


# ---------- Node: Configuration ----------

def build_config(state: RunState) -> RunState:
    try:
        state["config"] = run_config_from_args(state.get("args") or {}, get_settings())
    except Exception as e:
        return _fail(state, e)
    log.debug("Run config: %s", state["config"])
    return state


def route_after_config(state: RunState) -> str:
    if state.get("error"):
        return "end_with_error"
    return "build_problem"


# ---------- Node: Problem construction ----------

def problem_from_config(cfg: RunConfig) -> Problem:
    tag = FamilyTag(cfg.family or "custom")
    if tag is FamilyTag.CUSTOM:
        return make_family(tag, V=cfg.potential, rays=cfg.rays)
    return make_family(tag, **{name: cfg.param(name) for name in FAMILY_PARAMS[tag]})


def build_problem(state: RunState) -> RunState:
    cfg = state["config"]
    state["problem"] = None
    if cfg.command not in PROBLEM_COMMANDS:
        return state
    if cfg.command == "sectors" and cfg.family is None and cfg.potential is None:
        return state
    try:
        problem = problem_from_config(cfg)
        validate_problem(problem)
    except Exception as e:
        return _fail(state, e)
    log.info("Problem %s, rays %.6g and %.6g", problem.label(), problem.theta_a, problem.theta_b)
    state["problem"] = problem
    return state


def route_after_problem(state: RunState) -> str:
    if state.get("error"):
        return "end_with_error"
    return "run_command"


# ---------- Command: sectors ----------

def cmd_sectors(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    if problem is not None:
        d, leading = problem.degree, problem.V.leading
    else:
        d, leading = cfg.require("d"), 1.0
    rays = {}
    if problem is not None:
        rays = {"A": problem.theta_a, "B": problem.theta_b}
    rows = []
    for s in stokes_sectors(d, leading):
        rows.append(
            {
                "j": s.j,
                "center_angle": s.center_angle,
                "half_width": s.half_width,
                "lo": s.center_angle - s.half_width,
                "hi": s.center_angle + s.half_width,
                "contains": "".join(name for name, theta in rays.items() if s.contains(theta)),
            }
        )
    notes = [f"degree={d}"] + ([problem.label()] if problem is not None else [])
    return pd.DataFrame(rows), notes


# ---------- Command: eig ----------

def cmd_eig(cfg: RunConfig, problem: Problem) -> Tuple[pd.DataFrame, List[str]]:
    opts = cfg.shot_options()
    if cfg.box is not None:
        values = complex_eigenvalues_box(problem, cfg.box, opts=opts, tol=cfg.eig_tol)
        method = "box"
    elif cfg.value_range is not None:
        lo, hi = cfg.value_range
        grid_n = max(64, int(math.ceil((hi - lo) / EIG_GRID_SPACING)))
        values = real_eigenvalues(problem, lo, hi, grid_n, tol=cfg.eig_tol, workers=cfg.workers, opts=opts)
        method = "real-scan"
    else:
        raise ArgumentError("eig needs --range or --box", command="eig")

    records = eigen_records(problem, values, method, opts)
    if cfg.zeros:
        counted = []
        for rec in records:
            zc = count_zeros(problem, rec.lam, ZERO_RECT, opts)
            counted.append(replace(rec, n_real_zeros=zc.n_real, n_nonreal_zeros=zc.n_nonreal))
        records = counted
    notes = [f"{problem.label()} rays={problem.theta_a:.17g},{problem.theta_b:.17g} count={len(records)}"]
    return eigen_to_frame(records), notes


# ---------- Command: det ----------

def cmd_det(cfg: RunConfig, problem: Problem) -> Tuple[pd.DataFrame, List[str]]:
    mu = cfg.require("mu")
    opts = cfg.shot_options()
    F = determinant(problem, mu, opts)
    F_real = math.nan
    if problem.is_conjugate_symmetric and mu.imag == 0:
        F_real = determinant_real(problem, mu.real, opts)
    shot_a = integrate_ray(problem, mu, problem.theta_a, opts)
    shot_b = integrate_ray(problem, mu, problem.theta_b, opts)
    lam = complex(problem.lambda_of_mu(mu))
    row = {
        "lambda_re": lam.real,
        "lambda_im": lam.imag,
        "mu_re": mu.real,
        "mu_im": mu.imag,
        "F_re": F.real,
        "F_im": F.imag,
        "F_real": F_real,
        "R_a": shot_a.R_used,
        "R_b": shot_b.R_used,
        "steps_a": shot_a.steps,
        "steps_b": shot_b.steps,
    }
    return pd.DataFrame([row]), [problem.label()]


# ---------- Command: trace ----------

def trace_notes(traces: List[CurveTrace]) -> List[str]:
    notes = []
    for tr in traces:
        folds = " ".join(f"({x:.10g},{lam:.10g})" for x, lam in turning_points(tr))
        notes.append(
            f"{tr.branch_label}: points={len(tr)} closed={int(tr.closed)} stop={tr.stop_reason} "
            f"zeros={tr.zero_count} turning={folds or '-'}"
        )
        for x, lam in tr.singular_points:
            notes.append(f"{tr.branch_label}: singular point at {tr.x_name}={x:.10g} lambda={lam:.10g}")
    return notes


def cmd_trace(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    tag = FamilyTag(cfg.family or "custom")
    step, budget = cfg.trace_step, cfg.max_points

    if tag is FamilyTag.CUBIC_PT:
        a_range = cfg.value_range or (-6.0, 8.0)
        traces = [trace_gamma_cubic(cfg.require("n"), a_range, step, max_points=budget)]
    elif tag is FamilyTag.QUARTIC_I:
        n_max = cfg.n if cfg.n is not None else 3
        traces = section_Sn(cfg.require("a"), n_max, cfg.value_range, step, budget)
    elif tag is FamilyTag.QUARTIC_II and cfg.n is not None:
        b_range = cfg.value_range or (-6.0, 8.0)
        if cfg.m is not None:
            traces = [trace_gamma_nm(cfg.n, cfg.m, b_range, step, budget)]
        else:
            traces = qes_real_components(cfg.n, b_range, step, budget)
    elif tag is FamilyTag.QUARTIC_II:
        traces = trace_z_real(
            cfg.require("J"),
            cfg.value_range or (-4.0, 4.0),
            cfg.lam_range or (-20.0, 20.0),
            step,
            budget,
        )
    else:
        raise ArgumentError(f"trace is not available for family {tag.value}", family=tag.value)
    return traces_to_frame(traces), trace_notes(traces)


# ---------- Command: qes ----------

def _coeff_text(p: CPoly) -> str:
    return ", ".join(
        f"{c.real:.17g}" if c.imag == 0 else f"{c.real:.17g}{c.imag:+.17g}i" for c in map(complex, p.coeffs)
    )


def cmd_qes(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    n, b = cfg.require("n"), cfg.require("b")
    spoly = spectral_poly(n, b)
    points = qes_points(n, b)
    notes = [f"Q_{n + 1}(lambda) at b={b:.17g}, ascending: {_coeff_text(spoly.Q)}"]

    try:
        constants = c_constant_check(n, b)
        notes.append(f"constant convention={constants[0].convention if constants else '-'}")
    except DegenerateEigenvalue as e:
        constants = None
        notes.append(f"constant check skipped: {e}")

    extra = []
    for i, pt in enumerate(points):
        report = equivalence_check(pt.p, b)
        row = {
            "div_scaled": report.div_scaled,
            "residue_scaled": report.residue_scaled,
            "bethe_residual": report.bethe_residual,
            "n_real_roots": pt.n_real_roots,
        }
        if constants is not None:
            rec = constants[i]
            row.update(
                {
                    "C_identity_re": rec.C_from_identity.real,
                    "C_identity_im": rec.C_from_identity.imag,
                    "C_formula_re": rec.C_from_formula.real,
                    "C_formula_im": rec.C_from_formula.imag,
                    "C_match": int(rec.match),
                }
            )
        extra.append(row)
    return qes_to_frame(points, extra), notes


# ---------- Command: bethe ----------

def cmd_bethe(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    n, b = cfg.require("n"), cfg.require("b")
    roots = bethe_solve(n, b, seeds=bethe_seeds(n, b, branch=cfg.branch) if n else None)
    z = np.array(roots, dtype=complex)
    residuals = bethe_residuals(z, b) if n else np.zeros(0, dtype=complex)
    rows = [
        {"k": k, "z_re": zk.real, "z_im": zk.imag, "residual": float(abs(rk))}
        for k, (zk, rk) in enumerate(zip(roots, residuals))
    ]
    p = CPoly.from_roots(roots) if n else CPoly((1.0,))
    lam = lambda_from_p(n, b, p)
    notes = [f"n={n} b={b:.17g} branch={cfg.branch} lambda={lam.real:.17g}{lam.imag:+.17g}i"]
    return pd.DataFrame(rows, columns=["k", "z_re", "z_im", "residual"]), notes


# ---------- Command: darboux ----------

def cmd_darboux(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    n, b = cfg.require("n"), cfg.require("b")
    report = darboux(n, b)
    check = darboux_spectrum_check(n + 1, b, count=cfg.count or 5)
    notes = [
        f"W~ = {_coeff_text(report.W_poly)} (deviation {report.deviation:.3g})",
        f"V_new = {_coeff_text(report.V_new)} (error {report.potential_error:.3g})",
        f"qes eigenvalues: {', '.join(f'{complex(q).real:.17g}' for q in check.qes)}",
        f"max mismatch={check.max_mismatch:.3g}",
    ]
    rows = [
        {"index": i, "non_qes": a, "transformed": t, "diff": abs(a - t)}
        for i, (a, t) in enumerate(zip(check.non_qes, check.transformed))
    ]
    return pd.DataFrame(rows, columns=["index", "non_qes", "transformed", "diff"]), notes


# ---------- Command: crossings ----------

def cmd_crossings(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    J = cfg.require("J")
    if not float(J).is_integer():
        raise ArgumentError(f"crossings needs an integer --j, got {J}", J=J)
    crossings = level_crossings(int(J), cfg.require("b_min"), cfg.require("k_max"), opts=cfg.shot_options())
    return crossings_to_frame(crossings), [f"J={int(J)} found={len(crossings)}"]


# ---------- Command: reality ----------

def cmd_reality(cfg: RunConfig, problem: Optional[Problem]) -> Tuple[pd.DataFrame, List[str]]:
    J, b = cfg.require("J"), cfg.require("b")
    report = reality_check(b, J, cfg.count or 8, opts=cfg.shot_options())
    rows = [
        {"index": i, "lambda_re": lam.real, "lambda_im": lam.imag, "is_qes": int(flag)}
        for i, (lam, flag) in enumerate(zip(report.eigenvalues, report.is_qes))
    ]
    notes = [
        f"box_count={report.box_count} consistent={int(report.consistent)} "
        f"checked={report.checked} max_imag={report.max_imag:.3g}"
    ]
    return pd.DataFrame(rows, columns=["index", "lambda_re", "lambda_im", "is_qes"]), notes


HANDLERS: Dict[str, Callable[[RunConfig, Optional[Problem]], Tuple[pd.DataFrame, List[str]]]] = {
    "sectors": cmd_sectors,
    "eig": cmd_eig,
    "det": cmd_det,
    "trace": cmd_trace,
    "qes": cmd_qes,
    "bethe": cmd_bethe,
    "darboux": cmd_darboux,
    "crossings": cmd_crossings,
    "reality": cmd_reality,
}


# ---------- Node: Computation ----------

def run_command(state: RunState) -> RunState:
    cfg = state["config"]
    try:
        frame, notes = HANDLERS[cfg.command](cfg, state.get("problem"))
    except Exception as e:
        return _fail(state, e)
    log.info("%s produced %d rows", cfg.command, len(frame))
    state["result"] = {"frame": frame, "notes": notes}
    return state


def route_after_command(state: RunState) -> str:
    if state.get("error"):
        return "end_with_error"
    return "render_output"


# ---------- Node: Output ----------

def render_output(state: RunState) -> RunState:
    cfg = state["config"]
    result = state["result"]
    try:
        state["output"] = render_table(
            result["frame"], cfg.header(state.get("argv") or []), cfg.fmt, result["notes"]
        )
    except Exception as e:
        return _fail(state, e)
    state["exit_code"] = 0
    return state


def end_with_error(state: RunState) -> RunState:
    state["output"] = None
    if not state.get("exit_code"):
        state["exit_code"] = 2
    return state
