"""
Columnar output of the CLI and its inverse.

Every table is a pandas DataFrame rendered as CSV (17 significant digits)
or as a JSON list of records, preceded by `#` comment lines; the first
records the invocation. The typed readers turn a parsed table back into the
objects the computation returned.
"""
import io
import json
import math
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from specloc_core.errors import TableFormatError
from specloc_core.locus import CurveTrace, TracePoint
from specloc_core.polyalg import CPoly, poly_roots
from specloc_core.qes import LevelCrossing, QESPoint
from specloc_core.spectrum import EigenRecord

FLOAT_FORMAT = "%.17g"
FORMATS = ("csv", "json")

TRACE_COLUMNS = ["branch", "point_index", "arclength", "lambda", "residual", "dx_ds", "closed"]
CROSSING_COLUMNS = ["k", "b_k", "lambda_k", "b_asym", "ratio"]
QES_COLUMNS = ["n", "b", "lambda_re", "lambda_im", "degenerate"]
EIGEN_COLUMNS = [
    "family",
    "params",
    "index",
    "lambda_re",
    "lambda_im",
    "n_real_zeros",
    "n_nonreal_zeros",
    "method",
    "residual",
]


def _validate_columns(df: pd.DataFrame, required: Iterable[str], kind: str) -> None:
    missing = [col for col in required if col not in df.columns]
    if missing:
        raise TableFormatError(
            f"{kind} table is missing required columns: {', '.join(missing)}", kind=kind
        )


def _optional_int(value: Any) -> Optional[int]:
    if value is None or (isinstance(value, float) and math.isnan(value)) or value is pd.NA:
        return None
    return int(value)


# ---------- Rendering ----------

def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if value is pd.NA:
        return None
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def render_table(df: pd.DataFrame, header: str, fmt: str = "csv", notes: Sequence[str] = ()) -> str:
    """Serialize `df` after the invocation comment and any note lines; output is deterministic."""
    if fmt not in FORMATS:
        raise TableFormatError(f"Unknown output format {fmt!r}", fmt=fmt)
    comment = "".join("# " + line.replace("\n", " ") + "\n" for line in [header, *notes])
    if fmt == "csv":
        return comment + df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    records = [
        {key: (None if value is pd.NA else value) for key, value in row.items()}
        for row in df.to_dict(orient="records")
    ]
    body = json.dumps({"columns": list(df.columns), "rows": records}, default=_json_default)
    return comment + body + "\n"


def parse_table(text: str, fmt: str = "csv") -> pd.DataFrame:
    """Inverse of render_table; lines starting with '#' are skipped."""
    if fmt not in FORMATS:
        raise TableFormatError(f"Unknown output format {fmt!r}", fmt=fmt)
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    if not body.strip():
        raise TableFormatError("table has no data lines")
    if fmt == "csv":
        try:
            return pd.read_csv(io.StringIO(body), float_precision="round_trip", keep_default_na=False, na_values=[""])
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise TableFormatError(f"Can't parse CSV table: {exc}")
    try:
        payload = json.loads(body)
        return pd.DataFrame(payload["rows"], columns=payload["columns"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TableFormatError(f"Can't parse JSON table: {exc}")


# ---------- Curve traces ----------

def traces_to_frame(traces: Sequence[CurveTrace]) -> pd.DataFrame:
    """
    One row per trace point. The continuation parameter and an optional
    fixed parameter get their own columns, named after the parameters,
    between `arclength` and `lambda`.
    """
    x_name = traces[0].x_name if traces else "x"
    fixed_names = [name for name, _ in traces[0].fixed] if traces else []
    rows: List[Dict[str, Any]] = []
    for tr in traces:
        fixed = dict(tr.fixed)
        for i, pt in enumerate(tr.points):
            row: Dict[str, Any] = {"branch": tr.branch_label, "point_index": i, "arclength": pt.s, x_name: pt.x}
            for name in fixed_names:
                row[name] = fixed.get(name, math.nan)
            row.update(
                {"lambda": pt.lam, "residual": pt.residual, "dx_ds": pt.dx_ds, "closed": int(tr.closed)}
            )
            rows.append(row)
    columns = TRACE_COLUMNS[:3] + [x_name] + fixed_names + TRACE_COLUMNS[3:]
    return pd.DataFrame(rows, columns=columns)


def _param_columns(df: pd.DataFrame) -> List[str]:
    names = list(df.columns)
    return names[names.index("arclength") + 1 : names.index("lambda")]


def frame_to_traces(df: pd.DataFrame) -> List[CurveTrace]:
    _validate_columns(df, TRACE_COLUMNS, "trace")
    params = _param_columns(df)
    if not params:
        raise TableFormatError("trace table has no parameter column")
    x_name, fixed_names = params[0], params[1:]

    traces: List[CurveTrace] = []
    for label, group in df.groupby("branch", sort=False):
        group = group.sort_values("point_index")
        first = group.iloc[0]
        points = [
            TracePoint(
                s=float(row["arclength"]),
                x=float(row[x_name]),
                lam=float(row["lambda"]),
                residual=float(row["residual"]),
                dx_ds=float(row["dx_ds"]),
            )
            for _, row in group.iterrows()
        ]
        traces.append(
            CurveTrace(
                points=points,
                branch_label=str(label),
                closed=bool(int(first["closed"])),
                x_name=x_name,
                fixed=tuple((name, float(first[name])) for name in fixed_names),
            )
        )
    return traces


# ---------- Level crossings ----------

def crossings_to_frame(crossings: Sequence[LevelCrossing]) -> pd.DataFrame:
    rows = [
        {"k": c.k, "b_k": c.b_k, "lambda_k": c.lambda_k, "b_asym": c.b_asymptotic, "ratio": c.ratio}
        for c in crossings
    ]
    return pd.DataFrame(rows, columns=CROSSING_COLUMNS)


def frame_to_crossings(df: pd.DataFrame) -> List[LevelCrossing]:
    _validate_columns(df, CROSSING_COLUMNS, "crossing")
    return [
        LevelCrossing(
            k=int(row["k"]),
            b_k=float(row["b_k"]),
            lambda_k=float(row["lambda_k"]),
            b_asymptotic=float(row["b_asym"]),
            ratio=float(row["ratio"]),
        )
        for _, row in df.iterrows()
    ]


# ---------- QES points ----------

def qes_to_frame(points: Sequence[QESPoint], extra: Optional[Sequence[Dict[str, Any]]] = None) -> pd.DataFrame:
    """
    Coefficients of the monic factor p follow as p{k}_re, p{k}_im, k = 0..n.
    `extra` adds per-point diagnostic columns after `degenerate`.
    """
    n = points[0].n if points else 0
    coeff_cols = [f"p{k}_{part}" for k in range(n + 1) for part in ("re", "im")]
    rows: List[Dict[str, Any]] = []
    for i, pt in enumerate(points):
        lam = complex(pt.lam)
        row: Dict[str, Any] = {
            "n": pt.n,
            "b": complex(pt.b).real,
            "lambda_re": lam.real,
            "lambda_im": lam.imag,
            "degenerate": int(pt.degenerate),
        }
        for k in range(n + 1):
            c = complex(pt.p.coeffs[k]) if k < len(pt.p.coeffs) else 0j
            row[f"p{k}_re"], row[f"p{k}_im"] = c.real, c.imag
        if extra is not None:
            row.update(extra[i])
        rows.append(row)
    extra_cols = list(extra[0]) if extra else []
    return pd.DataFrame(rows, columns=QES_COLUMNS[:4] + coeff_cols + QES_COLUMNS[4:] + extra_cols)


def frame_to_qes(df: pd.DataFrame) -> List[QESPoint]:
    _validate_columns(df, QES_COLUMNS, "qes")
    points: List[QESPoint] = []
    for _, row in df.iterrows():
        n = int(row["n"])
        _validate_columns(df, [f"p{k}_{part}" for k in range(n + 1) for part in ("re", "im")], "qes")
        p = CPoly(tuple(complex(row[f"p{k}_re"], row[f"p{k}_im"]) for k in range(n + 1)))
        roots: Tuple[complex, ...] = tuple(poly_roots(p)) if n >= 1 else ()
        points.append(
            QESPoint(
                n=n,
                b=complex(row["b"]),
                lam=complex(row["lambda_re"], row["lambda_im"]),
                p=p,
                roots=roots,
                degenerate=bool(int(row["degenerate"])),
            )
        )
    return points


# ---------- Eigenvalue lists ----------

def format_params(params: Sequence[Tuple[str, float]]) -> str:
    return ";".join(f"{name}={value!r}" for name, value in params)


def parse_params(text: str) -> Tuple[Tuple[str, float], ...]:
    if not isinstance(text, str) or not text:
        return ()
    out = []
    for item in text.split(";"):
        name, sep, value = item.partition("=")
        if not sep:
            raise TableFormatError(f"Can't read parameter {item!r}")
        out.append((name, float(value)))
    return tuple(out)


def eigen_to_frame(records: Sequence[EigenRecord]) -> pd.DataFrame:
    rows = []
    for rec in records:
        lam = complex(rec.lam)
        rows.append(
            {
                "family": rec.family,
                "params": format_params(rec.params),
                "index": rec.index,
                "lambda_re": lam.real,
                "lambda_im": lam.imag,
                "n_real_zeros": rec.n_real_zeros,
                "n_nonreal_zeros": rec.n_nonreal_zeros,
                "method": rec.method,
                "residual": rec.residual,
            }
        )
    df = pd.DataFrame(rows, columns=EIGEN_COLUMNS)
    for col in ("index", "n_real_zeros", "n_nonreal_zeros"):
        df[col] = df[col].astype("Int64")
    return df


def frame_to_eigen(df: pd.DataFrame) -> List[EigenRecord]:
    _validate_columns(df, EIGEN_COLUMNS, "eigen")
    return [
        EigenRecord(
            family=str(row["family"]),
            params=parse_params(row["params"]),
            lam=complex(row["lambda_re"], row["lambda_im"]),
            index=_optional_int(row["index"]),
            n_real_zeros=_optional_int(row["n_real_zeros"]),
            n_nonreal_zeros=_optional_int(row["n_nonreal_zeros"]),
            method=str(row["method"]),
            residual=float(row["residual"]),
        )
        for _, row in df.iterrows()
    ]
