from typing import Any, Dict, Optional, Union
from fractions import Fraction
from enum import Enum
from pathlib import Path
import json
import logging

from exactmat import Mat, FieldSpec, RATIONALS
from freealg import MatTuple
from approx import DefectReport
from stabilize import StabilizeOutcome

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class CodecError(ValueError):
    """Malformed JSON document."""


def format_rational(value: Union[int, Fraction]) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def field_from_json(data: Any) -> FieldSpec:
    """Accepts {"kind": "Q"}, {"kind": "Fp", "p": 101}, "Q" or "Fp(101)"."""
    try:
        if isinstance(data, str):
            text = data.strip()
            if text == "Q":
                return RATIONALS
            if text.startswith("Fp(") and text.endswith(")"):
                return FieldSpec.prime(int(text[3:-1]))
            raise CodecError(f"Unknown field {data!r}")
        if isinstance(data, dict):
            if data.get("kind") == "Q":
                return RATIONALS
            if data.get("kind") == "Fp":
                return FieldSpec.prime(int(data["p"]))
        raise CodecError(f"Unknown field {data!r}")
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, CodecError):
            raise
        raise CodecError(f"Bad field description {data!r}: {e}")


def mat_to_json(M: Mat) -> Dict[str, Any]:
    return {"field": M.field.to_json(), "rows": M.to_strings()}


def _rows_to_mat(field: FieldSpec, rows: Any, n: Optional[int] = None) -> Mat:
    if not isinstance(rows, list) or any(not isinstance(row, list) for row in rows):
        raise CodecError("Matrix rows must be a list of lists")
    n_cols = len(rows[0]) if rows else (n or 0)
    if any(len(row) != n_cols for row in rows):
        raise CodecError("Matrix rows have different lengths")
    try:
        return Mat.from_rows(field, [[_scalar(v) for v in row] for row in rows], n_cols)
    except (TypeError, ValueError) as e:
        raise CodecError(f"Bad matrix entry: {e}")


def _scalar(value: Any):
    if isinstance(value, (int, str)) and not isinstance(value, bool):
        return value
    raise CodecError(f"Matrix entries must be integers or rational strings, got {value!r}")


def mat_from_json(data: Any) -> Mat:
    if not isinstance(data, dict) or "rows" not in data:
        raise CodecError("Matrix document needs a 'rows' key")
    return _rows_to_mat(field_from_json(data.get("field", "Q")), data["rows"])


def tuple_to_json(T: MatTuple) -> Dict[str, Any]:
    return {"field": T.field.to_json(), "n": T.n, "mats": [M.to_strings() for M in T]}


def tuple_from_json(data: Any) -> MatTuple:
    if not isinstance(data, dict) or "mats" not in data:
        raise CodecError("Tuple document needs a 'mats' key")
    field = field_from_json(data.get("field", "Q"))
    mats = data["mats"]
    if not isinstance(mats, list):
        raise CodecError("'mats' must be a list of matrices")
    n = data.get("n")
    if n is None:
        if not mats:
            raise CodecError("An empty tuple needs an explicit 'n'")
        n = len(mats[0])
    if not isinstance(n, int) or n < 0:
        raise CodecError(f"Bad size {n!r}")
    converted = []
    for rows in mats:
        M = _rows_to_mat(field, rows, n)
        if M.shape != (n, n):
            raise CodecError(f"Matrix of shape {M.shape} in a tuple of size {n}")
        converted.append(M)
    return MatTuple(field, n, tuple(converted))


def to_jsonable(value: Any) -> Any:
    """Recursively convert Fractions to "p/q" strings; other exact values to plain JSON."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (int, Fraction)):
        return format_rational(value) if isinstance(value, Fraction) else value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Mat):
        return mat_to_json(value)
    if isinstance(value, MatTuple):
        return tuple_to_json(value)
    return str(value)


def report_to_json(report: DefectReport) -> Dict[str, Any]:
    return {
        "n": report.n,
        "max_defect": format_rational(report.max_defect),
        "exact": report.is_exact,
        "worst_relator": report.worst_relator,
        "relators": [{"index": i, "rank": r, "defect": format_rational(v)}
                     for (i, v), r in zip(report.per_relator, report.ranks)],
    }


def outcome_to_json(outcome: StabilizeOutcome, solution_file: Optional[str] = None) -> Dict[str, Any]:
    """Solution inline, or by file reference when solution_file is given."""
    data = {
        "verified": outcome.verified,
        "n": outcome.n,
        "distances": list(outcome.distances),
        "max_distance": outcome.max_distance,
        "diagnostics": to_jsonable(outcome.diagnostics),
    }
    if solution_file is not None:
        data["solution_file"] = solution_file
    else:
        data["solution"] = tuple_to_json(outcome.solution)
    return data


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise CodecError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}")


def write_json(data: Any, path: PathLike):
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def load_tuple(path: PathLike) -> MatTuple:
    return tuple_from_json(read_json(path))


def dump_tuple(T: MatTuple, path: PathLike):
    write_json(tuple_to_json(T), path)
    logger.debug(f"Wrote tuple of arity {T.arity}, size {T.n} to {path}")
