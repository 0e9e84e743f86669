"""File formats and report serialisation shared by the command line."""

from __future__ import annotations

import csv
import io as _io
import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import pairing as pr
from .errors import ParseError


def read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def load_structure(spec: str, cap: int = pr.DEFAULT_CAP) -> pr.PairingStructure:
    """A structure from a file path, or inline text starting with ``(``."""
    text = spec if spec.lstrip().startswith("(") else read_text(spec)
    return pr.parse_structure(text, cap)


def parse_matrix(text: str) -> np.ndarray:
    """JSON row-major array, or whitespace-separated rows (``#`` starts a comment)."""
    stripped = text.strip()
    if stripped.startswith("["):
        try:
            rows = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON matrix: {exc.msg}", exc.pos) from None
    else:
        rows = []
        for line in stripped.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                try:
                    rows.append([float(x) for x in line.replace(",", " ").split()])
                except ValueError as exc:
                    raise ParseError(f"bad matrix entry: {exc}") from None
    try:
        A = np.array(rows, dtype=float)
    except (ValueError, TypeError):
        raise ParseError("matrix rows have unequal lengths") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ParseError(f"expected a nonempty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ParseError("matrix entries must be finite")
    return A


def load_matrix(path) -> np.ndarray:
    return parse_matrix(read_text(path))


def clean(obj):
    """JSON-ready copy: numpy scalars and arrays unwrapped, non-finite floats as ``None``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def to_json(payload) -> str:
    return json.dumps(clean(payload), indent=2, allow_nan=False) + "\n"


def to_csv(payload: dict) -> str:
    """One ``field,value`` row per top-level key; values are JSON-encoded."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    for key, value in clean(payload).items():
        w.writerow([key, json.dumps(value, allow_nan=False)])
    return buf.getvalue()


def csv_to_payload(text: str) -> dict:
    """Inverse of :func:`to_csv`."""
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or rows[0] != ["field", "value"]:
        raise ParseError("not a report CSV")
    return {k: json.loads(v) for k, v in rows[1:]}


def load_schema(name: str) -> dict:
    """The JSON schema shipped for a subcommand's report, e.g. ``"haf-merge"``."""
    ref = resources.files("multiacc").joinpath("schemas", f"{name}.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))
