"""CSV data files and JSON model files.

CSV files hold one datum per row (the in-memory layout is one datum per
column, so readers transpose).  Model files are JSON with numbers written
to 17 significant digits, which round-trips every double exactly.
"""

import csv
import io
import json
import math

import numpy as np

from . import __version__
from .distributions import DataBatch, GaussianParams
from .errors import DataFormatError, ModelFileError
from .manifolds import SPD
from .mixture import MixtureParams

__all__ = [
    "FORMAT_VERSION",
    "read_csv",
    "write_csv",
    "write_trace",
    "model_to_dict",
    "model_from_dict",
    "dumps_model",
    "loads_model",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1


def fmt(x):
    """17-significant-digit representation of a finite float."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return f"{x:.17g}"


def _parse_row(row):
    try:
        return [float(v) for v in row]
    except ValueError:
        return None


def read_csv(path, weights_column=None):
    """Read a row-per-datum CSV into a ``d x N`` :class:`DataBatch`.

    A leading row in which no field parses as a number is treated as a
    header.  ``weights_column`` (0-based) moves that column into the
    per-datum weights.
    """
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(f.strip() for f in r)]
    if rows and _parse_row(rows[0]) is None and all(_parse_row([f]) is None for f in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0])
    values = []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DataFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        parsed = _parse_row(row)
        if parsed is None:
            raise DataFormatError(f"{path}: row {lineno} has a non-numeric field")
        values.append(parsed)
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{path}: non-finite values")
    weights = None
    if weights_column is not None:
        if not 0 <= weights_column < width:
            raise DataFormatError(f"{path}: weights column {weights_column} out of range for {width} columns")
        weights = arr[:, weights_column]
        arr = np.delete(arr, weights_column, axis=1)
        if arr.shape[1] == 0:
            raise DataFormatError(f"{path}: no data columns besides the weights")
        if np.any(weights < 0):
            raise DataFormatError(f"{path}: negative weights")
    return DataBatch(arr.T, weights)


def write_csv(path, matrix, extra_column=None):
    """Write a ``d x N`` matrix as N rows; ``extra_column`` is appended as integers."""
    matrix = np.atleast_2d(matrix)
    with open(path, "w", newline="") as fh:
        for i in range(matrix.shape[1]):
            fields = [fmt(v) for v in matrix[:, i]]
            if extra_column is not None:
                fields.append(str(int(extra_column[i])))
            fh.write(",".join(fields) + "\n")


def write_trace(path, ll_trace, val_trace=None):
    with open(path, "w", newline="") as fh:
        fh.write("iter,ll,val_ll\n")
        for i, v in enumerate(ll_trace):
            val = ""
            if val_trace is not None and i < len(val_trace):
                val = fmt(val_trace[i])
            fh.write(f"{i + 1},{fmt(v)},{val}\n")


def model_to_dict(theta, metadata=None):
    meta = {"tool_version": __version__}
    meta.update(metadata or {})
    return {
        "format_version": FORMAT_VERSION,
        "d": theta.d,
        "k": theta.k,
        "weights": [float(p) for p in theta.weights],
        "components": [
            {"mu": [float(v) for v in c.mu], "sigma": [[float(v) for v in row] for row in c.sigma]}
            for c in theta.components
        ],
        "metadata": meta,
    }


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_emit(str(k), indent, level + 1)}: {_emit(v, indent, level + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_model(theta, metadata=None):
    """Serialize a mixture to the model JSON text (deterministic)."""
    return _emit(model_to_dict(theta, metadata), 2, 0) + "\n"


def model_from_dict(obj):
    """Validate a decoded model file and rebuild its parameters.

    Returns ``(MixtureParams, metadata)``.
    """
    if not isinstance(obj, dict):
        raise ModelFileError("model file must contain a JSON object")
    if obj.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {obj.get('format_version')!r}")
    try:
        d = int(obj["d"])
        k = int(obj["k"])
        weights = np.array(obj["weights"], dtype=float)
        comps = []
        for c in obj["components"]:
            mu = np.array(c["mu"], dtype=float)
            sigma = np.array(c["sigma"], dtype=float)
            if mu.shape != (d,) or sigma.shape != (d, d):
                raise ModelFileError("component shapes do not match d")
            SPD(d).check_point(sigma)
            comps.append(GaussianParams(mu, sigma))
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid model file: {exc}") from None
    if len(comps) != k or weights.shape != (k,):
        raise ModelFileError("number of components/weights does not match k")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ModelFileError("weights must be nonnegative and sum to one")
    return MixtureParams(tuple(comps), weights), dict(obj.get("metadata") or {})


def loads_model(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(obj)


def save_model(path, theta, metadata=None):
    with open(path, "w") as fh:
        fh.write(dumps_model(theta, metadata))


def load_model(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror or exc}") from None
    return loads_model(text)
