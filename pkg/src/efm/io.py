"""Dataset ingestion plus the run configuration and result documents.

Result documents are JSON with a fixed key order and no timestamps, so the
same inputs always produce byte-identical files.  Tables go to plain CSV.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

__all__ = [
    "Dataset",
    "IngestError",
    "RunConfig",
    "MISSING_TOKENS",
    "ingest_csv",
    "write_dataset_csv",
    "write_json",
    "write_csv",
    "atomic_write",
    "SCHEMAS",
]

MISSING_TOKENS = frozenset({"", "?", "na", "nan", "null", "none"})


class IngestError(ValueError):
    """Input file cannot be turned into a valid dataset."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    column_names: list
    response_name: str = "y"
    preprocessing_log: list = field(default_factory=list)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def _is_missing(cell):
    return cell.strip().lower() in MISSING_TOKENS


def _parse_float(cell, row, col):
    try:
        value = float(cell)
    except ValueError:
        raise IngestError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise IngestError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return value


def ingest_csv(
    path,
    response_column,
    categorical_columns=(),
    standardize=False,
    columns=None,
    log_columns=(),
    log1p_columns=(),
):
    """Read a headed CSV into a :class:`Dataset`.

    Rows with any missing cell among the used columns are dropped.  Each
    categorical column becomes ``levels - 1`` indicator columns, the
    lexicographically first level serving as reference.  ``log_columns`` and
    ``log1p_columns`` are transformed before standardisation, which (when
    requested) brings every non-indicator column to sample mean 0 and sample
    variance 1 (denominator ``n - 1``).
    """
    categorical = list(categorical_columns)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        rows = [r for r in reader if any(c.strip() for c in r)]

    if response_column not in header:
        raise IngestError(f"response column {response_column!r} not in header")
    if columns is None:
        columns = [c for c in header if c != response_column]
    used = [response_column, *columns]
    for c in [*used, *categorical, *log_columns, *log1p_columns]:
        if c not in header:
            raise IngestError(f"column {c!r} not in header")
    pos = {c: header.index(c) for c in header}

    log = []
    kept = []
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise IngestError(f"row {i}: expected {len(header)} cells, found {len(r)}")
        if any(_is_missing(r[pos[c]]) for c in used):
            continue
        kept.append((i, r))
    dropped = len(rows) - len(kept)
    if dropped:
        log.append(f"dropped {dropped} row(s) with missing cells")

    y = np.array([_parse_float(r[pos[response_column]], i, response_column) for i, r in kept])
    blocks, names = [], []
    for c in columns:
        cells = [r[pos[c]].strip() for _, r in kept]
        if c in categorical:
            levels = sorted(set(cells))
            if len(levels) < 2:
                raise IngestError(f"categorical column {c!r} has a single level")
            for lev in levels[1:]:
                blocks.append(np.array([1.0 if v == lev else 0.0 for v in cells]))
                names.append(f"{c}={lev}")
            log.append(f"dummy-coded {c!r}: {len(levels) - 1} indicator(s), reference {levels[0]!r}")
            continue
        col = np.array([_parse_float(v, i, c) for v, (i, _) in zip(cells, kept)])
        if c in log_columns:
            if np.any(col <= 0):
                raise IngestError(f"log transform of {c!r} needs positive values")
            col = np.log(col)
            log.append(f"log({c})")
        if c in log1p_columns:
            if np.any(col <= -1):
                raise IngestError(f"log1p transform of {c!r} needs values > -1")
            col = np.log1p(col)
            log.append(f"log1p({c})")
        if standardize:
            sd = col.std(ddof=1) if col.size > 1 else 0.0
            if not sd > 0:
                raise IngestError(f"cannot standardize constant column {c!r}")
            col = (col - col.mean()) / sd
            log.append(f"standardized {c!r}")
        blocks.append(col)
        names.append(c)

    X = np.column_stack(blocks) if blocks else np.empty((len(kept), 0))
    if X.shape[0] < 10:
        raise IngestError(f"need at least 10 complete rows, found {X.shape[0]}")
    if X.shape[1] < 1:
        raise IngestError("no covariate columns")
    return Dataset(X=X, y=y, column_names=names, response_name=response_column,
                   preprocessing_log=log)


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return repr(float(v))


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def write_dataset_csv(dataset, path):
    header = [dataset.response_name, *dataset.column_names]
    write_csv(path, header, np.column_stack([dataset.y, dataset.X]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, document):
    text = json.dumps(_jsonable(document), indent=2, allow_nan=False)
    atomic_write(path, text + "\n")


@dataclass
class RunConfig:
    """Every setting a CLI run can take; also loadable from a JSON file."""

    family: Optional[str] = None
    bandwidth: object = "cv"
    damping_m: object = "auto"
    tol: float = 1e-4
    max_iter: int = 200
    cv_folds: int = 5
    seed: int = 0
    restrict: tuple = ()
    out: str = "efm-out"
    data: Optional[str] = None
    response: Optional[str] = None
    categorical: tuple = ()
    standardize: bool = False
    log: tuple = ()
    log1p: tuple = ()
    design: Optional[str] = None
    n: int = 400
    d: int = 10
    tau: float = 1.5
    a: float = math.pi / 2
    reps: int = 1
    deltas: tuple = ()
    level: float = 0.05
    plots: bool = True

    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self):
        from .families import get_family

        if self.family is not None:
            get_family(self.family)
        for name in ("bandwidth", "damping_m"):
            val = getattr(self, name)
            auto = "cv" if name == "bandwidth" else "auto"
            if isinstance(val, str) and val != auto:
                try:
                    val = float(val)
                except ValueError:
                    raise ValueError(f"{name} must be a positive number or {auto!r}") from None
                setattr(self, name, val)
            if not isinstance(val, str) and not val > 0:
                raise ValueError(f"{name} must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max-iter must be at least 1")
        if self.cv_folds < 2:
            raise ValueError("cv-folds must be at least 2")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if any(int(j) < 2 for j in self.restrict):
            raise ValueError("restricted positions are 1-based and may not include 1")
        return self

    def as_dict(self):
        return asdict(self)


_number = {"type": ["number", "null"]}
_vector = {"type": "array", "items": {"type": "number"}}

SCHEMAS = {
    "fit": {
        "type": "object",
        "required": [
            "kind", "family", "n", "d", "coefficients", "sigma2_hat", "quasi_loglik",
            "bandwidth", "M", "iterations", "converged", "final_score_norm",
        ],
        "properties": {
            "kind": {"const": "fit"},
            "family": {"type": "string"},
            "n": {"type": "integer"},
            "d": {"type": "integer"},
            "coefficients": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "estimate", "std_error"],
                    "properties": {
                        "name": {"type": "string"},
                        "estimate": {"type": "number"},
                        "std_error": _number,
                    },
                },
            },
            "sigma2_hat": _number,
            "quasi_loglik": {"type": "number"},
            "bandwidth": {"type": "number"},
            "M": {"type": "number"},
            "iterations": {"type": "integer"},
            "converged": {"type": "boolean"},
            "final_score_norm": {"type": "number"},
        },
    },
    "test": {
        "type": "object",
        "required": ["kind", "statistic", "df", "p_value", "restricted", "full", "restricted_fit"],
        "properties": {
            "kind": {"const": "test"},
            "statistic": {"type": "number", "minimum": 0},
            "df": {"type": "integer", "minimum": 1},
            "p_value": {"type": "number", "minimum": 0, "maximum": 1},
            "restricted": {"type": "array", "items": {"type": "integer"}},
        },
    },
    "study": {
        "type": "object",
        "required": [
            "kind", "design", "reps", "mean_error", "mc_stderr", "convergence_rate",
            "per_rep_errors",
        ],
        "properties": {
            "kind": {"const": "study"},
            "mean_error": _number,
            "mc_stderr": _number,
            "convergence_rate": {"type": "number", "minimum": 0, "maximum": 1},
            "per_rep_errors": {"type": "array", "items": _number},
        },
    },
    "power": {
        "type": "object",
        "required": ["kind", "design", "reps", "level", "points"],
        "properties": {
            "kind": {"const": "power"},
            "points": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["delta", "rejection_rate", "completed"],
                },
            },
        },
    },
    "bandwidth": {
        "type": "object",
        "required": ["kind", "beta", "grid", "scores", "selected"],
        "properties": {
            "kind": {"const": "bandwidth"},
            "beta": _vector,
            "grid": _vector,
            "scores": {"type": "array", "items": _number},
            "selected": {"type": "number"},
        },
    },
}
