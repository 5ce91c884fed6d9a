"""Reading and writing recordings, metadata and feature matrices.

File conventions
----------------
Recording CSV
    Header ``t,ppg``; ``t`` in seconds, strictly increasing and uniformly
    spaced. A header-less single-column file of samples is also accepted,
    in which case the sampling rate must be supplied by the caller
    (default 400 Hz).
Metadata JSON
    Sidecar next to the recording (``rec.csv`` -> ``rec.json``) whose keys
    are exactly the :class:`SubjectMeta` field names.
Feature CSV
    Header of feature names with ``age_label`` as final column. An optional
    leading ``subject_id`` column carries subject identity through
    augmentation so that splits can keep siblings together. Floats are
    written with 17 significant digits, which round-trips every finite
    double.

Loaders never repair data. Every rejection names the offending row or
field.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import DataError, FileError, ParseError, SchemaError

DEFAULT_FS = 400.0
LABEL_COLUMN = "age_label"
ID_COLUMN = "subject_id"


@dataclass(frozen=True)
class SubjectMeta:
    subject_id: str
    age: float
    gender: str
    height: float
    weight: float
    family_history_cvd: bool
    smoker: bool
    heart_rate: float
    spo2: float

    def __post_init__(self):
        if not 0 < self.age < 130:
            raise DataError(f"age out of range: {self.age}")
        if self.gender not in ("male", "female"):
            raise DataError(f"gender must be 'male' or 'female', got {self.gender!r}")
        if not 40 <= self.heart_rate <= 220:
            raise DataError(f"heart_rate out of range: {self.heart_rate}")
        if not 50 <= self.spo2 <= 100:
            raise DataError(f"spo2 out of range: {self.spo2}")
        if self.height <= 0 or self.weight <= 0:
            raise DataError("height and weight must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = [f.name for f in fields(cls)]
        missing = [n for n in names if n not in d]
        if missing:
            raise SchemaError(f"metadata missing fields: {', '.join(missing)}")
        extra = sorted(set(d) - set(names))
        if extra:
            raise SchemaError(f"metadata has unknown fields: {', '.join(extra)}")
        try:
            return cls(
                subject_id=str(d["subject_id"]),
                age=float(d["age"]),
                gender=str(d["gender"]),
                height=float(d["height"]),
                weight=float(d["weight"]),
                family_history_cvd=_as_bool(d["family_history_cvd"], "family_history_cvd"),
                smoker=_as_bool(d["smoker"], "smoker"),
                heart_rate=float(d["heart_rate"]),
                spo2=float(d["spo2"]),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise SchemaError(f"metadata field has wrong type: {exc}") from exc


def _as_bool(v, name):
    if isinstance(v, bool):
        return v
    if v in (0, 1):
        return bool(v)
    raise SchemaError(f"{name} must be boolean, got {v!r}")


@dataclass
class RawRecording:
    meta: SubjectMeta | None
    fs: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.fs <= 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")
        if self.samples.ndim != 1:
            raise DataError("samples must be one-dimensional")
        bad = np.flatnonzero(~np.isfinite(self.samples))
        if bad.size:
            raise DataError(f"non-finite sample at index {bad[0]}")

    @property
    def duration_s(self):
        return len(self.samples) / self.fs

    @property
    def t(self):
        return np.arange(len(self.samples)) / self.fs


@dataclass
class Dataset:
    """Feature matrix with age labels.

    ``X`` has shape ``(n, len(feature_names))``. ``subject_ids`` is optional;
    when present it groups augmented copies of one subject.
    """

    X: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    subject_ids: list[str] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        self.feature_names = list(self.feature_names)
        if not self.feature_names:
            raise SchemaError("feature_names must not be empty")
        dup = _first_duplicate(self.feature_names)
        if dup is not None:
            raise SchemaError(f"duplicate feature name {dup!r}")
        if self.X.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"matrix has {self.X.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if self.X.shape[0] != self.labels.shape[0]:
            raise SchemaError("row count of X and labels differ")
        if self.subject_ids is not None:
            self.subject_ids = [str(s) for s in self.subject_ids]
            if len(self.subject_ids) != self.n:
                raise SchemaError("subject_ids length differs from row count")

    @property
    def n(self):
        return self.X.shape[0]

    def column(self, name):
        return self.X[:, self.feature_names.index(name)]

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        ids = None if self.subject_ids is None else [self.subject_ids[i] for i in rows]
        return Dataset(self.X[rows], self.labels[rows], self.feature_names, ids, dict(self.meta))

    def select(self, names):
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(self.X[:, idx], self.labels, list(names), self.subject_ids, dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.subject_ids == other.subject_ids
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.labels, other.labels)
        )


def _first_duplicate(names):
    seen = set()
    for n in names:
        if n in seen:
            return n
        seen.add(n)
    return None


# -- recordings ---------------------------------------------------------------


def metadata_path(path):
    return Path(path).with_suffix(".json")


def load_metadata(path):
    path = Path(path)
    if not path.exists():
        raise FileError(f"metadata file not found: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise SchemaError(f"{path}: metadata must be a JSON object")
    return SubjectMeta.from_dict(d)


def save_metadata(meta, path):
    Path(path).write_text(json.dumps(meta.to_dict(), indent=2, sort_keys=True) + "\n")


def load_recording(path, fs=None, require_meta=True):
    """Load and validate a recording CSV plus its metadata sidecar.

    Parameters
    ----------
    path : path-like
        CSV with header ``t,ppg`` or a single column of samples.
    fs : float, optional
        Sampling rate for single-column files (default 400 Hz). For ``t,ppg``
        files it is inferred from the time column; if given it must agree.
    require_meta : bool
        If True a sidecar JSON must exist next to the CSV.

    Raises
    ------
    ParseError
        Empty or malformed file.
    DataError
        NaN/Inf samples or a non-monotone/non-uniform time column; the
        message names the 0-based data row.
    SchemaError
        Missing or unknown metadata fields.
    """
    path = Path(path)
    if not path.exists():
        raise FileError(f"recording not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: file is empty")

    header = [c.strip().lower() for c in rows[0]]
    if header == ["t", "ppg"]:
        t, x = _parse_columns(path, rows[1:], 2)
        if len(x) < 2:
            raise ParseError(f"{path}: need at least two samples")
        dt = np.diff(t)
        bad = np.flatnonzero(dt <= 0)
        if bad.size:
            raise DataError(f"{path}: time not increasing at row {bad[0] + 1}")
        step = float(np.median(dt))
        off = np.flatnonzero(np.abs(dt - step) > 1e-3 * step)
        if off.size:
            raise DataError(f"{path}: non-uniform sampling at row {off[0] + 1}")
        inferred = 1.0 / step
        if fs is not None and abs(inferred - fs) > 1e-3 * fs:
            raise DataError(f"{path}: time column implies fs={inferred:.6g}, expected {fs}")
        fs = fs if fs is not None else inferred
    else:
        if len(rows[0]) != 1:
            raise ParseError(f"{path}: expected header 't,ppg' or a single column")
        (x,) = _parse_columns(path, rows, 1)
        fs = DEFAULT_FS if fs is None else float(fs)

    meta = None
    mpath = metadata_path(path)
    if mpath.exists():
        meta = load_metadata(mpath)
    elif require_meta:
        raise SchemaError(f"{path}: metadata sidecar {mpath.name} not found")
    return RawRecording(meta=meta, fs=float(fs), samples=x)


def _parse_columns(path, rows, ncols):
    out = np.empty((len(rows), ncols))
    for i, r in enumerate(rows):
        if len(r) != ncols:
            raise ParseError(f"{path}: row {i} has {len(r)} fields, expected {ncols}")
        try:
            out[i] = [float(c) for c in r]
        except ValueError as exc:
            raise ParseError(f"{path}: row {i} is not numeric ({exc})") from exc
    bad = np.flatnonzero(~np.isfinite(out).all(axis=1))
    if bad.size:
        raise DataError(f"{path}: non-finite value at row {bad[0]}")
    return [out[:, j] for j in range(ncols)]


def save_recording(rec, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "ppg"])
        for ti, xi in zip(rec.t, rec.samples):
            w.writerow([_fmt(ti), _fmt(xi)])
    if rec.meta is not None:
        save_metadata(rec.meta, metadata_path(path))


# -- feature matrices ---------------------------------------------------------


def _fmt(v):
    return format(float(v), ".17g")


def save_feature_matrix(ds, path):
    """Write ``ds`` as CSV; ``load_feature_matrix`` inverts it bit-exactly."""
    dup = _first_duplicate(ds.feature_names)
    if dup is not None:
        raise SchemaError(f"duplicate feature name {dup!r}")
    if LABEL_COLUMN in ds.feature_names or ID_COLUMN in ds.feature_names:
        raise SchemaError("feature names may not use reserved column names")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        lead = [ID_COLUMN] if ds.subject_ids is not None else []
        w.writerow(lead + list(ds.feature_names) + [LABEL_COLUMN])
        for i in range(ds.n):
            lead = [ds.subject_ids[i]] if ds.subject_ids is not None else []
            w.writerow(lead + [_fmt(v) for v in ds.X[i]] + [_fmt(ds.labels[i])])


def load_feature_matrix(path):
    path = Path(path)
    if not path.exists():
        raise FileError(f"feature matrix not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    header = rows[0]
    if header[-1] != LABEL_COLUMN:
        raise SchemaError(f"{path}: last column must be {LABEL_COLUMN!r}")
    has_ids = header[0] == ID_COLUMN
    names = header[1 if has_ids else 0 : -1]
    if not names:
        raise SchemaError(f"{path}: no feature columns")
    dup = _first_duplicate(names)
    if dup is not None:
        raise SchemaError(f"{path}: duplicate feature name {dup!r}")
    X = np.empty((len(rows) - 1, len(names)))
    y = np.empty(len(rows) - 1)
    ids = [] if has_ids else None
    for i, r in enumerate(rows[1:]):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
        if has_ids:
            ids.append(r[0])
            r = r[1:]
        try:
            vals = [float(c) for c in r]
        except ValueError as exc:
            raise ParseError(f"{path}: row {i} is not numeric ({exc})") from exc
        X[i] = vals[:-1]
        y[i] = vals[-1]
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        bad = np.flatnonzero(~(np.isfinite(X).all(axis=1) & np.isfinite(y)))[0]
        raise DataError(f"{path}: non-finite value at row {bad}")
    return Dataset(X, y, names, ids)


# -- report helpers -----------------------------------------------------------


def write_table(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path):
    path = Path(path)
    if not path.exists():
        raise FileError(f"table not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    return rows[0], rows[1:]


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def save_template(samples, path):
    write_table(path, ["sample"], [[float(v)] for v in samples])


def load_template(path):
    _, rows = read_table(path)
    vals = np.array([float(r[0]) for r in rows])
    if not np.all(np.isfinite(vals)):
        raise DataError(f"{path}: non-finite template sample")
    return vals

