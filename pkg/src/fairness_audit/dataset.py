"""Loading, cleaning and encoding of tabular audit data.

A dataset carries exactly one protected column (binary, with a declared
treated level) and one outcome column. Every other non-ignored column is a
non-protected feature. Ignored columns are not kept after loading.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    ConstantColumnWarning,
    DegenerateDataset,
    ProtectedNotBinary,
    SchemaMismatch,
)

MISSING_MARKERS = frozenset({"", "NA", "?"})
KINDS = ("numeric", "categorical", "binary")
ROLES = ("feature", "protected", "outcome", "ignore")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    role: str = "feature"
    treated_level: str | None = None
    positive_outcome: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatch(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaMismatch(f"column {self.name!r}: unknown role {self.role!r}")

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.treated_level is not None:
            out["treated_level"] = self.treated_level
        if self.positive_outcome is not None:
            out["positive_outcome"] = self.positive_outcome
        return out


def validate_schema(schema: Sequence[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaMismatch("column names must be unique")
    protected = [c for c in schema if c.role == "protected"]
    outcome = [c for c in schema if c.role == "outcome"]
    if len(protected) != 1:
        raise SchemaMismatch(f"expected exactly one protected column, got {len(protected)}")
    if len(outcome) != 1:
        raise SchemaMismatch(f"expected exactly one outcome column, got {len(outcome)}")
    p, y = protected[0], outcome[0]
    if p.kind != "binary":
        raise SchemaMismatch(f"protected column {p.name!r} must be declared binary")
    if p.treated_level is None:
        raise SchemaMismatch(f"protected column {p.name!r} needs a treated_level")
    if y.kind not in ("numeric", "binary"):
        raise SchemaMismatch(f"outcome column {y.name!r} must be numeric or binary")
    if y.kind == "binary" and y.positive_outcome is None:
        raise SchemaMismatch(f"binary outcome {y.name!r} needs a positive_outcome label")


def load_schema(path) -> list[ColumnSchema]:
    """Read a schema JSON document (an array of column objects)."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise SchemaMismatch(f"schema file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"schema file is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaMismatch("schema must be a JSON array")
    schema = []
    for entry in raw:
        try:
            schema.append(ColumnSchema(
                name=str(entry["name"]),
                kind=entry["kind"],
                role=entry.get("role", "feature"),
                treated_level=_opt_str(entry.get("treated_level")),
                positive_outcome=_opt_str(entry.get("positive_outcome")),
            ))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"malformed schema entry {entry!r}") from exc
    validate_schema(schema)
    return schema


def write_schema(schema: Sequence[ColumnSchema], path) -> None:
    text = json.dumps([c.to_dict() for c in schema], indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _opt_str(v):
    return None if v is None else str(v)


@dataclass(frozen=True)
class Dataset:
    """Typed audit data.

    ``frame`` holds the protected column as raw labels (``None`` when
    missing), the outcome as floats (binary outcomes coded 0/1, ``NaN`` when
    missing), numeric and binary features as floats and categorical features
    as string labels. After :func:`one_hot_encode` categorical features are
    replaced by 0/1 indicator columns listed in ``groups``.
    """

    schema: tuple[ColumnSchema, ...]
    frame: pd.DataFrame = field(repr=False)
    feature_names: tuple[str, ...]
    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    encoded: bool = False
    metadata: Mapping = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def protected(self) -> ColumnSchema:
        return next(c for c in self.schema if c.role == "protected")

    @property
    def outcome_column(self) -> ColumnSchema:
        return next(c for c in self.schema if c.role == "outcome")

    @property
    def outcome_kind(self) -> str:
        return self.outcome_column.kind

    @property
    def protected_indicator(self) -> np.ndarray:
        """1.0 for the treated level, 0.0 for control, NaN when missing."""
        col = self.frame[self.protected.name]
        out = np.where(col.to_numpy() == self.protected.treated_level, 1.0, 0.0)
        out[col.isna().to_numpy()] = np.nan
        return out

    @property
    def outcome(self) -> np.ndarray:
        return self.frame[self.outcome_column.name].to_numpy(dtype=float)

    def features(self) -> np.ndarray:
        """All feature columns (full indicator sets) as a float matrix."""
        if not self.feature_names:
            return np.zeros((self.n, 0))
        return self.frame[list(self.feature_names)].to_numpy(dtype=float)

    def design_features(self) -> tuple[np.ndarray, list[str]]:
        """Feature matrix with the reference level of each one-hot group dropped."""
        if not self.encoded:
            raise ValueError("one_hot_encode the dataset before building a design matrix")
        dropped = {levels[0] for levels in self.groups.values()}
        names = [f for f in self.feature_names if f not in dropped]
        if not names:
            return np.zeros((self.n, 0)), []
        return self.frame[names].to_numpy(dtype=float), names

    def missing_mask(self) -> np.ndarray:
        return self.frame.isna().any(axis=1).to_numpy()

    def with_treated_level(self, level: str) -> "Dataset":
        """Same data with a different protected level designated as treated."""
        schema = tuple(
            replace(c, treated_level=level) if c.role == "protected" else c for c in self.schema
        )
        levels = set(self.frame[self.protected.name].dropna().unique())
        if level not in levels:
            raise SchemaMismatch(f"treated level {level!r} not observed in protected column")
        return replace(self, schema=schema)


def _parse_numeric(cell: str) -> float:
    if cell in MISSING_MARKERS:
        return np.nan
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _binary_feature(raw: list[str]) -> list[float]:
    # 0/1 labels are kept as numbers; any other two labels map lexicographically.
    labels = sorted({c for c in raw if c not in MISSING_MARKERS})
    if len(labels) > 2:
        raise SchemaMismatch(f"binary feature has {len(labels)} levels: {labels[:5]}")
    if all(_parse_numeric(lab) in (0.0, 1.0) for lab in labels):
        return [_parse_numeric(c) for c in raw]
    code = {lab: float(i) for i, lab in enumerate(labels)}
    return [np.nan if c in MISSING_MARKERS else code[c] for c in raw]


def load_dataset(csv_path, schema: Sequence[ColumnSchema], delimiter: str = ",") -> Dataset:
    """Read a delimited text file with a header row and type its cells by ``schema``.

    Cells equal to ``""``, ``"NA"`` or ``"?"`` (after stripping whitespace)
    become missing, as do numeric cells that fail to parse.
    """
    schema = tuple(schema)
    validate_schema(schema)
    path = Path(csv_path)
    raw_bytes = path.read_bytes()
    text = raw_bytes.decode("utf-8-sig")
    reader = csv.reader(text.splitlines(), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration as exc:
        raise SchemaMismatch(f"{path} is empty") from exc
    missing = [c.name for c in schema if c.name not in header]
    if missing:
        raise SchemaMismatch(f"columns missing from {path.name}: {missing}")
    pos = {name: i for i, name in enumerate(header)}
    rows = [r for r in reader if r]
    for k, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaMismatch(f"row {k + 1} has {len(r)} fields, header has {len(header)}")

    data = {}
    for col in schema:
        if col.role == "ignore":
            continue
        raw = [r[pos[col.name]].strip() for r in rows]
        if col.role == "protected":
            data[col.name] = pd.Series(
                [None if c in MISSING_MARKERS else c for c in raw], dtype=object
            )
        elif col.role == "outcome" and col.kind == "binary":
            data[col.name] = pd.Series(
                [np.nan if c in MISSING_MARKERS else float(c == col.positive_outcome) for c in raw],
                dtype=float,
            )
        elif col.kind == "numeric":
            data[col.name] = pd.Series([_parse_numeric(c) for c in raw], dtype=float)
        elif col.kind == "binary":
            data[col.name] = pd.Series(_binary_feature(raw), dtype=float)
        else:
            data[col.name] = pd.Series(
                [None if c in MISSING_MARKERS else c for c in raw], dtype=object
            )
    frame = pd.DataFrame(data)

    prot = next(c for c in schema if c.role == "protected")
    levels = sorted(frame[prot.name].dropna().unique())
    if len(levels) != 2:
        raise ProtectedNotBinary(
            f"protected column {prot.name!r} has {len(levels)} observed levels: {levels[:5]}"
        )
    if prot.treated_level not in levels:
        raise ProtectedNotBinary(
            f"treated level {prot.treated_level!r} not among observed levels {levels}"
        )
    features = tuple(c.name for c in schema if c.role == "feature")
    meta = {"source": str(path), "sha256": hashlib.sha256(raw_bytes).hexdigest()}
    return Dataset(schema=schema, frame=frame, feature_names=features, metadata=meta)


def from_arrays(
    features: Mapping[str, Sequence],
    protected: Sequence,
    outcome: Sequence,
    *,
    outcome_kind: str = "numeric",
    protected_name: str = "a",
    outcome_name: str = "y",
    metadata: Mapping | None = None,
) -> Dataset:
    """Build an already-encoded dataset from numeric arrays.

    The protected array must be 0/1 (1 = treated); features are numeric.
    """
    schema = [ColumnSchema(name, "numeric", "feature") for name in features]
    schema.append(ColumnSchema(protected_name, "binary", "protected", treated_level="1"))
    schema.append(ColumnSchema(
        outcome_name, outcome_kind, "outcome",
        positive_outcome="1" if outcome_kind == "binary" else None,
    ))
    data = {name: np.asarray(v, dtype=float) for name, v in features.items()}
    a = np.asarray(protected, dtype=float)
    data[protected_name] = pd.Series(np.where(a == 1, "1", "0"), dtype=object)
    data[outcome_name] = np.asarray(outcome, dtype=float)
    frame = pd.DataFrame(data)
    return Dataset(
        schema=tuple(schema),
        frame=frame,
        feature_names=tuple(features),
        encoded=True,
        metadata=dict(metadata or {}),
    )


def drop_missing(d: Dataset) -> Dataset:
    """Remove every row holding a missing cell; row order is preserved."""
    keep = ~d.missing_mask()
    frame = d.frame.loc[keep].reset_index(drop=True)
    if len(frame) < 2:
        raise DegenerateDataset(f"only {len(frame)} rows left after removing missing values")
    a = frame[d.protected.name]
    if a.nunique() < 2:
        raise DegenerateDataset("a protected level vanished after removing missing values")
    meta = dict(d.metadata)
    meta["rows_dropped_missing"] = int((~keep).sum())
    return replace(d, frame=frame, metadata=meta)


def one_hot_encode(d: Dataset) -> Dataset:
    """Expand each categorical feature into one indicator column per observed level.

    Levels are ordered lexicographically. A categorical feature with a single
    observed level is dropped with a :class:`ConstantColumnWarning`.
    """
    if d.missing_mask().any():
        raise ValueError("drop_missing must be applied before one_hot_encode")
    kinds = {c.name: c.kind for c in d.schema}
    frame = d.frame.copy()
    features: list[str] = []
    groups = dict(d.groups)
    for name in d.feature_names:
        if kinds.get(name) != "categorical" or name in groups:
            features.append(name)
            continue
        col = frame.pop(name)
        levels = sorted(col.unique())
        if len(levels) < 2:
            warnings.warn(
                f"categorical feature {name!r} has a single level and is dropped",
                ConstantColumnWarning,
                stacklevel=2,
            )
            continue
        indicators = []
        values = col.to_numpy()
        for level in levels:
            ind = f"{name}={level}"
            frame[ind] = (values == level).astype(float)
            indicators.append(ind)
        groups[name] = tuple(indicators)
        features.extend(indicators)
    return replace(d, frame=frame, feature_names=tuple(features), groups=groups, encoded=True)


def prepare(csv_path, schema: Sequence[ColumnSchema], delimiter: str = ",") -> Dataset:
    """Load, drop incomplete rows, then one-hot encode."""
    return one_hot_encode(drop_missing(load_dataset(csv_path, schema, delimiter=delimiter)))


def write_csv(d: Dataset, path) -> None:
    """Write an unencoded numeric dataset back to CSV (used by the synthetic generator)."""
    names = [c.name for c in d.schema if c.role != "ignore"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        cols = [d.frame[n].to_numpy() for n in names]
        y = d.outcome_column
        if y.kind == "binary":
            k = names.index(y.name)
            cols[k] = np.array(
                [None if np.isnan(v) else (y.positive_outcome if v == 1 else "0") for v in cols[k]],
                dtype=object,
            )
        for i in range(d.n):
            w.writerow([_fmt_cell(col[i]) for col in cols])


def _fmt_cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        if np.isnan(v):
            return "NA"
        return repr(float(v))
    return str(v)
