"""Trial data model, cohort files, outcome deltas and z-scoring.

A cohort file is delimiter-separated text with a header row. The mandatory
columns are ``id``, ``arm``, ``pec_start`` and ``pec_end``. Every other
column is a feature measured at randomization (``<name>__start``) or at the
end of the diet phase (``<name>__end``). An empty cell means "missing".

Arms are encoded 0 = 1FED (one-food elimination) and 1 = 6FED (six-food
elimination). The causal estimators downstream rely on the arm having been
randomized: strong ignorability, SUTVA and common support are assumed, not
checked.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

GROUPS = ("manual-histology", "ai-histology", "endoscopy", "symptoms", "other")
MANDATORY_COLUMNS = ("id", "arm", "pec_start", "pec_end")
PEC_COLUMN = "pec"
REMISSION_THRESHOLD = 15.0

DEFAULT_ARM_ALIASES = {"0": 0, "1": 1, "1fed": 0, "6fed": 1}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    groups: tuple[str, ...] = ()

    def __post_init__(self):
        names = tuple(self.names)
        groups = tuple(self.groups) if self.groups else ("other",) * len(names)
        if len(groups) != len(names):
            raise ValidationError("one group tag is required per feature")
        if any(not n for n in names):
            raise ValidationError("feature names must be non-empty")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate feature names: {dupes}")
        bad = sorted(set(groups) - set(GROUPS))
        if bad:
            raise ValidationError(f"unknown feature groups {bad}; expected one of {GROUPS}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None


@dataclass(frozen=True, eq=False)
class PatientRecord:
    id: str
    arm: int
    x_start: np.ndarray
    x_end: np.ndarray
    pec_start: float = math.nan
    pec_end: float = math.nan

    def __post_init__(self):
        if self.arm not in (0, 1):
            raise ValidationError(f"patient {self.id!r}: arm must be 0 or 1, got {self.arm!r}")
        xs, xe = _frozen(self.x_start), _frozen(self.x_end)
        if xs.ndim != 1 or xs.shape != xe.shape:
            raise ValidationError(f"patient {self.id!r}: x_start and x_end must be equal-length vectors")
        for name in ("pec_start", "pec_end"):
            v = float(getattr(self, name))
            if v < 0:
                raise ValidationError(f"patient {self.id!r}: {name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "x_start", xs)
        object.__setattr__(self, "x_end", xe)
        object.__setattr__(self, "arm", int(self.arm))


@dataclass(frozen=True, eq=False)
class Cohort:
    """An immutable set of randomized patients sharing one feature schema."""

    schema: FeatureSchema
    patients: tuple[PatientRecord, ...]

    def __post_init__(self):
        patients = tuple(self.patients)
        width = len(self.schema)
        seen = set()
        for p in patients:
            if p.x_start.shape != (width,):
                raise ValidationError(
                    f"patient {p.id!r} has {p.x_start.shape[0]} features, schema has {width}")
            if p.id in seen:
                raise ValidationError(f"duplicate patient id {p.id!r}")
            seen.add(p.id)
        object.__setattr__(self, "patients", patients)

    @classmethod
    def from_arrays(cls, schema, ids, arms, x_start, x_end, pec_start=None, pec_end=None):
        n = len(ids)
        x_start = np.asarray(x_start, dtype=float).reshape(n, len(schema))
        x_end = np.asarray(x_end, dtype=float).reshape(n, len(schema))
        pec_start = np.full(n, np.nan) if pec_start is None else np.asarray(pec_start, float)
        pec_end = np.full(n, np.nan) if pec_end is None else np.asarray(pec_end, float)
        patients = [
            PatientRecord(str(ids[i]), int(arms[i]), x_start[i], x_end[i],
                          pec_start[i], pec_end[i])
            for i in range(n)
        ]
        return cls(schema, tuple(patients))

    def __len__(self):
        return len(self.patients)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.patients)

    @cached_property
    def arms(self) -> np.ndarray:
        a = np.array([p.arm for p in self.patients], dtype=int)
        a.setflags(write=False)
        return a

    @cached_property
    def x_start(self) -> np.ndarray:
        return _frozen(np.array([p.x_start for p in self.patients]).reshape(len(self), len(self.schema)))

    @cached_property
    def x_end(self) -> np.ndarray:
        return _frozen(np.array([p.x_end for p in self.patients]).reshape(len(self), len(self.schema)))

    @cached_property
    def pec_start(self) -> np.ndarray:
        return _frozen([p.pec_start for p in self.patients])

    @cached_property
    def pec_end(self) -> np.ndarray:
        return _frozen([p.pec_end for p in self.patients])

    def arm_counts(self) -> tuple[int, int]:
        n1 = int(self.arms.sum())
        return len(self) - n1, n1

    def require_both_arms(self):
        n0, n1 = self.arm_counts()
        if n0 == 0 or n1 == 0:
            raise ValidationError(f"cohort needs patients in both arms (arm 0: {n0}, arm 1: {n1})")

    def subset(self, index) -> "Cohort":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return Cohort(self.schema, tuple(self.patients[i] for i in index))

    def equals(self, other: "Cohort") -> bool:
        if self.schema != other.schema or self.ids != other.ids:
            return False
        pairs = [(self.arms, other.arms), (self.x_start, other.x_start),
                 (self.x_end, other.x_end), (self.pec_start, other.pec_start),
                 (self.pec_end, other.pec_end)]
        return all(np.array_equal(a, b, equal_nan=True) for a, b in pairs)


@dataclass(frozen=True)
class CohortFormat:
    """How a cohort file is laid out on disk."""

    delimiter: str = ","
    start_suffix: str = "__start"
    end_suffix: str = "__end"
    arm_aliases: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_ARM_ALIASES))
    groups: Mapping[str, str] = field(default_factory=dict)

    def parse_arm(self, cell: str):
        return self.arm_aliases.get(cell.strip().lower(),
                                    self.arm_aliases.get(cell.strip()))


def _parse_number(cell, row, column):
    cell = cell.strip()
    if cell == "":
        return math.nan
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", row=row, column=column) from None
    if math.isnan(v) or math.isinf(v):
        raise ParseError(f"non-finite value {cell!r}; leave the cell empty for missing",
                         row=row, column=column)
    return v


def load_cohort(path, fmt: CohortFormat | None = None) -> Cohort:
    fmt = fmt or CohortFormat()
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"cohort file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=fmt.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=1) from None
        except csv.Error as e:
            raise ParseError(f"{path}: {e}", row=1) from None
        header = [h.strip() for h in header]
        missing = [c for c in MANDATORY_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"{path}: missing mandatory columns {missing}", row=1)
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: duplicate column names in header", row=1)

        start_cols, end_cols = {}, {}
        for j, h in enumerate(header):
            if h in MANDATORY_COLUMNS:
                continue
            if h.endswith(fmt.start_suffix):
                start_cols[h[: -len(fmt.start_suffix)]] = j
            elif h.endswith(fmt.end_suffix):
                end_cols[h[: -len(fmt.end_suffix)]] = j
            else:
                raise ParseError(
                    f"{path}: column is neither mandatory nor suffixed with "
                    f"{fmt.start_suffix!r}/{fmt.end_suffix!r}", row=1, column=h)
        unpaired = sorted(set(start_cols) ^ set(end_cols))
        if unpaired:
            raise ParseError(f"{path}: features without both start and end columns: {unpaired}", row=1)
        names = list(start_cols)
        schema = FeatureSchema(tuple(names), tuple(fmt.groups.get(n, "other") for n in names))
        col = {h: j for j, h in enumerate(header)}

        patients = []
        seen = {}
        try:
            for rowno, cells in enumerate(reader, start=2):
                if not cells or all(not c.strip() for c in cells):
                    continue
                if len(cells) != len(header):
                    raise ParseError(f"{path}: expected {len(header)} cells, found {len(cells)}", row=rowno)
                pid = cells[col["id"]].strip()
                if not pid:
                    raise ValidationError(f"{path}: empty patient id (row {rowno})")
                if pid in seen:
                    raise ValidationError(
                        f"{path}: duplicate patient id {pid!r} (rows {seen[pid]} and {rowno})")
                seen[pid] = rowno
                arm = fmt.parse_arm(cells[col["arm"]])
                if arm not in (0, 1):
                    raise ValidationError(
                        f"{path}: arm value {cells[col['arm']]!r} is not 0/1 or a configured alias (row {rowno})")
                pec = []
                for c in ("pec_start", "pec_end"):
                    v = _parse_number(cells[col[c]], rowno, c)
                    if v < 0:
                        raise ValidationError(f"{path}: {c} must be >= 0, got {v} (row {rowno})")
                    pec.append(v)
                xs = [_parse_number(cells[start_cols[n]], rowno, header[start_cols[n]]) for n in names]
                xe = [_parse_number(cells[end_cols[n]], rowno, header[end_cols[n]]) for n in names]
                patients.append(PatientRecord(pid, arm, xs, xe, pec[0], pec[1]))
        except csv.Error as e:
            raise ParseError(f"{path}: {e}", row=reader.line_num) from None
    return Cohort(schema, tuple(patients))


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def save_cohort(cohort: Cohort, path, fmt: CohortFormat | None = None) -> Path:
    fmt = fmt or CohortFormat()
    path = Path(path)
    names = cohort.schema.names
    header = list(MANDATORY_COLUMNS)
    header += [n + fmt.start_suffix for n in names] + [n + fmt.end_suffix for n in names]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=fmt.delimiter, lineterminator="\n")
        w.writerow(header)
        for p in cohort.patients:
            w.writerow([p.id, p.arm, _fmt(p.pec_start), _fmt(p.pec_end)]
                       + [_fmt(v) for v in p.x_start] + [_fmt(v) for v in p.x_end])
    return path


@dataclass(frozen=True, eq=False)
class DeltaMatrix:
    """Raw end-minus-start outcome deltas, one row per patient."""

    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise ValidationError(f"unknown outcome column {name!r}; have {list(self.columns)}") from None


@dataclass(frozen=True, eq=False)
class OutcomeMatrix:
    """Standardized deltas plus the parameters needed to undo the scaling."""

    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray
    feature_means: np.ndarray
    feature_stds: np.ndarray
    dropped: tuple[str, ...] = ()

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise ValidationError(
                f"outcome column {name!r} is not available"
                + (" (dropped during standardization)" if name in self.dropped else "")) from None

    def unstandardize(self) -> np.ndarray:
        return self.values * self.feature_stds + self.feature_means

    def manifest(self, schema: FeatureSchema | None = None) -> dict:
        out = {
            "columns": list(self.columns),
            "dropped": list(self.dropped),
            "feature_means": [float(v) for v in self.feature_means],
            "feature_stds": [float(v) for v in self.feature_stds],
        }
        if schema is not None:
            out["schema"] = {"names": list(schema.names), "groups": list(schema.groups)}
        return out


def outcome_deltas(cohort: Cohort, include_pec: bool = True) -> DeltaMatrix:
    """End-minus-start deltas; missing wherever either endpoint is missing.

    With ``include_pec`` the PEC delta is prepended as column ``"pec"``.
    """
    if len(cohort) == 0:
        raise ValidationError("cohort is empty")
    # nan propagates through subtraction, which is exactly the missingness rule
    values = cohort.x_end - cohort.x_start
    columns = cohort.schema.names
    if include_pec:
        if PEC_COLUMN in columns:
            raise ValidationError(f"feature name {PEC_COLUMN!r} is reserved for the PEC delta")
        values = np.column_stack([cohort.pec_end - cohort.pec_start, values])
        columns = (PEC_COLUMN,) + columns
    return DeltaMatrix(cohort.ids, tuple(columns), _frozen(values))


def standardize(deltas: DeltaMatrix | np.ndarray, fit_rows=None, columns: Sequence[str] | None = None,
                ids: Iterable[str] | None = None) -> OutcomeMatrix:
    """Z-score every column over its non-missing entries (population std).

    ``fit_rows`` restricts the rows used to estimate the means and stds
    (train-only mode); all rows are still transformed. Columns with fewer
    than two observed entries or zero spread are dropped with a warning.
    """
    if isinstance(deltas, DeltaMatrix):
        values, columns, ids = deltas.values, deltas.columns, deltas.ids
    else:
        values = np.asarray(deltas, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        columns = tuple(columns) if columns is not None else tuple(f"c{j}" for j in range(values.shape[1]))
        ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(values.shape[0]))
    fit = values if fit_rows is None else values[np.asarray(fit_rows)]

    keep, means, stds, dropped = [], [], [], []
    for j, name in enumerate(columns):
        col = fit[:, j]
        # sorted so the statistics do not depend on row order
        col = np.sort(col[~np.isnan(col)])
        if col.size < 2:
            dropped.append(name)
            continue
        mu = col.mean()
        sd = col.std()
        if sd <= 1e-12 * max(1.0, abs(mu)):
            dropped.append(name)
            continue
        keep.append(j)
        means.append(mu)
        stds.append(sd)
    if dropped:
        warnings.warn(f"dropping degenerate outcome columns (constant or <2 observed): {dropped}",
                      stacklevel=2)
    if not keep:
        raise ValidationError("every outcome column is degenerate; nothing to standardize")
    means, stds = np.array(means), np.array(stds)
    z = (values[:, keep] - means) / stds
    return OutcomeMatrix(tuple(ids), tuple(columns[j] for j in keep), _frozen(z),
                         _frozen(means), _frozen(stds), tuple(dropped))


def remission_label(pec_end) -> np.ndarray | float:
    """1 where the end-of-phase PEC is below 15 (remission), 0 otherwise, nan if missing."""
    pec = np.asarray(pec_end, dtype=float)
    out = np.where(np.isnan(pec), np.nan, (pec < REMISSION_THRESHOLD).astype(float))
    return float(out) if out.ndim == 0 else out


def save_matrix(matrix: DeltaMatrix | OutcomeMatrix, path, delimiter: str = ",") -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["id", *matrix.columns])
        for pid, row in zip(matrix.ids, matrix.values):
            w.writerow([pid, *(_fmt(v) for v in row)])
    return path


def save_manifest(matrix: OutcomeMatrix, path, schema: FeatureSchema | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(matrix.manifest(schema), indent=2) + "\n", encoding="utf-8")
    return path
