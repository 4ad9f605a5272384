"""Dataset representation, CSV ingestion, cleaning and scoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    EmptyDatasetError,
    ParseError,
    ScoreRangeError,
)

KNOWLEDGE = "knowledge"
PERSON = "person"
TEST_TYPES = (KNOWLEDGE, PERSON)

PARTICIPANT_COLUMN = "participant_id"


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScaleSpec:
    """Item metadata needed to score a response matrix.

    ``key`` maps item IDs to the correct response and is only valid for
    knowledge tests. ``auxiliary_columns`` names numeric CSV columns that
    are not items (criterion scores, other instruments).
    """

    min_score: int
    max_score: int
    test_type: str = PERSON
    reverse_keyed: frozenset = frozenset()
    key: Mapping[str, float] | None = None
    group_column: str | None = None
    auxiliary_columns: tuple = ()

    def __post_init__(self):
        if not self.min_score < self.max_score:
            raise ConfigError(
                f"min_score ({self.min_score}) must be below max_score ({self.max_score})"
            )
        if self.test_type not in TEST_TYPES:
            raise ConfigError(f"test_type must be one of {TEST_TYPES}, got {self.test_type!r}")
        if self.test_type == KNOWLEDGE and not self.key:
            raise ConfigError("knowledge tests require an answer key")
        if self.test_type == PERSON and self.key:
            raise ConfigError("person tests must not define an answer key")
        if self.test_type == KNOWLEDGE and self.reverse_keyed:
            raise ConfigError("reverse keying applies to person tests only")
        object.__setattr__(self, "reverse_keyed", frozenset(self.reverse_keyed))
        object.__setattr__(self, "auxiliary_columns", tuple(self.auxiliary_columns))

    @property
    def non_item_columns(self) -> set:
        cols = {PARTICIPANT_COLUMN, *self.auxiliary_columns}
        if self.group_column:
            cols.add(self.group_column)
        return cols


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Participants x items grid of raw scores; NaN marks a missing cell.

    ``labels`` holds string-valued side columns (e.g. the group column) and
    ``auxiliary`` numeric side columns, both aligned with ``participants``.
    """

    participants: tuple
    items: tuple
    values: np.ndarray
    labels: Mapping[str, tuple] = field(default_factory=dict)
    auxiliary: Mapping[str, np.ndarray] = field(default_factory=dict)
    n_dropped: int = 0

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape != (len(self.participants), len(self.items)):
            raise DataError(
                f"values shape {values.shape} does not match "
                f"{len(self.participants)} participants x {len(self.items)} items"
            )
        _check_unique(self.participants, "participant")
        _check_unique(self.items, "item")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "participants", tuple(self.participants))
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "labels", {k: tuple(v) for k, v in self.labels.items()})
        object.__setattr__(self, "auxiliary", {k: _frozen(v) for k, v in self.auxiliary.items()})

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def column(self, item: str) -> np.ndarray:
        return self.values[:, self.items.index(item)]

    def take(self, rows) -> "ResponseMatrix":
        rows = np.asarray(rows)
        return replace(
            self,
            participants=tuple(np.asarray(self.participants, dtype=object)[rows]),
            values=self.values[rows],
            labels={k: tuple(np.asarray(v, dtype=object)[rows]) for k, v in self.labels.items()},
            auxiliary={k: v[rows] for k, v in self.auxiliary.items()},
        )

    def equals(self, other: "ResponseMatrix") -> bool:
        return (
            self.participants == other.participants
            and self.items == other.items
            and np.array_equal(self.values, other.values, equal_nan=True)
            and dict(self.labels) == dict(other.labels)
        )


@dataclass(frozen=True, eq=False)
class ScoredTest:
    """Scored item columns ready for analysis (no missing cells).

    For knowledge tests the scored cells are 0/1 and the score range is
    reset to [0, 1].
    """

    participants: tuple
    items: tuple
    values: np.ndarray
    test_type: str = PERSON
    min_score: float = 0.0
    max_score: float = 1.0
    labels: Mapping[str, tuple] = field(default_factory=dict)
    auxiliary: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape != (len(self.participants), len(self.items)):
            raise DataError("scored values do not match participants x items")
        if np.isnan(values).any():
            raise DataError("scored test contains missing cells; run listwise_delete first")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "participants", tuple(self.participants))
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "labels", {k: tuple(v) for k, v in self.labels.items()})
        object.__setattr__(self, "auxiliary", {k: _frozen(v) for k, v in self.auxiliary.items()})

    @classmethod
    def from_array(cls, values, items=None, participants=None, **kwargs) -> "ScoredTest":
        values = np.asarray(values, dtype=float)
        n, k = values.shape
        items = tuple(items) if items is not None else tuple(f"q{j + 1}" for j in range(k))
        participants = (
            tuple(participants) if participants is not None else tuple(f"p{i + 1}" for i in range(n))
        )
        return cls(participants=participants, items=items, values=values, **kwargs)

    @property
    def totals(self) -> np.ndarray:
        return self.values.sum(axis=1)

    @property
    def n_participants(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    def column(self, item: str) -> np.ndarray:
        try:
            return self.values[:, self.items.index(item)]
        except ValueError:
            raise KeyError(f"unknown item {item!r}") from None

    def rest_score(self, item: str) -> np.ndarray:
        return self.totals - self.column(item)

    def subset(self, items: Sequence[str]) -> "ScoredTest":
        idx = [self.items.index(i) for i in items]
        return replace(self, items=tuple(items), values=self.values[:, idx])


def _check_unique(ids, what):
    seen = set()
    for x in ids:
        if x in seen:
            raise DataError(f"duplicate {what} ID {x!r}")
        seen.add(x)


def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {text!r}", row=row, column=column)
    return value


def load_csv(path, spec: ScaleSpec) -> ResponseMatrix:
    """Read a respondents x items CSV file.

    The header row names the columns. An optional ``participant_id`` column
    supplies participant IDs (otherwise rows are numbered from 1). The
    group column, if configured, is kept as labels; auxiliary columns are
    kept as numeric side data. Everything else is an item. Rows are
    reported 1-based, counting the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            rows = list(reader)
        except csv.Error as exc:
            raise ParseError(f"malformed CSV: {exc}", row=reader.line_num) from None
    if not rows:
        raise ParseError("empty file, header row expected", row=1)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate column names: {', '.join(dupes)}")
    missing_cols = [c for c in spec.auxiliary_columns if c not in header]
    if spec.group_column and spec.group_column not in header:
        missing_cols.append(spec.group_column)
    if missing_cols:
        raise DataError(f"configured columns not found in {path.name}: {', '.join(missing_cols)}")

    item_cols = [j for j, h in enumerate(header) if h not in spec.non_item_columns]
    if not item_cols:
        raise DataError("no item columns found")
    pid_col = header.index(PARTICIPANT_COLUMN) if PARTICIPANT_COLUMN in header else None
    label_cols = {spec.group_column: header.index(spec.group_column)} if spec.group_column else {}
    aux_cols = {c: header.index(c) for c in spec.auxiliary_columns}

    participants, values = [], []
    labels = {c: [] for c in label_cols}
    aux = {c: [] for c in aux_cols}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(cell.strip() == "" for cell in row) and len(row) <= 1:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", row=lineno
            )
        participants.append(row[pid_col].strip() if pid_col is not None else str(lineno - 1))
        values.append([_parse_cell(row[j], lineno, header[j]) for j in item_cols])
        for c, j in label_cols.items():
            labels[c].append(row[j].strip())
        for c, j in aux_cols.items():
            aux[c].append(_parse_cell(row[j], lineno, c))

    items = tuple(header[j] for j in item_cols)
    matrix_values = np.array(values, dtype=float).reshape(len(values), len(items))
    return ResponseMatrix(
        participants=tuple(participants),
        items=items,
        values=matrix_values,
        labels=labels,
        auxiliary=aux,
    )


def listwise_delete(m: ResponseMatrix) -> ResponseMatrix:
    """Keep only participants without any missing item cell.

    The number of removed rows accumulates in ``n_dropped``.
    """
    complete = ~m.missing.any(axis=1)
    if m.values.shape[0] == 0 or not complete.any():
        raise EmptyDatasetError("no participant has a complete set of item responses")
    if complete.all():
        return m
    kept = m.take(np.flatnonzero(complete))
    return replace(kept, n_dropped=m.n_dropped + int((~complete).sum()))


def reverse_key(values, min_score, max_score):
    """Reflect scores within the scale range: x -> min + max - x."""
    return min_score + max_score - np.asarray(values, dtype=float)


def score(m: ResponseMatrix, spec: ScaleSpec) -> ScoredTest:
    """Apply reverse keying (person tests) or the answer key (knowledge tests)."""
    if m.n_missing:
        raise DataError(
            f"{m.n_missing} missing cells; run listwise_delete before scoring"
        )
    unknown = set(spec.reverse_keyed) - set(m.items)
    if unknown:
        raise ConfigError(f"reverse-keyed items not in data: {', '.join(sorted(unknown))}")
    values = np.array(m.values, dtype=float)
    bad = (values < spec.min_score) | (values > spec.max_score)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ScoreRangeError(
            f"participant {m.participants[i]!r}, item {m.items[j]!r}: value {values[i, j]:g} "
            f"outside [{spec.min_score}, {spec.max_score}]"
        )

    if spec.test_type == KNOWLEDGE:
        missing_keys = set(m.items) - set(spec.key)
        if missing_keys:
            raise ConfigError(f"no answer key for items: {', '.join(sorted(missing_keys))}")
        answers = np.array([float(spec.key[item]) for item in m.items])
        values = (values == answers).astype(float)
        lo, hi = 0.0, 1.0
    else:
        for j, item in enumerate(m.items):
            if item in spec.reverse_keyed:
                values[:, j] = reverse_key(values[:, j], spec.min_score, spec.max_score)
        lo, hi = float(spec.min_score), float(spec.max_score)

    return ScoredTest(
        participants=m.participants,
        items=m.items,
        values=values,
        test_type=spec.test_type,
        min_score=lo,
        max_score=hi,
        labels=m.labels,
        auxiliary=m.auxiliary,
    )
