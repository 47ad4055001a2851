"""Likert response matrices: loading, validation and descriptive summaries."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when questionnaire data cannot be loaded or validated."""


@dataclass(frozen=True)
class LikertMatrix:
    """Integer response matrix (respondents x items) on a closed scale.

    Parameters
    ----------
    values : np.ndarray
        Integer array of shape (n_respondents, n_items).
    item_ids : tuple of str
        Column labels, unique.
    scale_min, scale_max : int
        Inclusive bounds of the response scale.
    cohorts : tuple of str or None
        Optional per-respondent group label.
    """

    values: np.ndarray
    item_ids: tuple[str, ...]
    scale_min: int = 1
    scale_max: int = 5
    cohorts: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DataError("response matrix must be two-dimensional")
        if values.size and not np.issubdtype(values.dtype, np.integer):
            if not np.all(np.equal(np.mod(values, 1), 0)):
                raise DataError("response matrix contains non-integer values")
        values = values.astype(np.int64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "item_ids", tuple(str(i) for i in self.item_ids))
        n, p = values.shape
        if p < 2:
            raise DataError(f"need at least 2 items, got {p}")
        if n < 3:
            raise DataError(f"need at least 3 respondents, got {n}")
        if len(self.item_ids) != p:
            raise DataError("item_ids length does not match number of columns")
        if len(set(self.item_ids)) != p:
            raise DataError("item_ids must be unique")
        if self.scale_min >= self.scale_max:
            raise DataError("scale_min must be below scale_max")
        if values.min() < self.scale_min or values.max() > self.scale_max:
            raise DataError("response outside the declared scale")
        if self.cohorts is not None:
            cohorts = tuple(str(c) for c in self.cohorts)
            if len(cohorts) != n:
                raise DataError("cohort vector length does not match respondents")
            object.__setattr__(self, "cohorts", cohorts)

    @property
    def n_respondents(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    def column(self, item_id: str) -> np.ndarray:
        return self.values[:, self.index_of(item_id)]

    def index_of(self, item_id: str) -> int:
        try:
            return self.item_ids.index(str(item_id))
        except ValueError:
            raise DataError(f"unknown item {item_id!r}") from None

    def take_rows(self, rows) -> "LikertMatrix":
        """Return a new matrix with the given row indices (repeats allowed)."""
        rows = np.asarray(rows, dtype=np.intp)
        cohorts = None if self.cohorts is None else tuple(self.cohorts[r] for r in rows)
        return LikertMatrix(self.values[rows], self.item_ids, self.scale_min, self.scale_max, cohorts)

    def select_items(self, item_ids: Sequence[str]) -> "LikertMatrix":
        cols = [self.index_of(i) for i in item_ids]
        return LikertMatrix(self.values[:, cols], tuple(item_ids), self.scale_min, self.scale_max, self.cohorts)

    def filter_cohorts(self, labels: Sequence[str]) -> "LikertMatrix":
        if self.cohorts is None:
            raise DataError("matrix has no cohort column")
        keep = set(str(l) for l in labels)
        rows = [i for i, c in enumerate(self.cohorts) if c in keep]
        if len(rows) < 3:
            raise DataError("fewer than 3 respondents left after cohort filter")
        return self.take_rows(rows)


@dataclass
class LoadReport:
    path: str
    n_rows_read: int
    n_rows_kept: int
    dropped_rows: list[dict] = field(default_factory=list)
    histograms: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "n_rows_read": self.n_rows_read,
            "n_rows_kept": self.n_rows_kept,
            "n_rows_dropped": len(self.dropped_rows),
            "dropped_rows": self.dropped_rows,
            "histograms": self.histograms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class LoadOptions:
    """How to read a questionnaire CSV.

    ``items`` lists the item columns explicitly; otherwise every column whose
    name starts with ``item_prefix`` is used (or, with an empty prefix, every
    column other than the cohort column).
    """

    items: tuple[str, ...] | None = None
    item_prefix: str = ""
    cohort_column: str | None = None
    scale_min: int = 1
    scale_max: int = 5
    missing: str = "listwise"  # or "strict"


def _parse_cell(raw: str) -> int | None:
    raw = raw.strip()
    if raw == "" or raw.upper() in {"NA", "NAN", "NULL"}:
        return None
    num = float(raw)
    if not math.isfinite(num) or num != int(num):
        raise ValueError(raw)
    return int(num)


def load_csv(path, options: LoadOptions | None = None) -> tuple[LikertMatrix, LoadReport]:
    """Read a questionnaire CSV and return the validated matrix and a load report.

    Rows with a missing, unparsable or out-of-range item cell are dropped
    under the ``listwise`` policy; ``strict`` raises on the first such cell.
    """
    options = options or LoadOptions()
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not header:
        raise DataError(f"{path} has no header row")
    header = [h.strip() for h in header]

    if options.cohort_column is not None and options.cohort_column not in header:
        raise DataError(f"cohort column {options.cohort_column!r} not in header")
    if options.items is not None:
        missing_cols = [c for c in options.items if c not in header]
        if missing_cols:
            raise DataError(f"item columns not in header: {missing_cols}")
        item_cols = list(options.items)
    else:
        item_cols = [
            h for h in header
            if h != options.cohort_column and h.startswith(options.item_prefix)
        ]
    if not item_cols:
        raise DataError("no item columns found")
    col_idx = [header.index(c) for c in item_cols]
    cohort_idx = header.index(options.cohort_column) if options.cohort_column else None

    kept, cohorts, dropped = [], [], []
    for line_no, row in enumerate(rows, start=2):
        if not any(cell.strip() for cell in row):
            continue
        reason = None
        parsed = []
        for c, j in zip(item_cols, col_idx):
            raw = row[j] if j < len(row) else ""
            try:
                val = _parse_cell(raw)
            except ValueError:
                if options.missing == "strict":
                    raise DataError(f"line {line_no}: non-integer value {raw!r} in {c}")
                reason = f"non-integer value {raw!r} in {c}"
                break
            if val is None:
                reason = f"missing value in {c}"
            elif not options.scale_min <= val <= options.scale_max:
                reason = f"out-of-range value {val} in {c}"
            if reason:
                if options.missing == "strict":
                    raise DataError(f"line {line_no}: {reason}")
                break
            parsed.append(val)
        if reason is None and cohort_idx is not None:
            label = row[cohort_idx].strip() if cohort_idx < len(row) else ""
            if label == "":
                reason = "missing cohort label"
                if options.missing == "strict":
                    raise DataError(f"line {line_no}: {reason}")
        if reason:
            dropped.append({"line": line_no, "reason": reason})
            continue
        kept.append(parsed)
        if cohort_idx is not None:
            cohorts.append(row[cohort_idx].strip())

    if not kept:
        raise DataError("all rows were dropped")
    values = np.array(kept, dtype=np.int64)
    matrix = LikertMatrix(
        values, tuple(item_cols), options.scale_min, options.scale_max,
        tuple(cohorts) if cohort_idx is not None else None,
    )
    histograms = {
        item: {str(v): int(np.sum(values[:, j] == v))
               for v in range(options.scale_min, options.scale_max + 1)}
        for j, item in enumerate(item_cols)
    }
    report = LoadReport(str(path), len([r for r in rows if any(c.strip() for c in r)]),
                        len(kept), dropped, histograms)
    return matrix, report


def write_csv(matrix: LikertMatrix, path, cohort_column: str = "cohort") -> None:
    """Write a matrix in the format read by :func:`load_csv`."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(matrix.item_ids)
        if matrix.cohorts is not None:
            header.append(cohort_column)
        w.writerow(header)
        for i, row in enumerate(matrix.values):
            out = [str(int(v)) for v in row]
            if matrix.cohorts is not None:
                out.append(matrix.cohorts[i])
            w.writerow(out)


@dataclass(frozen=True)
class ItemDescriptives:
    item_id: str
    mean: float
    sd: float
    median: float
    min: int
    max: int
    n: int


def describe(matrix: LikertMatrix) -> list[ItemDescriptives]:
    """Per-item mean, sample sd (n-1), median, min, max and count."""
    out = []
    n = matrix.n_respondents
    for j, item in enumerate(matrix.item_ids):
        col = matrix.values[:, j].astype(float)
        out.append(ItemDescriptives(
            item_id=item,
            mean=float(col.mean()),
            sd=float(col.std(ddof=1)),
            median=float(np.median(col)),
            min=int(col.min()),
            max=int(col.max()),
            n=n,
        ))
    return out


Partition = Mapping[str, Sequence[str]]


def _check_partition(matrix: LikertMatrix, partition: Partition) -> dict[str, list[int]]:
    cols = {}
    for factor, items in partition.items():
        idx = []
        for item in items:
            if str(item) not in matrix.item_ids:
                raise DataError(f"factor {factor!r} references unknown item {item!r}")
            idx.append(matrix.item_ids.index(str(item)))
        cols[factor] = idx
    return cols


def factor_scores(matrix: LikertMatrix, partition: Partition) -> dict[str, np.ndarray]:
    """Summed item responses per respondent for each factor."""
    cols = _check_partition(matrix, partition)
    return {f: matrix.values[:, idx].sum(axis=1) for f, idx in cols.items()}


def factor_means(matrix: LikertMatrix, partition: Partition) -> dict[str, np.ndarray]:
    """Per-respondent mean item score on each factor."""
    cols = _check_partition(matrix, partition)
    return {f: matrix.values[:, idx].mean(axis=1) for f, idx in cols.items()}


@dataclass(frozen=True)
class CohortSummary:
    cohort_label: str
    n: int
    item_means: dict[str, float]
    factor_means: dict[str, float]


def cohort_summaries(matrix: LikertMatrix, partition: Partition) -> tuple[list[CohortSummary], list[dict]]:
    """Per-cohort item means and factor means, plus the long-form
    (cohort, factor, respondent, score) table behind the box plots.

    A factor mean is the average over respondents of each respondent's
    mean item score on that factor.
    """
    if matrix.cohorts is None:
        raise DataError("cohort summaries need a cohort column")
    per_resp = factor_means(matrix, partition)
    labels = _ordered_labels(matrix.cohorts)
    cohorts = np.array(matrix.cohorts)
    summaries, long_rows = [], []
    for label in labels:
        mask = cohorts == label
        item_means = {item: float(matrix.values[mask, j].mean())
                      for j, item in enumerate(matrix.item_ids)}
        fmeans = {f: float(v[mask].mean()) for f, v in per_resp.items()}
        summaries.append(CohortSummary(label, int(mask.sum()), item_means, fmeans))
        for f, v in per_resp.items():
            for r in np.flatnonzero(mask):
                long_rows.append({"cohort": label, "factor": f, "respondent": int(r),
                                  "score": float(v[r])})
    return summaries, long_rows


def _ordered_labels(labels: Sequence[str]) -> list[str]:
    uniq = sorted(set(labels))
    try:
        return sorted(uniq, key=float)
    except ValueError:
        return uniq
