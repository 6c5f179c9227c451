"""Datasets, frequency tables, and the incomplete moment matrix.

Raw observations are complete cases of categorical variables, stored as
1-based level codes.  Frequencies are exact integer counts divided by the
sample size once, at assembly time.  The moment matrix has one row per
(variable, level) cell and one column per low-order response pattern; an
entry is observable only when the column's pattern leaves the row's
variable free.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .schema import (
    Pattern,
    Schema,
    add_level,
    enumerate_patterns,
    pattern_order,
    pattern_to_string,
    parse_pattern,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    """Complete-case categorical observations, levels coded 1..L_j."""

    schema: Schema
    rows: np.ndarray  # (n, J) integer array

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2 or rows.shape[1] != self.schema.n_variables:
            raise DataError(
                f"data shape {rows.shape} does not match schema with "
                f"{self.schema.n_variables} variables"
            )
        if rows.shape[0] < 1:
            raise DataError("no observations")
        if not np.issubdtype(rows.dtype, np.integer):
            rows = rows.astype(np.int32)
        for j, lv in enumerate(self.schema.levels):
            col = rows[:, j]
            bad = (col < 1) | (col > lv)
            if bad.any():
                i = int(np.argmax(bad))
                raise DataError(
                    f"level {col[i]} out of range for variable {j + 1} "
                    f"(observation {i + 1})"
                )
        rows = np.ascontiguousarray(rows, dtype=np.int32)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def load_dataset(path, schema: Schema) -> Dataset:
    """Read a header + integer-levels CSV into a :class:`Dataset`.

    Parse failures name the offending line of the file (1-based, header
    is line 1).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file (missing header)")
    header = lines[0].split(",")
    j_count = schema.n_variables
    if len(header) != j_count:
        raise DataError(
            f"{path}:1: header has {len(header)} columns, "
            f"schema has {j_count} variables"
        )
    body = lines[1:]
    if not body:
        raise DataError(f"{path}: no observations")

    # Fast path: if every line has the right field count, parse in one shot.
    if all(ln.count(",") == j_count - 1 for ln in body):
        flat = ",".join(body).split(",")
        try:
            rows = np.array(flat, dtype=np.int32).reshape(len(body), j_count)
        except ValueError:
            rows = None
    else:
        rows = None

    if rows is None:
        # Slow path, only to produce a precise diagnostic.
        rows = np.empty((len(body), j_count), dtype=np.int32)
        for i, ln in enumerate(body):
            parts = ln.split(",")
            if len(parts) != j_count:
                raise DataError(
                    f"{path}:{i + 2}: expected {j_count} fields, got {len(parts)}"
                )
            try:
                rows[i] = np.array(parts, dtype=np.int32)
            except ValueError:
                bad = next(p for p in parts if not _is_int(p))
                raise DataError(f"{path}:{i + 2}: invalid integer {bad!r}") from None

    for j, lv in enumerate(schema.levels):
        col = rows[:, j]
        out_of_range = (col < 1) | (col > lv)
        if out_of_range.any():
            i = int(np.argmax(out_of_range))
            raise DataError(
                f"{path}:{i + 2}: level {col[i]} out of range for variable {j + 1}"
            )
    return Dataset(schema, rows)


def _is_int(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the CSV format read by :func:`load_dataset`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"x{j + 1}" for j in range(dataset.schema.n_variables)))
        fh.write("\n")
        for row in dataset.rows:
            fh.write(",".join(str(int(x)) for x in row))
            fh.write("\n")


class _CellIndicators:
    """Bit-packed per-cell indicator masks over observations.

    One 64-bit word stream per (variable, level) cell; joint pattern counts
    are popcounts of AND-combined streams, which keeps moment assembly
    exact (integer) and fast for wide data.
    """

    def __init__(self, dataset: Dataset):
        schema = dataset.schema
        n = dataset.n
        n_words = (n + 63) // 64
        packs = np.zeros((schema.total_cells, n_words * 8), dtype=np.uint8)
        for j in range(1, schema.n_variables + 1):
            for l in range(1, schema.levels[j - 1] + 1):
                bits = np.packbits(
                    dataset.rows[:, j - 1] == l, bitorder="little"
                )
                packs[schema.flatten(j, l), : bits.size] = bits
        self.schema = schema
        self.n = n
        self.words = packs.view(np.uint64).reshape(schema.total_cells, n_words)
        ones = np.zeros(n_words * 8, dtype=np.uint8)
        ones[: (n + 7) // 8] = np.packbits(np.ones(n, dtype=bool), bitorder="little")
        self.all_ones = ones.view(np.uint64)

    def pattern_mask(self, pattern: Pattern) -> np.ndarray:
        mask = self.all_ones
        for j, l in enumerate(pattern, start=1):
            if l != 0:
                mask = mask & self.words[self.schema.flatten(j, l)]
        return mask

    def count(self, mask: np.ndarray) -> int:
        return int(np.bitwise_count(mask).sum(dtype=np.int64))

    def counts_per_cell(self, mask: np.ndarray) -> np.ndarray:
        """Counts of (mask AND cell) for every cell, as int64."""
        joint = np.bitwise_and(self.words, mask[np.newaxis, :])
        return np.bitwise_count(joint).sum(axis=1, dtype=np.int64)


def pattern_count(dataset: Dataset, pattern: Pattern) -> int:
    """Exact number of observations matching a response pattern."""
    pattern = dataset.schema.validate_pattern(pattern)
    match = np.ones(dataset.n, dtype=bool)
    for j, l in enumerate(pattern):
        if l != 0:
            match &= dataset.rows[:, j] == l
    return int(match.sum())


def frequency(dataset: Dataset, pattern: Pattern) -> float:
    """Observed frequency of a response pattern (count / n)."""
    return pattern_count(dataset, pattern) / dataset.n


@dataclass(frozen=True)
class FrequencyTable:
    """Frequencies of a fixed family of response patterns.

    ``sample_size`` is None for tables holding exact model moments rather
    than observed frequencies.
    """

    schema: Schema
    entries: dict[Pattern, float]
    sample_size: int | None = None

    def __post_init__(self):
        zero = (0,) * self.schema.n_variables
        if zero in self.entries and not math.isclose(
            self.entries[zero], 1.0, rel_tol=0, abs_tol=1e-12
        ):
            raise DataError("frequency of the all-free pattern must be 1")

    @classmethod
    def from_dataset(cls, dataset: Dataset, patterns) -> "FrequencyTable":
        cells = _CellIndicators(dataset)
        entries = {}
        for pat in patterns:
            pat = dataset.schema.validate_pattern(pat)
            entries[pat] = cells.count(cells.pattern_mask(pat)) / dataset.n
        return cls(dataset.schema, entries, sample_size=dataset.n)

    def value(self, pattern: Pattern) -> float:
        try:
            return self.entries[tuple(pattern)]
        except KeyError:
            raise KeyError(f"pattern {pattern} not tabulated") from None

    def __contains__(self, pattern) -> bool:
        return tuple(pattern) in self.entries


@dataclass(frozen=True)
class MomentMatrix:
    """Incomplete matrix of low-order moments.

    Rows are (variable, level) cells in flat order; columns are response
    patterns of order up to the column budget.  ``values[r, c]`` holds the
    frequency of the column pattern refined by the row cell and is NaN
    where that refinement would fix the same variable twice (unobservable).
    ``column_mass[c]`` is the frequency of the column pattern itself.
    """

    schema: Schema
    columns: tuple[Pattern, ...]
    values: np.ndarray
    observed: np.ndarray
    column_mass: np.ndarray
    sample_size: int | None = None
    _col_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        observed = np.asarray(self.observed, dtype=bool)
        mass = np.asarray(self.column_mass, dtype=float)
        n_rows, n_cols = self.schema.total_cells, len(self.columns)
        if values.shape != (n_rows, n_cols) or observed.shape != values.shape:
            raise DataError("moment matrix arrays have inconsistent shapes")
        if mass.shape != (n_cols,):
            raise DataError("column_mass has wrong length")
        for arr in (values, observed, mass):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "column_mass", mass)
        object.__setattr__(
            self, "_col_index", {pat: c for c, pat in enumerate(self.columns)}
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column_index(self, pattern: Pattern) -> int:
        return self._col_index[tuple(pattern)]


def observability_mask(schema: Schema, columns) -> np.ndarray:
    """Boolean (cells x columns) mask: True where the entry is estimable."""
    mask = np.ones((schema.total_cells, len(columns)), dtype=bool)
    for c, pat in enumerate(columns):
        for j, l in enumerate(pat, start=1):
            if l != 0:
                mask[schema.block_slice(j), c] = False
    return mask


def build_moment_matrix(dataset: Dataset, max_col_order: int = 2) -> MomentMatrix:
    """Assemble the incomplete moment matrix from observed frequencies.

    Parameters
    ----------
    dataset : Dataset
    max_col_order : int
        Largest pattern order used for columns, between 0 and J - 1.
        Columns with zero observed frequency are dropped (logged).
    """
    schema = dataset.schema
    if not 0 <= max_col_order <= schema.n_variables - 1:
        raise DataError(
            f"max_col_order must be in [0, {schema.n_variables - 1}], "
            f"got {max_col_order}"
        )
    cells = _CellIndicators(dataset)
    n = dataset.n

    kept: list[Pattern] = []
    value_cols: list[np.ndarray] = []
    masses: list[int] = []
    dropped = 0
    for pat in enumerate_patterns(schema, max_col_order):
        mask = cells.pattern_mask(pat)
        mass = cells.count(mask)
        if mass == 0:
            dropped += 1
            logger.debug("dropping zero-frequency column %s", pattern_to_string(pat))
            continue
        kept.append(pat)
        masses.append(mass)
        value_cols.append(cells.counts_per_cell(mask))
    if dropped:
        logger.warning(
            "dropped %d zero-frequency column(s) of %d candidates",
            dropped,
            dropped + len(kept),
        )

    counts = np.stack(value_cols, axis=1)
    values = counts / float(n)
    observed = observability_mask(schema, kept)
    values[~observed] = np.nan
    return MomentMatrix(
        schema=schema,
        columns=tuple(kept),
        values=values,
        observed=observed,
        column_mass=np.array(masses, dtype=float) / float(n),
        sample_size=n,
    )


# -- debug CSV export / import -----------------------------------------------


def matrix_to_csv(matrix: MomentMatrix, path) -> None:
    """Write the matrix with ``j:l`` row labels and ``?`` for unobserved."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + [pattern_to_string(p) for p in matrix.columns])
        for r in range(matrix.schema.total_cells):
            j, l = matrix.schema.unflatten(r)
            row = [f"{j}:{l}"]
            for c in range(len(matrix.columns)):
                if matrix.observed[r, c]:
                    row.append(repr(float(matrix.values[r, c])))
                else:
                    row.append("?")
            writer.writerow(row)


def matrix_from_csv(path, schema: Schema | None = None,
                    sample_size: int | None = None) -> MomentMatrix:
    """Read a matrix written by :func:`matrix_to_csv`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: not a moment matrix export")
    header, body = rows[0], rows[1:]
    if schema is None:
        levels: dict[int, int] = {}
        for line in body:
            j_txt, _, l_txt = line[0].partition(":")
            try:
                j, l = int(j_txt), int(l_txt)
            except ValueError:
                raise DataError(f"{path}: bad row label {line[0]!r}") from None
            levels[j] = max(levels.get(j, 0), l)
        schema = Schema(tuple(levels[j] for j in sorted(levels)))
    if len(body) != schema.total_cells:
        raise DataError(
            f"{path}: {len(body)} value rows, schema needs {schema.total_cells}"
        )
    columns = tuple(parse_pattern(schema, txt) for txt in header[1:])
    values = np.full((schema.total_cells, len(columns)), np.nan)
    observed = np.zeros_like(values, dtype=bool)
    for r, line in enumerate(body):
        if len(line) != len(columns) + 1:
            raise DataError(f"{path}: row {line[0]} has wrong field count")
        for c, txt in enumerate(line[1:]):
            if txt != "?":
                values[r, c] = float(txt)
                observed[r, c] = True
    expected = observability_mask(schema, columns)
    if not np.array_equal(observed, expected):
        raise DataError(f"{path}: observed cells do not match the mask rule")
    # Column masses are block sums of any fully observed block; use the
    # first free variable of each column (exact by the counting identity).
    mass = np.empty(len(columns))
    for c, pat in enumerate(columns):
        j = next(i + 1 for i, x in enumerate(pat) if x == 0)
        mass[c] = values[schema.block_slice(j), c].sum()
    return MomentMatrix(
        schema=schema,
        columns=columns,
        values=values,
        observed=observed,
        column_mass=mass,
        sample_size=sample_size,
    )


def counting_identity_gap(dataset: Dataset, pattern: Pattern, j: int) -> int:
    """Exact integer gap in the refinement counting identity (must be 0).

    For a pattern with variable ``j`` free, the counts of all its
    single-level refinements at ``j`` partition the matching observations.
    """
    schema = dataset.schema
    if pattern[j - 1] != 0:
        raise ValueError(f"variable {j} is fixed in {pattern}")
    total = pattern_count(dataset, pattern)
    parts = sum(
        pattern_count(dataset, add_level(schema, pattern, j, l))
        for l in range(1, schema.levels[j - 1] + 1)
    )
    return total - parts
