"""Measurement schemas, response patterns, and index bookkeeping.

A schema records how many levels each categorical variable has.  A response
pattern is a tuple with one entry per variable: 0 means "not fixed", any
other value names a level of that variable.  Cells (variable, level) are
laid out in a single flat order, variable by variable, which every matrix
in the library uses for its rows.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

from .errors import DataError

# A response pattern / moment index is just a tuple of small ints.  Using
# plain tuples keeps them hashable and cheap to use as dict keys.
Pattern = tuple[int, ...]
MomentIndex = tuple[int, ...]


@dataclass(frozen=True)
class Schema:
    """Numbers of levels of the observed categorical variables.

    Parameters
    ----------
    levels : sequence of int
        ``levels[j]`` is the number of levels of variable ``j + 1``.  At
        least two variables, each with at least two levels.
    """

    levels: tuple[int, ...]

    def __post_init__(self):
        levels = tuple(int(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise DataError("schema needs at least 2 variables, got %d" % len(levels))
        if any(lv < 2 for lv in levels):
            raise DataError("every variable needs at least 2 levels, got %r" % (levels,))

    @property
    def n_variables(self) -> int:
        return len(self.levels)

    @property
    def total_cells(self) -> int:
        """Total number of (variable, level) cells, i.e. flat row count."""
        return sum(self.levels)

    def block_start(self, j: int) -> int:
        """First flat row of variable ``j`` (1-based)."""
        self._check_var(j)
        return sum(self.levels[: j - 1])

    def block_slice(self, j: int) -> slice:
        """Flat row slice covering all levels of variable ``j`` (1-based)."""
        start = self.block_start(j)
        return slice(start, start + self.levels[j - 1])

    def flatten(self, j: int, l: int) -> int:
        """Flat row of cell ``(j, l)`` with 1-based variable and level."""
        self._check_var(j)
        if not 1 <= l <= self.levels[j - 1]:
            raise ValueError(f"level {l} out of range for variable {j}")
        return self.block_start(j) + (l - 1)

    def unflatten(self, row: int) -> tuple[int, int]:
        """Inverse of :meth:`flatten`: flat row -> (variable, level)."""
        if not 0 <= row < self.total_cells:
            raise ValueError(f"flat row {row} out of range")
        for j, lv in enumerate(self.levels, start=1):
            if row < lv:
                return j, row + 1
            row -= lv
        raise AssertionError("unreachable")

    def validate_pattern(self, pattern: Pattern) -> Pattern:
        """Check entry ranges and length; return the pattern as a tuple."""
        pattern = tuple(int(x) for x in pattern)
        if len(pattern) != self.n_variables:
            raise DataError(
                f"pattern has {len(pattern)} entries, schema has "
                f"{self.n_variables} variables"
            )
        for j, (entry, lv) in enumerate(zip(pattern, self.levels), start=1):
            if not 0 <= entry <= lv:
                raise DataError(f"pattern entry {entry} out of range for variable {j}")
        return pattern

    def _check_var(self, j: int) -> None:
        if not 1 <= j <= self.n_variables:
            raise ValueError(f"variable index {j} out of range")

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        return {"levels": list(self.levels)}

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        if not isinstance(obj, dict) or "levels" not in obj:
            raise DataError("schema JSON must be an object with a 'levels' list")
        return cls(tuple(obj["levels"]))

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid schema file {path}: {exc}") from exc
        return cls.from_json(obj)


def pattern_order(pattern: Pattern) -> int:
    """Number of fixed (nonzero) entries of a response pattern."""
    return sum(1 for x in pattern if x != 0)


def add_level(schema: Schema, pattern: Pattern, j: int, l: int) -> Pattern:
    """Refine a pattern by fixing variable ``j`` (1-based) to level ``l``.

    The variable must be free (entry 0) in the input pattern.
    """
    schema._check_var(j)
    if not 1 <= l <= schema.levels[j - 1]:
        raise ValueError(f"level {l} out of range for variable {j}")
    if pattern[j - 1] != 0:
        raise ValueError(f"variable {j} already fixed in pattern {pattern}")
    out = list(pattern)
    out[j - 1] = l
    return tuple(out)


def enumerate_patterns(schema: Schema, max_order: int) -> list[Pattern]:
    """All response patterns with at most ``max_order`` fixed entries.

    Returned in the canonical order used throughout the library:
    ascending pattern order, then lexicographic on the tuple.
    """
    if not 0 <= max_order <= schema.n_variables:
        raise ValueError(f"max_order {max_order} out of range")
    out: list[Pattern] = []
    for order in range(max_order + 1):
        block: list[Pattern] = []
        for support in itertools.combinations(range(schema.n_variables), order):
            ranges = [range(1, schema.levels[j] + 1) for j in support]
            for levels in itertools.product(*ranges):
                pat = [0] * schema.n_variables
                for j, l in zip(support, levels):
                    pat[j] = l
                block.append(tuple(pat))
        block.sort()
        out.extend(block)
    return out


def enumerate_moment_indices(k: int, order: int) -> list[MomentIndex]:
    """All ``k``-tuples of nonnegative ints summing to ``order``.

    Emitted with the first coordinate varying slowest, largest first,
    e.g. ``(1, 0)`` before ``(0, 1)``.
    """
    if k < 1:
        raise ValueError("need at least one latent coordinate")
    if order < 0:
        raise ValueError("order must be nonnegative")

    def rec(remaining: int, slots: int):
        if slots == 1:
            yield (remaining,)
            return
        for first in range(remaining, -1, -1):
            for rest in rec(remaining - first, slots - 1):
                yield (first,) + rest

    return list(rec(order, k))


def moment_indices_up_to(k: int, max_order: int) -> list[MomentIndex]:
    """Moment indices of all orders ``0..max_order``, in order blocks."""
    out: list[MomentIndex] = []
    for order in range(max_order + 1):
        out.extend(enumerate_moment_indices(k, order))
    return out


def multinomial_coefficient(v: MomentIndex) -> int:
    """Exact multinomial coefficient ``(sum v)! / prod(v_i!)``.

    Computed in arbitrary-precision integer arithmetic, so it cannot
    overflow; converting a huge result to float may still raise
    ``OverflowError``, which is the intended signal.
    """
    if any(x < 0 for x in v):
        raise ValueError(f"negative entry in moment index {v}")
    coeff = math.factorial(sum(v))
    for x in v:
        coeff //= math.factorial(x)
    return coeff


def pattern_to_string(pattern: Pattern) -> str:
    """Serialize as comma-separated integers, e.g. ``"1,0,2"``."""
    return ",".join(str(int(x)) for x in pattern)


def parse_pattern(schema: Schema, text: str) -> Pattern:
    """Parse ``"1,0,2"`` into a validated pattern tuple."""
    parts = text.strip().split(",")
    try:
        values = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise DataError(f"cannot parse pattern {text!r}: {exc}") from exc
    return schema.validate_pattern(values)
