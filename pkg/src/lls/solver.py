"""Conditional latent moments via a sparse overdetermined linear solve.

Given a basis of the supporting plane and observed pattern frequencies,
the unknowns are h^v_l = M_l * E(G^v | X=l) for patterns l in the
sub-pattern closure of the requested targets and moment indices v up to a
maximum order.  Four families of linear equations hold exactly:

- relation:       sum_k basis[j,l,k] * h^{v+e_k}_l = h^v_{l + l_j}
- anchor:         h^0_l = f_l
- normalization:  sum_{|v|=p} multinomial(v) * h^v_0 = 1
- sum:            sum_k h^{v+e_k}_l = h^v_l   (coordinates of G sum to 1)

The system is solved by weighted least squares.  Truncating moment
orders leaves some unknowns outside the reach of any anchored equation
chain; those are detected through the null space of the system matrix
and reported as undetermined rather than given arbitrary values.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .frequency import FrequencyTable
from .plane import Basis
from .schema import (
    MomentIndex,
    Pattern,
    Schema,
    add_level,
    moment_indices_up_to,
    multinomial_coefficient,
    pattern_order,
    pattern_to_string,
    parse_pattern,
)

logger = logging.getLogger(__name__)

RELATION = "relation"
ANCHOR = "anchor"
NORMALIZATION = "normalization"
SUM = "sum"


@dataclass(frozen=True)
class Equation:
    kind: str
    cols: tuple[int, ...]
    coefs: tuple[float, ...]
    rhs: float


@dataclass(frozen=True)
class MainSystem:
    """The assembled linear system in the unknowns h^v_l."""

    schema: Schema
    k: int
    unknowns: tuple[tuple[Pattern, MomentIndex], ...]
    equations: tuple[Equation, ...]
    pattern_frequency: dict[Pattern, float]

    @property
    def n_unknowns(self) -> int:
        return len(self.unknowns)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for eq in self.equations:
            out[eq.kind] = out.get(eq.kind, 0) + 1
        return out


def subpattern_closure(
    schema: Schema, targets, limit: int | None = None
) -> list[Pattern]:
    """All patterns obtained by zeroing coordinate subsets of the targets.

    Returned in canonical order (ascending pattern order, then
    lexicographic).  With ``limit`` set, enumeration aborts as soon as
    the closure exceeds it.
    """
    seen: set[Pattern] = set()
    for target in targets:
        target = schema.validate_pattern(target)
        support = [j for j, x in enumerate(target) if x != 0]
        for bits in range(1 << len(support)):
            pat = list(target)
            for b, j in enumerate(support):
                if not bits >> b & 1:
                    pat[j] = 0
            seen.add(tuple(pat))
            if limit is not None and len(seen) > limit:
                raise DataError(
                    f"sub-pattern closure of the targets exceeds {limit} "
                    "patterns; use fewer or lower-order targets"
                )
    seen.add((0,) * schema.n_variables)
    return sorted(seen, key=lambda p: (pattern_order(p), p))


def _bump(v: MomentIndex, k: int) -> MomentIndex:
    return v[:k] + (v[k] + 1,) + v[k + 1 :]


def assemble_system(
    basis: Basis,
    freqs: FrequencyTable,
    targets,
    moment_order: int = 2,
    *,
    max_unknowns: int = 3000,
) -> MainSystem:
    """Instantiate every equation available over the targets' closure.

    ``moment_order`` (R) caps the order of the moment indices; relation
    and sum rows are generated for |v| <= R - 1 so every referenced
    unknown exists.  ``freqs`` must cover the whole closure; targets with
    zero frequency are rejected (their conditional moments are
    undefined).
    """
    schema = basis.schema
    if freqs.schema != schema:
        raise DataError("frequency table and basis have different schemas")
    if moment_order < 1:
        raise DataError("moment order must be at least 1")
    k = basis.k

    targets = [schema.validate_pattern(t) for t in targets]
    bad = [t for t in targets if t not in freqs or freqs.value(t) <= 0.0]
    if bad:
        names = ", ".join(pattern_to_string(t) for t in bad[:5])
        raise DataError(
            f"{len(bad)} target(s) have zero frequency (conditional moments "
            f"undefined): {names}"
        )

    indices = moment_indices_up_to(k, moment_order)
    low_indices = [v for v in indices if sum(v) <= moment_order - 1]
    closure = subpattern_closure(
        schema, targets, limit=max(1, max_unknowns // len(indices))
    )
    closure_set = set(closure)

    frequency: dict[Pattern, float] = {}
    for pat in closure:
        if pat not in freqs:
            raise DataError(
                f"frequency table does not cover pattern {pattern_to_string(pat)}"
            )
        frequency[pat] = freqs.value(pat)

    unknowns = [(pat, v) for pat in closure for v in indices]
    index = {pv: i for i, pv in enumerate(unknowns)}
    zero_v = (0,) * k
    equations: list[Equation] = []

    for pat in closure:
        equations.append(
            Equation(ANCHOR, (index[(pat, zero_v)],), (1.0,), frequency[pat])
        )

    zero_pat = (0,) * schema.n_variables
    for order in range(moment_order + 1):
        group = [v for v in indices if sum(v) == order]
        equations.append(
            Equation(
                NORMALIZATION,
                tuple(index[(zero_pat, v)] for v in group),
                tuple(float(multinomial_coefficient(v)) for v in group),
                1.0,
            )
        )

    for pat in closure:
        for j in range(1, schema.n_variables + 1):
            if pat[j - 1] != 0:
                continue
            for l in range(1, schema.levels[j - 1] + 1):
                refined = add_level(schema, pat, j, l)
                if refined not in closure_set:
                    continue
                alpha = basis.vectors[schema.flatten(j, l)]
                for v in low_indices:
                    cols = [index[(pat, _bump(v, kk))] for kk in range(k)]
                    cols.append(index[(refined, v)])
                    equations.append(
                        Equation(
                            RELATION,
                            tuple(cols),
                            tuple(alpha) + (-1.0,),
                            0.0,
                        )
                    )

    for pat in closure:
        for v in low_indices:
            cols = [index[(pat, _bump(v, kk))] for kk in range(k)]
            cols.append(index[(pat, v)])
            equations.append(
                Equation(SUM, tuple(cols), (1.0,) * k + (-1.0,), 0.0)
            )

    return MainSystem(
        schema=schema,
        k=k,
        unknowns=tuple(unknowns),
        equations=tuple(equations),
        pattern_frequency=frequency,
    )


@dataclass(frozen=True)
class MomentRow:
    pattern: Pattern
    moment_index: MomentIndex
    h: float
    conditional_moment: float


@dataclass(frozen=True)
class ConditionalMomentTable:
    """Solved conditional latent moments E(G^v | X=l), determined pairs only."""

    schema: Schema
    k: int
    rows: tuple[MomentRow, ...]
    residual_norm: float
    equation_counts: dict[str, int]
    n_unknowns: int
    n_undetermined: int
    rank_deficient: bool
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {(r.pattern, r.moment_index): r for r in self.rows}
        )

    def __contains__(self, key) -> bool:
        pat, v = key
        return (tuple(pat), tuple(v)) in self._index

    def conditional_moment(self, pattern, v) -> float:
        try:
            return self._index[(tuple(pattern), tuple(v))].conditional_moment
        except KeyError:
            raise KeyError(
                f"pair ({pattern}, {v}) is not among the determined moments"
            ) from None

    def h(self, pattern, v) -> float:
        try:
            return self._index[(tuple(pattern), tuple(v))].h
        except KeyError:
            raise KeyError(
                f"pair ({pattern}, {v}) is not among the determined moments"
            ) from None

    def patterns(self) -> list[Pattern]:
        out: list[Pattern] = []
        for row in self.rows:
            if not out or out[-1] != row.pattern:
                out.append(row.pattern)
        return out

    def report_json(self) -> dict:
        return {
            "residualNorm": float(self.residual_norm),
            "equations": dict(sorted(self.equation_counts.items())),
            "unknowns": self.n_unknowns,
            "undetermined": self.n_undetermined,
            "rankDeficient": self.rank_deficient,
            "rowsReported": len(self.rows),
        }

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pattern", "momentIndex", "h", "conditionalMoment"])
            for row in self.rows:
                writer.writerow(
                    [
                        pattern_to_string(row.pattern),
                        ",".join(str(x) for x in row.moment_index),
                        repr(row.h),
                        repr(row.conditional_moment),
                    ]
                )


def load_moment_csv(path, schema: Schema) -> list[MomentRow]:
    """Read rows written by :meth:`ConditionalMomentTable.save_csv`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["pattern", "momentIndex", "h", "conditionalMoment"]:
            raise DataError(f"{path}: not a conditional moment table")
        rows = []
        for line in reader:
            if len(line) != 4:
                raise DataError(f"{path}: malformed row {line!r}")
            pat = parse_pattern(schema, line[0])
            try:
                v = tuple(int(x) for x in line[1].split(","))
                rows.append(MomentRow(pat, v, float(line[2]), float(line[3])))
            except ValueError as exc:
                raise DataError(f"{path}: malformed row {line!r}: {exc}") from None
    return rows


def solve_system(
    system: MainSystem, *, anchor_weight: float = 10.0
) -> ConditionalMomentTable:
    """Weighted least-squares solve with null-space determinacy screening.

    Anchor, normalization, and sum rows (exact identities and directly
    observed values) are up-weighted by ``anchor_weight`` relative to the
    relation rows.  Unknowns with a component in the null space of the
    system matrix are not pinned down by the equations at all — their
    minimum-norm values would be arbitrary — so they are dropped from
    the table and counted instead.
    """
    if not system.equations:
        raise DataError("empty system")
    n_eq, n_unk = len(system.equations), system.n_unknowns
    a = np.zeros((n_eq, n_unk))
    b = np.zeros(n_eq)
    for i, eq in enumerate(system.equations):
        w = 1.0 if eq.kind == RELATION else anchor_weight
        a[i, list(eq.cols)] = np.asarray(eq.coefs) * w
        b[i] = eq.rhs * w

    # One thin SVD serves both the minimum-norm solve and the
    # determinacy screen: an unknown is pinned down exactly when the
    # basis vector e_i lies in the span of the above-cutoff right
    # singular vectors.
    u, svals, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = 1e-10 * svals[0] if svals.size else 0.0
    n_above = int((svals > cutoff).sum())
    solution = vt[:n_above].T @ ((u[:, :n_above].T @ b) / svals[:n_above])
    residual = float(np.linalg.norm(a @ solution - b))

    determined_mass = (vt[:n_above] ** 2).sum(axis=0)
    undetermined = determined_mass < 1.0 - 1e-12
    n_undet = int(undetermined.sum())
    rank_deficient = n_undet > 0
    if rank_deficient:
        logger.warning(
            "%d of %d unknowns are not determined by the truncated system "
            "and are omitted from the table",
            n_undet,
            n_unk,
        )

    rows = []
    for i, (pat, v) in enumerate(system.unknowns):
        if undetermined[i]:
            continue
        f = system.pattern_frequency[pat]
        if f <= 0.0:
            continue
        rows.append(MomentRow(pat, v, float(solution[i]), float(solution[i]) / f))
    return ConditionalMomentTable(
        schema=system.schema,
        k=system.k,
        rows=tuple(rows),
        residual_norm=residual,
        equation_counts=system.counts(),
        n_unknowns=n_unk,
        n_undetermined=n_undet,
        rank_deficient=rank_deficient,
    )


def moment_relation_residual(basis: Basis, table: ConditionalMomentTable) -> float:
    """Largest violation of the refinement relation by the solved table.

    For every instantiable tuple (l, j, level, v) whose unknowns are all
    present, compares sum_k basis[j,level,k] * h^{v+e_k}_l against
    h^v_{l + level * e_j}.  The h values already carry the M_l factors,
    so no frequency input is needed.
    """
    schema = basis.schema
    values = {(r.pattern, r.moment_index): r.h for r in table.rows}
    patterns = set(table.patterns())
    worst = 0.0
    for pat, v in values:
        for j in range(1, schema.n_variables + 1):
            if pat[j - 1] != 0:
                continue
            for l in range(1, schema.levels[j - 1] + 1):
                refined = add_level(schema, pat, j, l)
                if refined not in patterns or (refined, v) not in values:
                    continue
                lhs = 0.0
                complete = True
                alpha = basis.vectors[schema.flatten(j, l)]
                for kk in range(basis.k):
                    key = (pat, _bump(v, kk))
                    if key not in values:
                        complete = False
                        break
                    lhs += alpha[kk] * values[key]
                if complete:
                    worst = max(worst, abs(lhs - values[(refined, v)]))
    return worst
