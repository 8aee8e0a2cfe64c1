"""Segment-selection (SS) matrices, coalition plans and inference robustness.

Rows of an SS matrix are segment levels and columns are groups (or
subgroups). A cell holds either :data:`STAR`, meaning the column encodes that
segment alone, or a label shared by exactly two columns of the row, meaning
those two columns mask and decode the segment together.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from .errors import ConfigError


class _Star:
    """Marker for a column that handles a segment on its own. Not a number."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "*"

    def __reduce__(self):
        return (_Star, ())


STAR = _Star()

Label = Hashable


@dataclass(frozen=True)
class SSMatrix:
    """Square segment-selection matrix.

    Attributes:
        cells: ``cells[l][c]`` is STAR or a coalition label.
        column_labels: Identity of each column, ``g`` or ``(g, d)``.
        column_groups: Quantizer group of each column.
    """

    cells: tuple[tuple[Label, ...], ...]
    column_labels: tuple[Label, ...]
    column_groups: tuple[int, ...]

    def __post_init__(self):
        Z = len(self.cells)
        if any(len(row) != Z for row in self.cells):
            raise ConfigError("SS matrix must be square")
        if len(self.column_labels) != Z or len(self.column_groups) != Z:
            raise ConfigError("column metadata does not match matrix size")

    @property
    def dim(self) -> int:
        return len(self.cells)

    def __getitem__(self, idx):
        l, c = idx
        return self.cells[l][c]

    def with_cell(self, l: int, c: int, value) -> "SSMatrix":
        """Copy with one cell replaced (used to inject faults in tests)."""
        rows = [list(r) for r in self.cells]
        rows[l][c] = value
        return SSMatrix(tuple(tuple(r) for r in rows), self.column_labels, self.column_groups)

    def to_text(self) -> str:
        return format_matrix(self)

    def to_csv(self) -> str:
        return format_matrix_csv(self)


def _matrix(rows: list[list], column_labels, column_groups) -> SSMatrix:
    return SSMatrix(tuple(tuple(r) for r in rows), tuple(column_labels), tuple(column_groups))


def build_ss_matrix(G: int) -> SSMatrix:
    """Segment-selection matrix for G equal-sized groups."""
    if int(G) != G or G < 2:
        raise ConfigError(f"need at least 2 groups, got {G}")
    B = [[STAR] * G for _ in range(G)]
    for g in range(G - 1):
        for r in range(G - g - 1):
            l = (2 * g + r) % G
            B[l][g] = B[l][g + r + 1] = g
    return _matrix(B, range(G), range(G))


def _check_subgroups(L: Sequence[int]) -> list[int]:
    if L is None or len(L) == 0:
        raise ConfigError("subgroup counts must be a non-empty list")
    L = [int(v) for v in L]
    if any(v < 1 for v in L):
        raise ConfigError(f"every group needs at least one subgroup, got {L}")
    if sum(L) < 2:
        raise ConfigError("need at least 2 subgroups in total")
    return L


def _subgroup_columns(L: Sequence[int]):
    labels = [(g, d) for g, Lg in enumerate(L) for d in range(Lg)]
    offsets = np.concatenate([[0], np.cumsum(L)[:-1]]).astype(int)
    return labels, offsets


def build_ss_matrix_hetero(L: Sequence[int]) -> SSMatrix:
    """Segment-selection matrix for groups split into equal-sized subgroups.

    Column (g, d) pairs with the column ``Z_{g-1} + d + r + 1`` positions
    along the flattened column order at row ``(2(Z_{g-1}+d) + r) mod Z``.
    This agrees with the cross-group counter formulation whenever every
    group has at most two subgroups, and stays well defined (no column
    pairing with itself) for larger groups.

    Args:
        L: Number of subgroups in each group, lowest group first.
    """
    L = _check_subgroups(L)
    labels, offsets = _subgroup_columns(L)
    Z = len(labels)
    B = [[STAR] * Z for _ in range(Z)]
    for g, Lg in enumerate(L):
        last = 1 if g == len(L) - 1 else 0
        for d in range(Lg - last):
            col = offsets[g] + d
            for r in range(Z - col - 1):
                row = (2 * col + r) % Z
                B[row][col] = B[row][col + r + 1] = (g, d)
    return _matrix(B, labels, [g for g, _ in labels])


def build_ss_matrix_hetero_literal(L: Sequence[int]) -> SSMatrix:
    """Cross-group counter formulation of the subgroup matrix, step by step.

    Walks the (i, s) counters where the partner of (g, d) is subgroup s of
    group g+i. Raises ConfigError if the walk ever pairs a column with
    itself or overwrites a filled cell, which happens once some group has
    three or more subgroups.
    """
    L = _check_subgroups(L)
    labels, offsets = _subgroup_columns(L)
    G, Z = len(L), len(labels)
    B = [[STAR] * Z for _ in range(Z)]
    for g, Lg in enumerate(L):
        last = 1 if g == G - 1 else 0
        for d in range(Lg - last):
            i, s = 0, 0
            col = offsets[g] + d
            for r in range(Z - col - 1):
                row = (2 * col + r) % Z
                if (d + r + 1) % sum(L[g:g + i + 1]) == 0:
                    i, s = i + 1, 0
                else:
                    s += 1
                if g + i >= G or s >= L[g + i]:
                    raise ConfigError(f"walk left the matrix at (g={g}, d={d}, r={r})")
                partner = offsets[g + i] + s
                if partner == col:
                    raise ConfigError(f"column {labels[col]} paired with itself at row {row}")
                if B[row][col] is not STAR or B[row][partner] is not STAR:
                    raise ConfigError(f"cell collision at row {row} for column {labels[col]}")
                B[row][col] = B[row][partner] = (g, d)
    return _matrix(B, labels, [g for g, _ in labels])


# --------------------------------------------------------------------------
# Coalitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Coalition:
    """Columns that mask and decode one segment level together.

    Attributes:
        members: Column indices, sorted.
        quantizer: Group index of the quantizer used, the lowest member group.
    """

    members: tuple[int, ...]
    quantizer: int

    @property
    def is_star(self) -> bool:
        return len(self.members) == 1


@dataclass(frozen=True)
class CoalitionPlan:
    """Per-level coalitions derived from an SS matrix."""

    matrix: SSMatrix
    levels: tuple[tuple[Coalition, ...], ...] = field(repr=False)

    @property
    def Z(self) -> int:
        return self.matrix.dim

    def coalitions_of(self, column: int) -> list[tuple[int, Coalition]]:
        """(level, coalition) for every level, from one column's point of view."""
        out = []
        for l, coals in enumerate(self.levels):
            for c in coals:
                if column in c.members:
                    out.append((l, c))
                    break
        return out


def row_coalitions(B: SSMatrix, l: int) -> list[tuple[int, ...]]:
    """Member column sets of each coalition at row ``l``, in column order."""
    groups: dict = {}
    order = []
    for c, cell in enumerate(B.cells[l]):
        key = ("star", c) if cell is STAR else ("label", cell)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(c)
    return [tuple(groups[k]) for k in order]


def coalition_plan(B: SSMatrix) -> CoalitionPlan:
    levels = []
    for l in range(B.dim):
        coals = [Coalition(m, min(B.column_groups[c] for c in m)) for m in row_coalitions(B, l)]
        levels.append(tuple(coals))
    return CoalitionPlan(B, tuple(levels))


def secag_plan() -> CoalitionPlan:
    """Reference plan: a single column holding all users, one level."""
    B = SSMatrix(((STAR,),), (0,), (0,))
    return CoalitionPlan(B, ((Coalition((0,), 0),),))


# --------------------------------------------------------------------------
# Property checks
# --------------------------------------------------------------------------


@dataclass
class PropertyReport:
    """Outcome of :func:`verify_properties`; never raises.

    Each ``*_violations`` list holds cell coordinates ``(row, col)`` or
    small tuples describing the counterexample.
    """

    property1: bool = True
    property2: bool = True
    property3: bool = True
    property4: bool = True
    pairing: bool = True
    property1_violations: list = field(default_factory=list)
    property2_violations: list = field(default_factory=list)
    property3_violations: list = field(default_factory=list)
    property4_violations: list = field(default_factory=list)
    pairing_violations: list = field(default_factory=list)
    star_rows: dict = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return self.property1 and self.property2 and self.property3 and self.property4 and self.pairing

    def summary(self) -> str:
        lines = []
        for name in ("property1", "property2", "property3", "property4", "pairing"):
            ok = getattr(self, name)
            bad = getattr(self, name + "_violations")
            lines.append(f"{name}: {'ok' if ok else 'FAIL ' + str(bad[:5])}")
        return "\n".join(lines)


def _pairs(row) -> dict:
    found: dict = {}
    for c, cell in enumerate(row):
        if cell is not STAR:
            found.setdefault(cell, []).append(c)
    return found


def verify_properties(B: SSMatrix, max_subset_columns: int = 14) -> PropertyReport:
    """Check the structural properties an SS matrix must satisfy.

    Args:
        B: Matrix to check.
        max_subset_columns: Property 4 needs an exhaustive subset scan and is
            skipped (reported as holding) above this many columns.
    """
    rep = PropertyReport()
    Z = B.dim

    for c in range(Z):
        stars = [l for l in range(Z) if B.cells[l][c] is STAR]
        if len(stars) != 1:
            rep.property1 = False
            rep.property1_violations.append((c, tuple(stars)))

    for l in range(Z):
        for label, cols in _pairs(B.cells[l]).items():
            if len(cols) != 2:
                rep.pairing = False
                rep.pairing_violations.extend((l, c) for c in cols)

    paired_rows: dict = {}
    for l in range(Z):
        for cols in _pairs(B.cells[l]).values():
            for a, b in itertools.combinations(cols, 2):
                paired_rows.setdefault((a, b), []).append(l)
    for (a, b), rows in paired_rows.items():
        if len(rows) > 1:
            rep.property2 = False
            rep.property2_violations.append((a, b, tuple(rows)))

    for l in range(Z):
        stars = tuple(c for c in range(Z) if B.cells[l][c] is STAR)
        if stars:
            rep.star_rows[l] = stars
        if Z % 2 == 1:
            ok = len(stars) == 1
        elif l % 2 == 0:
            ok = len(stars) == 0
        else:
            ok = len(stars) == 2 and stars[1] - stars[0] == Z // 2
        if not ok:
            rep.property3 = False
            rep.property3_violations.append((l, stars))

    if Z <= max_subset_columns:
        i = 2 if Z % 2 == 0 else 1
        for n in range(2, (Z - i) // 2 + 1):
            for S in itertools.combinations(range(Z), 2 * n):
                full = [l for l in range(Z) if _fully_paired(B.cells[l], S)]
                for l in full:
                    for other in range(Z):
                        if other != l and _unpaired_count(B.cells[other], S) < 2:
                            rep.property4 = False
                            rep.property4_violations.append((S, l, other))
    return rep


def _fully_paired(row, S) -> bool:
    inside = [row[c] for c in S]
    if any(v is STAR for v in inside):
        return False
    return all(inside.count(v) == 2 for v in inside)


def _unpaired_count(row, S) -> int:
    inside = [row[c] for c in S]
    return sum(1 for v in inside if v is STAR or inside.count(v) != 2)


# --------------------------------------------------------------------------
# Inference robustness
# --------------------------------------------------------------------------


def _row_masks(B: SSMatrix) -> list[np.ndarray]:
    out = []
    for l in range(B.dim):
        out.append(np.array([sum(1 << c for c in m) for m in row_coalitions(B, l)], dtype=np.int64))
    return out


def alpha(B: SSMatrix, S) -> Fraction:
    """Fraction of levels the server decodes in the clear for column set S.

    A level counts when every coalition there lies entirely inside or
    entirely outside S.
    """
    smask = sum(1 << int(c) for c in S)
    hits = 0
    for masks in _row_masks(B):
        inter = smask & masks
        hits += bool(np.all((inter == 0) | (inter == masks)))
    return Fraction(hits, B.dim)


def inference_robustness_bruteforce(B: SSMatrix, max_columns: int = 20):
    """Exact delta by scanning every nonempty proper column subset.

    Only column-level subsets are scanned. Splitting a column can only break
    coalitions, which lowers alpha, so the minimum is attained here.

    Returns:
        (delta, argmin_subset) with delta a Fraction and the subset a tuple of
        column indices.

    Raises:
        ValueError: if the matrix has more than ``max_columns`` columns.
    """
    Z = B.dim
    if Z > max_columns:
        raise ValueError(f"{Z} columns is too many for exhaustive search; use the closed form")
    subsets = np.arange(1, (1 << Z) - 1, dtype=np.int64)
    decodable = np.zeros(subsets.shape, dtype=np.int64)
    for masks in _row_masks(B):
        ok = np.ones(subsets.shape, dtype=bool)
        for mk in masks:
            inter = subsets & mk
            ok &= (inter == 0) | (inter == mk)
        decodable += ok
    best = int(np.argmax(decodable))
    members = tuple(c for c in range(Z) if (int(subsets[best]) >> c) & 1)
    return 1 - Fraction(int(decodable[best]), Z), members


def inference_robustness_closed_form(Z: int) -> Fraction:
    if Z < 2:
        raise ConfigError(f"need at least 2 columns, got {Z}")
    return Fraction(Z - 2, Z) if Z % 2 == 0 else Fraction(Z - 1, Z)


# --------------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------------


def _fmt_label(v) -> str:
    if v is STAR:
        return "*"
    if isinstance(v, tuple):
        return "(" + ",".join(str(x) for x in v) + ")"
    return str(v)


def format_matrix(B: SSMatrix) -> str:
    """Rows are levels; the header names the columns."""
    head = [_fmt_label(c) for c in B.column_labels]
    body = [[_fmt_label(v) for v in row] for row in B.cells]
    width = max(len(s) for s in head + [s for r in body for s in r])
    lines = ["     " + " ".join(s.rjust(width) for s in head)]
    for l, row in enumerate(body):
        lines.append(f"{l:>3}: " + " ".join(s.rjust(width) for s in row))
    return "\n".join(lines)


def format_matrix_csv(B: SSMatrix) -> str:
    head = ["level"] + [_fmt_label(c).replace(",", ":") for c in B.column_labels]
    lines = [",".join(head)]
    for l, row in enumerate(B.cells):
        lines.append(",".join([str(l)] + [_fmt_label(v).replace(",", ":") for v in row]))
    return "\n".join(lines) + "\n"
