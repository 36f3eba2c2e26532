"""CNF formulas, DIMACS I/O, and clause bookkeeping shared by all solvers.

Variables are 1-indexed everywhere in the public interface.  An assignment is
a boolean sequence ``a`` of length ``num_vars`` where ``a[v - 1]`` is the value
of variable ``v``.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

from ._files import atomic_write_text

Clause = tuple[int, ...]


class DimacsError(ValueError):
    """Malformed DIMACS input; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CompletenessClass(enum.Enum):
    COMPLETE = "complete"
    APPROXIMATELY_COMPLETE = "approximately_complete"
    ESSENTIALLY_INCOMPLETE = "essentially_incomplete"


@dataclass(frozen=True)
class CompiledFormula:
    """Flat integer arrays consumed by the numba kernels.

    Literal codes are ``2*(v-1)`` for ``v`` and ``2*(v-1)+1`` for ``-v``.
    Duplicate literals are merged and tautological clauses dropped; neither
    changes which assignments satisfy the formula.
    """

    num_vars: int
    clause_lits: np.ndarray
    clause_start: np.ndarray
    occ_start: np.ndarray
    occ_clause: np.ndarray

    @property
    def num_clauses(self) -> int:
        return len(self.clause_start) - 1


@dataclass(frozen=True)
class Formula:
    num_vars: int
    clauses: tuple[Clause, ...]
    comments: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.num_vars < 1:
            raise ValueError("num_vars must be positive")
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        for i, c in enumerate(clauses):
            if not c:
                raise ValueError(f"clause {i} is empty")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal out of range: {lit} in clause {i}")

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    @cached_property
    def var_occurrences(self) -> tuple[tuple[int, ...], ...]:
        """Clause indices containing each variable, indexed by ``v - 1``."""
        occ: list[list[int]] = [[] for _ in range(self.num_vars)]
        for ci, c in enumerate(self.clauses):
            for v in sorted({abs(l) for l in c}):
                occ[v - 1].append(ci)
        return tuple(tuple(o) for o in occ)

    @cached_property
    def _flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lits = np.fromiter((l for c in self.clauses for l in c), dtype=np.int64)
        starts = np.zeros(self.num_clauses + 1, dtype=np.int64)
        starts[1:] = np.cumsum([len(c) for c in self.clauses])
        return np.abs(lits) - 1, lits < 0, starts

    @cached_property
    def compiled(self) -> CompiledFormula:
        kept: list[list[int]] = []
        for c in self.clauses:
            lits = sorted(set(c), key=lambda l: (abs(l), l < 0))
            if any(-l in lits for l in lits):
                continue
            kept.append([2 * (abs(l) - 1) + (1 if l < 0 else 0) for l in lits])
        clause_start = np.zeros(len(kept) + 1, dtype=np.int32)
        clause_start[1:] = np.cumsum([len(c) for c in kept])
        clause_lits = np.array([l for c in kept for l in c], dtype=np.int32)
        buckets: list[list[int]] = [[] for _ in range(2 * self.num_vars)]
        for ci, c in enumerate(kept):
            for code in c:
                buckets[code].append(ci)
        occ_start = np.zeros(2 * self.num_vars + 1, dtype=np.int32)
        occ_start[1:] = np.cumsum([len(b) for b in buckets])
        occ_clause = np.array([ci for b in buckets for ci in b], dtype=np.int32)
        return CompiledFormula(self.num_vars, clause_lits, clause_start, occ_start, occ_clause)


def _as_assignment(formula: Formula, a: Sequence[bool]) -> np.ndarray:
    arr = np.asarray(a, dtype=bool)
    if arr.shape != (formula.num_vars,):
        raise ValueError(
            f"assignment has length {arr.size}, formula has {formula.num_vars} variables"
        )
    return arr


def count_unsat(formula: Formula, a: Sequence[bool]) -> int:
    """Number of clauses with no satisfied literal under ``a``."""
    arr = _as_assignment(formula, a)
    var, neg, starts = formula._flat
    lit_true = arr[var] != neg
    sat = np.logical_or.reduceat(lit_true, starts[:-1])
    return int(formula.num_clauses - np.count_nonzero(sat))


def _clause_sat(clause: Clause, a: np.ndarray, flipped: int = 0) -> bool:
    for lit in clause:
        v = abs(lit)
        val = bool(a[v - 1]) != (v == flipped)
        if val == (lit > 0):
            return True
    return False


def flip_delta(formula: Formula, a: Sequence[bool], v: int) -> int:
    """Change in :func:`count_unsat` if variable ``v`` were flipped.

    Only the clauses containing ``v`` are inspected; ``a`` is not modified.
    """
    arr = _as_assignment(formula, a)
    if not 1 <= v <= formula.num_vars:
        raise ValueError(f"variable {v} out of range [1, {formula.num_vars}]")
    delta = 0
    for ci in formula.var_occurrences[v - 1]:
        c = formula.clauses[ci]
        delta += int(not _clause_sat(c, arr, v)) - int(not _clause_sat(c, arr))
    return delta


def parse_dimacs(text: str | TextIO) -> Formula:
    """Parse DIMACS CNF from a string or text stream.

    Comment lines are kept on ``Formula.comments``.  A ``%`` line ends the
    clause section (SATLIB convention).
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    num_vars = num_clauses = None
    header_line = 0
    clauses: list[Clause] = []
    comments: list[str] = []
    current: list[int] = []
    current_line = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            comments.append(line[1:].strip())
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            if num_vars is not None:
                raise DimacsError("duplicate header", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                num_vars, num_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if num_vars < 1 or num_clauses < 0:
                raise DimacsError(f"malformed header {line!r}", lineno)
            header_line = lineno
            continue
        if num_vars is None:
            raise DimacsError("clause data before 'p cnf' header", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"not an integer: {tok!r}", lineno) from None
            if lit == 0:
                if not current:
                    raise DimacsError("empty clause", lineno)
                clauses.append(tuple(current))
                current = []
                continue
            if abs(lit) > num_vars:
                raise DimacsError(f"literal out of range: {lit}", lineno)
            if not current:
                current_line = lineno
            current.append(lit)
    if num_vars is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("last clause is not terminated by 0", current_line)
    if len(clauses) != num_clauses:
        raise DimacsError(
            f"clause count mismatch: header declares {num_clauses}, found {len(clauses)}",
            header_line,
        )
    return Formula(num_vars, tuple(clauses), tuple(comments))


def to_dimacs(formula: Formula) -> str:
    lines = [f"p cnf {formula.num_vars} {formula.num_clauses}"]
    lines.extend(" ".join(map(str, c)) + " 0" for c in formula.clauses)
    return "\n".join(lines) + "\n"


def read_dimacs(path) -> Formula:
    with open(path) as fh:
        return parse_dimacs(fh)


def write_dimacs(formula: Formula, path) -> None:
    atomic_write_text(path, to_dimacs(formula))


def formula_from_lists(num_vars: int, clauses: Iterable[Iterable[int]]) -> Formula:
    return Formula(num_vars, tuple(tuple(c) for c in clauses))
