"""Random-3-SAT generation and satisfiability filtering with randomized DPLL."""
from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from ._files import atomic_write_text
from .cnf import Formula, count_unsat, read_dimacs, write_dimacs
from .rng import Xoshiro256, derive_seed, nb_below, nb_coin, nb_seed_state

log = logging.getLogger(__name__)

DEFAULT_CLAUSE_RATIO = 4.3
DEFAULT_NODE_LIMIT = 1_000_000


def generate_random_3sat(num_vars: int, num_clauses: int, seed: int) -> Formula:
    """Uniform Random-3-SAT: three distinct variables per clause, fair-coin signs."""
    if num_vars < 3:
        raise ValueError("Random-3-SAT needs at least 3 variables")
    if num_clauses < 1:
        raise ValueError("num_clauses must be positive")
    rng = Xoshiro256(seed)
    clauses = []
    for _ in range(num_clauses):
        chosen: list[int] = []
        while len(chosen) < 3:
            v = rng.below(num_vars) + 1
            if v not in chosen:
                chosen.append(v)
        clauses.append(tuple(v if rng.coin() else -v for v in chosen))
    return Formula(num_vars, tuple(clauses))


class SatStatus(str, enum.Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    BUDGET_EXCEEDED = "BUDGET_EXCEEDED"


@dataclass(frozen=True)
class DpllResult:
    status: SatStatus
    model: np.ndarray | None
    nodes: int

    @property
    def satisfiable(self) -> bool:
        return self.status is SatStatus.SAT


@nb.njit(cache=True)
def _set_lit(lit, value, sat_count, free_count, clause_lits, clause_start,
             occ_start, occ_clause, trail, n_trail):
    """Make ``lit`` true; returns (n_trail, conflict)."""
    value[lit >> 1] = 1 - (lit & 1)
    trail[n_trail] = lit
    n_trail += 1
    conflict = False
    for k in range(occ_start[lit], occ_start[lit + 1]):
        c = occ_clause[k]
        sat_count[c] += 1
        free_count[c] -= 1
    neg = lit ^ 1
    for k in range(occ_start[neg], occ_start[neg + 1]):
        c = occ_clause[k]
        free_count[c] -= 1
        if sat_count[c] == 0 and free_count[c] == 0:
            conflict = True
    return n_trail, conflict


@nb.njit(cache=True)
def _unset_to(target, value, sat_count, free_count, occ_start, occ_clause, trail, n_trail):
    while n_trail > target:
        n_trail -= 1
        lit = trail[n_trail]
        value[lit >> 1] = -1
        for k in range(occ_start[lit], occ_start[lit + 1]):
            c = occ_clause[k]
            sat_count[c] -= 1
            free_count[c] += 1
        neg = lit ^ 1
        for k in range(occ_start[neg], occ_start[neg + 1]):
            free_count[occ_clause[k]] += 1
    return n_trail


@nb.njit(cache=True)
def _free_lit(c, value, clause_lits, clause_start):
    for j in range(clause_start[c], clause_start[c + 1]):
        if value[clause_lits[j] >> 1] < 0:
            return clause_lits[j]
    return -1


@nb.njit(cache=True)
def _propagate(value, sat_count, free_count, clause_lits, clause_start, occ_start,
               occ_clause, trail, n_trail, m, n):
    """Unit propagation and pure-literal elimination to fixpoint.

    Returns (n_trail, status) with status 0 open, 1 conflict, 2 all satisfied.
    """
    seen = np.zeros(2 * n, dtype=np.uint8)
    while True:
        changed = False
        for c in range(m):
            if sat_count[c] == 0:
                if free_count[c] == 0:
                    return n_trail, 1
                if free_count[c] == 1:
                    lit = _free_lit(c, value, clause_lits, clause_start)
                    n_trail, bad = _set_lit(lit, value, sat_count, free_count, clause_lits,
                                            clause_start, occ_start, occ_clause, trail, n_trail)
                    if bad:
                        return n_trail, 1
                    changed = True
        if changed:
            continue
        seen[:] = 0
        open_clauses = 0
        for c in range(m):
            if sat_count[c] == 0:
                open_clauses += 1
                for j in range(clause_start[c], clause_start[c + 1]):
                    lit = clause_lits[j]
                    if value[lit >> 1] < 0:
                        seen[lit] = 1
        if open_clauses == 0:
            return n_trail, 2
        for v in range(n):
            if value[v] < 0:
                p = seen[2 * v]
                q = seen[2 * v + 1]
                if p != q:
                    lit = 2 * v if p == 1 else 2 * v + 1
                    n_trail, _ = _set_lit(lit, value, sat_count, free_count, clause_lits,
                                          clause_start, occ_start, occ_clause, trail, n_trail)
                    changed = True
        if not changed:
            return n_trail, 0


@nb.njit(cache=True)
def _choose_branch(value, sat_count, free_count, clause_lits, clause_start, m, n, rng):
    shortest = 1 << 30
    for c in range(m):
        if sat_count[c] == 0 and free_count[c] < shortest:
            shortest = free_count[c]
    counts = np.zeros(2 * n, dtype=np.int32)
    for c in range(m):
        if sat_count[c] == 0 and free_count[c] == shortest:
            for j in range(clause_start[c], clause_start[c + 1]):
                lit = clause_lits[j]
                if value[lit >> 1] < 0:
                    counts[lit] += 1
    best = 0
    pick = -1
    ties = 0
    for v in range(n):
        score = counts[2 * v] + counts[2 * v + 1]
        if score == 0:
            continue
        if score > best:
            best = score
            pick = v
            ties = 1
        elif score == best:
            ties += 1
            if nb_below(rng, ties) == 0:
                pick = v
    pos = counts[2 * pick]
    neg = counts[2 * pick + 1]
    if pos > neg or (pos == neg and nb_coin(rng)):
        return 2 * pick
    return 2 * pick + 1


@nb.njit(cache=True)
def _dpll_kernel(clause_lits, clause_start, occ_start, occ_clause, n, seed, node_limit):
    """Iterative chronological-backtracking DPLL.

    Returns (status, value, nodes) with status 0 SAT, 1 UNSAT, 2 budget.
    """
    m = clause_start.size - 1
    rng = nb_seed_state(seed)
    value = np.full(n, -1, dtype=np.int8)
    sat_count = np.zeros(m, dtype=np.int32)
    free_count = np.empty(m, dtype=np.int32)
    for c in range(m):
        free_count[c] = clause_start[c + 1] - clause_start[c]
    trail = np.empty(n, dtype=np.int32)
    level_start = np.empty(n + 1, dtype=np.int32)
    level_lit = np.empty(n + 1, dtype=np.int32)
    level_flipped = np.zeros(n + 1, dtype=np.uint8)
    depth = 0
    n_trail = 0
    nodes = 1
    n_trail, status = _propagate(value, sat_count, free_count, clause_lits, clause_start,
                                 occ_start, occ_clause, trail, n_trail, m, n)
    while True:
        if status == 2:
            return 0, value, nodes
        if status == 1:
            # backtrack to the deepest decision whose second branch is untried
            while depth > 0 and level_flipped[depth - 1] == 1:
                depth -= 1
            if depth == 0:
                return 1, value, nodes
            d = depth - 1
            n_trail = _unset_to(level_start[d], value, sat_count, free_count, occ_start,
                                occ_clause, trail, n_trail)
            level_flipped[d] = 1
            lit = level_lit[d] ^ 1
        else:
            if node_limit > 0 and nodes >= node_limit:
                return 2, value, nodes
            lit = _choose_branch(value, sat_count, free_count, clause_lits, clause_start,
                                 m, n, rng)
            level_start[depth] = n_trail
            level_lit[depth] = lit
            level_flipped[depth] = 0
            depth += 1
        nodes += 1
        n_trail, bad = _set_lit(lit, value, sat_count, free_count, clause_lits, clause_start,
                                occ_start, occ_clause, trail, n_trail)
        if bad:
            status = 1
            continue
        n_trail, status = _propagate(value, sat_count, free_count, clause_lits, clause_start,
                                     occ_start, occ_clause, trail, n_trail, m, n)


def dpll_sat(formula: Formula, seed: int = 0, node_limit: int | None = None) -> DpllResult:
    """Complete randomized DPLL.

    Unit propagation and pure-literal elimination; the branching variable is
    the one occurring most often in the currently shortest open clauses, ties
    broken by the seeded stream, polarity by majority (coin on ties).  With
    ``node_limit`` set, exhausting the budget returns ``BUDGET_EXCEEDED``
    rather than a verdict.
    """
    cf = formula.compiled
    status, value, nodes = _dpll_kernel(cf.clause_lits, cf.clause_start, cf.occ_start,
                                        cf.occ_clause, cf.num_vars,
                                        np.uint64(seed & (2**64 - 1)), int(node_limit or 0))
    if status == 2:
        return DpllResult(SatStatus.BUDGET_EXCEEDED, None, int(nodes))
    if status == 1:
        return DpllResult(SatStatus.UNSAT, None, int(nodes))
    model = value != 0
    if count_unsat(formula, model) != 0:
        raise AssertionError("DPLL returned a non-model")
    return DpllResult(SatStatus.SAT, model, int(nodes))


@dataclass
class TestSet:
    instances: list[Formula]
    num_vars: int
    num_clauses: int
    count: int
    base_seed: int
    discarded_count: int = 0
    budget_overflows: int = 0
    candidate_indices: list[int] = field(default_factory=list)

    __test__ = False  # not a pytest class

    def descriptor(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "num_clauses": self.num_clauses,
            "count": self.count,
            "base_seed": self.base_seed,
            "discarded_count": self.discarded_count,
            "budget_overflows": self.budget_overflows,
            "candidate_indices": list(self.candidate_indices),
        }


def _check_candidate(args) -> tuple[int, Formula, SatStatus]:
    num_vars, num_clauses, base_seed, index, node_limit = args
    seed = derive_seed(base_seed, index)
    formula = generate_random_3sat(num_vars, num_clauses, seed)
    result = dpll_sat(formula, derive_seed(seed, 0), node_limit)
    return index, formula, result.status


def build_test_set(num_vars: int, clause_ratio: float = DEFAULT_CLAUSE_RATIO, count: int = 1,
                   base_seed: int = 0, node_limit: int | None = DEFAULT_NODE_LIMIT,
                   jobs: int = 1) -> TestSet:
    """Generate candidates ``i = 0, 1, ...`` until ``count`` are verified satisfiable.

    Candidate ``i`` uses ``derive_seed(base_seed, i)``; the result depends only
    on the arguments, not on ``jobs``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    num_clauses = int(round(clause_ratio * num_vars))
    ts = TestSet([], num_vars, num_clauses, count, base_seed)
    next_index = 0
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        while len(ts.instances) < count:
            batch = max(jobs, 2 * (count - len(ts.instances)))
            args = [(num_vars, num_clauses, base_seed, i, node_limit)
                    for i in range(next_index, next_index + batch)]
            next_index += batch
            results = pool.map(_check_candidate, args) if pool else map(_check_candidate, args)
            for index, formula, status in results:
                if len(ts.instances) >= count:
                    break
                if status is SatStatus.SAT:
                    ts.instances.append(formula)
                    ts.candidate_indices.append(index)
                else:
                    ts.discarded_count += 1
                    if status is SatStatus.BUDGET_EXCEEDED:
                        ts.budget_overflows += 1
                        log.warning("candidate %d exceeded the DPLL node budget; discarded", index)
    finally:
        if pool:
            pool.shutdown()
    return ts


def instance_filename(index: int) -> str:
    return f"inst_{index:04d}.cnf"


def write_test_set(ts: TestSet, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(ts.instances):
        p = directory / instance_filename(i)
        write_dimacs(f, p)
        paths.append(p)
    atomic_write_text(directory / "testset.json", json.dumps(ts.descriptor(), indent=2) + "\n")
    return paths


def load_test_set(directory) -> TestSet:
    directory = Path(directory)
    desc = json.loads((directory / "testset.json").read_text())
    instances = [read_dimacs(directory / instance_filename(i)) for i in range(desc["count"])]
    return TestSet(instances, desc["num_vars"], desc["num_clauses"], desc["count"],
                   desc["base_seed"], desc.get("discarded_count", 0),
                   desc.get("budget_overflows", 0), desc.get("candidate_indices", []))
