"""Instrumented GSAT, GWSAT and WalkSAT with exact flip counting.

All three share one incremental state: per-clause true-literal counts,
per-variable make/break counts and an unsatisfied-clause list.  A flip costs
time proportional to the occurrences of the flipped variable (GSAT and GWSAT
additionally scan all variables to find the best score).

A run checks for a solution after initialisation and after every flip, so
``run_length`` is the number of flips executed before the first satisfying
assignment; 0 is possible.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numba as nb
import numpy as np

from .cnf import CompletenessClass, Formula
from .rng import nb_below, nb_coin, nb_random, nb_seed_state

CENSORED = -1

# trials are independent, so any threading layer gives identical results; try
# OpenMP before TBB, which is often present in an unusable version
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class Algorithm(str, enum.Enum):
    GSAT = "gsat"
    GWSAT = "gwsat"
    WSAT = "wsat"


_ALGO_CODE = {Algorithm.GSAT: 0, Algorithm.GWSAT: 1, Algorithm.WSAT: 2}

COMPLETENESS = {
    Algorithm.GSAT: CompletenessClass.ESSENTIALLY_INCOMPLETE,
    Algorithm.GWSAT: CompletenessClass.APPROXIMATELY_COMPLETE,
    Algorithm.WSAT: CompletenessClass.APPROXIMATELY_COMPLETE,
}


@dataclass(frozen=True)
class SolverConfig:
    algorithm: Algorithm
    wp: float | None = None
    noise: float | None = None

    def __post_init__(self):
        algo = Algorithm(self.algorithm)
        object.__setattr__(self, "algorithm", algo)
        needs_wp = algo is Algorithm.GWSAT
        needs_noise = algo is Algorithm.WSAT
        if needs_wp != (self.wp is not None):
            raise ValueError(f"{algo.value}: walk probability wp must be {'set' if needs_wp else 'absent'}")
        if needs_noise != (self.noise is not None):
            raise ValueError(f"{algo.value}: noise must be {'set' if needs_noise else 'absent'}")
        for name in ("wp", "noise"):
            val = getattr(self, name)
            if val is not None:
                if not 0.0 <= val <= 1.0:
                    raise ValueError(f"{name} must lie in [0, 1], got {val}")
                object.__setattr__(self, name, float(val))

    @classmethod
    def gsat(cls) -> "SolverConfig":
        return cls(Algorithm.GSAT)

    @classmethod
    def gwsat(cls, wp: float) -> "SolverConfig":
        return cls(Algorithm.GWSAT, wp=wp)

    @classmethod
    def wsat(cls, noise: float) -> "SolverConfig":
        return cls(Algorithm.WSAT, noise=noise)

    @property
    def parameter(self) -> float:
        return {Algorithm.GSAT: 0.0, Algorithm.GWSAT: self.wp, Algorithm.WSAT: self.noise}[self.algorithm]

    @property
    def completeness(self) -> CompletenessClass:
        return COMPLETENESS[self.algorithm]

    def to_dict(self) -> dict:
        d: dict = {"algorithm": self.algorithm.value}
        if self.wp is not None:
            d["wp"] = self.wp
        if self.noise is not None:
            d["noise"] = self.noise
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        extra = set(d) - {"algorithm", "wp", "noise"}
        if extra:
            raise ValueError(f"unknown solver config keys: {sorted(extra)}")
        return cls(Algorithm(d["algorithm"]), wp=d.get("wp"), noise=d.get("noise"))

    def slug(self) -> str:
        if self.algorithm is Algorithm.GSAT:
            return "gsat"
        return f"{self.algorithm.value}-{self.parameter:g}"


@dataclass(frozen=True)
class RunRecord:
    """One trial; ``run_length`` is None when the run hit the cutoff."""

    run_length: int | None
    cutoff: int
    seed: int

    @property
    def success(self) -> bool:
        return self.run_length is not None

    @property
    def censored(self) -> bool:
        return self.run_length is None


# kernels -----------------------------------------------------------------


@nb.njit(cache=True)
def _recount(assign, clause_lits, clause_start):
    bad = 0
    for c in range(clause_start.size - 1):
        sat = False
        for j in range(clause_start[c], clause_start[c + 1]):
            lit = clause_lits[j]
            if assign[lit >> 1] != (lit & 1):
                sat = True
                break
        if not sat:
            bad += 1
    return bad


@nb.njit(cache=True)
def _flip(v, assign, num_true, make, brk, unsat, unsat_pos, n_unsat,
          clause_lits, clause_start, occ_start, occ_clause):
    """Flip ``v`` and update all incremental structures; returns new n_unsat."""
    # literal of v that becomes true after the flip
    became_true = 2 * v + (1 if assign[v] == 1 else 0)
    became_false = became_true ^ 1
    assign[v] ^= 1
    for k in range(occ_start[became_true], occ_start[became_true + 1]):
        c = occ_clause[k]
        num_true[c] += 1
        if num_true[c] == 1:
            last = unsat[n_unsat - 1]
            p = unsat_pos[c]
            unsat[p] = last
            unsat_pos[last] = p
            n_unsat -= 1
            for j in range(clause_start[c], clause_start[c + 1]):
                make[clause_lits[j] >> 1] -= 1
            brk[v] += 1
        elif num_true[c] == 2:
            for j in range(clause_start[c], clause_start[c + 1]):
                lit = clause_lits[j]
                w = lit >> 1
                if w != v and assign[w] != (lit & 1):
                    brk[w] -= 1
                    break
    for k in range(occ_start[became_false], occ_start[became_false + 1]):
        c = occ_clause[k]
        num_true[c] -= 1
        if num_true[c] == 0:
            unsat[n_unsat] = c
            unsat_pos[c] = n_unsat
            n_unsat += 1
            for j in range(clause_start[c], clause_start[c + 1]):
                make[clause_lits[j] >> 1] += 1
            brk[v] -= 1
        elif num_true[c] == 1:
            for j in range(clause_start[c], clause_start[c + 1]):
                lit = clause_lits[j]
                if assign[lit >> 1] != (lit & 1):
                    brk[lit >> 1] += 1
                    break
    return n_unsat


@nb.njit(cache=True)
def _gsat_pick(n, make, brk, rng):
    best = -(1 << 30)
    pick = -1
    ties = 0
    for u in range(n):
        score = make[u] - brk[u]
        if score > best:
            best = score
            pick = u
            ties = 1
        elif score == best:
            ties += 1
            if nb_below(rng, ties) == 0:
                pick = u
    return pick


@nb.njit(cache=True)
def _walk_pick(c, clause_lits, clause_start, rng):
    s = clause_start[c]
    return clause_lits[s + nb_below(rng, clause_start[c + 1] - s)] >> 1


@nb.njit(cache=True)
def _wsat_pick(c, noise, brk, clause_lits, clause_start, rng):
    s = clause_start[c]
    e = clause_start[c + 1]
    best = 1 << 30
    pick = -1
    ties = 0
    for j in range(s, e):
        u = clause_lits[j] >> 1
        b = brk[u]
        if b < best:
            best = b
            pick = u
            ties = 1
        elif b == best:
            ties += 1
            if nb_below(rng, ties) == 0:
                pick = u
    if best == 0:
        return pick
    if nb_random(rng) < noise:
        return clause_lits[s + nb_below(rng, e - s)] >> 1
    return pick


@nb.njit(cache=True)
def _run_one(clause_lits, clause_start, occ_start, occ_clause, n, algo, param,
             cutoff, seed, debug, trace):
    """Returns (run_length or -1, consistency_ok, flips_recorded)."""
    m = clause_start.size - 1
    rng = nb_seed_state(seed)
    assign = np.empty(n, dtype=np.int8)
    for v in range(n):
        assign[v] = 1 if nb_coin(rng) else 0
    num_true = np.zeros(m, dtype=np.int32)
    make = np.zeros(n, dtype=np.int32)
    brk = np.zeros(n, dtype=np.int32)
    unsat = np.empty(m, dtype=np.int32)
    unsat_pos = np.full(m, -1, dtype=np.int32)
    n_unsat = 0
    for c in range(m):
        cnt = 0
        crit = -1
        for j in range(clause_start[c], clause_start[c + 1]):
            lit = clause_lits[j]
            if assign[lit >> 1] != (lit & 1):
                cnt += 1
                crit = lit >> 1
        num_true[c] = cnt
        if cnt == 0:
            unsat[n_unsat] = c
            unsat_pos[c] = n_unsat
            n_unsat += 1
            for j in range(clause_start[c], clause_start[c + 1]):
                make[clause_lits[j] >> 1] += 1
        elif cnt == 1:
            brk[crit] += 1
    ok = True
    flips = 0
    while n_unsat > 0:
        if flips >= cutoff:
            return CENSORED, ok, flips
        if algo == 0:
            v = _gsat_pick(n, make, brk, rng)
        elif algo == 1:
            if nb_random(rng) < param:
                c = unsat[nb_below(rng, n_unsat)]
                v = _walk_pick(c, clause_lits, clause_start, rng)
            else:
                v = _gsat_pick(n, make, brk, rng)
        else:
            c = unsat[nb_below(rng, n_unsat)]
            v = _wsat_pick(c, param, brk, clause_lits, clause_start, rng)
        n_unsat = _flip(v, assign, num_true, make, brk, unsat, unsat_pos, n_unsat,
                        clause_lits, clause_start, occ_start, occ_clause)
        if trace.size > 0 and flips < trace.size:
            trace[flips] = v + 1
        flips += 1
        if debug:
            if _recount(assign, clause_lits, clause_start) != n_unsat:
                ok = False
    return flips, ok, flips


@nb.njit(cache=True, parallel=True)
def _run_batch(clause_lits, clause_start, occ_start, occ_clause, n, algo, param,
               cutoff, seeds):
    out = np.empty(seeds.size, dtype=np.int64)
    empty = np.empty(0, dtype=np.int32)
    for i in nb.prange(seeds.size):
        out[i] = _run_one(clause_lits, clause_start, occ_start, occ_clause, n, algo,
                          param, cutoff, seeds[i], False, empty)[0]
    return out


# public API --------------------------------------------------------------


def _kernel_args(formula: Formula, config: SolverConfig):
    if not isinstance(config, SolverConfig):
        raise TypeError("config must be a SolverConfig")
    cf = formula.compiled
    return (cf.clause_lits, cf.clause_start, cf.occ_start, cf.occ_clause, cf.num_vars,
            _ALGO_CODE[config.algorithm], float(config.parameter))


def run(formula: Formula, config: SolverConfig, cutoff: int, seed: int) -> RunRecord:
    """Single seeded run, at most ``cutoff`` flips."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    args = _kernel_args(formula, config)
    length, _, _ = _run_one(*args, int(cutoff), np.uint64(seed & (2**64 - 1)), False,
                            np.empty(0, dtype=np.int32))
    return RunRecord(None if length == CENSORED else int(length), int(cutoff), int(seed))


def run_traced(formula: Formula, config: SolverConfig, cutoff: int, seed: int,
               check_consistency: bool = True) -> tuple[RunRecord, np.ndarray, bool]:
    """Debug run: returns the record, the 1-indexed flip sequence, and whether the
    incremental unsat count matched a full recount after every flip."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    args = _kernel_args(formula, config)
    trace = np.zeros(int(cutoff), dtype=np.int32)
    length, ok, flips = _run_one(*args, int(cutoff), np.uint64(seed & (2**64 - 1)),
                                 check_consistency, trace)
    rec = RunRecord(None if length == CENSORED else int(length), int(cutoff), int(seed))
    return rec, trace[:flips].copy(), bool(ok)


def run_batch(formula: Formula, config: SolverConfig, cutoff: int, seeds) -> np.ndarray:
    """Run lengths for each seed, ``-1`` marking censored runs.

    Trials run in parallel threads; each depends only on its own seed, so the
    result equals sequential execution.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    seeds = np.asarray(seeds, dtype=np.uint64)
    return _run_batch(*_kernel_args(formula, config), int(cutoff), seeds)
