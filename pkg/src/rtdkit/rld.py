"""Trial harness and empirical run-length distributions.

An :class:`Rld` keeps the sorted successful run lengths, the number of trials
and the cutoff.  Censored runs are represented only by ``n_trials`` exceeding
the number of successes; they are never mixed into the success list.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ._files import atomic_write_text
from .cnf import Formula
from .rng import derive_seeds
from .sls import CENSORED, SolverConfig, run_batch

log = logging.getLogger(__name__)

DEFAULT_TRIALS = 1000
DEFAULT_SWEEP_TRIALS = 200


class QuantileNotObserved(ValueError):
    """The requested quantile lies beyond the observed success rate."""


class NoSuccesses(ValueError):
    pass


class RldFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class CdfPoint(NamedTuple):
    probability: float
    censored: bool  # True when t lies beyond the censoring horizon


@dataclass(frozen=True)
class Rld:
    successes: np.ndarray
    n_trials: int
    cutoff: float
    instance: str = ""
    config: dict | None = None
    base_seed: int | None = None

    def __post_init__(self):
        s = np.sort(np.asarray(self.successes, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "successes", s)
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if s.size > self.n_trials:
            raise ValueError("more successes than trials")
        if s.size and (s[0] < 0 or s[-1] > self.cutoff):
            raise ValueError("run lengths must lie in [0, cutoff]")

    @classmethod
    def from_lengths(cls, lengths, cutoff, **provenance) -> "Rld":
        """Build from raw per-trial lengths where ``-1`` marks a censored run."""
        lengths = np.asarray(lengths)
        return cls(lengths[lengths != CENSORED], int(lengths.size), cutoff, **provenance)

    @property
    def n_success(self) -> int:
        return int(self.successes.size)

    @property
    def n_censored(self) -> int:
        return self.n_trials - self.n_success

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_trials

    @property
    def horizon(self) -> float:
        return float(self.cutoff)

    def cdf(self, t):
        """Empirical P(rl <= t); flat at the success rate beyond the cutoff."""
        counts = np.searchsorted(self.successes, t, side="right")
        return counts / self.n_trials

    def truncated_mean(self, t):
        """Average over all trials of min(run length, t), censored runs counting t."""
        t = np.asarray(t, dtype=float)
        csum = np.concatenate([[0.0], np.cumsum(self.successes)])
        k = np.searchsorted(self.successes, t, side="right")
        return (csum[k] + t * (self.n_trials - k)) / self.n_trials

    def jump_points(self) -> np.ndarray:
        return np.unique(self.successes)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "config": self.config,
            "base_seed": self.base_seed,
            "n_trials": self.n_trials,
            "n_success": self.n_success,
            "cutoff": _num(self.cutoff),
            "success_rate": self.success_rate,
        }


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x


def collect(formula: Formula, config: SolverConfig, n_trials: int = DEFAULT_TRIALS,
            cutoff: int = 10**7, base_seed: int = 0, instance: str = "") -> Rld:
    """Run ``n_trials`` seeded trials; trial ``i`` uses ``derive_seed(base_seed, i)``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    lengths = run_batch(formula, config, cutoff, derive_seeds(base_seed, n_trials))
    return Rld.from_lengths(lengths, cutoff, instance=instance, config=config.to_dict(),
                            base_seed=base_seed)


def cdf(rld: Rld, t: float) -> CdfPoint:
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > rld.cutoff:
        return CdfPoint(float(rld.cdf(rld.cutoff)), True)
    return CdfPoint(float(rld.cdf(t)), False)


def percentile(rld: Rld, q: float) -> float:
    """Smallest observed run length whose empirical cdf reaches ``q``."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    n = rld.n_trials
    need = max(math.ceil(q * n), 1)
    # align with the float comparison cdf(t) >= q used everywhere else
    while need / n < q:
        need += 1
    while need > 1 and (need - 1) / n >= q:
        need -= 1
    if need > rld.n_success:
        raise QuantileNotObserved(
            f"quantile {q} not observed: success rate {rld.success_rate:.4g} "
            f"(cutoff {rld.cutoff:g} truncated the distribution)"
        )
    return float(rld.successes[need - 1])


def median(rld: Rld) -> float:
    return percentile(rld, 0.5)


def estimate_mean_runtime(rld: Rld) -> float:
    """Mean over successes plus (n - k)/k cutoffs for the censored runs."""
    k = rld.n_success
    if k == 0:
        raise NoSuccesses("mean undefined, no successes")
    return float(rld.successes.mean() + (rld.n_trials - k) / k * rld.cutoff)


@dataclass(frozen=True)
class AveragedRld:
    """Equal-weight average of per-instance RLDs."""

    components: tuple[Rld, ...]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.components:
            raise ValueError("need at least one Rld")

    @property
    def horizon(self) -> float:
        return float(min(r.cutoff for r in self.components))

    @property
    def mixed_cutoffs(self) -> bool:
        return len({r.cutoff for r in self.components}) > 1

    def cdf(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            key = float(t_arr)
            if key not in self._cache:
                self._cache[key] = float(self._mean_cdf(t_arr.reshape(1))[0])
            return self._cache[key]
        return self._mean_cdf(t_arr)

    def _mean_cdf(self, t: np.ndarray) -> np.ndarray:
        # exact: integer counts when trial counts agree, correctly rounded sums otherwise
        n_set = {r.n_trials for r in self.components}
        if len(n_set) == 1:
            counts = sum(np.searchsorted(r.successes, t, side="right") for r in self.components)
            return counts / (n_set.pop() * len(self.components))
        cols = np.array([r.cdf(t) for r in self.components])
        return np.array([math.fsum(col) for col in cols.T]) / len(self.components)

    def truncated_mean(self, t):
        return np.mean([r.truncated_mean(t) for r in self.components], axis=0)

    def jump_points(self) -> np.ndarray:
        return np.unique(np.concatenate([r.successes for r in self.components]))

    def evaluate(self, t: float) -> CdfPoint:
        return CdfPoint(float(self.cdf(t)), bool(t > self.horizon))

    @property
    def n_trials(self) -> int:
        """Smallest per-instance trial count; sets the resolution of the average."""
        return min(r.n_trials for r in self.components)


def average_rlds(rlds: Sequence[Rld]) -> AveragedRld:
    avg = AveragedRld(tuple(rlds))
    if avg.mixed_cutoffs:
        log.warning("averaging RLDs with different cutoffs; censored beyond %g", avg.horizon)
    return avg


@dataclass(frozen=True)
class HardnessDistribution:
    medians: np.ndarray
    instances: tuple[str, ...]
    excluded: tuple[str, ...]

    def summary(self) -> dict:
        m = self.medians
        if m.size == 0:
            return {"count": 0, "excluded": len(self.excluded)}
        q1, q2, q3 = np.percentile(m, [25, 50, 75])
        return {
            "count": int(m.size),
            "excluded": len(self.excluded),
            "min": float(m[0]),
            "q1": float(q1),
            "median": float(q2),
            "q3": float(q3),
            "max": float(m[-1]),
            "max_min_ratio": float(m[-1] / m[0]) if m[0] > 0 else math.inf,
        }


def hardness_distribution(rlds: Sequence[Rld]) -> HardnessDistribution:
    """Sorted per-instance medians; instances with success rate < 0.5 are excluded."""
    pairs, excluded = [], []
    for i, r in enumerate(rlds):
        name = r.instance or str(i)
        if r.success_rate < 0.5:
            log.warning("median unobserved for %s (success rate %.3f); excluded", name, r.success_rate)
            excluded.append(name)
            continue
        pairs.append((median(r), name))
    pairs.sort()
    return HardnessDistribution(np.array([p[0] for p in pairs], dtype=float),
                                tuple(p[1] for p in pairs), tuple(excluded))


# file formats -------------------------------------------------------------

_HEADER = "# rld v1"


def format_rld_csv(rld: Rld) -> str:
    config = json.dumps(rld.config, sort_keys=True, separators=(",", ":"))
    seed = "" if rld.base_seed is None else str(rld.base_seed)
    head = (f"{_HEADER}, n_trials={rld.n_trials}, cutoff={_num(rld.cutoff)}, "
            f"instance={rld.instance}, base_seed={seed}, "
            f"success_rate={rld.success_rate!r}, config={config}")
    body = [repr(_num(x)) for x in rld.successes]
    return "\n".join([head, *body]) + "\n"


def write_rld_csv(rld: Rld, path) -> None:
    atomic_write_text(path, format_rld_csv(rld))


def parse_rld_csv(text: str, path=None) -> Rld:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_HEADER):
        raise RldFormatError("missing '# rld v1' header", 1, path)
    head = lines[0][len(_HEADER):]
    head, sep, config_text = head.partition(", config=")
    if not sep:
        raise RldFormatError("header lacks config=", 1, path)
    fields = {}
    for part in head.split(","):
        part = part.strip()
        if not part:
            continue
        key, eq, val = part.partition("=")
        if not eq:
            raise RldFormatError(f"bad header field {part!r}", 1, path)
        fields[key] = val
    try:
        n_trials = int(fields["n_trials"])
        cutoff = float(fields["cutoff"])
        config = json.loads(config_text)
        seed = int(fields["base_seed"]) if fields.get("base_seed") else None
    except (KeyError, ValueError) as exc:
        raise RldFormatError(f"bad header: {exc}", 1, path) from None
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise RldFormatError(f"not a number: {line!r}", lineno, path) from None
        if values[-1] < 0 or values[-1] > cutoff:
            raise RldFormatError(f"run length {line} outside [0, cutoff]", lineno, path)
    if len(values) > n_trials:
        raise RldFormatError(f"{len(values)} run lengths exceed n_trials={n_trials}", None, path)
    return Rld(np.array(values), n_trials, cutoff, instance=fields.get("instance", ""),
               config=config, base_seed=seed)


def read_rld_csv(path) -> Rld:
    return parse_rld_csv(Path(path).read_text(), path)


def plot_points(source, t_max: float | None = None, num: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """(t, cdf) pairs: exact step corners for empirical sources, a log grid otherwise."""
    jumps = source.jump_points() if hasattr(source, "jump_points") else None
    if jumps is not None and len(jumps):
        t = np.concatenate([[0.0], jumps])
        if t_max is not None:
            t = t[t <= t_max]
        return t, np.asarray(source.cdf(t), dtype=float)
    hi = t_max if t_max is not None else source.horizon
    t = np.concatenate([[0.0], np.geomspace(1.0, hi, num)])
    return t, np.asarray(source.cdf(t), dtype=float)


def write_plot_data(source, path, t_max: float | None = None, num: int = 200) -> None:
    t, p = plot_points(source, t_max, num)
    atomic_write_text(path, format_plot_data(t, p))


def format_plot_data(t, p) -> str:
    return "".join(f"{_num(a)!r} {float(b)!r}\n" for a, b in zip(t, p))
