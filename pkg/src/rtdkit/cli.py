"""Command-line pipelines: gen -> run -> fit / analyze / compare -> report.

Every subcommand writes machine-readable output files atomically; progress
goes to standard error.  Exit codes: 0 success, 2 usage, 3 I/O or malformed
input, 4 analysis failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._files import atomic_write_text
from .analysis import (AnalysisError, Verdict, anytime_schedule, compare, infer_completeness,
                       optimal_cutoff_expected_time, optimal_cutoff_geometric,
                       parallel_transform, restart_transform, speedup_classification,
                       tail_bounds)
from .cnf import DimacsError
from .fit import (DEFAULT_SIGNIFICANCE, MIN_FIT_SUCCESSES, FitFailed, InsufficientSample,
                  fit_exponential, fit_weibull, model_from_dict)
from .instancegen import (DEFAULT_CLAUSE_RATIO, DEFAULT_NODE_LIMIT, build_test_set,
                          instance_filename, load_test_set, write_test_set)
from .rld import (AveragedRld, NoSuccesses, QuantileNotObserved, Rld, RldFormatError,
                  average_rlds, collect, estimate_mean_runtime, format_plot_data,
                  format_rld_csv, hardness_distribution, median, plot_points, read_rld_csv)
from .rng import derive_seed, rng_info
from .sls import Algorithm, SolverConfig

log = logging.getLogger("rtdkit")

SCHEMA = "rtd-report/1"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ANALYSIS = 0, 2, 3, 4


class UsageError(Exception):
    pass


# manifest -----------------------------------------------------------------


@dataclass(frozen=True)
class TestSetSpec:
    num_vars: int
    count: int
    clause_ratio: float = DEFAULT_CLAUSE_RATIO
    base_seed: int = 0
    node_limit: int | None = DEFAULT_NODE_LIMIT

    __test__ = False

    def to_dict(self) -> dict:
        return {"num_vars": self.num_vars, "count": self.count, "clause_ratio": self.clause_ratio,
                "base_seed": self.base_seed, "node_limit": self.node_limit}


@dataclass(frozen=True)
class ExperimentManifest:
    """One declarative JSON file drives every stage.

    ``configs`` lists solver settings; a ``sweep`` entry
    ``{"algorithm": "gwsat", "values": [...]}`` expands into one config per value.
    Relative ``output_dir`` paths resolve against the manifest's directory.
    """

    testset: TestSetSpec
    configs: tuple[SolverConfig, ...]
    output_dir: Path
    n_trials: int = 1000
    cutoff: int = 10**7
    base_seed: int = 0
    significance: float = DEFAULT_SIGNIFICANCE
    jobs: int = 1
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def instances_dir(self) -> Path:
        return self.output_dir / "instances"

    @property
    def rld_dir(self) -> Path:
        return self.output_dir / "rld"

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ExperimentManifest":
        known = {"testset", "configs", "sweep", "output_dir", "n_trials", "cutoff", "base_seed",
                 "significance", "jobs"}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown manifest keys: {sorted(extra)}")
        try:
            ts = TestSetSpec(**d["testset"])
        except (KeyError, TypeError) as exc:
            raise UsageError(f"bad testset entry: {exc}") from None
        if ts.count < 1:
            raise UsageError("testset.count must be >= 1")
        if ts.num_vars < 3:
            raise UsageError("testset.num_vars must be >= 3")
        configs = []
        try:
            for c in d.get("configs", []):
                configs.append(SolverConfig.from_dict(c))
            sweep = d.get("sweep")
            if sweep:
                algo = Algorithm(sweep["algorithm"])
                key = {Algorithm.GWSAT: "wp", Algorithm.WSAT: "noise"}.get(algo)
                if key is None:
                    raise UsageError("sweeps need a parameterised algorithm (gwsat or wsat)")
                configs += [SolverConfig(algo, **{key: float(v)}) for v in sweep["values"]]
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad solver config: {exc}") from None
        if not configs:
            raise UsageError("manifest lists no solver configs")
        if len({c.slug() for c in configs}) != len(configs):
            raise UsageError("duplicate solver configs")
        out = Path(d.get("output_dir", "out"))
        m = cls(ts, tuple(configs), out if out.is_absolute() else base / out,
                int(d.get("n_trials", 1000)), int(d.get("cutoff", 10**7)),
                int(d.get("base_seed", 0)), float(d.get("significance", DEFAULT_SIGNIFICANCE)),
                int(d.get("jobs", 1)), d)
        if m.n_trials < 1 or m.cutoff < 1:
            raise UsageError("n_trials and cutoff must be >= 1")
        if not 0 < m.significance < 1:
            raise UsageError("significance must lie in (0, 1)")
        return m

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise UsageError(f"{path}: manifest must be a JSON object")
        return cls.from_dict(d, path.parent)

    def rld_path(self, config: SolverConfig, index: int) -> Path:
        return self.rld_dir / config.slug() / instance_filename(index).replace(".cnf", ".csv")

    def trial_seed(self, index: int) -> int:
        return derive_seed(self.base_seed, index)


# output helpers ---------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _envelope(kind: str, body: dict) -> dict:
    return {"schema": SCHEMA, "kind": kind, "rng": rng_info(), "rtdkit_version": __version__,
            **body}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(path, dumps(obj))
    log.info("wrote %s", path)


def _write_plot(path: Path, source, t_max=None, num: int = 200) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    t, p = plot_points(source, t_max, num)
    atomic_write_text(path, format_plot_data(t, p))
    return path.name


def _plot_range(rld) -> float:
    comps = rld.components if isinstance(rld, AveragedRld) else (rld,)
    hi = max((float(c.successes[-1]) for c in comps if c.n_success), default=0.0)
    return hi if hi > 0 else float(rld.horizon)


def _summary(rld: Rld) -> dict:
    d = rld.to_dict()
    try:
        d["median"] = median(rld)
    except QuantileNotObserved:
        d["median"] = None
    try:
        d["mean_estimate"] = estimate_mean_runtime(rld)
    except NoSuccesses:
        d["mean_estimate"] = None
    d["sd_successes"] = float(np.std(rld.successes, ddof=1)) if rld.n_success > 1 else None
    return d


def _read_rlds(paths) -> list[Rld]:
    return [read_rld_csv(p) for p in paths]


# subcommands -------------------------------------------------------------------


def cmd_gen(args) -> int:
    m = ExperimentManifest.load(args.manifest)
    ts = m.testset
    log.info("generating %d satisfiable instances (n=%d, ratio=%g)", ts.count, ts.num_vars,
             ts.clause_ratio)
    test_set = build_test_set(ts.num_vars, ts.clause_ratio, ts.count, ts.base_seed,
                              ts.node_limit, jobs=m.jobs)
    write_test_set(test_set, m.instances_dir)
    log.info("kept %d, discarded %d unsatisfiable or over budget", test_set.count,
             test_set.discarded_count)
    return EXIT_OK


def cmd_run(args) -> int:
    m = ExperimentManifest.load(args.manifest)
    desc_path = m.instances_dir / "testset.json"
    if not desc_path.exists():
        raise FileNotFoundError(f"no test set at {desc_path}; run 'gen' first")
    test_set = load_test_set(m.instances_dir)
    total = len(m.configs) * test_set.count
    done = 0
    for config in m.configs:
        for i, formula in enumerate(test_set.instances):
            name = instance_filename(i)
            rld = collect(formula, config, m.n_trials, m.cutoff, m.trial_seed(i), instance=name)
            out = m.rld_path(config, i)
            out.parent.mkdir(parents=True, exist_ok=True)
            atomic_write_text(out, format_rld_csv(rld))
            done += 1
            log.info("[%d/%d] %s %s success %.3f", done, total, config.slug(), name,
                     rld.success_rate)
    return EXIT_OK


def _fit_report(rld: Rld, significance: float, left_truncate: float,
                min_successes: int) -> dict:
    fits = {}
    fe = fit_exponential(rld, min_successes, significance, left_truncate)
    fits["exponential"] = fe.to_dict()
    try:
        fits["weibull"] = fit_weibull(rld, min_successes, significance,
                                      left_truncate=left_truncate).to_dict()
    except FitFailed as exc:
        fits["weibull"] = {"error": str(exc), "diagnostics": exc.diagnostics}
    return fits


def cmd_fit(args) -> int:
    for csv in args.inputs:
        csv = Path(csv)
        rld = read_rld_csv(csv)
        out_dir = Path(args.out_dir) if args.out_dir else csv.parent
        stem = csv.stem
        fits = _fit_report(rld, args.significance, args.left_truncate, args.min_successes)
        t_max = _plot_range(rld)
        plots = {"rld": _write_plot(out_dir / f"{stem}.rld.dat", rld)}
        for fam, d in fits.items():
            if "model" in d:
                plots[fam] = _write_plot(out_dir / f"{stem}.{fam}.dat", model_from_dict(d["model"]),
                                         t_max)
        t, p = plot_points(rld)
        report = _envelope("fit", {
            "input": csv.name,
            "rld": _summary(rld),
            "ecdf": {"t": t, "p": p},
            "fits": fits,
            "significance": args.significance,
            "left_truncate": args.left_truncate,
            "plots": plots,
        })
        _write_json(out_dir / f"{stem}.fit.json", report)
    return EXIT_OK


def _check_p(p: float) -> None:
    if not 0 <= p < 1:
        raise UsageError("--p must lie in [0, 1)")


def cmd_analyze(args) -> int:
    _check_p(args.p)
    if not args.inputs:
        if args.mean is None:
            raise UsageError("analyze needs input CSV files or --mean")
        if args.sd is not None and args.sd < 0:
            raise UsageError("--sd must be non-negative")
        report = _envelope("analyze", {"tail_bounds": tail_bounds(args.mean, args.sd, args.p)})
        _emit(report, args.out)
        return EXIT_OK
    if args.processors < 1:
        raise UsageError("--processors must be >= 1")
    rlds = _read_rlds(args.inputs)
    source = rlds[0] if len(rlds) == 1 else average_rlds(rlds)
    plot_dir = Path(args.plot_dir) if args.plot_dir else None
    t_max = _plot_range(source)
    body: dict = {"inputs": [Path(p).name for p in args.inputs]}
    if isinstance(source, Rld):
        body["rld"] = _summary(source)
        if source.n_success:
            mean_rt = estimate_mean_runtime(source)
            sd = body["rld"]["sd_successes"]
            body["tail_bounds"] = tail_bounds(mean_rt, sd, args.p)
        body["completeness"] = infer_completeness(source).value
        try:
            body["speedup"] = speedup_classification(source, args.significance).to_dict()
        except (InsufficientSample, FitFailed) as exc:
            body["speedup"] = {"error": str(exc)}
    else:
        body["averaged"] = {"components": len(rlds), "horizon": source.horizon,
                            "mixed_cutoffs": source.mixed_cutoffs}
    geo = optimal_cutoff_geometric(source)
    exp_t = optimal_cutoff_expected_time(source)
    body["cutoffs"] = {"geometric": geo.to_dict(), "expected_time": exp_t.to_dict()}
    plots = {}
    if plot_dir:
        plots["rld"] = _write_plot(plot_dir / "rld.dat", source)
    if exp_t.t_star is not None:
        restarted = restart_transform(source, exp_t.t_star)
        body["restart"] = {"t_c": exp_t.t_star}
        if plot_dir:
            plots["restarted"] = _write_plot(plot_dir / "restarted.dat", restarted, t_max)
    par = parallel_transform(source, args.processors)
    body["parallel"] = {"processors": args.processors}
    if plot_dir:
        plots["parallel"] = _write_plot(plot_dir / "parallel.dat", par, t_max)
    body["plots"] = plots
    _emit(_envelope("analyze", body), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = _read_rlds([args.a, args.b])
    cmp = compare(a, b, tol=args.tol)
    body = {"a": Path(args.a).as_posix(), "b": Path(args.b).as_posix(), "comparison": cmp.to_dict()}
    plot_dir = Path(args.plot_dir) if args.plot_dir else None
    plots = {}
    if plot_dir:
        plots["a"] = _write_plot(plot_dir / "a.dat", a)
        plots["b"] = _write_plot(plot_dir / "b.dat", b)
    if cmp.verdict is Verdict.CROSSOVER:
        sched = anytime_schedule(a, b, tol=args.tol)
        body["schedule"] = sched.to_dict()
        if plot_dir and sched.composite is not None:
            t_max = max(_plot_range(a), _plot_range(b))
            if sched.a_cutoff is not None:
                plots["restarted_a"] = _write_plot(plot_dir / "restarted_a.dat",
                                                   restart_transform(a, sched.a_cutoff), t_max)
            plots["composite"] = _write_plot(plot_dir / "composite.dat", sched.composite, t_max)
    body["plots"] = plots
    _emit(_envelope("compare", body), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    m = ExperimentManifest.load(args.manifest)
    desc = json.loads((m.instances_dir / "testset.json").read_text())
    configs = []
    for config in m.configs:
        rlds = [read_rld_csv(m.rld_path(config, i)) for i in range(desc["count"])]
        hard = hardness_distribution(rlds)
        per_instance = []
        for r in rlds:
            entry = {"instance": r.instance, "success_rate": r.success_rate}
            try:
                entry["median"] = median(r)
            except QuantileNotObserved:
                entry["median"] = None
            try:
                fe = fit_exponential(r, significance=m.significance)
                entry["exp_m"] = fe.model.m
                entry["chi2_p_value"] = None if fe.chi2 is None else fe.chi2.p_value
                entry["chi2_passed"] = fe.passed
            except (InsufficientSample, FitFailed) as exc:
                entry["fit_error"] = str(exc)
            per_instance.append(entry)
        hardest = set(hard.instances[-args.hardest:]) if args.hardest else set()
        tested = [e for e in per_instance
                  if e["instance"] in hardest and e.get("chi2_passed") is not None]
        passed = sum(bool(e["chi2_passed"]) for e in tested)
        plot_dir = m.output_dir / "plots"
        plot_dir.mkdir(parents=True, exist_ok=True)
        med = hard.medians
        frac = np.arange(1, med.size + 1) / max(med.size, 1)
        name = f"{config.slug()}.hardness.dat"
        atomic_write_text(plot_dir / name, format_plot_data(med, frac))
        configs.append({
            "config": config.to_dict(),
            "hardness": hard.summary(),
            "excluded": list(hard.excluded),
            "hardest": {"k": args.hardest, "chi2_tested": len(tested), "chi2_passed": passed,
                        "pass_fraction": passed / len(tested) if tested else None},
            "instances": per_instance,
            "plots": {"hardness": name},
        })
    report = _envelope("report", {
        "manifest": {"testset": m.testset.to_dict(), "n_trials": m.n_trials, "cutoff": m.cutoff,
                     "base_seed": m.base_seed, "significance": m.significance},
        "testset": desc,
        "configs": configs,
    })
    _write_json(m.output_dir / "report.json", report)
    return EXIT_OK


def _emit(report: dict, out) -> None:
    if out:
        _write_json(Path(out), report)
    else:
        sys.stdout.write(dumps(report))


# parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtdkit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="build a satisfiable random 3-SAT test set")
    g.add_argument("manifest")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="measure one RLD per (instance, solver config)")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="fit exponential and Weibull models to RLD files")
    f.add_argument("inputs", nargs="+", help="RLD CSV files")
    f.add_argument("-o", "--out-dir", help="output directory (default: next to each input)")
    f.add_argument("--significance", type=float, default=DEFAULT_SIGNIFICANCE)
    f.add_argument("--left-truncate", type=float, default=0.0,
                   help="ignore this initial segment in the goodness-of-fit test")
    f.add_argument("--min-successes", type=int, default=MIN_FIT_SUCCESSES)
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("analyze", help="cutoffs, transforms and tail bounds")
    a.add_argument("inputs", nargs="*", help="RLD CSV files; several are averaged")
    a.add_argument("--mean", type=float, help="summary input: mean run time")
    a.add_argument("--sd", type=float, help="summary input: standard deviation")
    a.add_argument("--p", type=float, default=0.99, help="target success probability")
    a.add_argument("--processors", type=int, default=4)
    a.add_argument("--significance", type=float, default=DEFAULT_SIGNIFICANCE)
    a.add_argument("-o", "--out", help="JSON report path (default: stdout)")
    a.add_argument("--plot-dir")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compare", help="dominance, crossover and anytime schedule")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tol", type=float, help="equality tolerance (default 1/n)")
    c.add_argument("-o", "--out", help="JSON report path (default: stdout)")
    c.add_argument("--plot-dir")
    c.set_defaults(func=cmd_compare)

    rp = sub.add_parser("report", help="summarise a measured manifest")
    rp.add_argument("manifest")
    rp.add_argument("--hardest", type=int, default=20,
                    help="chi-square pass count over the k hardest instances")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rtdkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RldFormatError, DimacsError) as exc:
        print(f"rtdkit: malformed input: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"rtdkit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AnalysisError, InsufficientSample, FitFailed, NoSuccesses, QuantileNotObserved,
            ValueError) as exc:
        print(f"rtdkit: analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
