"""Experiment harness: trial fan-out, aggregation, power-law fits and survival runs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Optional

import numpy as np

from .core import Outcome, StopRule, run_trial, trial_seed
from .models import ModelKind, OracleKind
from .wqo import OracleOverflow, build_reach

CSV_HEADER = ["trial", "seed", "n", "steps", "outcome", "final_weight"]


class ExperimentError(ValueError):
    pass


# -------------------------------------------------------------- registry

@dataclass
class Setup:
    spec: Any
    init: Any
    stop: StopRule
    symmetric: bool


def _builtin(name: str, params: dict, n: int) -> Setup:
    from . import protocols as P
    if name == "leader_election":
        b = P.leader_election()
        return Setup(b.spec, b.init(n), StopRule(target=b.target), True)
    if name == "doctor":
        b = P.doctor()
        return Setup(b.spec, b.init(n), StopRule(target=b.target), True)
    if name == "simple_clock":
        b = P.simple_clock(int(params.get("k", 1)))
        return Setup(b.spec, b.init(n), StopRule(target=b.target), True)
    if name == "nonclosed_crn":
        b = P.nonclosed_crn(Fraction(str(params.get("aa_rate", "1/2"))))
        thr = int(params.get("threshold", 10 ** 4))
        esc = _AtLeast("b", thr)
        return Setup(b.spec, b.init(n), StopRule(target=b.target, escape=esc), False)
    if name == "racy_vote":
        b = P.racy_vote()
        return Setup(b.spec, b.init(n), StopRule(outputs=True), True)
    raise ExperimentError(f"unknown protocol {name!r}")


BUILTINS = ("leader_election", "doctor", "simple_clock", "nonclosed_crn", "racy_vote")


class _AtLeast:
    def __init__(self, species, m):
        self.species, self.m = species, m

    def __contains__(self, c) -> bool:
        return c[self.species] >= self.m


def _from_file(path: str, params: dict, n: int) -> Setup:
    """Input word: the ``word`` parameter repeated to length n, else n copies of the first symbol."""
    from .textfmt import load
    spec, target = load(path)
    if spec.input_map is None:
        raise ExperimentError(f"{path} declares no input map")
    pattern = str(params.get("word") or sorted(spec.input_alphabet)[0])
    word = tuple((pattern * n)[:n])
    bad = set(word) - set(spec.input_alphabet)
    if bad:
        raise ExperimentError(f"input symbols {sorted(bad)} not declared in {path}")
    init = spec.input_map(word)
    outputs = spec.v0 is not None or spec.v1 is not None
    if target is None and not outputs:
        raise ExperimentError(f"{path} declares neither a target nor output sets")
    symmetric = spec.model is not ModelKind.BETWEEN and spec.oracle in (OracleKind.NONE, OracleKind.EQ)
    return Setup(spec, init, StopRule(target=target, outputs=outputs), symmetric)


def make_setup(protocol: str, params: dict, n: int) -> Setup:
    if protocol in BUILTINS:
        return _builtin(protocol, params, n)
    if os.path.exists(protocol):
        return _from_file(protocol, params, n)
    raise ExperimentError(f"unknown protocol {protocol!r}")


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    protocol: str
    sizes: list
    trials: int
    cap: int
    seed: int
    params: dict = field(default_factory=dict)
    oracle_budget: int = 20000
    raw_path: Optional[str] = None
    summary_path: Optional[str] = None
    workers: int = 1

    def validate(self) -> None:
        if not self.sizes:
            raise ExperimentError("sizes must be nonempty")
        if self.trials < 1:
            raise ExperimentError("trials must be at least 1")
        if self.cap < 1:
            raise ExperimentError("cap must be at least 1")


@dataclass
class SizeStats:
    n: int
    trials: int
    uncapped: int
    mean: Optional[float]
    variance: Optional[float]
    stderr: Optional[float]
    outcomes: dict
    oracle_states: Optional[int]


@dataclass
class PowerFit:
    exponent: float
    intercept: float
    ci: tuple
    stderr: float
    points: int


@dataclass
class ScalingReport:
    protocol: str
    seed: int
    sizes: list
    fit: Optional[PowerFit]
    fit_error: Optional[str]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def by_n(self, n: int) -> SizeStats:
        return next(s for s in self.sizes if s.n == n)


def summarize(values: list) -> tuple:
    """(mean, unbiased variance, standard error) with exactly rounded sums."""
    m = len(values)
    if m == 0:
        return None, None, None
    mean = math.fsum(values) / m
    if m == 1:
        return mean, 0.0, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, var, math.sqrt(var / m)


def _run_chunk(args) -> list:
    protocol, params, n, cap, seed, lo, hi, budget = args
    setup = make_setup(protocol, params, n)
    stop = setup.stop
    states = None
    if budget > 0 and setup.spec.model is not ModelKind.CRN:
        try:
            oracle = build_reach(setup.spec, setup.init, setup.symmetric, budget)
            stop = StopRule(stop.target, stop.outputs, oracle, stop.escape)
            states = len(oracle)
        except OracleOverflow:
            pass
    rows = []
    for t in range(lo, hi):
        s = trial_seed(seed, t)
        rec = run_trial(setup.spec, setup.init, stop, s, cap)
        rows.append((t, s, n, rec.steps, rec.outcome.value, rec.final_weight))
    return rows, states


def run_experiment(cfg: ExperimentConfig) -> tuple:
    """Run every trial; returns ``(report, rows)`` and writes the files named in ``cfg``.

    Trial ``t`` (numbered across sizes in order) uses seed
    ``trial_seed(cfg.seed, t)``, so any subset of trials can be replayed.
    """
    cfg.validate()
    rows: list = []
    stats = []
    t0 = 0
    for n in cfg.sizes:
        make_setup(cfg.protocol, cfg.params, n)  # fail early on bad protocol or size
        chunks = _chunks(t0, t0 + cfg.trials, cfg.workers)
        jobs = [(cfg.protocol, cfg.params, n, cfg.cap, cfg.seed, lo, hi, cfg.oracle_budget)
                for lo, hi in chunks]
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                results = list(pool.map(_run_chunk, jobs))
        else:
            results = [_run_chunk(j) for j in jobs]
        size_rows = [r for chunk, _ in results for r in chunk]
        rows.extend(size_rows)
        t0 += cfg.trials
        stats.append(_size_stats(n, size_rows, results[0][1]))
    points = [(s.n, s.mean) for s in stats if s.uncapped >= 30 and s.mean and s.mean > 0]
    fit, err = None, None
    if len(points) >= 3:
        fit = fit_power_law(points)
    else:
        err = f"need 3 sizes with at least 30 uncapped trials, have {len(points)}"
    report = ScalingReport(cfg.protocol, cfg.seed, stats, fit, err)
    if cfg.raw_path:
        with open(cfg.raw_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(rows_to_csv(rows))
    if cfg.summary_path:
        with open(cfg.summary_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return report, rows


def _chunks(lo: int, hi: int, k: int) -> list:
    k = max(1, min(k, hi - lo))
    step = math.ceil((hi - lo) / k)
    return [(a, min(hi, a + step)) for a in range(lo, hi, step)]


def _size_stats(n: int, rows: list, oracle_states) -> SizeStats:
    outcomes = Counter(r[4] for r in rows)
    steps = [float(r[3]) for r in rows if r[4] != Outcome.CAPPED.value]
    mean, var, se = summarize(steps)
    return SizeStats(n, len(rows), len(steps), mean, var, se,
                     {o.value: outcomes.get(o.value, 0) for o in Outcome}, oracle_states)


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def fit_power_law(points) -> PowerFit:
    """Least squares of log(mean) on log(n) with a 95% t-interval for the slope."""
    pts = [(float(n), float(m)) for n, m in points]
    if len(pts) < 3:
        raise ExperimentError("a power-law fit needs at least 3 points")
    if any(m <= 0 or n <= 0 for n, m in pts):
        raise ExperimentError("sizes and means must be positive")
    x = np.log([n for n, _ in pts])
    y = np.log([m for _, m in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise ExperimentError("need at least two distinct sizes")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    icpt = float(ym - slope * xm)
    resid = y - (icpt + slope * x)
    dof = len(pts) - 2
    s2 = float((resid ** 2).sum()) / dof
    se = math.sqrt(s2 / sxx)
    from scipy.stats import t as student
    h = float(student.ppf(0.975, dof)) * se
    return PowerFit(slope, icpt, (slope - h, slope + h), se, len(pts))


# -------------------------------------------------------------- survival

@dataclass
class SurvivalReport:
    trials: int
    threshold: int
    produced: int
    escaped: int
    other: int
    never: float
    produce: float
    wilson: tuple
    oracle: float
    truncated_oracle: float


def survival_experiment(trials: int, threshold: int = 10 ** 4, seed: int = 0,
                        aa_rate=Fraction(1, 2), backend: str = "numba",
                        cap: Optional[int] = None) -> SurvivalReport:
    """Fraction of non-closed CRN runs that never produce c.

    A run that reaches b >= ``threshold`` without producing c counts as
    never producing it, so a finite threshold can only overstate survival;
    ``truncated_oracle`` is the exact value for the threshold used.
    """
    from . import protocols as P
    if trials < 1:
        raise ExperimentError("trials must be at least 1")
    b = P.nonclosed_crn(aa_rate)
    init = b.init(2)
    cap = cap if cap is not None else 10 * threshold + 10
    seeds = [trial_seed(seed, t) for t in range(trials)]
    if backend == "numba":
        from ._kernels import crn_batch
        codes, _ = crn_batch(b.spec.reactions, ["a", "b", "c"], init.as_dict(), {"c": 1},
                             ("b", threshold), cap, seeds)
        produced = int((codes == 1).sum())
        escaped = int((codes == 2).sum())
    elif backend == "python":
        stop = StopRule(target=b.target, escape=_AtLeast("b", threshold))
        produced = escaped = 0
        for s in seeds:
            rec = run_trial(b.spec, init, stop, s, cap)
            if rec.outcome is Outcome.REACHED_TARGET:
                produced += 1
            elif rec.outcome is Outcome.CAPPED and rec.final["b"] >= threshold:
                escaped += 1
    else:
        raise ExperimentError(f"unknown backend {backend!r}")
    other = trials - produced - escaped
    never = (trials - produced) / trials
    from scipy.stats import binomtest
    ci = binomtest(trials - produced, trials).proportion_ci(method="wilson")
    return SurvivalReport(trials, threshold, produced, escaped, other, never, 1 - never,
                          (float(ci.low), float(ci.high)),
                          P.survival_product(aa_rate), P.survival_product(aa_rate, 2, threshold))
