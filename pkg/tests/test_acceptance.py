"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line before asserting.

Run alone with ``pytest tests/test_acceptance.py -s``; expect roughly fifteen
minutes on one core, dominated by criteria 3 and 8.
"""

import math
import random
import time
from collections import Counter
from fractions import Fraction

import pytest
from scipy.stats import chisquare

from helpers import (between_recorder, brute_colored, brute_multiset, brute_subseq, chi_square_p,
                     dickson_closed, gossip_recorder, matching_recorder, pop_recorder,
                     random_colored, seq, shuffle_recorder)
from swsts import (CountConfig, ModelKind, OracleKind, ProtocolSpec, Reaction, SeqConfig,
                   StopRule, UpwardSet, build_reach, error_region, exact_hitting, pred_star,
                   run_trial, trial_seed)
from swsts.core import make_rng
from swsts.lab import ExperimentConfig, run_experiment, summarize, survival_experiment
from swsts.models import crn_propensity, crn_step
from swsts.protocols import (NeighborFinding, doctor, leader_election, neighbor_finding,
                             racy_vote)
from swsts.wqo import distribution_after, qos_embeds, subseq_embeds, vector_leq
from swsts.xsim import (GossipRunner, compile_ordered_to_between, compile_to_gossip,
                        compile_to_matching, compile_to_tokens, faithfulness, multiset_key,
                        total_variation)


@pytest.fixture
def verdict(capsys):
    def emit(num: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def _within(mean, se, exact, k=3.0):
    return abs(mean - exact) <= k * se


# 1 ------------------------------------------------------------------------

def test_c1_leader_hitting_time(verdict):
    t0 = time.perf_counter()
    b = leader_election()
    cfg = ExperimentConfig("leader_election", [3, 4, 5, 6, 7, 8], 10 ** 4, 10 ** 6, 101)
    report, _ = run_experiment(cfg)
    bad = []
    for s in report.sizes:
        oracle = build_reach(b.spec, b.init(s.n), symmetric=True)
        exact = exact_hitting(oracle, b.target).steps(oracle.states[oracle.idx(b.init(s.n))])
        assert exact == pytest.approx((s.n - 1) ** 2, rel=1e-9)
        if s.uncapped != s.trials or not _within(s.mean, s.stderr, exact):
            bad.append((s.n, s.mean, s.stderr, exact))
    dt = time.perf_counter() - t0
    verdict(1, not bad and dt < 60,
            f"n=3..8 x 1e4 trials within 3 SE of (n-1)^2; misses={bad}; {dt:.1f}s (< 60s)")


# 2 ------------------------------------------------------------------------

def test_c2_polynomial_scaling(verdict):
    t0 = time.perf_counter()
    le, _ = run_experiment(ExperimentConfig("leader_election", [16, 24, 32, 48, 64], 1500,
                                            10 ** 7, 202))
    clk, _ = run_experiment(ExperimentConfig("simple_clock", [6, 8, 10, 12, 14, 16], 1500,
                                             10 ** 7, 203, params={"k": 2}))
    dt = time.perf_counter() - t0
    a, c = le.fit, clk.fit
    ok = (a is not None and c is not None and 1.8 <= a.exponent <= 2.1
          and 2.6 <= c.exponent <= 3.4 and dt < 300)
    verdict(2, ok, f"leader exponent {a and round(a.exponent, 3)} in [1.8, 2.1]; "
                   f"clock(k=2) exponent {c and round(c.exponent, 3)} in [2.6, 3.4]; {dt:.1f}s (< 300s)")


# 3 ------------------------------------------------------------------------

def test_c3_doctor_super_polynomial(verdict):
    t0 = time.perf_counter()
    b = doctor()
    rows = []
    for n, trials in ((4, 10 ** 4), (6, 10 ** 4), (8, 4000)):
        oracle = build_reach(b.spec, b.init(n), symmetric=True)
        exact = exact_hitting(oracle, b.target).steps(oracle.states[oracle.idx(b.init(n))])
        stop = StopRule(target=b.target)
        steps = [float(run_trial(b.spec, b.init(n), stop, trial_seed(300 + n, t), 10 ** 8).steps)
                 for t in range(trials)]
        mean, _, se = summarize(steps)
        rows.append((n, exact, mean, se))
    dt = time.perf_counter() - t0
    ratios = [math.log(e) / math.log(n) for n, e, _, _ in rows]
    close = all(_within(m, se, e) for _, e, m, se in rows)
    rising = all(x < y for x, y in zip(ratios, ratios[1:]))
    verdict(3, close and rising and dt < 600,
            f"means vs exact {[(n, round(m, 1), round(e, 1)) for n, e, m, _ in rows]}; "
            f"log-ratio {[round(r, 3) for r in ratios]} increasing; {dt:.1f}s (< 600s)")


# 4 ------------------------------------------------------------------------

def test_c4_scheduler_exactness(verdict):
    cases = [("POP n=4", pop_recorder(), seq(4), 12),
             ("MATCHING n=4", matching_recorder(), seq(4), 12),
             ("SHUFFLE n=3 k=2", shuffle_recorder(2), seq(3), 720),
             ("GOSSIP n=3", gossip_recorder(), seq(3), 27),
             ("BETWEEN n=4", between_recorder(), seq(4, path=True), 8)]
    out = []
    ok = True
    for i, (name, spec, c, support) in enumerate(cases):
        p, sup = chi_square_p(spec, c, 10 ** 6, 400 + i)
        out.append(f"{name} p={p:.3g}")
        ok &= p > 1e-3 and sup == support
    verdict(4, ok, "; ".join(out))


# 5 ------------------------------------------------------------------------

def test_c5_crn_formulas(verdict):
    dimer = Reaction({"A": 2}, {"C": 1})
    exact_ok = crn_propensity(dimer, CountConfig(A=3)) == 6
    rs = [dimer, Reaction({"A": 1, "B": 1}, {"D": 1}, Fraction(1, 3)), Reaction({"B": 1}, {"E": 1}, 2)]
    c = CountConfig(A=3, B=2)
    props = [crn_propensity(r, c) for r in rs]
    rng = make_rng(500)
    hits = Counter()
    m = 10 ** 6
    trace = []
    for _ in range(m):
        trace.clear()
        crn_step(rs, c, rng, trace)
        hits[trace[0]] += 1
    tot = sum(props)
    p = chisquare([hits[i] for i in range(3)], [m * float(q / tot) for q in props]).pvalue
    verdict(5, exact_ok and p > 1e-3, f"(3)_2 = {crn_propensity(dimer, CountConfig(A=3))}; "
                                      f"selection chi-square p={p:.3g} over 1e6 draws")


# 6 ------------------------------------------------------------------------

def test_c6_nonclosed_survival(verdict):
    rep = survival_experiment(10 ** 5, threshold=10 ** 4, seed=600)
    ok = abs(rep.never - rep.oracle) <= 0.02 and rep.never >= 0.1
    verdict(6, ok, f"never-produce {rep.never:.4f} (Wilson {rep.wilson[0]:.4f}-{rep.wilson[1]:.4f}) "
                   f"vs product {rep.oracle:.6f}; escaped={rep.escaped} other={rep.other}")


# 7 ------------------------------------------------------------------------

def test_c7_neighbor_finding(verdict):
    nf = neighbor_finding()
    x = NeighborFinding.init(16)
    results = [nf.run(x, trial_seed(700, t)) for t in range(10 ** 3)]
    rate = sum(r.success for r in results) / len(results)
    invariant = all(r.offside_ok for r in results)
    verdict(7, rate >= 0.95 and invariant,
            f"success {rate:.3f} (>= 0.95) at 16 agents; off-side invariant held in all: {invariant}")


# 8 ------------------------------------------------------------------------

def _reference(pop, x, m):
    oracle = build_reach(pop, x)
    out = []
    for j in range(1, m + 1):
        ref = Counter()
        for c, p in distribution_after(oracle, x, j).items():
            ref[multiset_key(c)] += float(p)
        out.append(ref)
    return out


def test_c8_cross_model_faithfulness(verdict):
    le = leader_election()
    ordered = leader_election(OracleKind.LT)
    x = SeqConfig(("L",) * 3)
    cases = [("GOSSIP", compile_to_gossip(le.spec), le.spec, x),
             ("PUSH", compile_to_tokens(le.spec, ModelKind.PUSH), le.spec, x),
             ("SHUFFLE k=2", compile_to_tokens(le.spec, ModelKind.SHUFFLE, 2), le.spec, x),
             ("MATCHING", compile_to_matching(le.spec), le.spec, x),
             ("BETWEEN", compile_ordered_to_between(ordered.spec), ordered.spec, ordered.init(3))]
    trials = 10 ** 5
    ok = True
    out = []
    for i, (name, comp, pop, x0) in enumerate(cases):
        dists, tokens, incomplete = faithfulness(comp, x0, trials, 3, 800 + i)
        ref = _reference(pop, x0, 3)
        tvs = [total_variation(dists[j], ref[j]) for j in range(3)]
        ok &= max(tvs) <= 0.02 and tokens and trials - incomplete >= 10 ** 5 * 0.9
        out.append(f"{name} TV={[round(t, 4) for t in tvs]} tokens_ok={tokens} incomplete={incomplete}")
    runner = GossipRunner(compile_to_gossip(le.spec, c=2))
    g = [runner.run(SeqConfig(("L",) * 6), trial_seed(880, t), target=le.target).stopped
         for t in range(300)]
    fail = g.count("global") / len(g)
    ok &= fail < 0.1 and g.count("cap") == 0
    out.append(f"GOSSIP n=6 c=2 global-failure rate {fail:.3f} over {len(g)} runs")
    verdict(8, ok, "; ".join(out))


# 9 ------------------------------------------------------------------------

def test_c9_wqo_layer(verdict):
    rng = random.Random(900)
    mism = 0
    for _ in range(10 ** 4):
        s = [rng.choice("abc") for _ in range(rng.randrange(5))]
        t = [rng.choice("abc") for _ in range(rng.randrange(8))]
        mism += subseq_embeds(s, t) != brute_subseq(s, t)
        mism += vector_leq(Counter(s), Counter(t)) != brute_multiset(s, t)
        cs, ct = random_colored(rng, rng.randrange(5)), random_colored(rng, rng.randrange(8))
        mism += qos_embeds(cs, ct) != brute_colored(cs, ct)

    closed = True
    for make, sizes in ((leader_election, range(2, 7)), (doctor, range(2, 7))):
        b = make()
        oracle = build_reach(b.spec, [b.init(n) for n in sizes], symmetric=True)
        closed &= dickson_closed(oracle, pred_star(oracle, b.target))
    rv = racy_vote()
    words = ("00", "11", "01", "001", "011", "0011", "00111")
    oracle = build_reach(rv.spec, [rv.spec.input_map(w) for w in words], symmetric=True)
    for V in (rv.spec.v0, rv.spec.v1):
        closed &= dickson_closed(oracle, pred_star(oracle, V))
    rs = (Reaction({"A": 1, "B": 1}, {"C": 1}), Reaction({"C": 1}, {"A": 1, "B": 1}),
          Reaction({"C": 2}, {"D": 1, "C": 1}, Fraction(1, 2)))
    crn = ProtocolSpec(name="bind", model=ModelKind.CRN, reactions=rs,
                       weights={"A": 1, "B": 1, "C": 2, "D": 2})
    oracle = build_reach(crn, [CountConfig(A=a, B=b) for a in range(4) for b in range(4)])
    closed &= dickson_closed(oracle, pred_star(oracle, UpwardSet.at_least(D=1)))

    x = rv.spec.input_map("0011")
    oracle = build_reach(rv.spec, x, symmetric=True)
    region = error_region(oracle, rv.spec.v0, rv.spec.v1)
    has_init = oracle.key(x) in {oracle.key(c) for c in region}
    verdict(9, mism == 0 and closed and bool(region) and has_init,
            f"3x1e4 embedding checks, {mism} mismatches; pred_star upward closed: {closed}; "
            f"racy-vote error region size {len(region)}, contains init: {has_init}")


# 10 -----------------------------------------------------------------------

def test_c10_determinism(verdict, tmp_path):
    blobs = []
    for i in range(2):
        for proto, sizes, params in (("leader_election", [4, 6], {}), ("doctor", [5], {}),
                                     ("simple_clock", [5], {"k": 2}),
                                     ("nonclosed_crn", [2], {"threshold": 200})):
            path = tmp_path / f"{proto}-{i}.csv"
            summ = tmp_path / f"{proto}-{i}.json"
            run_experiment(ExperimentConfig(proto, sizes, 200, 10 ** 6, 1000, params,
                                            raw_path=str(path), summary_path=str(summ)))
            blobs.append((proto, path.read_bytes(), summ.read_bytes()))
    half = len(blobs) // 2
    same = all(a == b for a, b in zip(blobs[:half], blobs[half:]))
    verdict(10, same, f"{half} experiments re-run with the same master seed; raw and summary "
                      f"files byte-identical: {same}")
