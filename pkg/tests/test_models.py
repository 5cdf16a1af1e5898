from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from helpers import (between_recorder, chi_square_p, gossip_recorder, matching_recorder,
                     pop_recorder, push_recorder, seq, shuffle_recorder)
from swsts import CountConfig, ModelKind, OracleKind, OracleOut, ProtocolSpec, Reaction, SeqConfig
from swsts.config import ConfigurationError, PathConfig
from swsts.core import make_rng
from swsts.models import (DeadConfiguration, OracleError, apply_reaction, between_triples,
                          crn_propensity, crn_step, directed_matchings, falling,
                          one_step_distribution, oracle_eval, step)


# --------------------------------------------------------------- oracles

def test_order_oracle_values():
    assert oracle_eval(OracleKind.LT, 1, 2) is OracleOut.LT
    assert oracle_eval(OracleKind.LT, 5, 2) is OracleOut.GT
    assert oracle_eval(OracleKind.EQ, 3, 3) is OracleOut.EQ
    assert oracle_eval(OracleKind.EQ, 3, 4) is OracleOut.NEQ
    assert oracle_eval(OracleKind.NONE, 1, 2) is None


def test_ancestry_oracle():
    assert oracle_eval(OracleKind.ANC, "0", "01") is OracleOut.ANC
    assert oracle_eval(OracleKind.ANC, "01", "0") is OracleOut.DESC
    assert oracle_eval(OracleKind.ANC, "00", "01") is OracleOut.UNREL
    assert oracle_eval(OracleKind.ANC, "1", "1") is OracleOut.EQ


def test_oracle_type_errors():
    with pytest.raises(OracleError):
        oracle_eval(OracleKind.LT, "a", 1)
    with pytest.raises(OracleError):
        oracle_eval(OracleKind.ANC, 1, 2)


@given(st.integers(-50, 50), st.integers(-50, 50))
def test_order_oracle_antisymmetric(a, b):
    assert oracle_eval(OracleKind.LT, a, b) is oracle_eval(OracleKind.LT, b, a).flipped()


# ------------------------------------------------------------------- CRN

def test_falling_factorial():
    assert falling(3, 2) == 6
    assert falling(1, 2) == 0
    assert falling(5, 0) == 1


def test_propensity_dimerisation():
    r = Reaction({"A": 2}, {"C": 1})
    assert crn_propensity(r, CountConfig(A=3)) == 6
    half = Reaction({"A": 1, "B": 1}, {"B": 1}, Fraction(1, 2))
    assert crn_propensity(half, CountConfig(A=4, B=3)) == 6


def test_apply_reaction_and_net():
    r = Reaction({"A": 2}, {"C": 1})
    assert apply_reaction(r, CountConfig(A=3)).as_dict() == {"A": 1, "C": 1}
    assert r.net() == {"A": -2, "C": 1}


def test_reaction_rejects_nonpositive_rate():
    with pytest.raises(ConfigurationError):
        Reaction({"A": 1}, {"B": 1}, 0)


def test_dead_configuration_raises():
    r = Reaction({"A": 2}, {"C": 1})
    with pytest.raises(DeadConfiguration):
        crn_step([r], CountConfig(A=1), make_rng(0))


def test_reaction_selection_matches_propensities():
    rs = [Reaction({"A": 2}, {"C": 1}), Reaction({"A": 1, "B": 1}, {"D": 1}, Fraction(1, 3)),
          Reaction({"B": 1}, {"E": 1}, 2)]
    c = CountConfig(A=3, B=2)
    props = [crn_propensity(r, c) for r in rs]  # 6, 2, 4
    assert props == [6, 2, 4]
    rng = make_rng(11)
    hits = Counter()
    for _ in range(30000):
        trace = []
        crn_step(rs, c, rng, trace)
        hits[trace[0]] += 1
    tot = sum(props)
    exp = [30000 * float(p / tot) for p in props]
    assert chisquare([hits[i] for i in range(3)], exp).pvalue > 1e-3


def test_crn_one_step_distribution_exact():
    rs = [Reaction({"A": 2}, {"C": 1}), Reaction({"B": 1}, {"E": 1}, 2)]
    d = one_step_distribution(ProtocolSpec(name="x", model=ModelKind.CRN, reactions=tuple(rs),
                                           closed=False),
                              CountConfig(A=3, B=1))
    assert sorted(d.values()) == [Fraction(1, 4), Fraction(3, 4)]


# ------------------------------------------------------ scheduler support

def test_enumeration_sizes():
    assert len(list(directed_matchings(4))) == 12
    assert len(set(directed_matchings(4))) == 12
    assert len(between_triples(4)) == 8
    assert len(between_triples(5)) == 20


@pytest.mark.parametrize("spec,c,support", [
    (pop_recorder(), seq(4), 12),
    (matching_recorder(), seq(4), 12),
    (shuffle_recorder(2), seq(3), 720),
    (gossip_recorder(), seq(3), 27),
    (gossip_recorder(self_sampling=False), seq(3), 8),
    (push_recorder(), seq(3), 27),
    (between_recorder(), seq(4, path=True), 8),
])
def test_enumerated_law_is_uniform(spec, c, support):
    d = one_step_distribution(spec, c)
    assert len(d) == support
    assert set(d.values()) == {Fraction(1, support)}


@pytest.mark.parametrize("spec,c", [
    (pop_recorder(), seq(4)),
    (matching_recorder(), seq(4)),
    (gossip_recorder(), seq(3)),
    (push_recorder(), seq(3)),
    (between_recorder(), seq(4, path=True)),
])
def test_sampler_matches_enumeration(spec, c):
    p, _ = chi_square_p(spec, c, 20000, 3)
    assert p > 1e-3


def test_gossip_oracle_is_transmitter_first():
    spec = gossip_recorder(self_sampling=False, oracle=OracleKind.LT)
    c = SeqConfig(("a", "b", "c"), (1, 2, 3))
    out = step(spec, c, make_rng(4))
    rank = dict(zip(c.states, c.attrs))
    for q, obs, o in out.states:
        assert o is oracle_eval(OracleKind.LT, rank[obs], rank[q])


def test_pop_oracle_is_initiator_first():
    spec = pop_recorder(oracle=OracleKind.LT)
    c = SeqConfig(("a", "b", "c"), (3, 1, 2))
    rank = dict(zip(c.states, c.attrs))
    for _ in range(20):
        out = step(spec, c, make_rng(_))
        for q in out.states:
            if isinstance(q, tuple) and q[1] == "i":
                assert q[3] is oracle_eval(OracleKind.LT, rank[q[0]], rank[q[2]])


def test_size_checks():
    with pytest.raises(ConfigurationError):
        step(matching_recorder(), seq(3), make_rng(0))
    with pytest.raises(ConfigurationError):
        step(between_recorder(), seq(2, path=True), make_rng(0))
    with pytest.raises(ConfigurationError):
        step(pop_recorder(), seq(1), make_rng(0))


def test_shuffle_wrong_token_count():
    spec = ProtocolSpec(name="bad", model=ModelKind.SHUFFLE, k=2, emit=lambda q: (q,),
                        delta=lambda q, got: q)
    with pytest.raises(ConfigurationError):
        step(spec, seq(2), make_rng(0))


def test_between_orientation_mirrors():
    d = one_step_distribution(between_recorder(), seq(3, path=True))
    # one unordered triple, two orientations
    assert len(d) == 2


@given(st.permutations(range(5)))
def test_pop_law_equivariant_under_relabelling(perm):
    # the multiset law of a symmetric protocol does not depend on agent order
    from swsts.protocols import doctor
    spec = doctor().spec
    states = ("I", "I", "S", "S", "D")
    a = one_step_distribution(spec, SeqConfig(states))
    b = one_step_distribution(spec, SeqConfig(tuple(states[i] for i in perm)))

    def collapse(d):
        out = Counter()
        for c, p in d.items():
            out[tuple(sorted(c.states))] += p
        return out
    assert collapse(a) == collapse(b)


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 10 ** 6))
def test_closed_crn_step_preserves_weight(a, b, seed):
    from swsts import weight_of
    rs = (Reaction({"A": 1, "B": 1}, {"C": 1}), Reaction({"C": 1}, {"A": 1, "B": 1}))
    spec = ProtocolSpec(name="bind", model=ModelKind.CRN, reactions=rs,
                        weights={"A": 1, "B": 1, "C": 2})
    c = CountConfig(A=a + 1, B=b + 1)
    nxt = step(spec, c, make_rng(seed))
    assert weight_of(nxt, spec.weights) == weight_of(c, spec.weights)


def test_path_config_step_keeps_type():
    out = step(between_recorder(), seq(4, path=True), make_rng(1))
    assert isinstance(out, PathConfig)
