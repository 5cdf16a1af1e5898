from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swsts import SeqConfig, StopRule, build_reach, exact_hitting, run_trial
from swsts.models import ModelKind, OracleKind, one_step_distribution
from swsts.protocols import leader_election, nonclosed_crn
from swsts.textfmt import FormatError, dec_state, dumps, enc_state, load, loads

PROTOCOLS = Path(__file__).resolve().parent.parent / "protocols"

atoms = st.one_of(st.integers(-99, 99), st.from_regex(r"[A-Za-z_][A-Za-z0-9_']{0,4}", fullmatch=True))
states = st.one_of(atoms, st.none(), st.lists(st.one_of(atoms, st.none()), min_size=1, max_size=3).map(tuple))


@given(states)
def test_state_token_roundtrip(q):
    assert dec_state(enc_state(q)) == q


@pytest.mark.parametrize("bad", ["a b", "", "x|y", ("a", ("b",)), ()])
def test_unwritable_states(bad):
    with pytest.raises(FormatError):
        enc_state(bad)


def test_sample_files_load():
    spec, target = load(PROTOCOLS / "leader_election.proto")
    assert spec.model is ModelKind.POP and target is not None
    assert SeqConfig(("L", "F", "F")) in target
    assert SeqConfig(("L", "L")) not in target
    oracle = build_reach(spec, spec.input_map("xxxx"), symmetric=True)
    assert exact_hitting(oracle, target).steps(oracle.states[0]) == pytest.approx(9)


def test_ordered_leader_keeps_smallest_key():
    spec, target = load(PROTOCOLS / "ordered_leader.proto")
    assert spec.oracle is OracleKind.LT
    x = spec.input_map("xxxxx")
    assert x.attrs == (1, 2, 3, 4, 5)
    rec = run_trial(spec, x, StopRule(target=target), 4, 10 ** 5)
    assert rec.final.states[0] == "L"


def test_racy_vote_file_outputs():
    spec, _ = load(PROTOCOLS / "racy_vote.proto")
    x = spec.input_map("ab")
    assert x.states == ("X0", "X1")
    assert SeqConfig(("D0", "D0")) in spec.v0 and SeqConfig(("D1", "X0")) in spec.v1


def test_file_and_builtin_agree():
    spec, _ = load(PROTOCOLS / "leader_election.proto")
    b = leader_election()
    c = SeqConfig(("L", "L", "F"))
    assert one_step_distribution(spec, c) == one_step_distribution(b.spec, c)


def test_pop_dump_load_roundtrip():
    spec, _ = load(PROTOCOLS / "racy_vote.proto")
    back, _ = loads(dumps(spec))
    c = SeqConfig(("X0", "X1", "D0"))
    assert one_step_distribution(back, c) == one_step_distribution(spec, c)


def test_crn_roundtrip():
    spec = nonclosed_crn().spec
    back, _ = loads(dumps(spec))
    assert back.model is ModelKind.CRN and not back.closed
    assert [(r.reactants, r.products, r.rate) for r in back.reactions] == \
        [(r.reactants, r.products, r.rate) for r in spec.reactions]


@pytest.mark.parametrize("text", [
    "protocol x\nL L -> L F\n",                      # rule before model
    "model POP\nL -> L F\n",                         # wrong arity
    "model POP\nL L -> L\n",                         # pair rule with one output
    "model BETWEEN\na b c -> a b\n",
    "model POP\nfrobnicate yes\n",
    "model POP\nattrs sometimes\n",
    "model POP\ntarget L\n",
    "model CRN\n2A + ?B -> C\n",
    "protocol only\n",
])
def test_format_errors(text):
    with pytest.raises(FormatError):
        loads(text)


def test_comments_and_blank_lines_ignored():
    spec, _ = loads("# header\n\nmodel POP   # trailing\nalphabet A B\nA B -> B B\n")
    assert spec.delta("A", "B") == ("B", "B")
