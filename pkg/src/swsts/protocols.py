"""Concrete protocols: constructors returning specs plus the sets their experiments need."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Optional

from .config import ConfigurationError, CountConfig, SeqConfig
from .core import Execution, Mode, PairTable, ProtocolSpec, Region, UpwardSet, make_rng
from .models import DeadConfiguration, ModelKind, OracleKind, OracleOut, Reaction
from .wqo import ReachOracle, pred_star_idx


@dataclass
class Bundle:
    """A protocol spec together with its experiment hooks."""

    spec: ProtocolSpec
    target: Any = None
    init: Optional[Callable[[int], Any]] = None
    extra: dict = field(default_factory=dict)


def _exactly(q, m: int = 1) -> Region:
    return Region(UpwardSet.at_least(**{q: m}), UpwardSet.at_least(**{q: m + 1}))


# ------------------------------------------------------- leader election

def leader_election(oracle: OracleKind = OracleKind.NONE) -> Bundle:
    """Cancellation: L, L -> L, F.  Target: exactly one leader.

    With an oracle the same rule is listed for every oracle output, so the
    oracle is ignored; agents then carry keys 1..n.
    """
    from .textfmt import oracle_outputs
    rules = {("L", "L", o): ("L", "F") for o in oracle_outputs(oracle)}
    keyed = oracle is not OracleKind.NONE

    def init(n):
        return SeqConfig(("L",) * n, tuple(range(1, n + 1)) if keyed else None)

    spec = ProtocolSpec(
        name="leader_election", model=ModelKind.POP, delta=PairTable(rules), oracle=oracle,
        alphabet=frozenset({"L", "F"}), rules=rules,
        input_alphabet=frozenset({"x"}),
        input_map=lambda w: init(len(w)),
        size_poly=lambda n: n,
    )
    return Bundle(spec, _exactly("L"), init)


def ordered_leader_election() -> Bundle:
    """Under the < oracle the smaller key survives: the final leader is the minimum key."""
    rules = {("L", "L", OracleOut.LT): ("L", "F"), ("L", "L", OracleOut.GT): ("F", "L")}

    def init(n):
        return SeqConfig(("L",) * n, tuple(range(1, n + 1)))

    spec = ProtocolSpec(
        name="ordered_leader_election", model=ModelKind.POP, delta=PairTable(rules),
        oracle=OracleKind.LT, alphabet=frozenset({"L", "F"}), rules=rules,
        input_alphabet=frozenset({"x"}), input_map=lambda w: init(len(w)),
        size_poly=lambda n: n,
    )
    return Bundle(spec, _exactly("L"), init)


def leader_hitting_closed_form(n: int) -> int:
    return (n - 1) ** 2


# ---------------------------------------------------------------- doctor

def doctor() -> Bundle:
    """IS -> II and ID -> SD with a single doctor; target: nobody infected."""
    rules = {("I", "S", None): ("I", "I"), ("I", "D", None): ("S", "D")}
    spec = ProtocolSpec(
        name="doctor", model=ModelKind.POP, delta=PairTable(rules),
        alphabet=frozenset({"S", "I", "D"}), rules=rules,
        input_alphabet=frozenset({"x"}),
        input_map=lambda w: SeqConfig(("I",) * len(w) + ("D",)),
        size_poly=lambda n: n + 1,
    )
    target = Region(UpwardSet.everything(), UpwardSet.at_least(I=1))
    return Bundle(spec, target, lambda n: SeqConfig(("I",) * (n - 1) + ("D",)))


def doctor_rates(n: int, k: int) -> tuple:
    """(infect, cure) one-step probabilities with k infected among n agents."""
    d = n * (n - 1)
    return Fraction(k * (n - k - 1), d), Fraction(k, d)


# ----------------------------------------------------------- simple clock

def _clock_delta(k: int, cyclic: bool):
    def leader(a, other):
        j = a[1]
        if cyclic and j == k:
            return ("L", 0)
        if not cyclic and j == k:
            return a
        return ("L", j + 1) if other == "T" else ("L", 0)

    def delta(a, b, out=None):
        if isinstance(a, tuple):
            return leader(a, b), b
        if isinstance(b, tuple):
            return a, leader(b, a)
        return a, b
    return delta


def simple_clock(k: int, cyclic: bool = False) -> Bundle:
    """Leader counts consecutive meetings with the timer; fires at k.

    Leader states are ``("L", j)`` for j = 0..k.  Meeting the timer in either
    role increments j, meeting anyone else resets it.  Without ``cyclic``
    the fired state ``("L", k)`` is absorbing; with it the next leader
    interaction restarts the count.
    """
    if k < 1:
        raise ConfigurationError("streak length k must be at least 1")

    def check(c):
        if "T" not in c.states:
            raise ConfigurationError("simple clock needs a timer agent")
        if sum(1 for q in c.states if isinstance(q, tuple)) != 1:
            raise ConfigurationError("simple clock needs exactly one leader")

    alphabet = frozenset({("L", j) for j in range(k + 1)} | {"T", "F"})
    spec = ProtocolSpec(
        name=f"simple_clock_k{k}" + ("_cyclic" if cyclic else ""), model=ModelKind.POP,
        delta=_clock_delta(k, cyclic), alphabet=alphabet, check=check,
        meta={"k": k, "cyclic": cyclic},
    )
    fired = UpwardSet([{("L", k): 1}], Mode.VECTOR)
    reset = UpwardSet([{("L", 0): 1}], Mode.VECTOR)
    return Bundle(spec, fired, lambda N: clock_init(N), {"tick": fired, "tock": reset})


def clock_init(N: int) -> SeqConfig:
    """Leader, timer and N-2 followers (N agents in total)."""
    if N < 2:
        raise ConfigurationError("clock needs at least a leader and a timer")
    return SeqConfig((("L", 0), "T") + ("F",) * (N - 2))


def clock_expected_firing(N: int, k: int) -> Fraction:
    """Exact mean steps until k consecutive leader-timer meetings among N agents.

    Each step involves the leader with probability 2/N; given that, the
    partner is the timer with probability a = 1/(N-1).
    """
    a = Fraction(1, N - 1)
    return Fraction(N, 2) * (1 - a ** k) / ((1 - a) * a ** k)


# --------------------------------------------------------- neighbor finding

_NF_FORWARD = {
    # generate -
    ("b", "0"): ("-", "0"), ("-", "0"): ("-", "0"), ("+", "0"): ("-", "0"),
    # generate +
    ("0", "b"): ("0", "+"), ("0", "-"): ("0", "+"), ("0", "+"): ("0", "+"),
    # prune
    ("-", "-"): ("b", "-"), ("+", "+"): ("+", "b"),
}
_NF_REMOVE = {("0", "-"): ("0", "b"), ("+", "0"): ("b", "0")}


def neighbor_rules(off_side: str = "generate") -> dict:
    """Table of (m_i, m_r, out) -> (m_i', m_r') including mirrored rows.

    Rows are written with the initiator left of the responder.  Two pairs
    of rows share a left-hand side (an off-side mark next to the centre);
    ``off_side`` selects which row wins: ``"generate"`` re-marks the agent
    for the correct side, ``"remove"`` blanks it.  Either way the agent ends
    up correctly marked, since a blank next to the centre is recruited again.
    """
    if off_side not in ("generate", "remove"):
        raise ValueError("off_side must be 'generate' or 'remove'")
    fwd = dict(_NF_FORWARD)
    if off_side == "remove":
        fwd.update(_NF_REMOVE)
    rules = {}
    for (a, b), (a2, b2) in fwd.items():
        if (a, b) != (a2, b2):
            rules[(a, b, OracleOut.LT)] = (a2, b2)
            rules[(b, a, OracleOut.GT)] = (b2, a2)
    return rules


@dataclass
class NeighborResult:
    success: bool
    steps: int
    offside_ok: bool
    final: SeqConfig


@dataclass
class NeighborFinding:
    """Table 1 protocol plus the external two-phase controller.

    Phase one runs ``ceil(c * N**3)`` steps with the centre in state 0,
    then the centre is switched to b and pruning runs for as many steps.
    """

    spec: ProtocolSpec
    c: float = 1.0

    def phase_length(self, N: int) -> int:
        return max(1, math.ceil(self.c * N ** 3))

    @staticmethod
    def init(N: int, center: Optional[int] = None) -> SeqConfig:
        center = N // 2 if center is None else center
        states = tuple("0" if i == center else "b" for i in range(N))
        return SeqConfig(states, tuple(range(1, N + 1)))

    @staticmethod
    def succeeded(c: SeqConfig, center: int) -> bool:
        for i, q in enumerate(c.states):
            want = "-" if i == center - 1 else "+" if i == center + 1 else "b"
            if q != want:
                return False
        return True

    def run(self, init: SeqConfig, seed: int, phase: Optional[int] = None) -> NeighborResult:
        if list(init.states).count("0") != 1:
            raise ConfigurationError("neighbor finding needs exactly one agent in state 0")
        if not init.is_sorted_by_attr():
            raise ConfigurationError("tape agents must be listed in key order")
        center = init.states.index("0")
        L = self.phase_length(len(init)) if phase is None else phase
        ex = Execution(self.spec, init, make_rng(seed))
        states = ex.states
        ok = True
        trace: list = []
        for ph in (0, 1):
            if ph == 1:
                ex.replace_agent(center, "b")
            for _ in range(L):
                trace.clear()
                if ex.step(trace):
                    for i in trace[0]:
                        q = states[i]
                        if (q == "+" and i < center) or (q == "-" and i > center):
                            ok = False
        final = ex.config()
        return NeighborResult(self.succeeded(final, center), ex.steps, ok, final)


def neighbor_finding(c: float = 1.0, off_side: str = "generate") -> NeighborFinding:
    rules = neighbor_rules(off_side)
    spec = ProtocolSpec(
        name="neighbor_finding", model=ModelKind.POP, oracle=OracleKind.LT,
        delta=PairTable(rules), rules=rules, alphabet=frozenset({"b", "0", "-", "+"}),
    )
    return NeighborFinding(spec, c)


# ----------------------------------------------------- non-closed CRN

def nonclosed_crn(aa_rate=Fraction(1, 2)) -> Bundle:
    """a+a -> c, a+b -> a+2b, b+b -> 3b from {a:2, b:2}; target: some c.

    With ``aa_rate = 1/2`` the next step from {a:2, b:i} produces c with
    probability 1/(i(i+1)+1); ``aa_rate = 1`` (equal base rates) gives
    2/(i(i+1)+2).
    """
    reactions = (
        Reaction({"a": 2}, {"c": 1}, aa_rate),
        Reaction({"a": 1, "b": 1}, {"a": 1, "b": 2}, 1),
        Reaction({"b": 2}, {"b": 3}, 1),
    )
    spec = ProtocolSpec(name="nonclosed_crn", model=ModelKind.CRN, reactions=reactions,
                        closed=False, weights={"a": 1, "b": 1, "c": 1})
    return Bundle(spec, UpwardSet.at_least(c=1), lambda n=2: CountConfig(a=2, b=n),
                  {"aa_rate": Fraction(aa_rate)})


def production_probability(i: int, aa_rate=Fraction(1, 2)) -> Fraction:
    aa = 2 * Fraction(aa_rate)
    return aa / (aa + i * (i + 1))


def survival_product(aa_rate=Fraction(1, 2), start: int = 2, stop: Optional[int] = None) -> float:
    """prod_{i=start}^{stop-1} (1 - p_i); ``stop=None`` gives the infinite product.

    The infinite product is evaluated in closed form: writing
    i(i+1) + 2r = (i - z)(i - conj z), the product telescopes into
    Gamma(start - z) Gamma(start - conj z) / (Gamma(start) Gamma(start + 1)).
    """
    r2 = 2 * float(aa_rate)
    if stop is not None:
        out = 1.0
        for i in range(start, stop):
            out *= i * (i + 1) / (i * (i + 1) + r2)
        return out
    from scipy.special import loggamma
    disc = complex(1 - 4 * r2) ** 0.5
    z = (-1 + disc) / 2
    val = 2 * loggamma(start - z).real - math.lgamma(start) - math.lgamma(start + 1)
    return math.exp(val)


# ---------------------------------------------------------- racy vote

def racy_vote() -> Bundle:
    """First undecided pair with different inputs decides for everyone.

    X0/X1 are inputs; an X0-X1 meeting adopts the initiator's value as
    D0/D1 for both; a decided agent converts undecided ones.  Both outputs
    stay reachable from a mixed input, so it witnesses a nonempty error
    region.
    """
    rules = {("X0", "X1", None): ("D0", "D0"), ("X1", "X0", None): ("D1", "D1")}
    for d in ("D0", "D1"):
        for x in ("X0", "X1"):
            rules[(d, x, None)] = (d, d)
            rules[(x, d, None)] = (d, d)
    spec = ProtocolSpec(
        name="racy_vote", model=ModelKind.POP, delta=PairTable(rules), rules=rules,
        alphabet=frozenset({"X0", "X1", "D0", "D1"}),
        input_alphabet=frozenset({"0", "1"}),
        input_map=lambda w: SeqConfig(tuple("X" + s for s in w)),
        size_poly=lambda n: n,
        v0=UpwardSet.at_least(D0=1), v1=UpwardSet.at_least(D1=1),
    )
    return Bundle(spec, None, lambda n: SeqConfig(("X0",) + ("X1",) * (n - 1)))


# ------------------------------------------------------- Turing machine

@dataclass(frozen=True)
class TuringMachine:
    """Small TM; ``delta`` maps (state, symbol) or (state, symbol, coin) to (state, write, move).

    ``move`` is one of ``"L"``, ``"R"``, ``"S"``.
    """

    delta: Mapping
    start: str
    accept: frozenset = frozenset()
    reject: frozenset = frozenset()
    blank: str = "_"

    def halting(self, q) -> bool:
        return q in self.accept or q in self.reject

    def step(self, q, sym, coin: int = 0):
        if (q, sym, coin) in self.delta:
            return self.delta[(q, sym, coin)]
        try:
            return self.delta[(q, sym)]
        except KeyError:
            raise ConfigurationError(f"TM has no move for state {q!r} on {sym!r}") from None

    def states(self) -> set:
        out = {self.start} | set(self.accept) | set(self.reject)
        for key, (q2, _, _) in self.delta.items():
            out.add(key[0])
            out.add(q2)
        return out

    def symbols(self) -> set:
        out = {self.blank}
        for key, (_, w, _) in self.delta.items():
            out.add(key[1])
            out.add(w)
        return out


def run_tm(tm: TuringMachine, tape, head: int = 0, max_steps: int = 1000, coins=None):
    """Direct interpreter; returns (state, tape, head, steps) or raises on leaving the tape."""
    tape = list(tape)
    q = tm.start
    steps = 0
    coins = iter(coins or ())
    while not tm.halting(q) and steps < max_steps:
        q, w, mv = tm.step(q, tape[head], next(coins, 0))
        tape[head] = w
        head += {"L": -1, "R": 1, "S": 0}[mv]
        if not 0 <= head < len(tape):
            raise IndexError("head left the tape")
        steps += 1
    return q, tuple(tape), head, steps


def unary_increment() -> TuringMachine:
    """Scan right over 1s and write a 1 on the first blank."""
    return TuringMachine(
        delta={("scan", "1"): ("scan", "1", "R"), ("scan", "_"): ("acc", "1", "S")},
        start="scan", accept=frozenset({"acc"}),
    )


_PH_COIN, _PH_FIND, _PH_RECRUIT, _PH_SWITCH, _PH_PRUNE, _PH_HANDOFF, _PH_HALT = (
    "coin", "find", "recruit", "switch", "prune", "handoff", "halt")


@dataclass
class TMResult:
    outcome: str  # "accept", "reject", "off_tape" or "capped"
    steps: int
    tape: tuple
    tm_steps: int


@dataclass
class TMDemo:
    """POP^< simulation of a TM head by a leader and tape agents.

    Agent states: tape cells ``("C", symbol, mark)`` with mark one of
    H (head), 0, -, +, b; the leader ``("L", phase, tm_state, coin, move, streak)``;
    the timer ``"T"``; coin agents ``"R0"`` and ``"R1"``.  The leader
    flips a coin by meeting R0 or R1, finds the head cell and applies the TM
    move, then runs neighbor finding on the tape for two clock-timed phases
    (leader sees the timer ``streak`` times in a row) and hands the head to
    the predecessor or successor.
    """

    tm: TuringMachine
    spec: ProtocolSpec
    streak: int

    def init(self, tape, head: int = 0) -> SeqConfig:
        cells = tuple(("C", s, "H" if i == head else "b") for i, s in enumerate(tape))
        q0 = self.tm.start
        lead = _leader(_PH_HALT if self.tm.halting(q0) else _PH_COIN, q0)
        states = cells + (lead, "T", "R0", "R1")
        return SeqConfig(states, tuple(range(1, len(states) + 1)))

    @staticmethod
    def leader(c: SeqConfig):
        for q in c.states:
            if isinstance(q, tuple) and q[0] == "L":
                return q
        raise ConfigurationError("no leader")

    @staticmethod
    def tape(c: SeqConfig) -> tuple:
        return tuple(q[1] for q in c.states if isinstance(q, tuple) and q[0] == "C")

    def run(self, init: SeqConfig, seed: int, cap: int = 10 ** 7) -> TMResult:
        ex = Execution(self.spec, init, make_rng(seed))
        states = ex.states
        ncells = sum(1 for q in init.states if isinstance(q, tuple) and q[0] == "C")
        li = next(i for i, q in enumerate(states) if isinstance(q, tuple) and q[0] == "L")
        tm_steps = 0
        phase = states[li][1]
        while ex.steps < cap:
            lead = states[li]
            if lead[1] == _PH_HALT:
                verdict = "accept" if lead[2] in self.tm.accept else "reject"
                return TMResult(verdict, ex.steps, self.tape(ex.config()), tm_steps)
            ex.step()
            lead = states[li]
            if lead[1] != phase:
                if phase == _PH_FIND:
                    tm_steps += 1
                    if lead[1] == _PH_RECRUIT:
                        zero = next(i for i in range(ncells) if states[i][2] == "0")
                        if (lead[4] == "R" and zero == ncells - 1) or (lead[4] == "L" and zero == 0):
                            return TMResult("off_tape", ex.steps, self.tape(ex.config()), tm_steps)
                phase = lead[1]
        return TMResult("capped", ex.steps, self.tape(ex.config()), tm_steps)

    def flip_coins(self, flips: int, seed: int, cap_per_flip: int = 10 ** 5) -> list:
        """Run only the coin subroutine ``flips`` times; returns the coins."""
        init = self.init((self.tm.blank,) * 3)
        ex = Execution(self.spec, init, make_rng(seed))
        states = ex.states
        li = next(i for i, q in enumerate(states) if isinstance(q, tuple) and q[0] == "L")
        fresh = _leader(_PH_COIN, self.tm.start)
        out = []
        for _ in range(flips):
            states[li] = fresh
            for _ in range(cap_per_flip):
                ex.step()
                if states[li][1] != _PH_COIN:
                    break
            else:
                raise RuntimeError("coin flip did not finish")
            out.append(states[li][3])
        return out


def _leader(phase, q, coin=None, move=None, streak=0):
    return ("L", phase, q, coin, move, streak)


def tm_head_demo(tm: TuringMachine, streak: int = 4, off_side: str = "generate") -> TMDemo:
    """Build the POP^< head-stepping simulation of ``tm``.

    ``streak`` is the clock length that times each neighbor-finding phase.
    V0/V1 contain the configurations whose leader halted in a rejecting or
    accepting state.
    """
    if len(tm.states()) > 8 or len(tm.symbols()) > 4:
        raise ConfigurationError("TM demo supports at most 8 states and 4 symbols")
    nf = neighbor_rules(off_side)
    k = streak

    def lead_update(a, other):
        _, ph, q, coin, mv, s = a
        if ph == _PH_COIN:
            if other in ("R0", "R1"):
                return _leader(_PH_FIND, q, int(other[1])), other
            return a, other
        if ph == _PH_FIND:
            if isinstance(other, tuple) and other[0] == "C" and other[2] == "H":
                q2, w, mv2 = tm.step(q, other[1], coin)
                if mv2 == "S":
                    nxt = _PH_HALT if tm.halting(q2) else _PH_COIN
                    return _leader(nxt, q2), ("C", w, "H")
                return _leader(_PH_RECRUIT, q2, coin, mv2), ("C", w, "0")
            return a, other
        if ph in (_PH_RECRUIT, _PH_PRUNE):
            if other == "T":
                if s + 1 >= k:
                    nxt = _PH_SWITCH if ph == _PH_RECRUIT else _PH_HANDOFF
                    return _leader(nxt, q, coin, mv), other
                return _leader(ph, q, coin, mv, s + 1), other
            return (_leader(ph, q, coin, mv) if s else a), other
        if ph == _PH_SWITCH:
            if isinstance(other, tuple) and other[0] == "C" and other[2] == "0":
                return _leader(_PH_PRUNE, q, coin, mv), ("C", other[1], "b")
            return a, other
        if ph == _PH_HANDOFF:
            want = "-" if mv == "L" else "+"
            if isinstance(other, tuple) and other[0] == "C" and other[2] == want:
                nxt = _PH_HALT if tm.halting(q) else _PH_COIN
                return _leader(nxt, q), ("C", other[1], "H")
            return a, other
        return a, other

    def delta(a, b, out):
        if isinstance(a, tuple) and a[0] == "L":
            return lead_update(a, b)
        if isinstance(b, tuple) and b[0] == "L":
            b2, a2 = lead_update(b, a)
            return a2, b2
        if isinstance(a, tuple) and isinstance(b, tuple):
            r = nf.get((a[2], b[2], out))
            if r is not None:
                return ("C", a[1], r[0]), ("C", b[1], r[1])
        return a, b

    acc = [{_leader(_PH_HALT, q): 1} for q in sorted(tm.accept)]
    rej = [{_leader(_PH_HALT, q): 1} for q in sorted(tm.reject)]
    spec = ProtocolSpec(
        name="tm_head_demo", model=ModelKind.POP, oracle=OracleKind.LT, delta=delta,
        v0=UpwardSet(rej, Mode.VECTOR), v1=UpwardSet(acc, Mode.VECTOR),
        meta={"streak": streak},
    )
    return TMDemo(tm, spec, streak)


# ---------------------------------------------------- phase clock harness

@dataclass
class RoundRecord:
    lengths: list
    capped: bool
    failed: bool
    steps: int

    @property
    def min_length(self) -> Optional[int]:
        return min(self.lengths) if self.lengths else None

    def histogram(self) -> dict:
        return dict(sorted(Counter(self.lengths).items()))


def phase_clock_harness(spec: ProtocolSpec, tick, tock, rounds: int, init, seed: int,
                        cap: int = 10 ** 7, oracle: Optional[ReachOracle] = None) -> RoundRecord:
    """Record lengths of successive tick -> tock -> tick rounds.

    A round starts when the execution enters ``tick`` and ends at the next
    entry into ``tick`` after ``tock`` was visited.  With ``oracle``
    attached, leaving Pred*(tick) is reported as a certified failure.
    """
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    if rounds == 0:
        return RoundRecord([], False, False, 0)
    viable = None
    if oracle is not None:
        viable = {oracle.states[i] for i in pred_star_idx(oracle, tick)}
    ex = Execution(spec, init, make_rng(seed))
    c = init
    lengths: list = []
    in_tick = c in tick
    start = 0 if in_tick else None
    seen_tock = False
    while ex.steps < cap:
        try:
            changed = ex.step()
        except DeadConfiguration:
            return RoundRecord(lengths, False, True, ex.steps)
        if not changed:
            continue
        c = ex.config()
        if viable is not None and oracle.key(c) not in viable:
            return RoundRecord(lengths, False, True, ex.steps)
        now_tick = c in tick
        if start is not None and not seen_tock and c in tock:
            seen_tock = True
        if now_tick and not in_tick:
            if start is not None and seen_tock:
                lengths.append(ex.steps - start)
                if len(lengths) == rounds:
                    return RoundRecord(lengths, False, False, ex.steps)
            if start is None or seen_tock:
                start = ex.steps
                seen_tock = False
        in_tick = now_tick
    return RoundRecord(lengths, True, False, ex.steps)


def round_length_cdf(oracle: ReachOracle, start, tick, tock, horizon: int) -> list:
    """Exact P(round length <= l), l = 0..horizon, for a round begun at ``start``.

    Works on the product of the oracle chain with a "tock seen" flag; the
    round ends on entering ``tick`` (from outside it) after tock.
    """
    tk = oracle.members(tick)
    to = oracle.members(tock)
    s0 = oracle.idx(start)
    cur = {(s0, s0 in to): 1.0}
    cdf = [0.0]
    done = 0.0
    for _ in range(horizon):
        nxt: dict = {}
        for (i, seen), p in cur.items():
            for j, q in oracle.edges[i]:
                w = p * float(q)
                if j == i:
                    nxt[(i, seen)] = nxt.get((i, seen), 0.0) + w
                    continue
                s2 = seen or j in to
                if s2 and j in tk and i not in tk:
                    done += w
                else:
                    nxt[(j, s2)] = nxt.get((j, s2), 0.0) + w
        cur = nxt
        cdf.append(done)
    return cdf
