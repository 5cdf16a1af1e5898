"""Compilers that simulate a POP^A protocol in GOSSIP^A, PUSH^A/SHUFFLE^A, MATCHING^A and BETWEEN.

Every compiler returns a :class:`Compiled` bundle with the target spec, an
embedding of POP configurations into the target model, a projection back
onto simulated states, and a ``commits`` hook that counts the simulated
transitions committed by one target-model step (the effective steps).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .config import ConfigurationError, PathConfig, SeqConfig
from .core import Execution, ProtocolSpec, make_rng
from .models import ADVANCE, ModelKind, OracleKind, OracleOut


@dataclass
class Compiled:
    spec: ProtocolSpec
    source: ProtocolSpec
    embed: Callable[[SeqConfig], SeqConfig]
    project: Callable[[SeqConfig], SeqConfig]
    commits: Callable[[tuple, Any, list], int]
    active: Optional[Callable[[Any], bool]] = None  # token holders, for token compilers
    meta: dict = field(default_factory=dict)


def _require_pop(pop: ProtocolSpec, oracle: Optional[OracleKind] = None) -> None:
    if pop.model is not ModelKind.POP:
        raise ConfigurationError(f"{pop.name} is a {pop.model.value} protocol; a POP protocol is required")
    if oracle is not None and pop.oracle is not oracle:
        raise ConfigurationError(f"{pop.name} must use the {oracle.value} oracle")


def _utility_attrs(kind: OracleKind, attrs: tuple, m: int) -> tuple:
    """Hidden attributes for m helper agents placed before the followers."""
    if kind is OracleKind.NONE:
        return (None,) * m
    if kind is OracleKind.ANC:
        return tuple(f"u{i}" for i in range(m))
    lo = min(a for a in attrs) if attrs and attrs[0] is not None else 0
    return tuple(range(lo - m, lo))


def _follower_attrs(c: SeqConfig, kind: OracleKind) -> tuple:
    if kind is OracleKind.NONE:
        return c.attrs
    if any(a is None for a in c.attrs):
        raise ConfigurationError("oracle protocols need a hidden attribute on every agent")
    return c.attrs


# ------------------------------------------------------------------ GOSSIP

RI, RR, PRUNE, UPDATE, RESET = "recruit-initiator", "recruit-responder", "prune-extras", "update", "reset"
LEADER_CYCLE = (RI, RR, PRUNE, UPDATE, RESET)
IDLE, INIT, CAND, RESP, SEND = "idle", "initiator", "candidate-responder", "responder", "sending"
TIMER = ("timer",)


def _gossip_delta(pop: ProtocolSpec, k: int):
    d = pop.delta

    def leader(a, obs):
        _, role, s = a
        if role == RI:
            return ("lead", RR, 0)
        if role == RR:
            return ("lead", PRUNE, 0)
        if obs == TIMER:
            if s + 1 >= k:
                return ("lead", LEADER_CYCLE[(LEADER_CYCLE.index(role) + 1) % 5], 0)
            return ("lead", role, s + 1)
        return ("lead", role, 0) if s else a

    def follower(a, obs, out):
        _, role, q, qp = a
        if obs[0] == "lead":
            lr = obs[1]
            if lr == RI and role == IDLE:
                return ("f", INIT, q, None)
            if lr == RR and role in (IDLE, INIT):
                return ("f", CAND, q, None)
            if lr == UPDATE and role == CAND:
                return ("f", RESP, q, None)
            if lr == RESET and role in (INIT, CAND, RESP, SEND):
                return ("f", IDLE, q, None)
            return a
        if obs[0] != "f":
            return a
        orole = obs[1]
        if role == INIT and orole == INIT:
            return ("f", IDLE, q, None)
        if role == CAND and orole == CAND:
            return ("f", IDLE, q, None)
        if role == RESP and orole == INIT:
            # the observed initiator is the transmitter, so out = A(i, r)
            qi2, q2 = d(obs[2], q, out)
            return ("f", SEND, q2, qi2)
        if role == INIT and orole == SEND:
            return ("f", IDLE, obs[3], None)
        return a

    def delta(a, obs, out=None):
        if a[0] == "lead":
            return leader(a, obs)
        if a[0] == "f":
            return follower(a, obs, out)
        return a
    return delta


def compile_to_gossip(pop: ProtocolSpec, c: int = 2, streak: Optional[int] = None) -> Compiled:
    """Leader + timer + followers; leader phases timed by ``streak`` (default 3c) timer sightings.

    Agents sample others uniformly excluding themselves; with self-sampling
    a lone initiator or candidate would prune itself on seeing its own role.
    """
    _require_pop(pop)
    if c < 2:
        raise ConfigurationError("exponent c must be at least 2")
    k = 3 * c if streak is None else streak
    spec = ProtocolSpec(name=f"{pop.name}@GOSSIP", model=ModelKind.GOSSIP,
                        delta=_gossip_delta(pop, k), oracle=pop.oracle, self_sampling=False,
                        meta={"streak": k, "c": c})

    def embed(x: SeqConfig) -> SeqConfig:
        states = (("lead", RI, 0), TIMER) + tuple(("f", IDLE, q, None) for q in x.states)
        return SeqConfig(states, _utility_attrs(pop.oracle, x.attrs, 2) + _follower_attrs(x, pop.oracle))

    def project(y: SeqConfig) -> SeqConfig:
        return SeqConfig(tuple(s[2] for s in y.states[2:]), y.attrs[2:])

    def commits(before, targets, after) -> int:
        return sum(1 for u, v in enumerate(targets)
                   if before[u][0] == "f" and before[u][1] == INIT and before[v][0] == "f"
                   and before[v][1] == SEND)

    return Compiled(spec, pop, embed, project, commits, meta={"streak": k, "c": c})


def _streak_time(rng, gen: np.random.Generator, p: float, k: int, s: int) -> int:
    """Steps until a run of k consecutive successes (prob p each) completes, from a run of s."""
    t = 0
    for _ in range(k - s):
        t += 1
        if rng.random() >= p:
            break
    else:
        return t
    fails = int(gen.geometric(p ** k)) - 1
    t += k
    if fails:
        j = np.arange(k)
        w = p ** j * (1 - p)
        counts = gen.multinomial(fails, w / w.sum())
        t += int((counts * (j + 1)).sum())
    return t


@dataclass
class CycleLog:
    """Per-cycle classification against the local/global failure taxonomy."""

    cycles: int = 0
    local: Counter = field(default_factory=Counter)
    global_: Counter = field(default_factory=Counter)


@dataclass
class GossipTrial:
    steps: int
    commits: int
    snapshots: list
    log: CycleLog
    stopped: str  # "target", "commits", "global", "cap"


class GossipRunner:
    """Execution of a compiled GOSSIP protocol that skips quiescent stretches.

    While no follower can change (every possible observation is a no-op for
    every follower), only the leader's timer streak evolves.  The runner
    then samples the remaining phase length in one draw and advances the
    leader to its next role, which leaves the law of the process unchanged.
    """

    def __init__(self, comp: Compiled):
        self.comp = comp
        self.spec = comp.spec
        self.k = comp.meta["streak"]

    def _quiescent(self, states, attrs, orc) -> bool:
        d = self.spec.delta
        n = len(states)
        for u in range(2, n):
            a = states[u]
            for v in range(n):
                if v != u and d(a, states[v], orc(attrs[v], attrs[u])) != a:
                    return False
        return True

    def run(self, x: SeqConfig, seed: int, max_commits: Optional[int] = None, target=None,
            cap: int = 10 ** 12, stop_on_global: bool = True) -> GossipTrial:
        from .models import _oracle_fn
        comp = self.comp
        y = comp.embed(x)
        self.spec.validate(y)
        rng = make_rng(seed)
        gen = np.random.Generator(np.random.PCG64(rng.getrandbits(64)))
        states = list(y.states)
        attrs = y.attrs
        orc = _oracle_fn(self.spec.oracle)
        n_agents = len(states)
        p = 1.0 / (n_agents - 1)
        adv = ADVANCE[ModelKind.GOSSIP]
        log = CycleLog()
        snaps: list = []
        steps = 0
        ncommit = 0
        quiet: Optional[bool] = None
        cycle_clean = False
        cycle_commits = 0
        trace: list = []
        while steps < cap:
            lead = states[0]
            role = lead[1]
            if role in (PRUNE, UPDATE, RESET):
                if quiet is None:
                    quiet = self._quiescent(states, attrs, orc)
                if quiet:
                    steps += _streak_time(rng, gen, p, self.k, lead[2])
                    nxt = LEADER_CYCLE[(LEADER_CYCLE.index(role) + 1) % 5]
                    states[0] = ("lead", nxt, 0)
                    quiet = None
                    verdict = self._phase_end(role, states, log, cycle_clean, cycle_commits)
                    if role == PRUNE:
                        cycle_clean = verdict
                    if role == RESET:
                        cycle_commits = 0
                    if verdict == "global" and stop_on_global:
                        return GossipTrial(steps, ncommit, snaps, log, "global")
                    continue
            before = tuple(states)
            trace.clear()
            adv(self.spec, states, attrs, rng, trace)
            steps += 1
            got = comp.commits(before, trace[0], states)
            if any(before[u] != states[u] for u in range(2, n_agents)):
                quiet = None
            if states[0][1] != role:
                quiet = None
                verdict = self._phase_end(role, states, log, cycle_clean, cycle_commits + got)
                if role == PRUNE:
                    cycle_clean = verdict
                if role == RESET:
                    cycle_commits = -got
                if verdict == "global" and stop_on_global:
                    return GossipTrial(steps, ncommit + got, snaps, log, "global")
            if got:
                cycle_commits += got
                for _ in range(got):
                    ncommit += 1
                    snaps.append(comp.project(SeqConfig(tuple(states), attrs)))
                if max_commits is not None and ncommit >= max_commits:
                    return GossipTrial(steps, ncommit, snaps, log, "commits")
                if target is not None and snaps[-1] in target:
                    return GossipTrial(steps, ncommit, snaps, log, "target")
        return GossipTrial(steps, ncommit, snaps, log, "cap")

    @staticmethod
    def _phase_end(role, states, log: CycleLog, clean, commits):
        """Classify the end of a leader phase.  Returns "global", or for prune a clean flag."""
        roles = Counter(s[1] for s in states[2:])
        if role == PRUNE:
            ni, nc = roles[INIT], roles[CAND]
            if ni > 1 or nc > 1:
                log.global_["excess_after_prune"] += 1
                return "global"
            if ni == 0 or nc == 0:
                log.local["missing_after_prune"] += 1
                return False
            return True
        if role == UPDATE:
            if clean is True and commits == 0:
                log.global_["update_too_short"] += 1
                return "global"
            return None
        if role == RESET:
            log.cycles += 1
            if any(r != IDLE for r in roles.elements()):
                log.global_["reset_too_short"] += 1
                return "global"
            if clean is not True:
                return None
            return None
        return None


# ------------------------------------------------------------ token passing

START, WAIT, WAIT_RESTART, RESTART, RECEIVE, SEND_T, WAIT_SEND, DONE = (
    "start", "wait", "wait+restart", "restart", "receive", "send", "wait+send", "done")
ACTIVE = frozenset({START, INIT, WAIT_RESTART, RESTART, SEND_T, WAIT_SEND, DONE})
_PASS = {START: WAIT, INIT: RECEIVE, WAIT_RESTART: WAIT, RESTART: IDLE,
         SEND_T: IDLE, WAIT_SEND: WAIT, DONE: IDLE}


def token_rules(pop: ProtocolSpec):
    """Observation and pass rules of the token-passing simulation.

    States are ``(role, q, q')``; the leader carries ``q = None``.
    """
    d = pop.delta

    def observe(a, tok, out):
        role, q, qp = a
        trole, tq, tqp = tok
        if role == IDLE:
            if trole == START:
                return (INIT, q, None)
            if trole == INIT:
                # (q', q) <- delta(q_i, q, A): q' goes back to the initiator
                qi2, q2 = d(tq, q, out)
                return (SEND_T, q2, qi2)
            if trole in (WAIT_RESTART, RESTART):
                return (RESTART, q, None)
            if trole in (SEND_T, WAIT_SEND):
                return (SEND_T, q, tqp)
            if trole == DONE:
                return (DONE, q, None)
        elif role == WAIT:
            if trole == INIT:
                return (WAIT_RESTART, q, None)
            if trole == RESTART:
                return (WAIT_RESTART, q, None)
            if trole == SEND_T:
                return (WAIT_SEND, q, tqp)
            if trole == DONE:
                return (START, q, None)
        elif role == RECEIVE:
            if trole in (WAIT_RESTART, RESTART):
                return (INIT, q, None)
            if trole in (SEND_T, WAIT_SEND):
                return (DONE, tqp, None)
        return a

    def pass_on(a):
        return (_PASS[a[0]], a[1], None)

    return observe, pass_on


def _token_delta(observe, pass_on):
    def react(q, toks):
        """``toks``: active tokens received, as (state, oracle out)."""
        if q[0] in ACTIVE:
            # the only active token in the system is our own: no update, retry
            return q if toks else pass_on(q)
        if toks:
            (tok, out), = toks
            return observe(q, tok, out)
        return q
    return react


def compile_to_tokens(pop: ProtocolSpec, target: ModelKind = ModelKind.PUSH, k: int = 1) -> Compiled:
    """Token-passing simulation in PUSH^A or SHUFFLE^A.

    In SHUFFLE only the token holder emits a non-null token (plus k-1 nulls).
    An agent that receives its own token keeps its role and tries again; in
    PUSH this covers self-pushes too.
    """
    _require_pop(pop)
    target = ModelKind(target)
    if target not in (ModelKind.PUSH, ModelKind.SHUFFLE):
        raise ConfigurationError("token compiler targets PUSH or SHUFFLE")
    observe, pass_on = token_rules(pop)
    react = _token_delta(observe, pass_on)

    if target is ModelKind.PUSH:
        def delta(q, received):
            toks = [(s, out) for (s, out) in received if s[0] in ACTIVE]
            return react(q, toks)
        spec = ProtocolSpec(name=f"{pop.name}@PUSH", model=ModelKind.PUSH, delta=delta,
                            oracle=pop.oracle)
    else:
        def emit(q):
            if q[0] in ACTIVE:
                return (q,) + (None,) * (k - 1)
            return (None,) * k

        def delta(q, received):
            toks = [(s, out) for (s, out) in received if s is not None and s[0] in ACTIVE]
            return react(q, toks)
        spec = ProtocolSpec(name=f"{pop.name}@SHUFFLE{k}", model=ModelKind.SHUFFLE, delta=delta,
                            emit=emit, k=k, oracle=pop.oracle)

    def embed(x: SeqConfig) -> SeqConfig:
        states = ((START, None, None),) + tuple((IDLE, q, None) for q in x.states)
        return SeqConfig(states, _utility_attrs(pop.oracle, x.attrs, 1) + _follower_attrs(x, pop.oracle))

    def project(y: SeqConfig) -> SeqConfig:
        return SeqConfig(tuple(s[1] for s in y.states[1:]), y.attrs[1:])

    def commits(before, choice, after) -> int:
        return sum(1 for b, a in zip(before, after) if b[0] == RECEIVE and a[0] == DONE)

    return Compiled(spec, pop, embed, project, commits, active=lambda s: s[0] in ACTIVE,
                    meta={"target": target.value, "k": k})


# ---------------------------------------------------------------- MATCHING

PAD = ("pad",)


def compile_to_matching(pop: ProtocolSpec) -> Compiled:
    """Leader l0..l3 marks an initiator and a responder, which then meet directly.

    The initiator/responder rule fires only when the initiator is the first
    agent of the directed pair, so the oracle value is A(initiator, responder).
    Leader rules apply in either orientation.  An inert padding agent is
    added when the population would be odd.
    """
    _require_pop(pop)
    d = pop.delta

    def leader(l, other):
        j = l[1]
        if other[0] == "m":
            role, q = other[1], other[2]
            if j == 0 and role == IDLE:
                return ("lead", 1), ("m", INIT, q)
            if j == 1 and role == IDLE:
                return ("lead", 2), ("m", RESP, q)
            if j in (2, 3) and role == DONE:
                return ("lead", (j + 1) % 4), ("m", IDLE, q)
        return l, other

    def delta(a, b, out=None):
        if a[0] == "lead":
            return leader(a, b)
        if b[0] == "lead":
            b2, a2 = leader(b, a)
            return a2, b2
        if a[0] == "m" and b[0] == "m" and a[1] == INIT and b[1] == RESP:
            q1, q2 = d(a[2], b[2], out)
            return ("m", DONE, q1), ("m", DONE, q2)
        return a, b

    spec = ProtocolSpec(name=f"{pop.name}@MATCHING", model=ModelKind.MATCHING, delta=delta,
                        oracle=pop.oracle)

    def embed(x: SeqConfig) -> SeqConfig:
        pad = (len(x) + 1) % 2
        states = (("lead", 0),) + (PAD,) * pad + tuple(("m", IDLE, q) for q in x.states)
        return SeqConfig(states, _utility_attrs(pop.oracle, x.attrs, 1 + pad) + _follower_attrs(x, pop.oracle))

    def project(y: SeqConfig) -> SeqConfig:
        idx = [i for i, s in enumerate(y.states) if s[0] == "m"]
        return SeqConfig(tuple(y.states[i][2] for i in idx), tuple(y.attrs[i] for i in idx))

    def commits(before, choice, after) -> int:
        return sum(1 for b, a in zip(before, after)
                   if b[0] == "m" and b[1] == INIT and a[1] == DONE)

    return Compiled(spec, pop, embed, project, commits)


# ----------------------------------------------------------------- BETWEEN

SENT_L, SENT_R = ("sentinel", "L"), ("sentinel", "R")


def compile_ordered_to_between(pop: ProtocolSpec) -> Compiled:
    """Path L, agents in key order, R.  Triples with exactly one sentinel act.

    (L, a, b) applies delta(a, b, <) and (a, b, R) applies delta(b, a, >);
    the reversed triples (b, a, L) and (R, b, a) act like their mirror
    images.  Every other triple is a no-op.
    """
    _require_pop(pop, OracleKind.LT)
    d = pop.delta
    LT, GT = OracleOut.LT, OracleOut.GT

    def delta(x, y, z):
        if x == SENT_L and y[0] == "s" and z[0] == "s":
            a, b = d(y[1], z[1], LT)
            return x, ("s", a), ("s", b)
        if z == SENT_L and x[0] == "s" and y[0] == "s":
            a, b = d(y[1], x[1], LT)
            return ("s", b), ("s", a), z
        if z == SENT_R and x[0] == "s" and y[0] == "s":
            b, a = d(y[1], x[1], GT)
            return ("s", a), ("s", b), z
        if x == SENT_R and y[0] == "s" and z[0] == "s":
            b, a = d(y[1], z[1], GT)
            return x, ("s", b), ("s", a)
        return x, y, z

    spec = ProtocolSpec(name=f"{pop.name}@BETWEEN", model=ModelKind.BETWEEN, delta=delta)

    def embed(x: SeqConfig) -> PathConfig:
        if not x.is_sorted_by_attr():
            raise ConfigurationError("agents must be listed in key order")
        states = (SENT_L,) + tuple(("s", q) for q in x.states) + (SENT_R,)
        return PathConfig(states, (None,) * len(states))

    def project(y: SeqConfig) -> SeqConfig:
        n = len(y) - 2
        return SeqConfig(tuple(s[1] for s in y.states[1:-1]), tuple(range(1, n + 1)))

    def commits(before, triple, after) -> int:
        hits = sum(1 for i in triple if before[i] in (SENT_L, SENT_R))
        return 1 if hits == 1 else 0

    return Compiled(spec, pop, embed, project, commits)


# ------------------------------------------------------------------ runner

@dataclass
class SimTrial:
    steps: int
    snapshots: list
    token_ok: bool
    stopped: str


def simulate(comp: Compiled, x: SeqConfig, seed: int, max_commits: Optional[int] = None,
             target=None, cap: int = 10 ** 7, check_tokens: bool = False) -> SimTrial:
    """Run a compiled protocol, snapshotting the projection at every commit."""
    if comp.spec.model is ModelKind.GOSSIP:
        r = GossipRunner(comp).run(x, seed, max_commits, target, cap)
        return SimTrial(r.steps, r.snapshots, True, r.stopped)
    y = comp.embed(x)
    ex = Execution(comp.spec, y, make_rng(seed))
    states = ex.states
    snaps: list = []
    ok = True
    trace: list = []
    active = comp.active
    while ex.steps < cap:
        before = tuple(states)
        trace.clear()
        ex.step(trace)
        if check_tokens and sum(1 for s in states if active(s)) != 1:
            ok = False
        # identity applications of the simulated delta still count as commits
        got = comp.commits(before, trace[0], states)
        for _ in range(got):
            snaps.append(comp.project(ex.config()))
            if max_commits is not None and len(snaps) >= max_commits:
                return SimTrial(ex.steps, snaps, ok, "commits")
            if target is not None and snaps[-1] in target:
                return SimTrial(ex.steps, snaps, ok, "target")
    return SimTrial(ex.steps, snaps, ok, "cap")


def multiset_key(c: SeqConfig) -> tuple:
    return tuple(sorted(c.states, key=repr))


def faithfulness(comp: Compiled, x: SeqConfig, trials: int, m: int, seed: int,
                 cap: int = 10 ** 7) -> tuple:
    """Empirical law of the simulated state multiset after 1..m commits, plus token flag.

    Returns ``(dists, token_ok, incomplete)`` where ``dists[j]`` maps
    multiset keys to frequencies after j+1 commits.
    """
    from .core import trial_seed
    counts = [Counter() for _ in range(m)]
    ok = True
    incomplete = 0
    for t in range(trials):
        r = simulate(comp, x, trial_seed(seed, t), max_commits=m, cap=cap,
                     check_tokens=comp.active is not None)
        ok &= r.token_ok
        if len(r.snapshots) < m:
            incomplete += 1
            continue
        for j in range(m):
            counts[j][multiset_key(r.snapshots[j])] += 1
    dists = []
    for cnt in counts:
        tot = sum(cnt.values())
        dists.append({k: v / tot for k, v in cnt.items()} if tot else {})
    return dists, ok, incomplete


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(float(p.get(k, 0)) - float(q.get(k, 0))) for k in keys)


# ------------------------------------------------------------ enumeration

def compiled_alphabet(comp: Compiled, limit: int = 100000) -> list:
    """States reachable by the compiled rules from the embedded source alphabet.

    Closure is over single interactions with any combination of known states
    and oracle outputs, so it may include states no real run can reach.
    """
    from .textfmt import oracle_outputs
    pop = comp.source
    if not pop.alphabet:
        raise ConfigurationError(f"{pop.name} has no declared alphabet")
    alpha = sorted(pop.alphabet, key=repr)
    n = len(alpha)
    if pop.oracle is OracleKind.ANC:
        attrs = tuple(f"a{i}" for i in range(n))
    elif pop.oracle is OracleKind.NONE:
        attrs = (None,) * n
    else:
        attrs = tuple(range(1, n + 1))
    seen = set(comp.embed(SeqConfig(tuple(alpha), attrs)).states)
    spec = comp.spec
    outs = oracle_outputs(spec.oracle)
    model = spec.model
    d = spec.delta
    frontier = set(seen)
    while frontier:
        known = list(seen)
        new = set()
        for a in known:
            if model is ModelKind.PUSH:
                new.add(d(a, {}))
            elif model is ModelKind.SHUFFLE:
                new.add(d(a, ()))
            for b in known:
                if a not in frontier and b not in frontier and model is not ModelKind.BETWEEN:
                    continue
                if model is ModelKind.BETWEEN:
                    for c in known:
                        if frontier.isdisjoint((a, b, c)):
                            continue
                        new.update(d(a, b, c))
                    continue
                for o in outs:
                    if model in (ModelKind.POP, ModelKind.MATCHING):
                        new.update(d(a, b, o))
                    elif model is ModelKind.GOSSIP:
                        new.add(d(a, b, o))
                    elif model is ModelKind.PUSH:
                        new.add(d(a, {(b, o): 1}))
                    else:
                        new.add(d(a, ((b, o),)))
        frontier = new - seen
        seen |= frontier
        if len(seen) > limit:
            raise ConfigurationError(f"more than {limit} compiled states")
    return sorted(seen, key=repr)
