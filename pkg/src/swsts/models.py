"""Schedulers of the model catalog, edge oracles, and exact one-step laws.

Every sampler comes in two flavours that share one code path: a public
function with the signature ``step(spec, config, rng) -> config`` and an
in-place advance used by the execution engine.  ``rng`` is a
:class:`random.Random`; all integer draws go through ``randrange`` so that
choices are exactly uniform.

Each sampler can also append the random choice it made to ``trace``
(a pair, a directed matching, a target vector, a token permutation, a
triple or a reaction index).  Exact one-step distributions are produced by
independent enumeration in :func:`one_step_distribution`.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Iterator, Mapping, Optional

from .config import ConfigurationError, CountConfig, PathConfig, SeqConfig


class ModelKind(enum.Enum):
    POP = "POP"
    CRN = "CRN"
    GOSSIP = "GOSSIP"
    PUSH = "PUSH"
    MATCHING = "MATCHING"
    SHUFFLE = "SHUFFLE"
    BETWEEN = "BETWEEN"


class OracleKind(enum.Enum):
    NONE = "none"
    EQ = "="
    LT = "<"
    QO = "~"  # total quasi-order on colors
    ANC = "anc"  # ancestry via prefix order on lineage strings


class OracleOut(enum.Enum):
    EQ = "="
    NEQ = "!="
    LT = "<"
    GT = ">"
    ANC = "anc"
    UNREL = "unrel"
    DESC = "desc"

    def flipped(self) -> "OracleOut":
        """Output for the reversed pair."""
        return _FLIP[self]


_FLIP = {
    OracleOut.EQ: OracleOut.EQ, OracleOut.NEQ: OracleOut.NEQ,
    OracleOut.LT: OracleOut.GT, OracleOut.GT: OracleOut.LT,
    OracleOut.ANC: OracleOut.DESC, OracleOut.DESC: OracleOut.ANC,
    OracleOut.UNREL: OracleOut.UNREL,
}


class OracleError(ValueError):
    pass


class DeadConfiguration(Exception):
    """No transition is enabled (every reaction has zero propensity)."""


def oracle_eval(kind: OracleKind, a: Any, b: Any) -> Optional[OracleOut]:
    """Edge oracle on the ordered pair (a, b); ``a`` is the initiator/transmitter.

    An agent compared with itself (possible in GOSSIP, PUSH and SHUFFLE)
    yields ``EQ`` for every oracle kind.
    """
    if kind is OracleKind.NONE:
        return None
    if kind is OracleKind.ANC:
        if not (isinstance(a, str) and isinstance(b, str)):
            raise OracleError(f"ancestry oracle needs lineage strings, got {a!r}, {b!r}")
        if a == b:
            return OracleOut.EQ
        if b.startswith(a):
            return OracleOut.ANC
        if a.startswith(b):
            return OracleOut.DESC
        return OracleOut.UNREL
    if not (isinstance(a, int) and isinstance(b, int)):
        raise OracleError(f"{kind.value} oracle needs integer ranks, got {a!r}, {b!r}")
    if kind is OracleKind.EQ:
        return OracleOut.EQ if a == b else OracleOut.NEQ
    if a == b:
        return OracleOut.EQ
    return OracleOut.LT if a < b else OracleOut.GT


def _oracle_fn(kind: OracleKind) -> Callable[[Any, Any], Optional[OracleOut]]:
    if kind is OracleKind.NONE:
        return lambda a, b: None
    return lambda a, b: oracle_eval(kind, a, b)


# --------------------------------------------------------------------- CRN

@dataclass(frozen=True, init=False)
class Reaction:
    """Mass-action reaction ``reactants -> products`` at ``rate``."""

    reactants: tuple
    products: tuple
    rate: Fraction

    def __init__(self, reactants: Mapping[str, int], products: Mapping[str, int], rate=1):
        x = tuple(sorted((k, v) for k, v in dict(reactants).items() if v))
        y = tuple(sorted((k, v) for k, v in dict(products).items() if v))
        if not x:
            raise ConfigurationError("a reaction needs at least one reactant")
        rate = Fraction(rate)
        if rate <= 0:
            raise ConfigurationError("base rate must be positive")
        object.__setattr__(self, "reactants", x)
        object.__setattr__(self, "products", y)
        object.__setattr__(self, "rate", rate)

    def species(self) -> set:
        return {k for k, _ in self.reactants} | {k for k, _ in self.products}

    def net(self) -> dict:
        d = Counter(dict(self.products))
        d.subtract(dict(self.reactants))
        return {k: v for k, v in d.items() if v}

    def __str__(self) -> str:
        def side(v):
            return " + ".join(f"{n}{s}" if n > 1 else s for s, n in v) or "0"
        return f"{side(self.reactants)} -> {side(self.products)} @ {self.rate}"


def falling(m: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= m - i
        if out <= 0:
            return 0
    return out


def crn_propensity(r: Reaction, c: CountConfig) -> Fraction:
    """Base rate times the falling factorials of the available reactants."""
    p = 1
    for sp, need in r.reactants:
        p *= falling(c[sp], need)
        if p == 0:
            return Fraction(0)
    return r.rate * p


def apply_reaction(r: Reaction, c: CountConfig) -> CountConfig:
    d = c.as_dict()
    for sp, n in r.reactants:
        d[sp] = d.get(sp, 0) - n
        if d[sp] < 0:
            raise ConfigurationError(f"reaction {r} not applicable to {c}")
    for sp, n in r.products:
        d[sp] = d.get(sp, 0) + n
    return CountConfig(d)


def _crn_choose(reactions, counts: Mapping[str, int], rng) -> int:
    weights = []
    for r in reactions:
        p = r.rate
        for sp, need in r.reactants:
            p *= falling(counts.get(sp, 0), need)
            if p == 0:
                break
        weights.append(p)
    denom = math.lcm(*(w.denominator for w in weights))
    ints = [int(w * denom) for w in weights]
    total = sum(ints)
    if total == 0:
        raise DeadConfiguration("all propensities are zero")
    u = rng.randrange(total)
    for idx, w in enumerate(ints):
        if u < w:
            return idx
        u -= w
    raise AssertionError("unreachable")


def _crn_advance(reactions, counts: dict, rng, trace=None) -> bool:
    idx = _crn_choose(reactions, counts, rng)
    r = reactions[idx]
    for sp, n in r.reactants:
        counts[sp] -= n
    for sp, n in r.products:
        counts[sp] = counts.get(sp, 0) + n
    if trace is not None:
        trace.append(idx)
    return True


def crn_step(reactions, c: CountConfig, rng, trace=None) -> CountConfig:
    """One jump of the CRN jump chain.

    Raises :class:`DeadConfiguration` when nothing can fire.
    """
    counts = c.as_dict()
    _crn_advance(tuple(reactions), counts, rng, trace)
    return CountConfig(counts)


# ------------------------------------------------------------ agent models

def _check_size(model: ModelKind, n: int, spec=None) -> None:
    if model is ModelKind.POP and n < 2:
        raise ConfigurationError("POP needs at least two agents")
    if model is ModelKind.MATCHING and (n < 2 or n % 2):
        raise ConfigurationError(f"MATCHING needs an even population, got {n}")
    if model is ModelKind.BETWEEN and n < 3:
        raise ConfigurationError("BETWEEN needs at least three agents")
    if model in (ModelKind.GOSSIP, ModelKind.PUSH, ModelKind.SHUFFLE) and n < 1:
        raise ConfigurationError("empty population")
    if model is ModelKind.GOSSIP and spec is not None and not spec.self_sampling and n < 2:
        raise ConfigurationError("GOSSIP without self-sampling needs two agents")


def _pop_advance(spec, states, attrs, rng, trace=None) -> bool:
    n = len(states)
    i = rng.randrange(n)
    j = rng.randrange(n - 1)
    if j >= i:
        j += 1
    out = oracle_eval(spec.oracle, attrs[i], attrs[j]) if spec.oracle is not OracleKind.NONE else None
    qi, qj = states[i], states[j]
    a, b = spec.delta(qi, qj, out)
    states[i] = a
    states[j] = b
    if trace is not None:
        trace.append((i, j))
    return a != qi or b != qj


def _gossip_advance(spec, states, attrs, rng, trace=None) -> bool:
    n = len(states)
    pre = tuple(states)
    orc = _oracle_fn(spec.oracle)
    delta = spec.delta
    self_ok = spec.self_sampling
    targets = []
    changed = False
    for u in range(n):
        if self_ok:
            v = rng.randrange(n)
        else:
            v = rng.randrange(n - 1)
            if v >= u:
                v += 1
        targets.append(v)
        # transmitter (the sampled agent) is the oracle's first argument
        q = delta(pre[u], pre[v], orc(attrs[v], attrs[u]))
        if q != pre[u]:
            changed = True
        states[u] = q
    if trace is not None:
        trace.append(tuple(targets))
    return changed


def _push_deliver(spec, pre, attrs, targets, states) -> bool:
    orc = _oracle_fn(spec.oracle)
    received = [Counter() for _ in pre]
    for u, v in enumerate(targets):
        received[v][(pre[u], orc(attrs[u], attrs[v]))] += 1
    changed = False
    for v, got in enumerate(received):
        q = spec.delta(pre[v], got)
        if q != pre[v]:
            changed = True
        states[v] = q
    return changed


def _push_advance(spec, states, attrs, rng, trace=None) -> bool:
    n = len(states)
    pre = tuple(states)
    if spec.self_sampling:
        targets = tuple(rng.randrange(n) for _ in range(n))
    else:
        targets = tuple(v + (v >= u) for u, v in ((u, rng.randrange(n - 1)) for u in range(n)))
    if trace is not None:
        trace.append(targets)
    return _push_deliver(spec, pre, attrs, targets, states)


def _matching_apply(spec, pre, attrs, pairs, states) -> bool:
    orc = _oracle_fn(spec.oracle)
    changed = False
    for i, r in pairs:
        a, b = spec.delta(pre[i], pre[r], orc(attrs[i], attrs[r]))
        if a != pre[i] or b != pre[r]:
            changed = True
        states[i] = a
        states[r] = b
    return changed


def _matching_advance(spec, states, attrs, rng, trace=None) -> bool:
    n = len(states)
    perm = list(range(n))
    rng.shuffle(perm)
    pairs = tuple((perm[t], perm[t + 1]) for t in range(0, n, 2))
    if trace is not None:
        trace.append(tuple(sorted(pairs)))
    return _matching_apply(spec, tuple(states), attrs, pairs, states)


def _shuffle_emit(spec, pre) -> list:
    k = spec.k
    tokens = []
    for u, q in enumerate(pre):
        toks = tuple(spec.emit(q))
        if len(toks) != k:
            raise ConfigurationError(f"state {q!r} emitted {len(toks)} tokens, expected {k}")
        tokens.extend((tok, u) for tok in toks)
    return tokens


def _shuffle_deliver(spec, pre, attrs, tokens, states) -> bool:
    k = spec.k
    orc = _oracle_fn(spec.oracle)
    changed = False
    for u in range(len(pre)):
        seg = tokens[u * k:(u + 1) * k]
        got = tuple((tok, orc(attrs[s], attrs[u])) for tok, s in seg)
        q = spec.delta(pre[u], got)
        if q != pre[u]:
            changed = True
        states[u] = q
    return changed


def _shuffle_advance(spec, states, attrs, rng, trace=None) -> bool:
    pre = tuple(states)
    tokens = _shuffle_emit(spec, pre)
    order = list(range(len(tokens)))
    rng.shuffle(order)
    if trace is not None:
        trace.append(tuple(order))
    return _shuffle_deliver(spec, pre, attrs, [tokens[i] for i in order], states)


def _between_apply(spec, states, triple) -> bool:
    s, t, u = triple
    old = (states[s], states[t], states[u])
    new = tuple(spec.delta(*old))
    states[s], states[t], states[u] = new
    return new != old


def _between_advance(spec, states, attrs, rng, trace=None) -> bool:
    n = len(states)
    a, b, c = sorted(rng.sample(range(n), 3))
    triple = (a, b, c) if rng.randrange(2) == 0 else (c, b, a)
    if trace is not None:
        trace.append(triple)
    return _between_apply(spec, states, triple)


ADVANCE = {
    ModelKind.POP: _pop_advance,
    ModelKind.GOSSIP: _gossip_advance,
    ModelKind.PUSH: _push_advance,
    ModelKind.MATCHING: _matching_advance,
    ModelKind.SHUFFLE: _shuffle_advance,
    ModelKind.BETWEEN: _between_advance,
}


def _seq_step(model: ModelKind, spec, c: SeqConfig, rng, trace) -> SeqConfig:
    if spec.model is not model:
        raise ConfigurationError(f"{spec.name} is a {spec.model.value} protocol, not {model.value}")
    _check_size(model, len(c), spec)
    states = list(c.states)
    ADVANCE[model](spec, states, c.attrs, rng, trace)
    return type(c)(tuple(states), c.attrs)


def pop_step(spec, c: SeqConfig, rng, trace=None) -> SeqConfig:
    """Uniform ordered pair (initiator, responder) among n(n-1)."""
    return _seq_step(ModelKind.POP, spec, c, rng, trace)


def gossip_step(spec, c: SeqConfig, rng, trace=None) -> SeqConfig:
    """Synchronous pull: every agent samples one agent and updates from it."""
    return _seq_step(ModelKind.GOSSIP, spec, c, rng, trace)


def push_step(spec, c: SeqConfig, rng, trace=None) -> SeqConfig:
    """Synchronous push: every agent updates from the multiset pushed to it."""
    return _seq_step(ModelKind.PUSH, spec, c, rng, trace)


def matching_step(spec, c: SeqConfig, rng, trace=None) -> SeqConfig:
    """Uniform directed perfect matching, all pairs interacting at once."""
    return _seq_step(ModelKind.MATCHING, spec, c, rng, trace)


def shuffle_step(spec, c: SeqConfig, rng, trace=None) -> SeqConfig:
    """Each agent emits k tokens; a uniform permutation deals k to each agent."""
    return _seq_step(ModelKind.SHUFFLE, spec, c, rng, trace)


def between_step(spec, c: PathConfig, rng, trace=None) -> PathConfig:
    """Uniform ordered triple (s, t, u) with t strictly between s and u on the path."""
    return _seq_step(ModelKind.BETWEEN, spec, c, rng, trace)


def step(spec, c, rng, trace=None):
    """Dispatch one scheduler step according to ``spec.model``."""
    if spec.model is ModelKind.CRN:
        return crn_step(spec.reactions, c, rng, trace)
    return _seq_step(spec.model, spec, c, rng, trace)


# ------------------------------------------------------ exact enumeration

def directed_matchings(n: int) -> Iterator[tuple]:
    """All n!/(n/2)! directed perfect matchings of range(n), as sorted pair tuples."""
    def rec(free):
        if not free:
            yield ()
            return
        a = free[0]
        for b in free[1:]:
            rest = [x for x in free[1:] if x != b]
            for tail in rec(rest):
                yield ((a, b),) + tail
                yield ((b, a),) + tail
    for m in rec(list(range(n))):
        yield tuple(sorted(m))


def between_triples(n: int) -> list:
    out = []
    for s in range(n):
        for u in range(n):
            lo, hi = min(s, u), max(s, u)
            for t in range(lo + 1, hi):
                out.append((s, t, u))
    return out


def one_step_distribution(spec, c) -> dict:
    """Exact law of the next configuration, as ``{config: Fraction}``.

    Enumerates every scheduler choice; cost grows as n(n-1), n^n, n!/(n/2)!,
    (nk)! or n^3 depending on the model.
    """
    dist: Counter = Counter()
    model = spec.model
    if model is ModelKind.CRN:
        props = [(r, crn_propensity(r, c)) for r in spec.reactions]
        total = sum(p for _, p in props)
        if total == 0:
            return {}
        for r, p in props:
            if p:
                dist[apply_reaction(r, c)] += p / total
        return dict(dist)

    n = len(c)
    _check_size(model, n, spec)
    pre, attrs = c.states, c.attrs
    make = type(c)

    def outcome(fn) -> SeqConfig:
        states = list(pre)
        fn(states)
        return make(tuple(states), attrs)

    if model is ModelKind.POP:
        w = Fraction(1, n * (n - 1))
        orc = _oracle_fn(spec.oracle)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue

                def f(states, i=i, j=j):
                    states[i], states[j] = spec.delta(pre[i], pre[j], orc(attrs[i], attrs[j]))
                dist[outcome(f)] += w
    elif model is ModelKind.GOSSIP:
        orc = _oracle_fn(spec.oracle)
        choices = [list(range(n)) if spec.self_sampling else [v for v in range(n) if v != u]
                   for u in range(n)]
        w = Fraction(1, math.prod(len(ch) for ch in choices))
        for targets in itertools.product(*choices):
            def f(states, targets=targets):
                for u, v in enumerate(targets):
                    states[u] = spec.delta(pre[u], pre[v], orc(attrs[v], attrs[u]))
            dist[outcome(f)] += w
    elif model is ModelKind.PUSH:
        choices = [list(range(n)) if spec.self_sampling else [v for v in range(n) if v != u]
                   for u in range(n)]
        w = Fraction(1, math.prod(len(ch) for ch in choices))
        for targets in itertools.product(*choices):
            dist[outcome(lambda s, t=targets: _push_deliver(spec, pre, attrs, t, s))] += w
    elif model is ModelKind.MATCHING:
        ms = list(directed_matchings(n))
        w = Fraction(1, len(ms))
        for pairs in ms:
            dist[outcome(lambda s, p=pairs: _matching_apply(spec, pre, attrs, p, s))] += w
    elif model is ModelKind.SHUFFLE:
        tokens = _shuffle_emit(spec, pre)
        w = Fraction(1, math.factorial(len(tokens)))
        for perm in itertools.permutations(tokens):
            dist[outcome(lambda s, p=perm: _shuffle_deliver(spec, pre, attrs, list(p), s))] += w
    elif model is ModelKind.BETWEEN:
        ts = between_triples(n)
        w = Fraction(1, len(ts))
        for tr in ts:
            dist[outcome(lambda s, tr=tr: _between_apply(spec, s, tr))] += w
    else:  # pragma: no cover
        raise ValueError(model)
    return dict(dist)
