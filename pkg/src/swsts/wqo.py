"""Embedding relations and brute-force exact oracles on small instances.

The embeddings decide the subconfiguration order of each model family:
Higman subsequence order for plain sequences, Dickson componentwise order
for count vectors, and the quasi-ordered-sequence order for colored
sequences.  :class:`ReachOracle` enumerates the reachable state space of a
fixed-size instance from the exact one-step laws in :mod:`swsts.models` and
answers Pred*, hitting-time and error-region queries.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import groupby
from typing import Any, Mapping, Sequence

import numpy as np

from .config import ConfigurationError, CountConfig, PathConfig, SeqConfig, attr_rank
from .models import ModelKind, one_step_distribution


class OracleOverflow(RuntimeError):
    """State enumeration exceeded the configured budget."""


class NonAbsorbingChain(ValueError):
    """Some recurrent class avoids both the target and the fail set."""


# ------------------------------------------------------------ embeddings

def subseq_embeds(s: Sequence, t: Sequence) -> bool:
    """True iff ``s`` is a (not necessarily contiguous) subsequence of ``t``."""
    it = iter(t)
    return all(any(x == y for y in it) for x in s)


def _counts(u) -> Mapping:
    if isinstance(u, CountConfig):
        return u.as_dict()
    return u


def vector_leq(u, v) -> bool:
    """Componentwise order on count vectors; absent species count as zero."""
    u, v = _counts(u), _counts(v)
    return all(n <= v.get(k, 0) for k, n in u.items())


def _blocks(seq: Sequence) -> list:
    """Split a colored sequence into (color, Counter of states) blocks."""
    ranks = [attr_rank(a) for _, a in seq]
    if any(ranks[i] > ranks[i + 1] for i in range(len(ranks) - 1)):
        raise ConfigurationError("colored sequence is not sorted by color rank")
    return [Counter(q for q, _ in grp) for _, grp in groupby(seq, key=lambda p: attr_rank(p[1]))]


def qos_embeds(s: Sequence, t: Sequence) -> bool:
    """Embedding of color-sorted sequences of ``(state, color)`` pairs.

    Agents sharing a color in ``s`` must land in one color class of ``t``,
    and distinct classes of ``s`` must land in distinct classes of ``t``
    in the same order.  Blocks are matched greedily left to right; taking the
    earliest t-block that contains an s-block never hurts later blocks.
    """
    sb, tb = _blocks(s), _blocks(t)
    j = 0
    for blk in sb:
        while j < len(tb) and any(tb[j][q] < n for q, n in blk.items()):
            j += 1
        if j == len(tb):
            return False
        j += 1
    return True


# ---------------------------------------------------------- reach oracle

@dataclass
class ReachOracle:
    """Exhaustive reachability graph of one fixed-size instance.

    ``edges[i]`` lists ``(j, p)`` with ``p`` a :class:`Fraction` (or a float
    when the denominator outgrows 128 bits).  A state with no edges is dead.
    """

    states: list
    edges: list
    symmetric: bool
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {s: i for i, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def key(self, c):
        """Canonical key of a configuration in this oracle."""
        if self.symmetric and isinstance(c, SeqConfig):
            return c.canonical()
        return c

    def __contains__(self, c) -> bool:
        return self.key(c) in self.index

    def idx(self, c) -> int:
        try:
            return self.index[self.key(c)]
        except KeyError:
            raise KeyError(f"{c!r} is not an enumerated state") from None

    def members(self, T) -> set:
        """Indices of enumerated states lying in ``T`` (any container)."""
        if isinstance(T, (set, frozenset)) and all(isinstance(x, int) for x in T):
            return set(T)
        return {i for i, s in enumerate(self.states) if s in T}

    def out_sum(self, i: int):
        return sum(p for _, p in self.edges[i])


def _prob(p: Fraction):
    if p.denominator.bit_length() > 128:
        return float(p)
    return p


def build_reach(spec, init, symmetric: bool = False, budget: int = 10 ** 6) -> ReachOracle:
    """Breadth-first enumeration from ``init`` (one config or an iterable of them)."""
    if symmetric and spec.model is ModelKind.BETWEEN:
        raise ConfigurationError("BETWEEN is not invariant under agent permutations")
    inits = [init] if isinstance(init, (SeqConfig, CountConfig)) else list(init)

    def canon(c):
        return c.canonical() if symmetric and isinstance(c, SeqConfig) else c

    states: list = []
    index: dict = {}
    edges: list = []
    queue: deque = deque()
    for c in inits:
        c = canon(c)
        if c not in index:
            if len(states) >= budget:
                raise OracleOverflow(f"more than {budget} states")
            index[c] = len(states)
            states.append(c)
            queue.append(c)
    while queue:
        c = queue.popleft()
        agg: Counter = Counter()
        for nxt, p in one_step_distribution(spec, c).items():
            agg[canon(nxt)] += p
        out = []
        for nxt, p in agg.items():
            if nxt not in index:
                if len(states) >= budget:
                    raise OracleOverflow(f"more than {budget} states")
                index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            out.append((index[nxt], _prob(p)))
        out.sort()
        edges.append((index[c], out))
    by_state = [None] * len(states)
    for i, out in edges:
        by_state[i] = out
    return ReachOracle(states, by_state, symmetric, index)


def _reverse_reach(oracle: ReachOracle, seeds: set) -> set:
    rev: list = [[] for _ in oracle.states]
    for i, out in enumerate(oracle.edges):
        for j, p in out:
            if p:
                rev[j].append(i)
    seen = set(seeds)
    queue = deque(seeds)
    while queue:
        j = queue.popleft()
        for i in rev[j]:
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def pred_star(oracle: ReachOracle, T) -> set:
    """Enumerated states with a path into ``T``, as a set of configurations."""
    return {oracle.states[i] for i in _reverse_reach(oracle, oracle.members(T))}


def pred_star_idx(oracle: ReachOracle, T) -> set:
    return _reverse_reach(oracle, oracle.members(T))


def error_region(oracle: ReachOracle, V0, V1) -> set:
    """States from which both output sets remain reachable."""
    return pred_star(oracle, V0) & pred_star(oracle, V1)


@dataclass
class ExactHittingReport:
    per_state: dict  # config -> expected steps until target or fail
    target_prob: dict  # config -> probability of hitting target first

    def steps(self, c) -> float:
        return self.per_state[c]


def _closed_class(oracle: ReachOracle, bad: set) -> list:
    """A bottom strongly connected component inside ``bad`` (Tarjan, iterative)."""
    idx: dict = {}
    low: dict = {}
    on: set = set()
    stack: list = []
    comps: list = []
    counter = 0
    for root in sorted(bad):
        if root in idx:
            continue
        work = [(root, iter(j for j, p in oracle.edges[root] if p))]
        idx[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in idx:
                    idx[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on.add(w)
                    work.append((w, iter(j for j, p in oracle.edges[w] if p)))
                    advanced = True
                    break
                if w in on:
                    low[v] = min(low[v], idx[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == idx[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    for comp in comps:
        cs = set(comp)
        if all(j in cs for v in comp for j, p in oracle.edges[v] if p):
            return sorted(comp)
    return sorted(bad)[:1]


def exact_hitting(oracle: ReachOracle, target, fail=()) -> ExactHittingReport:
    """Expected steps to absorption in ``target | fail`` and P(target first).

    Solves the first-step equations in double precision; raises
    :class:`NonAbsorbingChain` naming a closed class that avoids both sets.
    """
    tgt = oracle.members(target)
    fl = oracle.members(fail) - tgt
    absorbing = tgt | fl
    can = _reverse_reach(oracle, absorbing)
    bad = set(range(len(oracle))) - can
    if bad:
        cls = _closed_class(oracle, bad)
        names = ", ".join(repr(oracle.states[i]) for i in cls[:5])
        raise NonAbsorbingChain(f"recurrent class avoiding target and fail: {names}")
    trans = [i for i in range(len(oracle)) if i not in absorbing]
    pos = {s: k for k, s in enumerate(trans)}
    m = len(trans)
    per_state = {oracle.states[i]: 0.0 for i in absorbing}
    target_prob = {oracle.states[i]: (1.0 if i in tgt else 0.0) for i in absorbing}
    if m:
        rows, cols, vals = [], [], []
        rhs_h = np.zeros(m)
        for k, i in enumerate(trans):
            for j, p in oracle.edges[i]:
                p = float(p)
                if j in pos:
                    rows.append(k)
                    cols.append(pos[j])
                    vals.append(-p)
                elif j in tgt:
                    rhs_h[k] += p
        rows.extend(range(m))
        cols.extend(range(m))
        vals.extend([1.0] * m)
        rhs = np.column_stack([np.ones(m), rhs_h])
        if m <= 3000:
            A = np.zeros((m, m))
            np.add.at(A, (rows, cols), vals)
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError as e:
                raise NonAbsorbingChain(f"singular first-step system: {e}") from None
            resid = A @ sol - rhs
        else:
            from scipy.sparse import csc_matrix
            from scipy.sparse.linalg import splu
            A = csc_matrix((vals, (rows, cols)), shape=(m, m))
            sol = splu(A).solve(rhs)
            resid = A @ sol - rhs
        scale = max(1.0, float(np.abs(sol).max()))
        if float(np.abs(resid).max()) > 1e-9 * scale:
            raise NonAbsorbingChain("linear solve residual above 1e-9")
        for k, i in enumerate(trans):
            per_state[oracle.states[i]] = float(sol[k, 0])
            target_prob[oracle.states[i]] = min(1.0, max(0.0, float(sol[k, 1])))
    return ExactHittingReport(per_state, target_prob)


def distribution_after(oracle: ReachOracle, init, m: int) -> dict:
    """Exact law of the state after ``m`` steps, keyed by configuration."""
    cur = {oracle.idx(init): Fraction(1)}
    for _ in range(m):
        nxt: Counter = Counter()
        for i, p in cur.items():
            out = oracle.edges[i]
            if not out:
                nxt[i] += p
            for j, q in out:
                nxt[j] += p * q
        cur = nxt
    return {oracle.states[i]: p for i, p in cur.items() if p}


def first_passage(oracle: ReachOracle, init, target, horizon: int) -> list:
    """``cdf[l]`` = P(target entered within l steps) for l = 0..horizon (floats)."""
    tgt = oracle.members(target)
    start = oracle.idx(init)
    cdf = [1.0 if start in tgt else 0.0]
    cur = {} if start in tgt else {start: 1.0}
    hit = cdf[0]
    for _ in range(horizon):
        nxt: dict = {}
        for i, p in cur.items():
            for j, q in oracle.edges[i]:
                w = p * float(q)
                if j in tgt:
                    hit += w
                else:
                    nxt[j] = nxt.get(j, 0.0) + w
        cur = nxt
        cdf.append(hit)
    return cdf


# ------------------------------------------------------------------ JSON

def _enc(x: Any):
    if x is None or isinstance(x, (bool, int, str)):
        return x
    if isinstance(x, tuple):
        return {"t": [_enc(y) for y in x]}
    raise TypeError(f"cannot encode state component {x!r}")


def _dec(x: Any):
    if isinstance(x, dict):
        return tuple(_dec(y) for y in x["t"])
    return x


def encode_config(c) -> dict:
    if isinstance(c, CountConfig):
        return {"kind": "count", "counts": dict(c.items)}
    kind = "path" if isinstance(c, PathConfig) else "seq"
    return {"kind": kind, "states": [_enc(q) for q in c.states], "attrs": [_enc(a) for a in c.attrs]}


def decode_config(d: dict):
    if d["kind"] == "count":
        return CountConfig(d["counts"])
    cls = PathConfig if d["kind"] == "path" else SeqConfig
    return cls(tuple(_dec(q) for q in d["states"]), tuple(_dec(a) for a in d["attrs"]))


def dump_oracle(oracle: ReachOracle) -> str:
    """JSON text: states, and per-state edges as ``[succ, num, den]`` (or ``[succ, float]``)."""
    edges = []
    for out in oracle.edges:
        row = []
        for j, p in out:
            if isinstance(p, Fraction):
                row.append([j, p.numerator, p.denominator])
            else:
                row.append([j, float(p)])
        edges.append(row)
    doc = {
        "format": "swsts-reach/1",
        "symmetric": oracle.symmetric,
        "states": [encode_config(s) for s in oracle.states],
        "edges": edges,
    }
    return json.dumps(doc, sort_keys=True)


def load_oracle(text: str) -> ReachOracle:
    doc = json.loads(text)
    if doc.get("format") != "swsts-reach/1":
        raise ValueError("not a reach-oracle document")
    states = [decode_config(s) for s in doc["states"]]
    edges = []
    for row in doc["edges"]:
        edges.append([(e[0], Fraction(e[1], e[2])) if len(e) == 3 else (e[0], e[1]) for e in row])
    return ReachOracle(states, edges, doc["symmetric"])
