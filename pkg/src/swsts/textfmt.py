"""Plain-text protocol files.

One declaration per line; ``#`` starts a comment::

    protocol leader_election
    model POP                 # POP CRN GOSSIP PUSH MATCHING SHUFFLE BETWEEN
    oracle none               # none = < ~ anc
    alphabet L F
    L L -> L F                # POP/MATCHING: q_i q_r [out] -> q_i' q_r'
    input x -> L              # input map: symbol -> state, one agent per symbol
    append D                  # extra agents after the input agents
    attrs index               # hidden attributes: none | index | symbol
    target L=1 ; exclude L=2  # vector-mode target, optional exclusion
    v0 D0=1
    v1 D1=1

Rule shapes by model: GOSSIP ``q obs [out] -> q'``; BETWEEN
``a b c -> a' b' c'``; PUSH/SHUFFLE declare ``active`` states and use
``q tok [out] -> q'`` for receiving an active token plus ``pass q -> q'``
for the holder once its token has gone elsewhere.  CRNs use
``2A + B -> C @ 1/2`` and ``weights A=1 B=2``; ``closed no`` marks a
non-closed network.  Compound states are written with ``|`` between
components and ``.`` for an empty component.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Any, Iterable, Optional

from .config import ConfigurationError, CountConfig, PathConfig, SeqConfig
from .core import Mode, PairTable, ProtocolSpec, Region, UpwardSet
from .models import ModelKind, OracleKind, OracleOut, Reaction

_OUTS = {o.value: o for o in OracleOut}
_ORACLES = {"none": OracleKind.NONE, "=": OracleKind.EQ, "<": OracleKind.LT,
            "~": OracleKind.QO, "anc": OracleKind.ANC}


class FormatError(ConfigurationError):
    pass


def enc_state(q: Any) -> str:
    if isinstance(q, tuple):
        if not q or any(isinstance(x, tuple) for x in q):
            raise FormatError(f"state {q!r} cannot be written as a token")
        body = "|".join(enc_state(x) for x in q)
        return body + "|" if len(q) == 1 else body
    if q is None:
        return "."
    s = str(q)
    if not s or any(ch.isspace() for ch in s) or "|" in s or s in ("->", "@", ";"):
        raise FormatError(f"state {q!r} cannot be written as a token")
    return s


def dec_state(tok: str) -> Any:
    if "|" in tok:
        parts = tok.split("|")
        if parts[-1] == "":
            parts = parts[:-1]
        return tuple(dec_state(p) for p in parts)
    if tok == ".":
        return None
    if re.fullmatch(r"-?\d+", tok) and tok not in ("-",):
        return int(tok)
    return tok


def _side(text: str) -> dict:
    out: dict = {}
    text = text.strip()
    if text in ("", "0"):
        return out
    for term in text.split("+"):
        term = term.strip()
        m = re.fullmatch(r"(\d*)\s*([A-Za-z_][\w']*)", term)
        if not m:
            raise FormatError(f"bad reaction term {term!r}")
        out[m.group(2)] = out.get(m.group(2), 0) + int(m.group(1) or 1)
    return out


def _counts(tokens: Iterable[str]) -> dict:
    out = {}
    for t in tokens:
        k, _, v = t.partition("=")
        if not v:
            raise FormatError(f"expected name=count, got {t!r}")
        out[dec_state(k)] = int(v)
    return out


class GossipTable:
    def __init__(self, rules):
        self.rules = dict(rules)

    def __call__(self, q, obs, out=None):
        return self.rules.get((q, obs, out), q)


class TripleTable:
    def __init__(self, rules):
        self.rules = dict(rules)

    def __call__(self, a, b, c):
        return self.rules.get((a, b, c), (a, b, c))


class TokenTable:
    """Single-observation rules for PUSH/SHUFFLE protocols."""

    def __init__(self, rules, passes, active, shuffle: bool):
        self.rules = dict(rules)
        self.passes = dict(passes)
        self.active = frozenset(active)
        self.shuffle = shuffle

    def __call__(self, q, received):
        items = received if self.shuffle else list(received)
        toks = sorted(((s, o) for s, o in items if s is not None and s in self.active), key=repr)
        if q in self.active:
            return q if toks else self.passes.get(q, q)
        for s, o in toks:
            if (q, s, o) in self.rules:
                return self.rules[(q, s, o)]
        return q


def loads(text: str) -> tuple:
    """Parse a protocol file; returns ``(spec, target)``."""
    name, model, oracle, k = "protocol", None, OracleKind.NONE, 1
    alphabet: Optional[set] = None
    rules: dict = {}
    passes: dict = {}
    active: set = set()
    reactions: list = []
    weights: Optional[dict] = None
    closed = True
    inputs: dict = {}
    append: list = []
    attrs_mode = "none"
    target = None
    v0 = v1 = None
    self_sampling = True
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "protocol":
                name = rest
            elif head == "model":
                model = ModelKind(rest.upper())
            elif head == "oracle":
                oracle = _ORACLES[rest]
            elif head == "k":
                k = int(rest)
            elif head == "alphabet":
                alphabet = {dec_state(t) for t in rest.split()}
            elif head == "active":
                active |= {dec_state(t) for t in rest.split()}
            elif head == "weights":
                weights = _counts(rest.split())
            elif head == "closed":
                closed = rest.lower() in ("yes", "true", "1")
            elif head == "self_sampling":
                self_sampling = rest.lower() in ("yes", "true", "1")
            elif head == "input":
                sym, _, st = rest.partition("->")
                inputs[sym.strip()] = dec_state(st.strip())
            elif head == "append":
                append.extend(dec_state(t) for t in rest.split())
            elif head == "attrs":
                if rest not in ("none", "index", "symbol"):
                    raise FormatError("attrs must be none, index or symbol")
                attrs_mode = rest
            elif head == "target":
                inc, _, exc = rest.partition(";")
                exc = exc.strip()
                if exc.startswith("exclude"):
                    exc = exc[len("exclude"):]
                target = Region(UpwardSet([_counts(inc.split())], Mode.VECTOR),
                                UpwardSet([_counts(exc.split())], Mode.VECTOR) if exc.strip() else None)
            elif head in ("v0", "v1"):
                u = UpwardSet([_counts(rest.split())], Mode.VECTOR)
                if head == "v0":
                    v0 = u
                else:
                    v1 = u
            elif head == "pass":
                a, _, b = rest.partition("->")
                passes[dec_state(a.strip())] = dec_state(b.strip())
            elif "->" in line:
                if model is None:
                    raise FormatError("declare the model before any rule")
                if model is ModelKind.CRN:
                    lhs, _, rhs = line.partition("->")
                    rhs, _, rate = rhs.partition("@")
                    reactions.append(Reaction(_side(lhs), _side(rhs), Fraction(rate.strip() or "1")))
                else:
                    _add_rule(model, line, rules)
            else:
                raise FormatError(f"unknown declaration {head!r}")
        except (ValueError, KeyError) as e:
            raise FormatError(f"line {lineno}: {e}") from None
    if model is None:
        raise FormatError("missing model declaration")

    emit = None
    if model in (ModelKind.POP, ModelKind.MATCHING):
        delta = PairTable(rules)
    elif model is ModelKind.GOSSIP:
        delta = GossipTable(rules)
    elif model is ModelKind.BETWEEN:
        delta = TripleTable(rules)
    elif model in (ModelKind.PUSH, ModelKind.SHUFFLE):
        delta = TokenTable(rules, passes, active, model is ModelKind.SHUFFLE)
        act = frozenset(active)
        kk = k
        emit = lambda q: ((q,) + (None,) * (kk - 1)) if q in act else (None,) * kk  # noqa: E731
    else:
        delta = None

    input_map = None
    if inputs or append:
        def _input_map(word, _in=dict(inputs), _app=tuple(append), _mode=attrs_mode):
            if model is ModelKind.CRN:
                d: dict = {}
                for s in list(word):
                    d[_in[s]] = d.get(_in[s], 0) + 1
                for s in _app:
                    d[s] = d.get(s, 0) + 1
                return CountConfig(d)
            states = tuple(_in[s] for s in word) + _app
            if _mode == "index":
                attrs = tuple(range(1, len(states) + 1))
            elif _mode == "symbol":
                order = sorted(_in)
                attrs = tuple(order.index(s) for s in word) + (len(order),) * len(_app)
            else:
                attrs = ()
            cls = PathConfig if model is ModelKind.BETWEEN else SeqConfig
            return cls(states, attrs)
        input_map = _input_map

    spec = ProtocolSpec(
        name=name, model=model, delta=delta, alphabet=frozenset(alphabet) if alphabet else None,
        oracle=oracle, emit=emit, k=k, reactions=tuple(reactions), weights=weights, closed=closed,
        self_sampling=self_sampling, input_alphabet=frozenset(inputs) or None,
        input_map=input_map, v0=v0, v1=v1, rules=rules or None,
        size_poly=(lambda n, _a=len(append): n + _a) if input_map else None,
        meta={"passes": passes, "active": frozenset(active)} if active else {},
    )
    return spec, target


def _add_rule(model: ModelKind, line: str, rules: dict) -> None:
    lhs, _, rhs = line.partition("->")
    left = lhs.split()
    right = [dec_state(t) for t in rhs.split()]
    arity = {ModelKind.POP: 2, ModelKind.MATCHING: 2, ModelKind.GOSSIP: 2,
             ModelKind.PUSH: 2, ModelKind.SHUFFLE: 2, ModelKind.BETWEEN: 3}[model]
    out = None
    if len(left) == arity + 1:
        out = _OUTS[left[-1]]
        left = left[:-1]
    if len(left) != arity:
        raise FormatError(f"rule {line!r} needs {arity} states on the left")
    left = [dec_state(t) for t in left]
    if model is ModelKind.BETWEEN:
        if len(right) != 3:
            raise FormatError("BETWEEN rules produce three states")
        rules[tuple(left)] = tuple(right)
    elif model in (ModelKind.POP, ModelKind.MATCHING):
        if len(right) != 2:
            raise FormatError("pair rules produce two states")
        rules[(left[0], left[1], out)] = tuple(right)
    else:
        if len(right) != 1:
            raise FormatError("one-way rules produce one state")
        rules[(left[0], left[1], out)] = right[0]


def load(path: str) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# ------------------------------------------------------------------ dump

def oracle_outputs(kind: OracleKind) -> list:
    return {
        OracleKind.NONE: [None],
        OracleKind.EQ: [OracleOut.EQ, OracleOut.NEQ],
        OracleKind.LT: [OracleOut.LT, OracleOut.GT, OracleOut.EQ],
        OracleKind.QO: [OracleOut.LT, OracleOut.EQ, OracleOut.GT],
        OracleKind.ANC: [OracleOut.ANC, OracleOut.UNREL, OracleOut.DESC, OracleOut.EQ],
    }[kind]


def _oracle_name(kind: OracleKind) -> str:
    return next(k for k, v in _ORACLES.items() if v is kind)


def _o(out) -> str:
    return "" if out is None else " " + out.value


def dumps(spec: ProtocolSpec, alphabet: Optional[Iterable] = None, active=None) -> str:
    """Write ``spec`` as a protocol file, enumerating non-identity rules over ``alphabet``."""
    lines = [f"protocol {spec.name}", f"model {spec.model.value}",
             f"oracle {_oracle_name(spec.oracle)}"]
    if spec.model is ModelKind.CRN:
        for r in spec.reactions:
            lines.append(str(r))
        if spec.weights:
            lines.append("weights " + " ".join(f"{s}={w}" for s, w in sorted(spec.weights.items())))
        if not spec.closed:
            lines.append("closed no")
        return "\n".join(lines) + "\n"
    alpha = sorted(alphabet if alphabet is not None else (spec.alphabet or ()), key=repr)
    if not alpha:
        raise FormatError("an alphabet is needed to enumerate rules")
    if spec.model is ModelKind.SHUFFLE:
        lines.append(f"k {spec.k}")
    if spec.model is ModelKind.GOSSIP and not spec.self_sampling:
        lines.append("self_sampling no")
    lines.append("alphabet " + " ".join(enc_state(q) for q in alpha))
    outs = oracle_outputs(spec.oracle)
    d = spec.delta
    if spec.model in (ModelKind.POP, ModelKind.MATCHING):
        for a in alpha:
            for b in alpha:
                for o in outs:
                    r = d(a, b, o)
                    if tuple(r) != (a, b):
                        lines.append(f"{enc_state(a)} {enc_state(b)}{_o(o)} -> {enc_state(r[0])} {enc_state(r[1])}")
    elif spec.model is ModelKind.GOSSIP:
        for a in alpha:
            for b in alpha:
                for o in outs:
                    r = d(a, b, o)
                    if r != a:
                        lines.append(f"{enc_state(a)} {enc_state(b)}{_o(o)} -> {enc_state(r)}")
    elif spec.model is ModelKind.BETWEEN:
        for a in alpha:
            for b in alpha:
                for c in alpha:
                    r = tuple(d(a, b, c))
                    if r != (a, b, c):
                        lines.append(" ".join(enc_state(x) for x in (a, b, c)) + " -> "
                                     + " ".join(enc_state(x) for x in r))
    else:
        if active is None:
            raise FormatError("token protocols need the set of active states")
        act = [q for q in alpha if active(q)]
        lines.append("active " + " ".join(enc_state(q) for q in act))
        shuffle = spec.model is ModelKind.SHUFFLE
        for q in act:
            r = d(q, () if shuffle else {})
            if r != q:
                lines.append(f"pass {enc_state(q)} -> {enc_state(r)}")
        for q in alpha:
            if q in act:
                continue
            for t in act:
                for o in outs:
                    got = ((t, o),) if shuffle else {(t, o): 1}
                    r = d(q, got)
                    if r != q:
                        lines.append(f"{enc_state(q)} {enc_state(t)}{_o(o)} -> {enc_state(r)}")
    return "\n".join(lines) + "\n"
