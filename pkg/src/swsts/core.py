"""Protocols as data, upward-closed target sets, and the seeded execution engine."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional

import numpy as np

from .config import ConfigurationError, CountConfig, PathConfig, SeqConfig, weight_of
from .models import (ADVANCE, DeadConfiguration, ModelKind, OracleKind, Reaction,
                     _check_size, _crn_advance)
from .wqo import ReachOracle, pred_star_idx, qos_embeds, subseq_embeds, vector_leq


class Mode(enum.Enum):
    SUBSEQUENCE = "subsequence"
    QOS = "qos"
    VECTOR = "vector"  # Dickson order; on sequences it compares state multisets


def _as_counts(c) -> dict:
    if isinstance(c, CountConfig):
        return c.as_dict()
    if isinstance(c, SeqConfig):
        out: dict = {}
        for q in c.states:
            out[q] = out.get(q, 0) + 1
        return out
    if isinstance(c, Mapping):
        return dict(c)
    raise ConfigurationError(f"not a configuration: {c!r}")


class UpwardSet:
    """Upward closure of a finite basis under one embedding relation."""

    def __init__(self, basis: Iterable, mode: Mode = Mode.SUBSEQUENCE):
        self.mode = Mode(mode)
        items = []
        for b in basis:
            if self.mode is Mode.VECTOR:
                items.append(_as_counts(b))
            elif isinstance(b, SeqConfig):
                items.append(b)
            elif isinstance(b, CountConfig):
                raise ConfigurationError(f"{self.mode.value} mode needs sequence basis elements")
            else:
                items.append(SeqConfig(tuple(b)))
        self.basis = tuple(items)
        self._vec = self.mode is Mode.VECTOR

    @classmethod
    def at_least(cls, **counts) -> "UpwardSet":
        """Vector-mode set {c : c[q] >= counts[q] for all q}."""
        return cls([counts], Mode.VECTOR)

    @classmethod
    def empty(cls, mode: Mode = Mode.VECTOR) -> "UpwardSet":
        return cls([], mode)

    @classmethod
    def everything(cls, mode: Mode = Mode.VECTOR) -> "UpwardSet":
        return cls([{}] if Mode(mode) is Mode.VECTOR else [SeqConfig(())], mode)

    def with_basis(self, extra) -> "UpwardSet":
        return UpwardSet(list(self.basis) + [extra], self.mode)

    def __contains__(self, c) -> bool:
        return in_upward(c, self)

    def __repr__(self) -> str:
        return f"UpwardSet({list(self.basis)!r}, {self.mode.value})"


def in_upward(c, T: UpwardSet) -> bool:
    """True iff some basis element embeds into ``c`` under ``T.mode``."""
    if T.mode is Mode.VECTOR:
        counts = _as_counts(c)
        return any(vector_leq(b, counts) for b in T.basis)
    if not isinstance(c, SeqConfig):
        raise ConfigurationError(f"{T.mode.value} membership needs a sequence configuration")
    if T.mode is Mode.SUBSEQUENCE:
        return any(subseq_embeds(b.states, c.states) for b in T.basis)
    pairs = list(c)
    return any(qos_embeds(list(b), pairs) for b in T.basis)


class Region:
    """``include`` minus ``exclude``; e.g. "exactly one leader"."""

    def __init__(self, include, exclude=None):
        self.include = include
        self.exclude = exclude

    def __contains__(self, c) -> bool:
        if c not in self.include:
            return False
        return self.exclude is None or c not in self.exclude

    def __repr__(self) -> str:
        return f"Region({self.include!r} minus {self.exclude!r})"


class Where:
    """Predicate-backed set, used where a target is not upward closed."""

    def __init__(self, fn: Callable[[Any], bool], name: str = "predicate"):
        self.fn = fn
        self.name = name

    def __contains__(self, c) -> bool:
        return bool(self.fn(c))

    def __repr__(self) -> str:
        return f"Where({self.name})"


class Union_:
    def __init__(self, *parts):
        self.parts = parts

    def __contains__(self, c) -> bool:
        return any(c in p for p in self.parts)


# ------------------------------------------------------------- protocols

class PairTable:
    """Two-agent transition table; missing entries are the identity.

    Keys are ``(q_i, q_r, out)`` with ``out=None`` for oracle-free models.
    """

    def __init__(self, rules: Mapping):
        self.rules = dict(rules)

    def __call__(self, qi, qr, out=None):
        return self.rules.get((qi, qr, out), (qi, qr))


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    name: str
    model: ModelKind
    delta: Optional[Callable] = None
    alphabet: Optional[frozenset] = None
    oracle: OracleKind = OracleKind.NONE
    emit: Optional[Callable] = None
    k: int = 1
    reactions: tuple = ()
    weights: Optional[Mapping[str, int]] = None
    closed: bool = True
    self_sampling: bool = True
    input_alphabet: Optional[frozenset] = None
    input_map: Optional[Callable] = None
    size_poly: Optional[Callable[[int], int]] = None
    v0: Any = None
    v1: Any = None
    rules: Optional[Mapping] = None  # declarative form, when available
    check: Optional[Callable] = None  # extra init validation, raises ConfigurationError
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.model is ModelKind.CRN:
            rs = tuple(self.reactions)
            if not rs or not all(isinstance(r, Reaction) for r in rs):
                raise ConfigurationError("a CRN needs at least one Reaction")
            object.__setattr__(self, "reactions", rs)
            if self.closed:
                for r in rs:
                    wx = weight_of(CountConfig(dict(r.reactants)), self.weights)
                    wy = weight_of(CountConfig(dict(r.products)), self.weights)
                    if wx != wy:
                        raise ConfigurationError(f"reaction {r} changes weight {wx} -> {wy} in a closed CRN")
        elif self.delta is None:
            raise ConfigurationError(f"{self.name}: agent models need a transition function")
        if self.model is ModelKind.SHUFFLE:
            if self.k < 1:
                raise ConfigurationError("SHUFFLE needs k >= 1")
            if self.emit is None:
                raise ConfigurationError("SHUFFLE needs an emit function")

    def validate(self, c) -> None:
        """Raise :class:`ConfigurationError` if ``c`` cannot start an execution."""
        if self.model is ModelKind.CRN:
            if not isinstance(c, CountConfig):
                raise ConfigurationError("CRN executions start from a CountConfig")
            if self.weights is not None:
                weight_of(c, self.weights)
            return
        if not isinstance(c, SeqConfig):
            raise ConfigurationError(f"{self.model.value} executions start from a sequence")
        if self.model is ModelKind.BETWEEN and not isinstance(c, PathConfig):
            raise ConfigurationError("BETWEEN executions start from a PathConfig")
        _check_size(self.model, len(c), self)
        if self.alphabet is not None:
            for q in c.states:
                if q not in self.alphabet:
                    raise ConfigurationError(f"state {q!r} not in the alphabet of {self.name}")
        if self.oracle is OracleKind.LT:
            keys = [a for a in c.attrs]
            if len(set(keys)) != len(keys):
                raise ConfigurationError("keys of the < oracle must be pairwise distinct")
        if self.check is not None:
            self.check(c)

    def initial(self, word) -> Any:
        if self.input_map is None:
            raise ConfigurationError(f"{self.name} has no input map")
        c = self.input_map(word)
        self.validate(c)
        return c


def check_input_map(spec: ProtocolSpec, words: Iterable, rng: random.Random, samples: int = 50) -> list:
    """Sampled check of the input map: size bound and subsequence monotonicity.

    Returns a list of violations (empty when all checks pass).
    """
    bad = []
    words = [tuple(w) for w in words]
    for w in words:
        c = spec.input_map(w)
        if spec.size_poly is not None and weight_of(c, spec.weights) > spec.size_poly(len(w)):
            bad.append(("size", w))
    for _ in range(samples):
        y = rng.choice(words)
        keep = [rng.randrange(2) for _ in y]
        x = tuple(s for s, k in zip(y, keep) if k)
        cx, cy = spec.input_map(x), spec.input_map(y)
        if isinstance(cx, CountConfig):
            ok = vector_leq(cx, cy)
        else:
            ok = subseq_embeds(cx.states, cy.states) if not cx.has_attrs else \
                qos_embeds(list(cx), list(cy))
        if not ok:
            bad.append(("order", x, y))
    return bad


# ------------------------------------------------------------- execution

class Outcome(enum.Enum):
    FINISHED0 = "Finished0"
    FINISHED1 = "Finished1"
    REACHED_TARGET = "ReachedTarget"
    FAILED = "Failed"
    CAPPED = "Capped"


@dataclass
class StopRule:
    """When to stop a trial.

    ``target``: any container of configurations.  ``outputs``: stop on the
    spec's V0/V1.  ``oracle``: a :class:`ReachOracle` certifying failure when
    the current configuration cannot reach the goal.  ``escape``: a container
    whose entry ends the trial as Capped (an explicit give-up).
    """

    target: Any = None
    outputs: bool = False
    oracle: Optional[ReachOracle] = None
    escape: Any = None
    _viable: Optional[set] = field(default=None, repr=False)

    def viable(self, spec: ProtocolSpec) -> Optional[set]:
        if self.oracle is None:
            return None
        if self._viable is None:
            goals = []
            if self.target is not None:
                goals.append(self.target)
            if self.outputs:
                goals.extend(v for v in (spec.v0, spec.v1) if v is not None)
            idx: set = set()
            for g in goals:
                idx |= pred_star_idx(self.oracle, g)
            self._viable = {self.oracle.states[i] for i in idx}
        return self._viable


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    steps: int
    outcome: Outcome
    final_weight: int
    final: Any = None


def trial_seed(master: int, t: int) -> int:
    """64-bit seed of trial ``t`` derived from the master seed."""
    ss = np.random.SeedSequence(master & ((1 << 128) - 1), spawn_key=(t,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> random.Random:
    return random.Random(seed)


class Execution:
    """Mutable single-trial state: a configuration plus its scheduler."""

    def __init__(self, spec: ProtocolSpec, init, rng: random.Random):
        spec.validate(init)
        self.spec = spec
        self.rng = rng
        self.steps = 0
        self._crn = spec.model is ModelKind.CRN
        if self._crn:
            self.counts = init.as_dict()
        else:
            self.states = list(init.states)
            self.attrs = init.attrs
            self._cls = type(init)
            self._adv = ADVANCE[spec.model]

    def step(self, trace=None) -> bool:
        """Advance one scheduler step; returns whether the configuration changed."""
        self.steps += 1
        if self._crn:
            return _crn_advance(self.spec.reactions, self.counts, self.rng, trace)
        return self._adv(self.spec, self.states, self.attrs, self.rng, trace)

    def config(self):
        if self._crn:
            return CountConfig(self.counts)
        return self._cls(tuple(self.states), self.attrs)

    def replace_agent(self, i: int, q) -> None:
        self.states[i] = q


def classify(spec: ProtocolSpec, stop: StopRule, c) -> Optional[Outcome]:
    if stop.target is not None and c in stop.target:
        return Outcome.REACHED_TARGET
    if stop.outputs:
        if spec.v1 is not None and c in spec.v1:
            return Outcome.FINISHED1
        if spec.v0 is not None and c in spec.v0:
            return Outcome.FINISHED0
    if stop.escape is not None and c in stop.escape:
        return Outcome.CAPPED
    viable = stop.viable(spec)
    if viable is not None and stop.oracle.key(c) not in viable:
        if stop.oracle.key(c) not in stop.oracle.index:
            raise ConfigurationError(f"{c!r} lies outside the attached oracle")
        return Outcome.FAILED
    return None


def run_trial(spec: ProtocolSpec, init, stop: StopRule, seed: int, cap: int,
              debug: bool = False, observer: Optional[Callable] = None) -> TrialRecord:
    """Run one seeded execution until ``stop`` fires or ``cap`` steps elapse.

    The stopping rule is evaluated on the initial configuration and after
    every step that changed the configuration.  With ``debug`` the weight
    and hidden attributes are asserted unchanged at every step of a closed
    system.  ``observer(steps, config)`` is called after every step.
    """
    if cap < 1:
        raise ConfigurationError("cap must be positive")
    ex = Execution(spec, init, make_rng(seed))
    w0 = weight_of(init, spec.weights)
    c = init
    out = classify(spec, stop, c)
    while out is None and ex.steps < cap:
        try:
            changed = ex.step()
        except DeadConfiguration:
            return TrialRecord(seed, ex.steps, Outcome.FAILED, weight_of(c, spec.weights), c)
        if changed or debug or observer is not None:
            c = ex.config()
        if debug:
            if spec.closed and weight_of(c, spec.weights) != w0:
                raise AssertionError(f"weight changed at step {ex.steps}: {c!r}")
            if not ex._crn and c.attrs != init.attrs:
                raise AssertionError("hidden attributes changed")
        if observer is not None:
            observer(ex.steps, c)
        if changed:
            out = classify(spec, stop, c)
    c = ex.config()
    return TrialRecord(seed, ex.steps, out or Outcome.CAPPED, weight_of(c, spec.weights), c)


def check_trap(spec: ProtocolSpec, init, steps: int, seed: int) -> bool:
    """Once V0 (or V1) is entered along a sampled trajectory it is never left."""
    ex = Execution(spec, init, make_rng(seed))
    inside = [False, False]
    for _ in range(steps + 1):
        c = ex.config()
        for b, v in enumerate((spec.v0, spec.v1)):
            if v is None:
                continue
            now = c in v
            if inside[b] and not now:
                return False
            inside[b] = inside[b] or now
        try:
            ex.step()
        except DeadConfiguration:
            break
    return True
