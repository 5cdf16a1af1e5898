"""Configuration types shared by every model.

Agent models use :class:`SeqConfig` (an ordered population where each agent
carries a mutable state and an immutable hidden attribute), CRNs use
:class:`CountConfig`, and the betweenness model uses :class:`PathConfig`.
All configurations are immutable and hashable so they can be used as keys in
exact reachability graphs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Union


class ConfigurationError(ValueError):
    """A configuration does not satisfy a schema or scheduler precondition."""


def state_key(q: Any) -> str:
    # total, deterministic order over heterogeneous state objects
    return repr(q)


def attr_rank(a: Any) -> tuple:
    if a is None:
        return (0, 0)
    if isinstance(a, str):
        return (2, a)
    return (1, a)


@dataclass(frozen=True)
class SeqConfig:
    """Ordered population: ``states[i]`` and hidden ``attrs[i]`` of agent ``i``."""

    states: tuple
    attrs: tuple = ()

    def __post_init__(self):
        states = tuple(self.states)
        attrs = tuple(self.attrs) if self.attrs else (None,) * len(states)
        if len(attrs) != len(states):
            raise ConfigurationError(
                f"{len(states)} states but {len(attrs)} hidden attributes")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "attrs", attrs)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(zip(self.states, self.attrs))

    @property
    def has_attrs(self) -> bool:
        return any(a is not None for a in self.attrs)

    def multiset(self) -> Counter:
        return Counter(self.states)

    def count(self, q) -> int:
        return sum(1 for s in self.states if s == q)

    def with_states(self, states: Iterable) -> "SeqConfig":
        return type(self)(tuple(states), self.attrs)

    def canonical(self) -> "SeqConfig":
        """Sort agents by (state, attribute rank).

        Only meaningful for models that are invariant under permuting agents.
        """
        pairs = sorted(zip(self.states, self.attrs),
                       key=lambda p: (state_key(p[0]), attr_rank(p[1])))
        return type(self)(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def is_sorted_by_attr(self) -> bool:
        ranks = [attr_rank(a) for a in self.attrs]
        return all(ranks[i] <= ranks[i + 1] for i in range(len(ranks) - 1))

    def __repr__(self) -> str:
        if self.has_attrs:
            body = ", ".join(f"{s!r}@{a!r}" for s, a in self)
        else:
            body = ", ".join(repr(s) for s in self.states)
        return f"{type(self).__name__}([{body}])"


class PathConfig(SeqConfig):
    """A :class:`SeqConfig` whose agent order is the order along a path graph."""


@dataclass(frozen=True, init=False)
class CountConfig:
    """Species-count vector of a chemical reaction network.

    Zero counts are dropped so that equal vectors hash equally.
    """

    items: tuple

    def __init__(self, counts: Union[Mapping[str, int], Iterable, None] = None, **kw):
        d = dict(counts or {})
        d.update(kw)
        for sp, v in d.items():
            if not isinstance(v, int) or v < 0:
                raise ConfigurationError(f"count of {sp!r} must be a natural number, got {v!r}")
        object.__setattr__(
            self, "items", tuple(sorted((k, v) for k, v in d.items() if v)))

    def __getitem__(self, species: str) -> int:
        for k, v in self.items:
            if k == species:
                return v
        return 0

    def as_dict(self) -> dict:
        return dict(self.items)

    def species(self) -> set:
        return {k for k, _ in self.items}

    def total(self) -> int:
        return sum(v for _, v in self.items)

    def __repr__(self) -> str:
        return "CountConfig({" + ", ".join(f"{k}: {v}" for k, v in self.items) + "})"


Configuration = Union[SeqConfig, CountConfig]


def weight_of(c: Configuration, weights: Optional[Mapping[str, int]] = None) -> int:
    """Weight of a configuration.

    Agent configurations weigh one per agent. Count vectors weigh the sum of
    per-species atomic numbers; ``weights=None`` means unit weights.
    """
    if isinstance(c, SeqConfig):
        return len(c)
    if isinstance(c, CountConfig):
        if weights is None:
            return c.total()
        total = 0
        for sp, n in c.items:
            if sp not in weights:
                raise ConfigurationError(f"species {sp!r} has no declared weight")
            w = weights[sp]
            if w < 1:
                raise ConfigurationError(f"species {sp!r} has weight {w} < 1")
            total += w * n
        return total
    raise ConfigurationError(f"not a configuration: {c!r}")
