"""Recorder protocols: one step leaves a trace of the scheduler's choice in the states."""

from collections import Counter

from scipy.stats import chisquare

from swsts import ModelKind, ProtocolSpec
from swsts.config import PathConfig, SeqConfig
from swsts.core import make_rng
from swsts.models import one_step_distribution, step


def pop_recorder(oracle=None):
    kw = {"oracle": oracle} if oracle else {}
    return ProtocolSpec(name="rec", model=ModelKind.POP,
                        delta=lambda a, b, o=None: ((a, "i", b, o), (b, "r", a, o)), **kw)


def matching_recorder():
    return ProtocolSpec(name="rec", model=ModelKind.MATCHING,
                        delta=lambda a, b, o=None: ((a, "i", b), (b, "r", a)))


def gossip_recorder(self_sampling=True, oracle=None):
    kw = {"oracle": oracle} if oracle else {}
    return ProtocolSpec(name="rec", model=ModelKind.GOSSIP, self_sampling=self_sampling,
                        delta=lambda q, obs, o=None: (q, obs, o), **kw)


def push_recorder():
    return ProtocolSpec(name="rec", model=ModelKind.PUSH,
                        delta=lambda q, got: (q, tuple(sorted(got.elements(), key=repr))))


def shuffle_recorder(k=2):
    return ProtocolSpec(name="rec", model=ModelKind.SHUFFLE, k=k,
                        emit=lambda q: tuple((q, i) for i in range(k)),
                        delta=lambda q, got: (q, tuple(t for t, _ in got)))


def between_recorder():
    return ProtocolSpec(name="rec", model=ModelKind.BETWEEN,
                        delta=lambda x, y, z: ((x, "s", y, z), (y, "t", x, z), (z, "u", x, y)))


def seq(n, path=False):
    states = tuple(f"q{i}" for i in range(n))
    return PathConfig(states) if path else SeqConfig(states)


def sample_counts(spec, c, samples, seed):
    rng = make_rng(seed)
    return Counter(step(spec, c, rng) for _ in range(samples))


def chi_square_p(spec, c, samples, seed):
    """p-value of sampled one-step outcomes against the enumerated law; also returns support size."""
    exact = one_step_distribution(spec, c)
    got = sample_counts(spec, c, samples, seed)
    assert set(got) <= set(exact), "sampler produced an outcome outside the enumeration"
    keys = list(exact)
    obs = [got.get(k, 0) for k in keys]
    exp = [float(exact[k]) * samples for k in keys]
    return chisquare(obs, exp).pvalue, len(keys)


# ------------------------------------------------- exhaustive embedding oracles

def brute_subseq(s, t):
    from itertools import combinations
    return any(all(t[i] == x for i, x in zip(idx, s)) for idx in combinations(range(len(t)), len(s)))


def brute_multiset(s, t):
    """Some injection of s into t preserving states (order ignored)."""
    from itertools import permutations
    return any(all(t[j] == x for j, x in zip(img, s)) for img in permutations(range(len(t)), len(s)))


def brute_colored(s, t):
    """Injection preserving states, equality of colors, and the order of colors."""
    from itertools import permutations
    for img in permutations(range(len(t)), len(s)):
        ok = True
        for a in range(len(s)):
            if t[img[a]][0] != s[a][0]:
                ok = False
                break
            for b in range(len(s)):
                ca, cb = s[a][1], s[b][1]
                da, db = t[img[a]][1], t[img[b]][1]
                if (ca == cb) != (da == db) or (ca < cb) != (da < db):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


def random_colored(rng, n, states="ab", colors=3):
    return sorted(((rng.choice(states), rng.randrange(colors)) for _ in range(n)), key=lambda p: p[1])


def birth_death_mean(n):
    """Exact expected absorption time of the doctor chain from n-1 infected (Fractions)."""
    from fractions import Fraction
    from swsts.protocols import doctor_rates
    D = Fraction(0)
    total = Fraction(0)
    for k in range(n - 1, 0, -1):
        p, q = doctor_rates(n, k)
        D = (1 + p * D) / q
        total += D
    return total


def dickson_closed(oracle, P) -> bool:
    """No enumerated configuration outside ``P`` dominates a member of ``P``."""
    from swsts import SeqConfig
    from swsts.wqo import vector_leq

    def ms(c):
        return c.multiset() if isinstance(c, SeqConfig) else c
    keys = {oracle.key(c) for c in P}
    for c in oracle.states:
        if oracle.key(c) in keys:
            continue
        if any(vector_leq(ms(d), ms(c)) for d in P):
            return False
    return True
