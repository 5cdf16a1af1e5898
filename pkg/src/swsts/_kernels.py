"""Compiled inner loops for long CRN runs (numba)."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from numba import njit


@njit(cache=True)
def _falling(m, k):
    out = 1
    for i in range(k):
        if m - i <= 0:
            return 0
        out *= m - i
    return out


@njit(cache=True)
def _crn_hit(reactants, products, weights, counts, target, escape_sp, escape_at, cap, seed):
    """One jump-chain trial.

    Returns (code, steps): code 1 = target reached, 2 = escape threshold,
    3 = dead configuration, 0 = cap.  ``weights`` are integer-scaled base
    rates, so the reaction choice is exact integer sampling.
    """
    np.random.seed(seed)
    R, S = reactants.shape
    props = np.zeros(R, dtype=np.int64)
    steps = 0
    while True:
        hit = True
        for s in range(S):
            if counts[s] < target[s]:
                hit = False
                break
        if hit:
            return 1, steps
        if escape_sp >= 0 and counts[escape_sp] >= escape_at:
            return 2, steps
        if steps >= cap:
            return 0, steps
        total = 0
        for r in range(R):
            p = weights[r]
            for s in range(S):
                if reactants[r, s] > 0:
                    p *= _falling(counts[s], reactants[r, s])
                    if p == 0:
                        break
            props[r] = p
            total += p
        if total == 0:
            return 3, steps
        u = np.random.randint(0, total)
        r = 0
        while u >= props[r]:
            u -= props[r]
            r += 1
        for s in range(S):
            counts[s] += products[r, s] - reactants[r, s]
        steps += 1


@njit(cache=True)
def _crn_batch(reactants, products, weights, init, target, escape_sp, escape_at, cap, seeds):
    n = seeds.shape[0]
    codes = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    for t in range(n):
        counts = init.copy()
        c, s = _crn_hit(reactants, products, weights, counts, target, escape_sp, escape_at, cap,
                        seeds[t])
        codes[t] = c
        steps[t] = s
    return codes, steps


def crn_arrays(reactions, species: list):
    idx = {s: i for i, s in enumerate(species)}
    R, S = len(reactions), len(species)
    x = np.zeros((R, S), dtype=np.int64)
    y = np.zeros((R, S), dtype=np.int64)
    denom = math.lcm(*(Fraction(r.rate).denominator for r in reactions))
    w = np.array([int(Fraction(r.rate) * denom) for r in reactions], dtype=np.int64)
    for i, r in enumerate(reactions):
        for s, n in r.reactants:
            x[i, idx[s]] = n
        for s, n in r.products:
            y[i, idx[s]] = n
    return x, y, w


def crn_batch(reactions, species, init: dict, target: dict, escape, cap: int, seeds) -> tuple:
    """Run one trial per seed; returns (codes, steps) arrays.

    ``escape`` is ``(species, threshold)`` or None.  Seeds are reduced to
    32 bits for numba's generator.
    """
    x, y, w = crn_arrays(reactions, species)
    c0 = np.array([init.get(s, 0) for s in species], dtype=np.int64)
    tg = np.array([target.get(s, 0) for s in species], dtype=np.int64)
    esp, eat = (-1, 0) if escape is None else (species.index(escape[0]), int(escape[1]))
    sd = np.array([int(s) & 0xFFFFFFFF for s in seeds], dtype=np.int64)
    return _crn_batch(x, y, w, c0, tg, esp, eat, int(cap), sd)
