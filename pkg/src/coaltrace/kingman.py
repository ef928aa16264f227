"""Exact simulation of Kingman's n-coalescent and its reference distributions.

The n-coalescent starts from the all-singletons partition and merges a
uniformly chosen pair of blocks at rate 1 per pair, so a state with k blocks
is held for an Exp(k(k-1)/2) time.  These closed-form laws (exponential
holding times, the jump-time CDFs) are the convergence targets for the
rescaled finite-population genealogies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .partition import Partition, make_singletons


def pair_merge_rate(k: int) -> float:
    """Total merge rate k(k-1)/2 of a state with k blocks."""
    return k * (k - 1) / 2.0


@dataclass(frozen=True)
class CoalescentEvent:
    time: float
    partition: Partition


@dataclass(frozen=True)
class CoalescentPath:
    """A realized n-coalescent: n-1 binary mergers at strictly increasing times.

    The path starts implicitly at (0, all singletons) and ends at the
    single-block partition.
    """

    n: int
    events: tuple[CoalescentEvent, ...]

    def __post_init__(self):
        if len(self.events) != self.n - 1:
            raise ValueError("an n-coalescent path has exactly n-1 events")
        prev_t = 0.0
        prev_k = self.n
        for ev in self.events:
            if ev.time <= prev_t:
                raise ValueError("event times must be strictly increasing")
            if len(ev.partition) != prev_k - 1:
                raise ValueError("each event must merge exactly two blocks")
            prev_t = ev.time
            prev_k = len(ev.partition)

    @property
    def tmrca(self) -> float:
        return self.events[-1].time

    @property
    def coalesced(self) -> bool:
        return True

    def jump_times(self) -> list[float]:
        return [ev.time for ev in self.events]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "events": [{"time": ev.time, "partition": str(ev.partition)} for ev in self.events],
        }


def simulate_kingman(n: int, rng: np.random.Generator) -> CoalescentPath:
    """Simulate one n-coalescent path down to a single block.

    Holding times are drawn by inverse CDF from the uniform stream and the
    merging pair by a uniform index into the enumerated pair list, so a path
    is a deterministic function of (n, rng state).
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    state = make_singletons(n)
    t = 0.0
    events = []
    while len(state) > 1:
        k = len(state)
        rate = pair_merge_rate(k)
        t += -math.log1p(-rng.random()) / rate
        pairs = [(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)]
        i, j = pairs[rng.integers(len(pairs))]
        state = state.merge((i, j))
        events.append(CoalescentEvent(time=t, partition=state))
    return CoalescentPath(n=n, events=tuple(events))


def theoretical_cdf(kind: str, rate: float, t: float, m: int = 1) -> float:
    """CDF of the exponential or Erlang(m) law with the given rate.

    The Erlang CDF is evaluated by its series form
    1 - exp(-rate*t) * sum_{i<m} (rate*t)^i / i!; with m=1 it reduces to the
    exponential.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if kind == "exponential":
        return -math.expm1(-rate * t)
    if kind == "erlang":
        if m < 1:
            raise ValueError(f"Erlang shape must be >= 1, got {m}")
        x = rate * t
        term = 1.0
        total = 1.0
        for i in range(1, m):
            term *= x / i
            total += term
        return max(0.0, 1.0 - math.exp(-x) * total)
    raise ValueError(f"unknown distribution kind {kind!r}")


def jump_time_cdf(n: int, m: int, t: float) -> float:
    """CDF of the m-th jump time of the n-coalescent.

    The m-th jump time is the sum of independent exponentials with the
    distinct rates k(k-1)/2 for k = n, n-1, ..., n-m+1, so the CDF has the
    standard partial-fraction form 1 - sum_i w_i exp(-rate_i t) with
    w_i = prod_{j != i} rate_j / (rate_j - rate_i).  For m = 1 this is the
    Exp(n(n-1)/2) CDF.
    """
    if not 1 <= m <= n - 1:
        raise ValueError(f"jump index m must be in 1..{n - 1}, got {m}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    rates = [pair_merge_rate(k) for k in range(n, n - m, -1)]
    if m == 1:
        return -math.expm1(-rates[0] * t)
    total = 1.0
    for i, ri in enumerate(rates):
        w = 1.0
        for j, rj in enumerate(rates):
            if j != i:
                w *= rj / (rj - ri)
        total -= w * math.exp(-ri * t)
    return min(1.0, max(0.0, total))


def expected_tmrca(n: int) -> float:
    """Mean time to the most recent common ancestor: sum of 2/(k(k-1))."""
    return sum(2.0 / (k * (k - 1)) for k in range(2, n + 1))
