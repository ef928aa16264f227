"""Reverse-time lineage tracing and the random coalescence clock.

Conventions.  Generations are labelled in reverse time: the sampled
generation is 0, its parents are generation 1, and so on.  The clock keeps,
for each generation t >= 1, the realized pair-merger probability c(t), the
multiple-merger bound d(t), and the cumulative sum cum(t) = c(1)+...+c(t).
Rescaled (continuous) time u maps to generations through the left inverse
tau(u) = min{ s : cum(s) >= u }, and a merger at generation g is assigned
the rescaled time cum(g-1) = inf{ u : tau(u) >= g }, which makes the
rescaled partition path right-continuous with jumps at those times.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .partition import Partition, make_singletons, merge_profile
from .particle import OffspringCounts, ParentAssignment, as_counts_array

# the vectorized int64 path is exact as long as ~2 N^4 fits comfortably
_VECTOR_N_LIMIT = 30_000


class HorizonExceededError(RuntimeError):
    """The clock never accumulated enough time to answer the query."""


def _rate_numerators(counts: np.ndarray) -> tuple[int, int]:
    """Integer numerators of c and d over denominators (N)_2 and N^2 (N)_2."""
    N = counts.size
    if N <= _VECTOR_N_LIMIT:
        a = counts * (counts - 1)
        s2 = int((counts * counts).sum())
        c_num = int(a.sum())
        d_num = int((a * (N * counts + s2 - counts * counts)).sum())
    else:
        vals = [int(v) for v in counts]
        s2 = sum(v * v for v in vals)
        c_num = sum(v * (v - 1) for v in vals)
        d_num = sum(v * (v - 1) * (N * v + s2 - v * v) for v in vals)
    return c_num, d_num


def coalescence_rates(nu) -> tuple[float, float]:
    """Realized (pair merger probability, multiple merger bound) for one generation.

    c is the chance that a uniformly chosen pair of lineages finds a common
    parent one generation back; d bounds the chance of any larger merger.
    Both are exact integer ratios, rounded once, so 0 <= d <= c <= 1 survives
    the float conversion.
    """
    counts = as_counts_array(nu)
    N = counts.size
    if N < 2:
        raise ValueError("need at least two particles")
    c_num, d_num = _rate_numerators(counts)
    c = c_num / (N * (N - 1))
    d = d_num / (N * N * N * (N - 1))
    return c, d


def coalescence_rates_exact(nu) -> tuple[Fraction, Fraction]:
    """Exact rational version of coalescence_rates."""
    counts = as_counts_array(nu)
    N = counts.size
    if N < 2:
        raise ValueError("need at least two particles")
    c_num, d_num = _rate_numerators(counts)
    return Fraction(c_num, N * (N - 1)), Fraction(d_num, N * N * N * (N - 1))


class CoalescenceClock:
    """Per-generation (c, d) records plus the cumulative clock defining tau.

    Values may be floats (simulation) or Fractions (exact verification); the
    cumulative sum is taken in whatever arithmetic the values carry.
    """

    def __init__(self):
        self._c: list = []
        self._d: list = []
        self._cum: list = []

    def append(self, c, d) -> None:
        if not (0 <= d <= c <= 1):
            raise ValueError(f"need 0 <= d <= c <= 1, got c={c}, d={d}")
        self._c.append(c)
        self._d.append(d)
        self._cum.append((self._cum[-1] if self._cum else 0) + c)

    @classmethod
    def from_offspring(cls, rows: Iterable, exact: bool = False) -> "CoalescenceClock":
        clock = cls()
        rates = coalescence_rates_exact if exact else coalescence_rates
        for nu in rows:
            clock.append(*rates(nu))
        return clock

    def __len__(self) -> int:
        return len(self._c)

    def c(self, g: int):
        """c at generation g; by convention c(0) = 0."""
        if g == 0:
            return 0 * self._c[0] if self._c else 0.0
        return self._c[g - 1]

    def d(self, g: int):
        if g == 0:
            return 0 * self._d[0] if self._d else 0.0
        return self._d[g - 1]

    def cum(self, g: int):
        """Cumulative clock after g generations; cum(0) = 0."""
        if g == 0:
            return 0 * self._cum[0] if self._cum else 0.0
        return self._cum[g - 1]

    @property
    def total_time(self):
        return self.cum(len(self))

    def tau(self, t) -> int:
        """Left inverse of the cumulative clock: min{ s : cum(s) >= t }.

        Raises HorizonExceededError when the recorded generations never
        accumulate t, rather than silently truncating.
        """
        if t <= 0:
            return 0
        i = bisect_left(self._cum, t)
        if i == len(self._cum):
            raise HorizonExceededError(
                f"clock covers only {self.total_time} < t={t} after {len(self)} generations"
            )
        return i + 1

    def window_sum_c(self, g_lo: int, g_hi: int):
        """Sum of c over generations g_lo+1 .. g_hi."""
        return self.cum(g_hi) - self.cum(g_lo)

    def records(self):
        for g in range(1, len(self) + 1):
            yield g, self._c[g - 1], self._d[g - 1], self._cum[g - 1]


def tau_inverse_clock(clock: CoalescenceClock, t) -> int:
    """Generation at which the cumulative clock first reaches t."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    return clock.tau(t)


@dataclass(frozen=True)
class GenealogyEvent:
    generation: int
    time: float
    partition: Partition


@dataclass(frozen=True)
class GenealogyPath:
    """Piecewise-constant partition path of an n-sample from a size-N system.

    The path starts at the all-singletons partition at rescaled time 0;
    events record every generation where lineages merged.  `observed_until`
    is the rescaled horizon up to which the path is defined (infinite once
    fully coalesced, since the absorbing state persists).
    """

    n: int
    N: int
    events: tuple[GenealogyEvent, ...]
    coalesced: bool
    censored: bool = False
    observed_until: float = math.inf

    def __post_init__(self):
        prev = make_singletons(self.n)
        prev_gen = 0
        prev_time = 0.0
        for ev in self.events:
            if ev.generation <= prev_gen:
                raise ValueError("event generations must be strictly increasing")
            if ev.time < prev_time:
                raise ValueError("event times must be non-decreasing")
            if merge_profile(prev, ev.partition) is None or len(ev.partition) >= len(prev):
                raise ValueError("partitions must strictly coarsen along the path")
            prev, prev_gen, prev_time = ev.partition, ev.generation, ev.time
        if self.coalesced and (not self.events or len(self.events[-1].partition) != 1):
            raise ValueError("a coalesced path must end in a single block")

    @property
    def tmrca(self) -> Optional[float]:
        return self.events[-1].time if self.coalesced else None

    def jump_times(self) -> list[float]:
        return [ev.time for ev in self.events]

    def value_at(self, u: float) -> Partition:
        """Partition at rescaled time u (right-continuous step function)."""
        if u < 0:
            raise ValueError("time must be >= 0")
        if u > self.observed_until and not self.coalesced:
            raise HorizonExceededError(f"path observed only up to {self.observed_until}")
        state = make_singletons(self.n)
        for ev in self.events:
            if ev.time <= u:
                state = ev.partition
            else:
                break
        return state

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "coalesced": self.coalesced,
            "censored": self.censored,
            "events": [
                {"generation": ev.generation, "time": ev.time, "partition": str(ev.partition)}
                for ev in self.events
            ],
        }


class LineageTracer:
    """Incremental reverse-time tracer of an n-sample's block structure.

    Feeding one parent map per generation merges blocks whose current
    ancestors collide.  Sample members are labelled 1..n in the order given.
    """

    def __init__(self, sample: Sequence[int], N: int):
        sample = list(sample)
        if len(set(sample)) != len(sample):
            raise ValueError("sample indices must be distinct")
        if any(not 0 <= s < N for s in sample):
            raise ValueError("sample indices out of range")
        self.N = N
        self.n = len(sample)
        self._members: list[tuple[int, ...]] = [(i + 1,) for i in range(self.n)]
        self._anc = np.asarray(sample, dtype=np.int64).copy()

    @property
    def num_blocks(self) -> int:
        return len(self._members)

    def partition(self) -> Partition:
        return Partition(self._members)

    def step(self, parents0: np.ndarray) -> Optional[Partition]:
        """Apply one generation's (0-based) parent map; return the new
        partition if any blocks merged, else None."""
        new_anc = parents0[self._anc]
        order: dict[int, int] = {}
        groups: list[list[int]] = []
        for pos, a in enumerate(new_anc.tolist()):
            if a in order:
                groups[order[a]].append(pos)
            else:
                order[a] = len(groups)
                groups.append([pos])
        if len(groups) == len(self._members):
            self._anc = new_anc
            return None
        members = []
        anc = []
        for g in groups:
            merged: tuple[int, ...] = ()
            for pos in g:
                merged = merged + self._members[pos]
            members.append(tuple(sorted(merged)))
            anc.append(new_anc[g[0]])
        self._members = members
        self._anc = np.asarray(anc, dtype=np.int64)
        return self.partition()


def _parents_as_array(assignment) -> np.ndarray:
    if isinstance(assignment, ParentAssignment):
        return np.asarray(assignment.parents, dtype=np.int64) - 1
    return np.asarray(assignment, dtype=np.int64)


def trace_genealogy(
    sample: Sequence[int],
    assignments: Iterable,
    clock: CoalescenceClock,
    horizon_t: float,
) -> GenealogyPath:
    """Trace the genealogy of `sample` back through realized assignments.

    `sample` holds distinct 1-based individual indices of generation 0;
    `assignments` yields one ParentAssignment (or 0-based array) per
    generation, aligned with the clock.  Tracing stops at full coalescence
    or once the cumulative clock reaches `horizon_t` (any later merger would
    fall outside the rescaled window).  If the supplied generations end
    before either happens, the horizon failure is raised, not swallowed.
    """
    if horizon_t <= 0:
        raise ValueError("horizon_t must be positive")
    sample0 = [s - 1 for s in sample]
    events: list[GenealogyEvent] = []
    g = 0
    N = None
    tracer = None
    for assignment in assignments:
        parents0 = _parents_as_array(assignment)
        if tracer is None:
            N = parents0.size
            tracer = LineageTracer(sample0, N)
        g += 1
        if len(clock) < g:
            raise HorizonExceededError(f"clock has {len(clock)} generations, need {g}")
        merged = tracer.step(parents0)
        if merged is not None:
            events.append(GenealogyEvent(generation=g, time=float(clock.cum(g - 1)), partition=merged))
        if tracer.num_blocks == 1:
            return GenealogyPath(n=tracer.n, N=N, events=tuple(events), coalesced=True)
        if clock.cum(g) >= horizon_t:
            return GenealogyPath(
                n=tracer.n, N=N, events=tuple(events), coalesced=False,
                observed_until=float(clock.cum(g)),
            )
    if tracer is None:
        raise ValueError("no assignments supplied")
    raise HorizonExceededError(
        f"assignments ended at generation {g} with clock at {clock.cum(g)} < horizon {horizon_t}"
    )


@dataclass(frozen=True)
class PathStatistics:
    holding_times: tuple[float, ...]
    jump_times: tuple[float, ...]
    tmrca: Optional[float]
    total_branch_length: Optional[float]
    min_jump_gap: float
    first_gap: float
    merger_sizes: tuple[int, ...]


def path_statistics(path) -> PathStatistics:
    """Summary statistics of a genealogy or coalescent path in rescaled time.

    Holding times include the initial stretch from time 0; the minimum gap
    is taken over consecutive jumps only, with the 0-to-first-jump gap kept
    in its own field (the time origin anchors the jump-separation analysis).
    Branch length sums (blocks alive) x (holding time) up to coalescence.
    """
    times = [ev.time for ev in path.events]
    blocks_before = [path.n] + [len(ev.partition) for ev in path.events[:-1]]
    holding = []
    prev = 0.0
    for t in times:
        holding.append(t - prev)
        prev = t
    merger_sizes = []
    k_prev = path.n
    for ev in path.events:
        merger_sizes.append(k_prev - len(ev.partition))
        k_prev = len(ev.partition)
    coalesced = bool(getattr(path, "coalesced", True))
    tmrca = times[-1] if coalesced else None
    branch = None
    if coalesced:
        branch = sum(k * h for k, h in zip(blocks_before, holding))
    gaps = [t2 - t1 for t1, t2 in zip(times, times[1:])]
    return PathStatistics(
        holding_times=tuple(holding),
        jump_times=tuple(times),
        tmrca=tmrca,
        total_branch_length=branch,
        min_jump_gap=min(gaps) if gaps else math.inf,
        first_gap=times[0] if times else math.inf,
        merger_sizes=tuple(merger_sizes),
    )


def to_newick(path) -> str:
    """Newick rendering of a fully coalesced path, branch lengths in rescaled time.

    Leaf labels are the 1-based sample positions; multifurcations are
    preserved as-is.
    """
    if not getattr(path, "coalesced", True):
        raise ValueError("cannot export a path that has not fully coalesced")
    if not path.events or len(path.events[-1].partition) != 1:
        raise ValueError("cannot export a path that has not fully coalesced")
    # block -> (newick fragment, birth time of the subtree root)
    live: dict[tuple[int, ...], tuple[str, float]] = {
        (i,): (str(i), 0.0) for i in range(1, path.n + 1)
    }
    for ev in path.events:
        t = ev.time
        for block in ev.partition.blocks:
            if block in live:
                continue
            parts = [b for b in sorted(live) if set(b) <= set(block)]
            if len(parts) < 2:
                continue  # untouched blocks of a multi-event generation
            children = []
            for b in parts:
                frag, birth = live.pop(b)
                children.append(f"{frag}:{t - birth!r}")
            live[block] = ("(" + ",".join(children) + ")", t)
    (frag, _birth), = live.values()
    return frag + ";"


def write_clock_csv(clock: CoalescenceClock, fileobj, seed_comment: Optional[str] = None) -> None:
    """Stream per-generation clock rows to CSV (generation, c, d, cum)."""
    if seed_comment is not None:
        fileobj.write(f"# {seed_comment}\n")
    writer = csv.writer(fileobj)
    writer.writerow(["generation", "c", "d", "cum"])
    for g, c, d, cum in clock.records():
        writer.writerow([g, repr(float(c)), repr(float(d)), repr(float(cum))])
