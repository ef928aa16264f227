"""Exact conditional transition probabilities of the genealogy, and the
coupled jump-counting chain run in a fixed offspring-count environment.

Conditional on one generation's offspring counts nu, the probability that the
sample genealogy moves from partition xi to a coarsening eta with merge
profile b_1..b_{|eta|} is

    (1 / (N)_{|xi|}) * sum over distinct parents i_1..i_{|eta|} of
        (nu_{i_1})_{b_1} * ... * (nu_{i_{|eta|}})_{b_{|eta|}}

with (x)_k the falling factorial.  All values here are computed in exact
integer arithmetic via a dynamic programme over particles (never by the
naive sum over index tuples, which the tests use as an oracle), and exposed
either as Fractions or correctly rounded floats.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from math import factorial, prod
from typing import Sequence, Union

import numpy as np

from .partition import Partition, coarsenings, enumerate_partitions, make_singletons, merge_profile
from .particle import OffspringCounts, as_counts_array

MAX_PROFILE_LEN = 12
ROW_SUM_TOL = 1e-12

NuLike = Union[OffspringCounts, Sequence[int], np.ndarray]


def falling_factorial(x: int, k: int) -> int:
    """(x)_k = x (x-1) ... (x-k+1); equals 1 for k = 0."""
    if k < 0:
        raise ValueError("k must be >= 0")
    out = 1
    for j in range(k):
        out *= x - j
    return out


def assignment_product_sum(b: Sequence[int], counts: Sequence[int]) -> int:
    """Sum over distinct index tuples (i_1..i_m) of prod_j (nu_{i_j})_{b_j}.

    Positions are labelled, so equal entries of b contribute a multiplicity
    factor.  Computed by grouping equal b-values and running a DP over
    particles in O(N * prod(multiplicity+1)); the labelled sum is the DP
    total times the product of multiplicities' factorials.
    """
    if any(bi < 1 for bi in b):
        raise ValueError("profile entries must be >= 1")
    if len(b) == 0:
        return 1
    groups = sorted(Counter(b).items())  # [(value, multiplicity), ...]
    values = [v for v, _ in groups]
    mults = [m for _, m in groups]
    full = tuple(mults)
    # dp maps (used_1, ..., used_K) -> sum over ways of choosing that many
    # distinct particles per group among those processed so far
    dp: dict[tuple[int, ...], int] = {tuple([0] * len(groups)): 1}
    for nu_i in counts:
        weights = [falling_factorial(int(nu_i), v) for v in values]
        if all(w == 0 for w in weights):
            continue
        updates: dict[tuple[int, ...], int] = {}
        for state, total in dp.items():
            for j, w in enumerate(weights):
                if w == 0 or state[j] >= mults[j]:
                    continue
                nxt = state[:j] + (state[j] + 1,) + state[j + 1:]
                updates[nxt] = updates.get(nxt, 0) + total * w
        for state, inc in updates.items():
            dp[state] = dp.get(state, 0) + inc
    total = dp.get(full, 0)
    return total * prod(factorial(m) for m in mults)


def assignment_product_sum_bruteforce(b: Sequence[int], counts: Sequence[int]) -> int:
    """Oracle: literal sum over all distinct index tuples.  Small N only."""
    n_particles = len(counts)
    total = 0
    for idx in itertools.permutations(range(n_particles), len(b)):
        total += prod(falling_factorial(int(counts[i]), bi) for i, bi in zip(idx, b))
    return total


def transition_probability(
    xi: Partition, eta: Partition, nu: NuLike, exact: bool = False
) -> Union[Fraction, float]:
    """Conditional probability of the genealogy moving from xi to eta.

    Zero whenever eta is not obtainable from xi by merging blocks.  With
    exact=True the value is returned as a Fraction.
    """
    counts = as_counts_array(nu)
    if xi.n != eta.n:
        raise ValueError(f"mismatched sample sizes: {xi.n} vs {eta.n}")
    profile = merge_profile(xi, eta)
    if profile is None:
        return Fraction(0) if exact else 0.0
    if len(profile) > MAX_PROFILE_LEN:
        raise ValueError(f"|eta|={len(profile)} exceeds the DP guard {MAX_PROFILE_LEN}")
    k = len(xi)
    if k > counts.size:
        raise ValueError(f"sample has more blocks ({k}) than particles ({counts.size})")
    num = assignment_product_sum(profile, counts.tolist())
    den = falling_factorial(int(counts.size), k)
    value = Fraction(num, den)
    return value if exact else float(value)


def identity_probability(k: int, nu: NuLike, exact: bool = False) -> Union[Fraction, float]:
    """Probability that none of k distinct lineages merge this generation.

    Equals k! e_k(nu) / (N)_k with e_k the k-th elementary symmetric
    polynomial, computed by the standard one-pass DP in O(N k).
    """
    counts = as_counts_array(nu)
    N = counts.size
    if not 1 <= k <= N:
        raise ValueError(f"block count k={k} out of range 1..{N}")
    e = [0] * (k + 1)
    e[0] = 1
    for c in counts.tolist():
        if c == 0:
            continue
        for j in range(k, 0, -1):
            e[j] += e[j - 1] * c
    value = Fraction(factorial(k) * e[k], falling_factorial(N, k))
    return value if exact else float(value)


def max_jump_probability(n: int, nu: NuLike, exact: bool = False) -> Union[Fraction, float]:
    """Largest one-generation jump probability over all n-block states.

    The identity probability is minimized at the all-singletons state, so
    this is 1 minus the identity probability at block count n.
    """
    counts = as_counts_array(nu)
    if n > counts.size:
        raise ValueError(f"sample size {n} exceeds population size {counts.size}")
    p = identity_probability(n, counts, exact=True)
    return (1 - p) if exact else float(1 - p)


@dataclass(frozen=True)
class Environment:
    """A realized offspring-count sequence in reverse time.

    Row t (1-based) holds the counts of the generation t steps before the
    terminal one; conditioning the chain on this data plays the role of the
    random environment.
    """

    rows: tuple[OffspringCounts, ...]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("environment must contain at least one generation")
        N = self.rows[0].N
        if any(r.N != N for r in self.rows):
            raise ValueError("all generations must share one population size")

    @property
    def N(self) -> int:
        return self.rows[0].N

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_lists(cls, rows: Sequence[Sequence[int]]) -> "Environment":
        return cls(tuple(OffspringCounts(tuple(int(c) for c in r)) for r in rows))


@dataclass(frozen=True)
class CoupledState:
    """Jump counter z and genealogy state s of the coupled chain."""

    z: int
    s: Partition


def transition_row(xi: Partition, nu: NuLike) -> list[tuple[Partition, Fraction]]:
    """Exact transition probabilities from xi to every reachable coarsening.

    Entries follow the coarsening enumeration order and sum to 1 exactly.
    """
    counts = as_counts_array(nu)
    row = [
        (eta, Fraction(assignment_product_sum(profile, counts.tolist()),
                       falling_factorial(int(counts.size), len(xi))))
        for eta, profile in coarsenings(xi)
    ]
    total = sum(p for _, p in row)
    if total != 1:
        raise ArithmeticError(f"transition row sums to {total}, expected exactly 1")
    return row


def coupled_transition_row(
    state: CoupledState, nu: NuLike
) -> list[tuple[CoupledState, Fraction]]:
    """The one-generation law of the coupled chain given the environment row.

    From (z, xi): stay with probability 1 - p where p is the maximal jump
    probability; move to (z+1, xi) with the non-negative remainder
    p_xixi + p - 1 (exactly zero at the all-singletons state); move to
    (z+1, eta) with probability p_xieta for each strict coarsening eta.
    """
    counts = as_counts_array(nu)
    n = state.s.n
    p_stay_max = identity_probability(n, counts, exact=True)  # 1 - p_t
    entries: list[tuple[CoupledState, Fraction]] = [(state, p_stay_max)]
    p_self = None
    for eta, p in transition_row(state.s, counts):
        if eta == state.s:
            p_self = p
        else:
            entries.append((CoupledState(state.z + 1, eta), p))
    assert p_self is not None
    extra = p_self - p_stay_max
    if extra < 0:
        raise ArithmeticError("identity probability must be maximal at the sampled state")
    entries.insert(1, (CoupledState(state.z + 1, state.s), extra))
    total = sum(p for _, p in entries)
    if total != 1:
        raise ArithmeticError(f"coupled row sums to {total}, expected exactly 1")
    if abs(float(total) - 1.0) > ROW_SUM_TOL:
        raise ArithmeticError("coupled row float image out of tolerance")
    return entries


def coupled_step(state: CoupledState, nu: NuLike, rng: np.random.Generator) -> CoupledState:
    """Sample one step of the coupled chain."""
    entries = coupled_transition_row(state, nu)
    u = rng.random()
    acc = 0.0
    for nxt, p in entries:
        acc += float(p)
        if u < acc:
            return nxt
    return entries[-1][0]


def simulate_coupled(
    n: int, env: Environment, rng: np.random.Generator
) -> list[CoupledState]:
    """Trajectory of the coupled chain from (0, singletons) through env.

    The returned list has len(env)+1 states; whenever the partition changes
    between consecutive states the jump counter increments (asserted per
    step).
    """
    state = CoupledState(0, make_singletons(n))
    out = [state]
    for row in env.rows:
        nxt = coupled_step(state, row, rng)
        assert nxt.z in (state.z, state.z + 1), "jump counter moves by at most 1"
        if nxt.s != state.s:
            assert nxt.z == state.z + 1, "partition changes must be counted jumps"
        state = nxt
        out.append(state)
    return out


def simulate_coupled_batch(
    n: int, env: Environment, replicates: int, rng: np.random.Generator
) -> tuple[dict[Partition, int], np.ndarray]:
    """Final-state counts of the coupled chain over many replicates.

    Vectorized over replicates: per generation each replicate draws its next
    coupled state from the exact row of its current partition.  Returns the
    histogram of terminal partitions and the terminal jump counters.  The
    coupling property (z increments exactly when s changes) is asserted on
    every step of every replicate.
    """
    partitions = enumerate_partitions(n)
    index = {p: i for i, p in enumerate(partitions)}
    state_idx = np.full(replicates, index[make_singletons(n)], dtype=np.int64)
    z = np.zeros(replicates, dtype=np.int64)
    for row in env.rows:
        rows: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for i in np.unique(state_idx):
            entries = coupled_transition_row(CoupledState(0, partitions[i]), row)
            probs = np.array([float(p) for _, p in entries])
            targets = np.array([index[st.s] for st, _ in entries], dtype=np.int64)
            dz = np.array([st.z for st, _ in entries], dtype=np.int64)
            rows[int(i)] = (np.cumsum(probs), targets, dz)
        u = rng.random(replicates)
        new_idx = np.empty_like(state_idx)
        new_z = np.empty_like(z)
        for i, (cum, targets, dz) in rows.items():
            mask = state_idx == i
            choice = np.minimum(np.searchsorted(cum, u[mask], side="right"), len(cum) - 1)
            new_idx[mask] = targets[choice]
            new_z[mask] = z[mask] + dz[choice]
        changed = new_idx != state_idx
        jumped = new_z == z + 1
        assert bool(np.all(~changed | jumped)), "partition change without a counted jump"
        assert bool(np.all((new_z == z) | jumped)), "jump counter must move by 0 or 1"
        state_idx = new_idx
        z = new_z
    hist = np.bincount(state_idx, minlength=len(partitions))
    return {partitions[i]: int(hist[i]) for i in range(len(partitions))}, z


def exact_chain_marginal(n: int, env: Environment) -> dict[Partition, Fraction]:
    """Exact law of the genealogy after stepping through the environment.

    The product of the exact per-generation transition rows applied to the
    point mass at the all-singletons partition.
    """
    partitions = enumerate_partitions(n)
    index = {p: i for i, p in enumerate(partitions)}
    dist = [Fraction(0)] * len(partitions)
    dist[index[make_singletons(n)]] = Fraction(1)
    for row in env.rows:
        nxt = [Fraction(0)] * len(partitions)
        for i, mass in enumerate(dist):
            if mass == 0:
                continue
            for eta, p in transition_row(partitions[i], row):
                if p != 0:
                    nxt[index[eta]] += mass * p
        dist = nxt
    assert sum(dist) == 1
    return {partitions[i]: dist[i] for i in range(len(partitions))}


def write_transition_matrix_csv(n: int, nu: NuLike, fileobj) -> None:
    """Full transition matrix over the partition enumeration order, as CSV."""
    import csv

    partitions = enumerate_partitions(n)
    counts = as_counts_array(nu)
    writer = csv.writer(fileobj)
    writer.writerow(["state"] + [str(p) for p in partitions])
    for xi in partitions:
        row = dict(transition_row(xi, counts))
        writer.writerow([str(xi)] + [repr(float(row.get(eta, Fraction(0)))) for eta in partitions])
