"""Forward-in-time particle system: weights, offspring counts, parent labels.

Only the offspring-count skeleton of the system is modelled: each generation
a resampling scheme turns the weight vector into offspring counts summing to
N, and parent labels are then assigned uniformly at random among all
assignments consistent with the counts (the random assignment construction:
build the multiset with nu_i copies of parent i and apply a uniform
permutation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

SCHEMES = ("multinomial", "residual", "stratified", "systematic", "wright_fisher")
WEIGHT_MODELS = ("constant", "iid_potential", "inherited_fitness", "degenerate")
POTENTIAL_KINDS = ("lognormal", "uniform", "two_point")

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class OffspringCounts:
    """Per-parent offspring counts nu^(1:N), non-negative and summing to N."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("offspring counts must be non-negative")
        if sum(self.counts) != len(self.counts):
            raise ValueError(
                f"offspring counts must sum to N={len(self.counts)}, got {sum(self.counts)}"
            )

    @property
    def N(self) -> int:
        return len(self.counts)


def as_counts_array(nu: Union[OffspringCounts, Sequence[int], np.ndarray]) -> np.ndarray:
    """Accept an OffspringCounts or a plain sequence/array of counts."""
    if isinstance(nu, OffspringCounts):
        return np.asarray(nu.counts, dtype=np.int64)
    arr = np.asarray(nu, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("offspring counts must be one-dimensional")
    if (arr < 0).any() or int(arr.sum()) != arr.size:
        raise ValueError("invalid offspring counts")
    return arr


@dataclass(frozen=True)
class ParentAssignment:
    """Parent labels a^(1:N), 1-based; |{j: a_j = i}| equals nu_i."""

    parents: tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.parents)

    def recount(self) -> OffspringCounts:
        counts = [0] * len(self.parents)
        for a in self.parents:
            counts[a - 1] += 1
        return OffspringCounts(tuple(counts))


@dataclass(frozen=True)
class PotentialSpec:
    """Distribution of the positive per-particle potentials g_i."""

    kind: str = "lognormal"
    sigma: float = 0.5          # lognormal
    low: float = 0.5            # uniform / two_point
    high: float = 2.0           # uniform / two_point
    p_high: float = 0.5         # two_point

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "lognormal" and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind in ("uniform", "two_point"):
            if not 0 < self.low <= self.high:
                raise ValueError("need 0 < low <= high")
        if self.kind == "two_point" and not 0 <= self.p_high <= 1:
            raise ValueError("p_high must be in [0, 1]")

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "lognormal":
            return np.exp(self.sigma * rng.standard_normal(size))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        pick = rng.random(size) < self.p_high
        return np.where(pick, self.high, self.low)


@dataclass
class WeightState:
    """Normalized weights plus the model state they were derived from."""

    weights: np.ndarray
    model: str = "constant"
    potentials: Optional[np.ndarray] = None
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    heritability: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(w.tolist()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1 within 1e-12")
        if self.model not in WEIGHT_MODELS:
            raise ValueError(f"unknown weight model {self.model!r}")
        if not 0 <= self.heritability <= 1:
            raise ValueError("heritability must be in [0, 1]")
        self.weights = w

    @property
    def N(self) -> int:
        return self.weights.size


def _normalize(potentials: np.ndarray) -> np.ndarray:
    total = potentials.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("potentials must have a positive finite sum")
    return potentials / total


def initial_weight_state(
    model: str,
    N: int,
    rng: np.random.Generator,
    potential: Optional[PotentialSpec] = None,
    heritability: float = 0.0,
) -> WeightState:
    """Weight state for the first simulated generation of each model."""
    if N < 2:
        raise ValueError(f"need N >= 2, got {N}")
    spec = potential if potential is not None else PotentialSpec()
    if model == "constant":
        return WeightState(np.full(N, 1.0 / N), model=model)
    if model == "degenerate":
        w = np.zeros(N)
        w[0] = 1.0
        return WeightState(w, model=model)
    if model in ("iid_potential", "inherited_fitness"):
        g = spec.draw(N, rng)
        return WeightState(
            _normalize(g), model=model, potentials=g,
            potential=spec, heritability=heritability,
        )
    raise ValueError(f"unknown weight model {model!r}")


def evolve_weights(
    model: str,
    prev: WeightState,
    parents: Union[ParentAssignment, np.ndarray, None],
    rng: np.random.Generator,
) -> WeightState:
    """One generation of weight dynamics.

    constant / degenerate: fixed weights, parents ignored.
    iid_potential: fresh i.i.d. potentials, independent of ancestry.
    inherited_fitness: child potential = (parent potential)^h * g with fresh
    i.i.d. g; h = 0 reduces to iid_potential, h > 0 creates genuine
    between-generation dependence of offspring counts.
    """
    N = prev.N
    if model == "constant":
        return WeightState(np.full(N, 1.0 / N), model=model)
    if model == "degenerate":
        w = np.zeros(N)
        w[0] = 1.0
        return WeightState(w, model=model)
    if model == "iid_potential":
        g = prev.potential.draw(N, rng)
        return WeightState(
            _normalize(g), model=model, potentials=g,
            potential=prev.potential, heritability=prev.heritability,
        )
    if model == "inherited_fitness":
        if parents is None:
            raise ValueError("inherited_fitness needs a parent assignment")
        if prev.potentials is None:
            raise ValueError("previous state carries no potentials")
        if isinstance(parents, ParentAssignment):
            idx = np.asarray(parents.parents, dtype=np.int64) - 1
        else:
            idx = np.asarray(parents, dtype=np.int64)
        h = prev.heritability
        g = prev.potential.draw(N, rng)
        pot = prev.potentials[idx] ** h * g if h > 0 else g
        return WeightState(
            _normalize(pot), model=model, potentials=pot,
            potential=prev.potential, heritability=h,
        )
    raise ValueError(f"unknown weight model {model!r}")


def offspring_counts_array(
    scheme: str, weights: np.ndarray, N: int, rng: np.random.Generator
) -> np.ndarray:
    """Offspring counts as a plain int64 array (hot-path form)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    if N < 2:
        raise ValueError(f"need N >= 2, got {N}")
    if weights.size != N:
        raise ValueError(f"got {weights.size} weights for population size {N}")
    if scheme == "multinomial":
        return rng.multinomial(N, weights).astype(np.int64)
    if scheme == "wright_fisher":
        return rng.multinomial(N, np.full(N, 1.0 / N)).astype(np.int64)
    if scheme == "residual":
        scaled = N * weights
        base = np.floor(scaled).astype(np.int64)
        remainder = N - int(base.sum())
        if remainder > 0:
            resid = scaled - base
            total = resid.sum()
            if total <= 0:  # all weights resolved integer multiples of 1/N
                resid = np.full(N, 1.0 / N)
            else:
                resid = resid / total
            base += rng.multinomial(remainder, resid).astype(np.int64)
        return base
    # stratified / systematic: one inverse-CDF point per stratum [(k-1)/N, k/N)
    if scheme == "stratified":
        u = (np.arange(N) + rng.random(N)) / N
    else:
        u = (np.arange(N) + rng.random()) / N
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard against rounding in the last edge
    idx = np.searchsorted(cum, u, side="right")
    return np.bincount(idx, minlength=N).astype(np.int64)


def generate_offspring(
    scheme: str,
    w: Union[WeightState, Sequence[float], np.ndarray],
    N: int,
    rng: np.random.Generator,
) -> OffspringCounts:
    """Draw one generation of offspring counts under the given scheme."""
    weights = w.weights if isinstance(w, WeightState) else np.asarray(w, dtype=float)
    counts = offspring_counts_array(scheme, weights, N, rng)
    assert int(counts.sum()) == N, "offspring counts must sum to N"
    return OffspringCounts(tuple(int(c) for c in counts))


def assignment_array(counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform random parent labels (0-based) consistent with the counts."""
    return rng.permutation(np.repeat(np.arange(counts.size), counts))


def assign_parents(
    nu: Union[OffspringCounts, Sequence[int], np.ndarray], rng: np.random.Generator
) -> ParentAssignment:
    """Uniform assignment of parents given offspring counts.

    The multiset with nu_i copies of parent i is built and uniformly
    permuted, so conditionally on nu every consistent assignment is equally
    likely.
    """
    counts = as_counts_array(nu)
    labels = assignment_array(counts, rng) + 1
    return ParentAssignment(tuple(int(a) for a in labels))
