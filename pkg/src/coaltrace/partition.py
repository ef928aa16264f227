"""Set partitions of {1..n} in canonical form, with merge operations.

Canonical form: blocks are tuples of ascending integers, ordered by their
least element.  All equality, hashing and rendering is done on this form.
Partitions are immutable; merges return new values.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Optional

Block = tuple[int, ...]

MAX_ENUMERATION_N = 10


class Partition:
    """An immutable partition of {1..n}, blocks ordered by least element."""

    __slots__ = ("n", "blocks", "_hash")

    def __init__(self, blocks: Iterable[Iterable[int]]):
        canon = tuple(sorted((tuple(sorted(b)) for b in blocks), key=lambda b: b[0]))
        if not canon:
            raise ValueError("partition must have at least one block")
        seen: set[int] = set()
        for b in canon:
            if not b:
                raise ValueError("empty block")
            for x in b:
                if x in seen:
                    raise ValueError(f"element {x} appears in more than one block")
                seen.add(x)
        n = len(seen)
        if seen != set(range(1, n + 1)):
            raise ValueError("blocks must cover {1..n} exactly")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "blocks", canon)
        object.__setattr__(self, "_hash", hash(canon))

    def __setattr__(self, name, value):
        raise AttributeError("Partition is immutable")

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Partition({list(map(list, self.blocks))})"

    def __str__(self) -> str:
        inner = ",".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)
        return "{" + inner + "}"

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return make_singletons(n)

    def merge(self, which: Iterable[int]) -> "Partition":
        return merge_blocks(self, which)

    def is_coarsening_of(self, other: "Partition") -> bool:
        return merge_profile(other, self) is not None


def make_singletons(n: int) -> Partition:
    """The all-singletons partition {{1},...,{n}} (the initial genealogy state)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return Partition([(i,) for i in range(1, n + 1)])


def merge_blocks(p: Partition, which: Iterable[int]) -> Partition:
    """Union the blocks at 1-based indices `which` (at least two of them).

    The result is re-canonicalized; block count drops by len(which) - 1.
    """
    idx = set(which)
    if len(idx) < 2:
        raise ValueError("need at least two blocks to merge")
    for i in idx:
        if not 1 <= i <= len(p.blocks):
            raise ValueError(f"block index {i} out of range 1..{len(p.blocks)}")
    merged: list[int] = []
    rest: list[Block] = []
    for i, b in enumerate(p.blocks, start=1):
        if i in idx:
            merged.extend(b)
        else:
            rest.append(b)
    return Partition(rest + [tuple(merged)])


def merge_profile(xi: Partition, eta: Partition) -> Optional[tuple[int, ...]]:
    """How many blocks of `xi` merged to form each block of `eta`.

    Returns b_1..b_{|eta|} (aligned to eta's canonical block order) when every
    block of eta is a union of blocks of xi, and None otherwise.  The entries
    sum to |xi|.
    """
    if xi.n != eta.n:
        raise ValueError(f"mismatched sample sizes: {xi.n} vs {eta.n}")
    # target block index of every element
    target = [0] * (eta.n + 1)
    for j, b in enumerate(eta.blocks):
        for x in b:
            target[x] = j
    counts = [0] * len(eta.blocks)
    for b in xi.blocks:
        j = target[b[0]]
        if any(target[x] != j for x in b[1:]):
            return None  # a block of xi is split across blocks of eta
        counts[j] += 1
    return tuple(counts)


def enumerate_partitions(n: int) -> list[Partition]:
    """All partitions of {1..n}, each once, in a fixed deterministic order.

    Generated by inserting element k into every block of each partition of
    {1..k-1}, or as a new singleton.  Guarded at n <= 10 (Bell(10) = 115975).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"n={n} too large to enumerate (guard: n <= {MAX_ENUMERATION_N})")
    state: list[tuple[Block, ...]] = [((1,),)]
    for k in range(2, n + 1):
        nxt: list[tuple[Block, ...]] = []
        for blocks in state:
            for i in range(len(blocks)):
                nxt.append(blocks[:i] + (blocks[i] + (k,),) + blocks[i + 1:])
            nxt.append(blocks + ((k,),))
        state = nxt
    return [Partition(blocks) for blocks in state]


@lru_cache(maxsize=None)
def bell_number(n: int) -> int:
    """Number of partitions of an n-element set."""
    if n < 0:
        raise ValueError("n must be >= 0")
    # Bell triangle
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def coarsenings(xi: Partition) -> list[tuple[Partition, tuple[int, ...]]]:
    """All partitions reachable from `xi` by merging blocks, with profiles.

    Includes `xi` itself (profile of all ones).  Each result is (eta, b)
    where b is the merge profile aligned to eta's canonical block order.
    """
    k = len(xi.blocks)
    out: list[tuple[Partition, tuple[int, ...]]] = []
    for grouping in enumerate_partitions(k):
        new_blocks: list[Block] = []
        profile: list[int] = []
        for cls in grouping.blocks:
            members: list[int] = []
            for block_index in cls:
                members.extend(xi.blocks[block_index - 1])
            new_blocks.append(tuple(sorted(members)))
            profile.append(len(cls))
        # classes are ordered by least block index, and block least elements
        # increase with index, so new_blocks is already canonical
        out.append((Partition(new_blocks), tuple(profile)))
    return out
