"""Set partitions of a finite, totally ordered site set.

A partition is stored canonically: every block is an ascending tuple of
sites and the blocks are ordered by their minimum element.  Canonical
storage makes partitions hashable and gives every enumeration a fixed,
reproducible order; generator matrices over the partition lattice index
their rows and columns by the order of :func:`enumerate_partitions`
(restricted-growth strings, lexicographic).

Mobius values are exact integers so that inversion round-trips exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as _cartesian
from typing import Iterable, Iterator

from .errors import (
    EmptyBlockError,
    GroundMismatchError,
    NotComparableError,
    NotSubsetError,
    OverlapError,
    SizeCapError,
)

Block = tuple[int, ...]

# Bell(8) = 4140; exact engines refuse larger ground sets instead of
# exhausting memory.
DEFAULT_SITE_CAP = 8


def site_set(sites: Iterable[int]) -> tuple[int, ...]:
    """Normalize an iterable of site labels to a sorted tuple of distinct ints."""
    out = tuple(sorted({int(s) for s in sites}))
    if any(s < 1 for s in out):
        raise ValueError(f"site labels must be positive integers, got {out}")
    return out


@dataclass(frozen=True)
class Partition:
    """A set partition with canonical block order.

    ``blocks`` may be passed in any order; they are sorted on construction.
    The empty partition (no blocks, empty ground) is the constant ``EMPTY``.
    """

    blocks: tuple[Block, ...]

    def __post_init__(self) -> None:
        blocks = tuple(tuple(sorted(int(x) for x in b)) for b in self.blocks)
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise EmptyBlockError("partition blocks must be nonempty")
            for x in b:
                if x in seen:
                    raise OverlapError(f"site {x} appears in more than one block")
                seen.add(x)
        blocks = tuple(sorted(blocks, key=lambda b: b[0]))
        object.__setattr__(self, "blocks", blocks)

    @property
    def ground(self) -> tuple[int, ...]:
        return tuple(sorted(x for b in self.blocks for x in b))

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    def __str__(self) -> str:
        return format_partition(self)

    def block_of(self, site: int) -> Block:
        for b in self.blocks:
            if site in b:
                return b
        raise KeyError(f"site {site} not in ground set")

    def drop_block(self, j: int) -> "Partition":
        """Partition of the remaining ground after removing block ``j``."""
        return Partition(self.blocks[:j] + self.blocks[j + 1:])


EMPTY = Partition(())


def canonicalize(blocks: Iterable[Iterable[int]]) -> Partition:
    """Build a canonical partition from unordered blocks."""
    return Partition(tuple(tuple(b) for b in blocks))


def finest(sites: Iterable[int]) -> Partition:
    """All-singletons partition of ``sites``."""
    return Partition(tuple((s,) for s in site_set(sites)))


def coarsest(sites: Iterable[int]) -> Partition:
    """Single-block partition of ``sites``."""
    s = site_set(sites)
    return Partition((s,)) if s else EMPTY


def disjoint_union(a: Partition, b: Partition) -> Partition:
    """Join partitions of disjoint ground sets into one partition."""
    if set(a.ground) & set(b.ground):
        raise OverlapError("ground sets overlap")
    return Partition(a.blocks + b.blocks)


def _check_same_ground(a: Partition, b: Partition) -> None:
    if a.ground != b.ground:
        raise GroundMismatchError(f"ground sets differ: {a.ground} vs {b.ground}")


def refines(a: Partition, b: Partition) -> bool:
    """True iff every block of ``a`` is contained in some block of ``b``."""
    _check_same_ground(a, b)
    owner = {}
    for j, bb in enumerate(b.blocks):
        for x in bb:
            owner[x] = j
    return all(len({owner[x] for x in ab}) == 1 for ab in a.blocks)


def meet(a: Partition, b: Partition) -> Partition:
    """Greatest lower bound: nonempty pairwise block intersections."""
    _check_same_ground(a, b)
    out = []
    for ab in a.blocks:
        sa = set(ab)
        for bb in b.blocks:
            inter = sa & set(bb)
            if inter:
                out.append(tuple(sorted(inter)))
    return Partition(tuple(out))


def join(a: Partition, b: Partition) -> Partition:
    """Least upper bound: transitive closure of block overlap."""
    _check_same_ground(a, b)
    parent: dict[int, int] = {x: x for x in a.ground}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        parent[find(x)] = find(y)

    for blk in a.blocks + b.blocks:
        for x in blk[1:]:
            union(blk[0], x)
    groups: dict[int, list[int]] = {}
    for x in a.ground:
        groups.setdefault(find(x), []).append(x)
    return Partition(tuple(tuple(g) for g in groups.values()))


def restrict(a: Partition, sites: Iterable[int]) -> Partition:
    """Partition of ``sites`` induced by intersecting the blocks of ``a``.

    Restriction to the empty set yields ``EMPTY``.
    """
    u = site_set(sites)
    if not set(u) <= set(a.ground):
        raise NotSubsetError(f"{u} is not a subset of the ground set {a.ground}")
    out = []
    for b in a.blocks:
        nb = tuple(x for x in b if x in u)
        if nb:
            out.append(nb)
    return Partition(tuple(out))


def mobius(a: Partition, b: Partition) -> int:
    """Mobius value of the comparable pair ``a`` refines ``b`` (exact integer).

    Product over the blocks of ``b`` of ``(-1)**(k-1) * (k-1)!`` where ``k``
    counts the blocks of ``a`` inside that block.
    """
    if a is EMPTY and b is EMPTY or (not a.blocks and not b.blocks):
        return 1
    if not refines(a, b):
        raise NotComparableError("first partition does not refine the second")
    owner = {}
    for j, bb in enumerate(b.blocks):
        for x in bb:
            owner[x] = j
    counts = [0] * len(b.blocks)
    for ab in a.blocks:
        counts[owner[ab[0]]] += 1
    val = 1
    for k in counts:
        val *= (-1) ** (k - 1) * math.factorial(k - 1)
    return val


def _rgs_strings(k: int) -> Iterator[tuple[int, ...]]:
    """Restricted-growth strings of length ``k`` in lexicographic order."""
    if k == 0:
        yield ()
        return
    acc = [0]

    def rec(i: int, mx: int) -> Iterator[tuple[int, ...]]:
        if i == k:
            yield tuple(acc)
            return
        for v in range(mx + 2):
            acc.append(v)
            yield from rec(i + 1, max(mx, v))
            acc.pop()

    yield from rec(1, 0)


def _partition_from_rgs(elems: tuple[int, ...], rgs: tuple[int, ...]) -> Partition:
    nblocks = max(rgs) + 1 if rgs else 0
    blocks: list[list[int]] = [[] for _ in range(nblocks)]
    for x, g in zip(elems, rgs):
        blocks[g].append(x)
    return Partition(tuple(tuple(b) for b in blocks))


def enumerate_partitions(sites: Iterable[int], cap: int = DEFAULT_SITE_CAP) -> list[Partition]:
    """All partitions of ``sites`` in restricted-growth-string order.

    The first entry is the coarsest partition, the last the finest.  This
    order fixes the row/column indexing of every generator matrix over the
    partition lattice.
    """
    w = site_set(sites)
    if len(w) > cap:
        raise SizeCapError(f"{len(w)} sites exceeds the cap of {cap} (Bell numbers explode)")
    if not w:
        return [EMPTY]
    return [_partition_from_rgs(w, rgs) for rgs in _rgs_strings(len(w))]


def coarsenings(a: Partition) -> list[Partition]:
    """All partitions coarser than or equal to ``a`` (its blocks merged)."""
    return [p for p, _ in coarsenings_with_mobius(a)]


def coarsenings_with_mobius(a: Partition) -> list[tuple[Partition, int]]:
    """Pairs ``(b, mobius(a, b))`` over all coarsenings ``b`` of ``a``.

    Enumerated by grouping the blocks of ``a``; the Mobius value falls out
    of the group sizes, so no containment tests are needed.
    """
    if not a.blocks:
        return [(EMPTY, 1)]
    m = len(a.blocks)
    out = []
    for rgs in _rgs_strings(m):
        ngroups = max(rgs) + 1
        merged: list[list[int]] = [[] for _ in range(ngroups)]
        sizes = [0] * ngroups
        for blk_idx, g in enumerate(rgs):
            merged[g].extend(a.blocks[blk_idx])
            sizes[g] += 1
        mu = 1
        for k in sizes:
            mu *= (-1) ** (k - 1) * math.factorial(k - 1)
        out.append((Partition(tuple(tuple(b) for b in merged)), mu))
    return out


def refinements(a: Partition) -> list[Partition]:
    """All partitions finer than or equal to ``a`` (each block re-partitioned)."""
    if not a.blocks:
        return [EMPTY]
    per_block = [enumerate_partitions(b) for b in a.blocks]
    out = []
    for combo in _cartesian(*per_block):
        blocks: tuple[Block, ...] = ()
        for p in combo:
            blocks = blocks + p.blocks
        out.append(Partition(blocks))
    return out


def ordered_partitions_le2(sites: Iterable[int]) -> list[Partition]:
    """The whole set plus every split of ``sites`` into a leading and trailing part.

    Splits are ordered within ``sites`` (between consecutive elements), not
    necessarily within the enclosing site universe.
    """
    u = site_set(sites)
    if not u:
        raise EmptyBlockError("ordered partitions need a nonempty site set")
    out = [Partition((u,))]
    for k in range(1, len(u)):
        out.append(Partition((u[:k], u[k:])))
    return out


def is_ordered(a: Partition, within: Iterable[int] | None = None) -> bool:
    """True iff every block of ``a`` is a contiguous run of ``within``.

    ``within`` defaults to the ground set of ``a``.
    """
    w = site_set(within) if within is not None else a.ground
    pos = {x: i for i, x in enumerate(w)}
    for b in a.blocks:
        idx = sorted(pos[x] for x in b)
        if idx[-1] - idx[0] != len(idx) - 1:
            return False
    return True


def format_partition(a: Partition) -> str:
    """Render as ``"1,3,4|2,5"``; inverse of :func:`parse_partition`."""
    return "|".join(",".join(str(x) for x in b) for b in a.blocks)


def parse_partition(text: str) -> Partition:
    """Parse the ``"1,3,4|2,5"`` format produced by :func:`format_partition`."""
    text = text.strip()
    if not text:
        return EMPTY
    blocks = []
    for part in text.split("|"):
        items = [p.strip() for p in part.split(",")]
        if any(not it for it in items):
            raise ValueError(f"malformed partition text: {text!r}")
        blocks.append(tuple(int(it) for it in items))
    return Partition(tuple(blocks))
