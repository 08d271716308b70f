"""Greedy peeling of a vector sequence into linearly independent sets."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .errors import ZeroVector
from .exact import QQ, Field, SubspaceBasis, canonical_basis, rank


class _Echelon:
    """Incremental independence test against a growing set of rows."""

    def __init__(self, F: Field):
        self.F = F
        self.rows: List[Tuple[int, list]] = []

    def reduce(self, v) -> list:
        F = self.F
        v = list(v)
        for c, r in self.rows:
            a = v[c]
            if a != 0:
                v = [F.norm(x - a * y) for x, y in zip(v, r)]
        return v

    def add_if_independent(self, v) -> bool:
        r = self.reduce(v)
        c = next((i for i, a in enumerate(r) if a != 0), None)
        if c is None:
            return False
        inv = self.F.inv(r[c])
        self.rows.append((c, [self.F.norm(a * inv) for a in r]))
        return True


class Partition:
    """Ordered independent sets A_1, A_2, ... as index tuples into ``seq``."""

    def __init__(self, seq: Sequence, sets: List[Tuple[int, ...]], F: Field, ambient: int):
        self.seq = seq
        self.sets = sets
        self.field = F
        self.ambient = ambient
        self._spans = None
        self._counts = None

    def __len__(self):
        return len(self.sets)

    @property
    def spans(self) -> List[SubspaceBasis]:
        if self._spans is None:
            cache: Dict[frozenset, SubspaceBasis] = {}
            out = []
            for A in self.sets:
                vals = [self.seq[i] for i in A]
                key = frozenset(vals)
                if key not in cache:
                    cache[key] = canonical_basis(vals, self.field, self.ambient)
                out.append(cache[key])
            self._spans = out
        return self._spans


def stable_partition(seq: Sequence[Sequence], F: Field = QQ, ambient: int = None) -> Partition:
    """Repeatedly peel the leftmost maximal independent subsequence.

    Pass t takes, left to right, every remaining vector independent of those
    already taken in that pass.  The scan is driven by a heap over the next
    remaining position of each distinct value, and stops as soon as the set
    reaches the dimension of the remaining span; that dimension never grows,
    so it is only recomputed (by an exhaustive pass) when a pass falls short.
    """
    seq = [tuple(v) for v in seq]
    if ambient is None:
        ambient = len(seq[0]) if seq else 0
    positions: Dict[tuple, deque] = {}
    for i, v in enumerate(seq):
        if len(v) != ambient:
            raise ValueError("vectors of mixed dimension")
        if all(a == 0 for a in v):
            raise ZeroVector(f"vector at position {i} is zero")
        positions.setdefault(v, deque()).append(i)
    if not seq:
        return Partition(seq, [], F, ambient)
    F.check(positions)
    values = list(positions)
    heap = [(positions[v][0], k) for k, v in enumerate(values)]
    heapq.heapify(heap)
    bound = rank(values, F)
    sets: List[Tuple[int, ...]] = []
    while heap:
        ech = _Echelon(F)
        taken: List[int] = []
        skipped = []
        while heap and len(taken) < bound:
            pos, k = heapq.heappop(heap)
            v = values[k]
            if ech.add_if_independent(v):
                taken.append(pos)
                q = positions[v]
                q.popleft()
                if q:
                    heapq.heappush(heap, (q[0], k))
            else:
                skipped.append((pos, k))
        for item in skipped:
            heapq.heappush(heap, item)
        bound = len(taken)
        sets.append(tuple(taken))
    return Partition(seq, sets, F, ambient)


@dataclass
class BasisCount:
    counts: Dict[SubspaceBasis, int] = field(default_factory=dict)
    sizes: Dict[int, int] = field(default_factory=dict)

    def m(self, k: int) -> int:
        return self.sizes.get(k, 0)


def basis_count(p: Partition) -> BasisCount:
    """Per-span and per-size counts; cached on the partition."""
    if p._counts is not None:
        return p._counts
    bc = BasisCount()
    for B in p.spans:
        bc.counts[B] = bc.counts.get(B, 0) + 1
        bc.sizes[B.dim] = bc.sizes.get(B.dim, 0) + 1
    p._counts = bc
    return bc
