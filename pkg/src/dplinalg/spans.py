"""Private linear span, affine span, synthetic equations and the subspace learner."""
from __future__ import annotations

import math
import dataclasses
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .errors import LiftDegeneracy
from .exact import QQ, Field, SubspaceBasis, span_basis
from .noise import PrivacyLedger, PrivacyParams, RngStream, sample_laplace
from .partition import Partition, basis_count, stable_partition


@dataclass
class SpanResult:
    vectors: List[tuple]
    k: int                      # chosen size, 0 when nothing passed the threshold
    basis: Optional[SubspaceBasis] = None
    dropped_zero: int = 0
    transcript: Optional[dict] = None


def svt_threshold(d: int, params: PrivacyParams) -> float:
    """Noise-free part of the threshold theta."""
    return (16 / params.epsilon) * math.log(100 * d / params.delta)


def private_linear_span(seq: Sequence[Sequence], params: PrivacyParams, rng: RngStream,
                        F: Field = QQ, ambient: int = None, partition: Partition = None,
                        ledger: PrivacyLedger = None, debug: bool = False) -> SpanResult:
    """Release a subspace of span(seq) containing all but a few input vectors.

    A precomputed ``partition`` of the nonzero inputs may be passed to reuse
    it across noise seeds; it must come from ``stable_partition`` on them.
    """
    seq = [F.vec(v) for v in seq]
    if ambient is None:
        ambient = len(seq[0]) if seq else 0
    nonzero = [v for v in seq if any(a != 0 for a in v)]
    dropped = len(seq) - len(nonzero)
    d = ambient
    if d == 0:
        return SpanResult([], 0, None, dropped)
    if partition is None:
        partition = stable_partition(nonzero, F, ambient)
    bc = basis_count(partition)
    eps = params.epsilon
    if ledger is not None:
        ledger.charge("private_linear_span", eps, params.delta)
    theta = svt_threshold(d, params) + sample_laplace(2 / eps, rng)
    trace = {"theta": theta, "noisy_counts": {}}
    chosen = 0
    for k in range(d, 0, -1):
        noisy = bc.m(k) + sample_laplace(4 / eps, rng)
        trace["noisy_counts"][k] = noisy
        if noisy > theta:
            chosen = k
            break
    basis = None
    vectors: List[tuple] = []
    if chosen and bc.m(chosen) > 0:
        rows = [r for B in bc.counts if B.dim == chosen for r in B.rows]
        basis = span_basis(rows, F, ambient)
        vectors = list(basis.rows)
    return SpanResult(vectors, chosen, basis, dropped, trace if debug else None)


def lift_points(points: Sequence[Sequence], F: Field) -> List[tuple]:
    return [F.vec(p) + (F.one,) for p in points]


def unlift_basis(rows: Sequence[Sequence], F: Field) -> List[tuple]:
    """Affine generators from a basis of a lifted subspace.

    Each row v' is scaled by 1/v'(d+1) and its last coordinate dropped.  A
    row whose last coordinate is zero (a direction, not a point) is first
    shifted by the first row with a nonzero last coordinate; the span is
    unchanged and the affine hull of the output is {x : (x, 1) in span}.
    """
    rows = [list(r) for r in rows]
    if not rows:
        return []
    anchor = next((r for r in rows if r[-1] != 0), None)
    if anchor is None:
        raise LiftDegeneracy("output subspace has no vector with nonzero last coordinate")
    out = []
    for r in rows:
        if r[-1] == 0:
            r = [F.norm(a + b) for a, b in zip(r, anchor)]
        inv = F.inv(r[-1])
        out.append(tuple(F.norm(a * inv) for a in r[:-1]))
    return out


def private_affine_span(points: Sequence[Sequence], params: PrivacyParams, rng: RngStream,
                        F: Field = QQ, ambient: int = None, partition: Partition = None,
                        ledger: PrivacyLedger = None, debug: bool = False) -> List[tuple]:
    points = list(points)
    if ambient is None:
        ambient = len(points[0]) if points else 0
    lifted = lift_points(points, F)
    res = private_linear_span(lifted, params, rng, F, ambient + 1, partition, ledger, debug)
    return unlift_basis(res.vectors, F)


@dataclass
class LinearSystem:
    """Equations a_i . x = b_i over a field."""

    rows: List[Tuple[tuple, object]]
    d: int
    field: Field = QQ

    @classmethod
    def from_pairs(cls, pairs, d: int, F: Field = QQ) -> "LinearSystem":
        return cls([(F.vec(a), F(b)) for a, b in pairs], d, F)

    def lifted(self) -> List[tuple]:
        F = self.field
        return [a + (F.norm(-b),) for a, b in self.rows]

    @property
    def A(self):
        return [a for a, _ in self.rows]

    @property
    def b(self):
        return [b for _, b in self.rows]

    def satisfied_by(self, x) -> List[bool]:
        F = self.field
        return [F.norm(sum((ai * xi for ai, xi in zip(a, x)), F.zero) - b) == 0 for a, b in self.rows]


def sanitize_linear_system(system: LinearSystem, params: PrivacyParams, rng: RngStream,
                           partition: Partition = None, ledger: PrivacyLedger = None,
                           debug: bool = False) -> LinearSystem:
    F = system.field
    res = private_linear_span(system.lifted(), params, rng, F, system.d + 1, partition, ledger, debug)
    rows = [(tuple(v[:-1]), F.norm(-v[-1])) for v in res.vectors]
    return LinearSystem(rows, system.d, F)


@dataclass
class Hypothesis:
    """h(x) = 1 iff x lies in the affine span of ``generators`` (empty: h = 0)."""

    generators: List[tuple]
    d: int
    field: Field = QQ
    _lifted: Optional[SubspaceBasis] = dataclasses.field(default=None, repr=False)

    def __post_init__(self):
        if self.generators:
            self._lifted = span_basis(lift_points(self.generators, self.field), self.field, self.d + 1)

    def __call__(self, x) -> int:
        if not self.generators:
            return 0
        return int(self._lifted.contains(self.field.vec(x) + (self.field.one,)))


def learn_subspace(sample: Sequence[Tuple[Sequence, int]], params: PrivacyParams, rng: RngStream,
                   F: Field = QQ, d: int = None, partition: Partition = None,
                   ledger: PrivacyLedger = None) -> Hypothesis:
    sample = list(sample)
    if d is None:
        d = len(sample[0][0]) if sample else 0
    pos = [x for x, y in sample if y == 1]
    gens = private_affine_span(pos, params, rng, F, d, partition, ledger)
    return Hypothesis(gens, d, F)
