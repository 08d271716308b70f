"""Exact linear algebra over the rationals and prime fields.

Vectors are tuples of field elements: ``Fraction`` for Q, ``int`` in
[0, p) for GF(p).  Pivot columns are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from .errors import DependentRows, FieldMismatch

Vector = Tuple


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    i = 2
    while i * i <= p:
        if p % i == 0:
            return False
        i += 1
    return True


@dataclass(frozen=True)
class Field:
    """Q when ``p`` is None, otherwise GF(p)."""

    p: Optional[int] = None

    def __post_init__(self):
        if self.p is not None and not _is_prime(self.p):
            raise ValueError(f"{self.p} is not prime")

    @classmethod
    def rationals(cls) -> "Field":
        return cls(None)

    @classmethod
    def prime(cls, p: int) -> "Field":
        return cls(p)

    @classmethod
    def parse(cls, text: str) -> "Field":
        text = text.strip()
        if text in ("Q", "QQ", "rationals"):
            return cls(None)
        if text.startswith("GF(") and text.endswith(")"):
            return cls(int(text[3:-1]))
        raise ValueError(f"unknown field {text!r}")

    @property
    def is_rational(self) -> bool:
        return self.p is None

    def __str__(self):
        return "Q" if self.p is None else f"GF({self.p})"

    def __call__(self, x):
        if self.p is None:
            return x if type(x) is Fraction else Fraction(x)
        if isinstance(x, Fraction):
            return x.numerator * pow(x.denominator, -1, self.p) % self.p
        if isinstance(x, str):
            return self(Fraction(x))
        return int(x) % self.p

    @property
    def zero(self):
        return Fraction(0) if self.p is None else 0

    @property
    def one(self):
        return Fraction(1) if self.p is None else 1

    def vec(self, xs) -> Vector:
        return tuple(self(x) for x in xs)

    def inv(self, a):
        if self.p is None:
            return 1 / a
        return pow(a, -1, self.p)

    def norm(self, a):
        return a if self.p is None else a % self.p

    def check(self, rows) -> None:
        """Raise FieldMismatch if an entry is not an element of this field."""
        want = Fraction if self.p is None else int
        for r in rows:
            for a in r:
                if type(a) is not want or (self.p is not None and not 0 <= a < self.p):
                    raise FieldMismatch(f"entry {a!r} is not in {self}")


QQ = Field.rationals()


def _rref(rows: Sequence[Sequence], F: Field, ncols: int):
    """Reduced row echelon form. Returns (nonzero rows, pivot columns)."""
    M = [list(r) for r in rows]
    pivots: List[int] = []
    r = 0
    for c in range(ncols):
        if r == len(M):
            break
        k = next((i for i in range(r, len(M)) if M[i][c] != 0), None)
        if k is None:
            continue
        M[r], M[k] = M[k], M[r]
        inv = F.inv(M[r][c])
        pr = [F.norm(a * inv) for a in M[r]]
        M[r] = pr
        for i in range(len(M)):
            if i != r:
                f = M[i][c]
                if f != 0:
                    M[i] = [F.norm(a - f * b) for a, b in zip(M[i], pr)]
        pivots.append(c)
        r += 1
    return [tuple(row) for row in M[:r]], pivots


def rank(rows: Sequence[Sequence], F: Field = QQ) -> int:
    rows = list(rows)
    if not rows:
        return 0
    return len(_rref(rows, F, len(rows[0]))[1])


@dataclass(frozen=True)
class SubspaceBasis:
    """Canonical basis T of a subspace: identity at the pivot columns."""

    rows: Tuple[Vector, ...]
    pivots: Tuple[int, ...]
    ambient: int
    field: Field = QQ

    @property
    def dim(self) -> int:
        return len(self.rows)

    def contains(self, v: Sequence) -> bool:
        """Exact membership test: v = sum of v[c_i] t_i."""
        F = self.field
        acc = [F.zero] * self.ambient
        for c, t in zip(self.pivots, self.rows):
            a = v[c]
            if a != 0:
                acc = [F.norm(x + a * y) for x, y in zip(acc, t)]
        return all(x == y for x, y in zip(acc, v))

    def key(self) -> str:
        """Fixed serialization used for equality across runs and languages."""
        body = ";".join(",".join(str(a) for a in r) for r in self.rows)
        return f"{self.field}|{self.ambient}|{body}"


def span_basis(rows: Sequence[Sequence], F: Field = QQ, ambient: Optional[int] = None) -> SubspaceBasis:
    """Canonical basis of the span of arbitrary (possibly dependent) rows."""
    rows = list(rows)
    if ambient is None:
        if not rows:
            raise ValueError("ambient dimension needed for an empty row list")
        ambient = len(rows[0])
    if not rows:
        return SubspaceBasis((), (), ambient, F)
    T, piv = _rref(rows, F, ambient)
    return SubspaceBasis(tuple(T), tuple(piv), ambient, F)


def canonical_basis(rows: Sequence[Sequence], F: Field = QQ, ambient: Optional[int] = None) -> SubspaceBasis:
    """T = A^{-1} M for independent rows M; raises DependentRows otherwise."""
    B = span_basis(rows, F, ambient)
    if B.dim != len(rows):
        raise DependentRows(f"{len(rows)} rows span only dimension {B.dim}")
    return B


@dataclass(frozen=True)
class Solution:
    x: Vector


@dataclass(frozen=True)
class Infeasible:
    pass


@dataclass(frozen=True)
class AffineSolutionSpace:
    particular: Vector
    null_basis: Tuple[Vector, ...]


def solve_exact(A: Sequence[Sequence], b: Sequence, F: Field = QQ, ncols: Optional[int] = None):
    """Solve Ax = b exactly by Gauss-Jordan elimination."""
    A = list(A)
    if len(A) != len(b):
        raise ValueError("row count of A and length of b differ")
    if ncols is None:
        if not A:
            raise ValueError("ncols needed for an empty system")
        ncols = len(A[0])
    aug = [tuple(r) + (bi,) for r, bi in zip(A, b)]
    if aug:
        T, piv = _rref(aug, F, ncols + 1)
    else:
        T, piv = [], []
    if piv and piv[-1] == ncols:
        return Infeasible()
    x = [F.zero] * ncols
    for row, c in zip(T, piv):
        x[c] = row[ncols]
    free = [j for j in range(ncols) if j not in set(piv)]
    if not free:
        return Solution(tuple(x))
    null = []
    for f in free:
        v = [F.zero] * ncols
        v[f] = F.one
        for row, c in zip(T, piv):
            v[c] = F.norm(-row[f])
        null.append(tuple(v))
    return AffineSolutionSpace(tuple(x), tuple(null))


def affine_membership(x: Sequence, generators: Sequence[Sequence], F: Field = QQ) -> bool:
    """True iff x is an affine combination of the generators."""
    gens = list(generators)
    if not gens:
        return False
    # columns are the lifted generators (g, 1); unknowns are the weights
    d = len(x)
    A = [[g[i] for g in gens] for i in range(d)] + [[F.one] * len(gens)]
    rhs = list(x) + [F.one]
    return not isinstance(solve_exact(A, rhs, F, len(gens)), Infeasible)


# --- exact phase-I simplex ---------------------------------------------------

@dataclass(frozen=True)
class Feasible:
    point: Tuple[Fraction, ...]


@dataclass(frozen=True)
class FarkasWitness:
    """w with w^T M >= 0 and w^T r < 0, certifying {M l = r, l >= 0} empty."""

    w: Tuple[Fraction, ...]


def nonneg_solve(M: Sequence[Sequence], r: Sequence, ncols: Optional[int] = None):
    """Find l >= 0 with M l = r over Q, or a Farkas witness.

    Phase-I simplex with Bland's rule on the full tableau, artificial
    columns included so the final duals can be read off.
    """
    m = len(M)
    n = len(M[0]) if m else (ncols or 0)
    if ncols is not None:
        n = ncols
    sign = [(-1 if Fraction(ri) < 0 else 1) for ri in r]
    tab = []
    for i in range(m):
        row = [Fraction(a) * sign[i] for a in M[i]]
        row += [Fraction(int(i == k)) for k in range(m)]
        row.append(Fraction(r[i]) * sign[i])
        tab.append(row)
    width = n + m + 1
    obj = [Fraction(0)] * width
    for j in range(width):
        if n <= j < n + m:
            continue
        obj[j] = -sum((tab[i][j] for i in range(m)), Fraction(0))
    basis = list(range(n, n + m))

    while True:
        enter = next((j for j in range(n + m) if obj[j] < 0), None)
        if enter is None:
            break
        best = None
        for i in range(m):
            a = tab[i][enter]
            if a > 0:
                ratio = tab[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:  # cannot happen in phase I (objective bounded below)
            break
        i = best[1]
        piv = tab[i][enter]
        prow = [a / piv for a in tab[i]]
        tab[i] = prow
        for k in range(m):
            if k != i:
                f = tab[k][enter]
                if f != 0:
                    tab[k] = [a - f * b for a, b in zip(tab[k], prow)]
        f = obj[enter]
        obj = [a - f * b for a, b in zip(obj, prow)]
        basis[i] = enter

    if obj[-1] == 0:
        x = [Fraction(0)] * n
        for i, bv in enumerate(basis):
            if bv < n:
                x[bv] = tab[i][-1]
        return Feasible(tuple(x))
    # duals y_k = 1 - reduced cost of artificial k; witness w = -sign * y
    y = [1 - obj[n + k] for k in range(m)]
    return FarkasWitness(tuple(-sign[k] * y[k] for k in range(m)))


@dataclass(frozen=True)
class Inside:
    coefficients: Tuple[Fraction, ...]


@dataclass(frozen=True)
class Outside:
    witness: Tuple[Fraction, ...]


def convex_membership(x: Sequence, S: Sequence[Sequence]):
    """Decide x in Conv(S) exactly over Q.

    Inside carries barycentric coefficients aligned with S; Outside carries h
    with <h, s - x> > 0 for every s in S.
    """
    x = tuple(Fraction(a) for a in x)
    d = len(x)
    if not S:
        return Outside(tuple(Fraction(0) for _ in range(d)))
    # duplicates do not change the hull; solve on distinct points
    first = {}
    for i, s in enumerate(S):
        first.setdefault(tuple(Fraction(a) for a in s), i)
    pts = list(first)
    M = [[p[i] for p in pts] for i in range(d)] + [[Fraction(1)] * len(pts)]
    res = nonneg_solve(M, list(x) + [Fraction(1)], len(pts))
    if isinstance(res, Feasible):
        coef = [Fraction(0)] * len(S)
        for p, lam in zip(pts, res.point):
            coef[first[p]] = lam
        return Inside(tuple(coef))
    return Outside(tuple(res.w[:d]))


def feasible_point(A: Sequence[Sequence], b: Sequence, d: Optional[int] = None):
    """A point of {Ax <= b, x >= 0} over Q, or None if the set is empty."""
    m = len(A)
    if d is None:
        d = len(A[0]) if m else 0
    if m == 0:
        return tuple(Fraction(0) for _ in range(d))
    M = [list(A[i]) + [int(i == k) for k in range(m)] for i in range(m)]
    res = nonneg_solve(M, b, d + m)
    if isinstance(res, Feasible):
        return res.point[:d]
    return None
