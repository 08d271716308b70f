"""Instance generators and the instance file format.

Files are JSON text with a versioned header.  Rationals are written as
"num/den" strings, GF(p) residues as integers, floats via repr (shortest
round-trip).  Keys are sorted so equal instances give identical bytes.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List

import numpy as np

from .errors import InvalidKnobs
from .exact import QQ, Field, Inside, convex_membership, rank, span_basis

FORMAT = "dplinalg-instance"
VERSION = 1
TASKS = ("span", "affine", "equations", "lp", "pinhull", "learn")


def q2s(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def s2q(s) -> Fraction:
    return Fraction(s)


@dataclass
class InstanceFile:
    task: str
    field: Field
    d: int
    payload: Dict[str, Any]
    meta: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    # -- serialization --
    def _enc_vec(self, v):
        if self.field.is_rational:
            return [q2s(a) for a in v]
        return [int(a) for a in v]

    def _dec_vec(self, v):
        if self.field.is_rational:
            return tuple(s2q(a) for a in v)
        return tuple(int(a) % self.field.p for a in v)

    def to_text(self) -> str:
        body = {"format": FORMAT, "version": VERSION, "task": self.task,
                "field": str(self.field), "d": self.d,
                "payload": _encode(self.payload, self._enc_vec),
                "meta": _encode(self.meta, self._enc_vec),
                "provenance": self.provenance}
        return json.dumps(body, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "InstanceFile":
        body = json.loads(text)
        if body.get("format") != FORMAT:
            raise ValueError("not a dplinalg instance file")
        if body.get("version") != VERSION:
            raise ValueError(f"unsupported instance version {body.get('version')}")
        inst = cls(body["task"], Field.parse(body["field"]), body["d"], {}, {}, body["provenance"])
        inst.payload = _decode(body["payload"], inst._dec_vec)
        inst.meta = _decode(body["meta"], inst._dec_vec)
        return inst

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "InstanceFile":
        with open(path) as fh:
            return cls.from_text(fh.read())


# Exact vectors live under keys ending in "_q"; everything else is plain JSON.
def _encode(obj, enc):
    out = {}
    for k, v in obj.items():
        if k.endswith("_q"):
            out[k] = [enc(x) for x in v]
        elif k.endswith("_qs"):
            out[k] = [q2s(x) if isinstance(x, Fraction) else int(x) for x in v]
        elif isinstance(v, np.ndarray):
            out[k] = v.tolist()
        else:
            out[k] = v
    return out


def _decode(obj, dec):
    out = {}
    for k, v in obj.items():
        if k.endswith("_q"):
            out[k] = [dec(x) for x in v]
        elif k.endswith("_qs"):
            out[k] = [Fraction(x) if isinstance(x, str) else x for x in v]
        else:
            out[k] = v
    return out


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))


def _rand_basis(r, k, d, F, lo=-3, hi=3):
    while True:
        B = [F.vec(r.integers(lo, hi + 1, size=d).tolist()) for _ in range(k)]
        if rank(B, F) == k:
            return B


def _combo(r, B, F, lo=-5, hi=5):
    c = r.integers(lo, hi + 1, size=len(B)).tolist()
    return tuple(F.norm(sum((F(ci) * b[j] for ci, b in zip(c, B)), F.zero)) for j in range(len(B[0])))


def _off(r, basis, d, F, lo=-5, hi=5, point=None):
    """Random vector outside the span (or affine span through ``point``)."""
    while True:
        v = F.vec(r.integers(lo, hi + 1, size=d).tolist())
        probe = v if point is None else tuple(F.norm(a - b) for a, b in zip(v, point))
        if any(a != 0 for a in probe) and not basis.contains(probe):
            return v


def gen_instance(task: str, d: int, n: int, seed: int, **knobs) -> InstanceFile:
    if task not in TASKS:
        raise InvalidKnobs(f"unknown task {task!r}")
    if d < 1 or n < 0:
        raise InvalidKnobs("need d >= 1 and n >= 0")
    r = _rng(seed)
    F = Field.parse(str(knobs.get("field", "Q")))
    prov = {"seed": seed, "n": n, "d": d, "knobs": {k: v for k, v in sorted(knobs.items())}}
    fn = globals()[f"_gen_{task}"]
    inst = fn(r, d, n, F, knobs)
    inst.provenance = prov
    return inst


def _gen_span(r, d, n, F, kn):
    k = int(kn.get("dim", min(2, d)))
    out = int(kn.get("outliers", 0))
    if not 1 <= k <= d or out > n or (out and k == d):
        raise InvalidKnobs("need 1 <= dim <= d, outliers <= n, and dim < d when outliers > 0")
    B = _rand_basis(r, k, d, F)
    W = span_basis(B, F, d)
    vecs = []
    while len(vecs) < n - out:
        v = _combo(r, B, F)
        if any(a != 0 for a in v):
            vecs.append(v)
    vecs += [_off(r, W, d, F) for _ in range(out)]
    perm = r.permutation(len(vecs))
    vecs = [vecs[i] for i in perm]
    return InstanceFile("span", F, d, {"vectors_q": vecs}, {"witness_basis_q": list(W.rows), "outliers": out})


def _gen_affine(r, d, n, F, kn):
    k = int(kn.get("dim", min(1, d)))
    out = int(kn.get("outliers", 0))
    if not 0 <= k <= d or out > n or (out and k == d):
        raise InvalidKnobs("need 0 <= dim <= d and dim < d when outliers > 0")
    p0 = F.vec(r.integers(-3, 4, size=d).tolist())
    B = _rand_basis(r, k, d, F) if k else []
    W = span_basis(B, F, d)
    pts = []
    for _ in range(n - out):
        v = _combo(r, B, F) if k else tuple(F.zero for _ in range(d))
        pts.append(tuple(F.norm(a + b) for a, b in zip(v, p0)))
    pts += [_off(r, W, d, F, point=p0) for _ in range(out)]
    perm = r.permutation(len(pts))
    pts = [pts[i] for i in perm]
    gens = [p0] + [tuple(F.norm(a + b) for a, b in zip(p0, w)) for w in W.rows]
    return InstanceFile("affine", F, d, {"points_q": pts}, {"witness_generators_q": gens, "outliers": out})


def _gen_equations(r, d, n, F, kn):
    k = int(kn.get("rank", max(1, d - 1)))
    out = int(kn.get("outliers", 0))
    if not 1 <= k <= d or out > n:
        raise InvalidKnobs("need 1 <= rank <= d and outliers <= n")
    x0 = F.vec(r.integers(-3, 4, size=d).tolist())
    B = _rand_basis(r, k, d, F)
    A, b = [], []

    def dot(a):
        return F.norm(sum((ai * xi for ai, xi in zip(a, x0)), F.zero))
    while len(A) < n:
        a = _combo(r, B, F)
        if all(v == 0 for v in a):
            continue
        rhs = dot(a)
        if len(A) >= n - out:
            rhs = F.norm(rhs + F(int(r.integers(1, 4 if F.is_rational else F.p))))
        A.append(a)
        b.append(rhs)
    perm = r.permutation(n)
    A = [A[i] for i in perm]
    b = [b[i] for i in perm]
    return InstanceFile("equations", F, d, {"A_q": A, "b_qs": b},
                        {"witness_solution_q": [x0], "outliers": out})


def _gen_lp(r, d, n, F, kn):
    form = kn.get("form", "homogeneous")
    if form == "homogeneous":
        margin = float(kn.get("margin", 0.1))
        if not 0 <= margin < 1:
            raise InvalidKnobs("margin must lie in [0, 1)")
        z = r.normal(size=d)
        z /= np.linalg.norm(z)
        rows: List[np.ndarray] = []
        while sum(len(x) for x in rows) < n:
            a = r.normal(size=(max(2 * n, 64), d))
            a /= np.linalg.norm(a, axis=1)[:, None]
            rows.append(a[a @ z >= margin])
        A = np.concatenate(rows)[:n] if rows else np.zeros((0, d))
        return InstanceFile("lp", QQ, d, {"form": "homogeneous", "rows": A.tolist()},
                            {"witness_z": z.tolist(), "margin": margin})
    if form == "standard":
        U = int(kn.get("U", 5))
        A, b = [], []
        x0 = [Fraction(int(v), 4) for v in r.integers(0, 5, size=d)]
        while len(A) < n:
            a = [int(v) for v in r.integers(-U, U + 1, size=d)]
            lhs = sum(Fraction(ai) * xi for ai, xi in zip(a, x0))
            lo = math.ceil(lhs)
            if lo > U:
                continue
            A.append(a)
            b.append(int(r.integers(max(lo, -U), U + 1)))
        return InstanceFile("lp", QQ, d, {"form": "standard", "A": A, "b": b},
                            {"U": U, "witness_x_q": [tuple(x0)]})
    raise InvalidKnobs("lp form must be homogeneous or standard")


def grid_points_in_hull(V, X: int) -> list:
    """All points of the grid {a/X}^d inside Conv(V) (small d only)."""
    d = len(V[0])
    lo = [max(-X, math.floor(min(v[i] for v in V) * X)) for i in range(d)]
    hi = [min(X, math.ceil(max(v[i] for v in V) * X)) for i in range(d)]
    out = []
    for idx in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]):
        p = tuple(Fraction(i, X) for i in idx)
        if isinstance(convex_membership(p, V), Inside):
            out.append(p)
    return out


def _gen_pinhull(r, d, n, F, kn):
    X = int(kn.get("X", 8))
    shape = kn.get("shape", "simplex")
    if shape == "point":
        p = tuple(Fraction(int(v), X) for v in r.integers(-X, X + 1, size=d))
        pts = [p] * n
        return InstanceFile("pinhull", QQ, d, {"points_q": pts}, {"X": X, "witness_member_q": [p]})
    if shape != "simplex":
        raise InvalidKnobs("pinhull shape must be simplex or point")
    min_vol = Fraction(int(kn.get("min_volume_units", 8)), math.factorial(d) * X ** d)
    from .pinhull import simplex_volume
    while True:
        V = [tuple(Fraction(int(v), X) for v in r.integers(-X, X + 1, size=d)) for _ in range(d + 1)]
        if simplex_volume(V) >= min_vol:
            break
    G = grid_points_in_hull(V, X)
    idx = r.integers(0, len(G), size=max(0, n - d - 1)).tolist()
    pts = (list(V) + [G[i] for i in idx])[:n]
    return InstanceFile("pinhull", QQ, d, {"points_q": pts}, {"X": X, "witness_member_q": [V[0]],
                                                          "vertices_q": V})


def _gen_learn(r, d, n, F, kn):
    k = int(kn.get("dim", d - 1))
    neg = int(kn.get("negatives", n // 10))
    if not 0 <= k < d:
        raise InvalidKnobs("need 0 <= dim < d")
    if int(kn.get("through_origin", 0)):
        p0 = tuple(F.zero for _ in range(d))
    else:
        p0 = F.vec(r.integers(-3, 4, size=d).tolist())
    B = _rand_basis(r, k, d, F) if k else []
    W = span_basis(B, F, d)
    pos = []
    for _ in range(n):
        v = _combo(r, B, F) if k else tuple(F.zero for _ in range(d))
        pos.append(tuple(F.norm(a + b) for a, b in zip(v, p0)))
    negs = [_off(r, W, d, F, point=p0) for _ in range(neg)]
    pts = pos + negs
    labels = [1] * len(pos) + [0] * len(negs)
    perm = r.permutation(len(pts))
    gens = [p0] + [tuple(F.norm(a + b) for a, b in zip(p0, w)) for w in W.rows]
    return InstanceFile("learn", F, d, {"points_q": [pts[i] for i in perm], "labels": [labels[i] for i in perm]},
                        {"witness_generators_q": gens})
