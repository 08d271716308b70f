from fractions import Fraction as Q

import pytest
from hypothesis import given, settings, strategies as st

from dplinalg.errors import DependentRows, FieldMismatch
from dplinalg.exact import (QQ, AffineSolutionSpace, FarkasWitness, Feasible, Field, Infeasible, Inside,
                            Outside, Solution, affine_membership, canonical_basis, convex_membership,
                            feasible_point, nonneg_solve, rank, solve_exact, span_basis)

from oracles import rank_gfp, rank_q, rref_q, span_set

GF2, GF5 = Field.prime(2), Field.prime(5)


def qv(*xs):
    return tuple(Q(x) for x in xs)


int_rows = st.integers(1, 4).flatmap(
    lambda d: st.lists(st.lists(st.integers(-4, 4), min_size=d, max_size=d), min_size=0, max_size=5))


def test_field_parse_and_str():
    assert str(Field.parse("Q")) == "Q"
    assert Field.parse("GF(7)") == Field.prime(7)
    with pytest.raises(ValueError):
        Field.prime(6)


def test_field_check_rejects_foreign_entries():
    with pytest.raises(FieldMismatch):
        QQ.check([(1.5, Q(1))])
    with pytest.raises(FieldMismatch):
        GF5.check([(7,)])
    GF5.check([(4, 0)])


def test_rank_examples():
    assert rank([], QQ) == 0
    assert rank([(1, 0, 0), (0, 1, 0), (0, 0, 1)], GF2) == 3
    assert rank([qv(1, 2), qv(2, 4)], QQ) == 1


@given(int_rows)
@settings(max_examples=150, deadline=None)
def test_rank_matches_sympy(rows):
    rows = [tuple(Q(a) for a in r) for r in rows]
    assert rank(rows, QQ) == rank_q(rows)


@given(int_rows)
@settings(max_examples=100, deadline=None)
def test_rank_gf3_matches_enumeration(rows):
    F = Field.prime(3)
    rows = [F.vec(r) for r in rows]
    d = len(rows[0]) if rows else 1
    assert rank(rows, F) == rank_gfp(rows, 3, d)


def test_canonical_basis_examples():
    T = canonical_basis([qv(1, 1), qv(0, 1)], QQ)
    assert T.rows == (qv(1, 0), qv(0, 1)) and T.pivots == (0, 1)
    T = canonical_basis([qv(2, 4)], QQ)
    assert T.rows == (qv(1, 2),) and T.pivots == (0,)
    T = canonical_basis([qv(0, 3, 3), qv(0, 0, 5)], QQ)
    assert T.rows == (qv(0, 1, 0), qv(0, 0, 1)) and T.pivots == (1, 2)


def test_canonical_basis_rejects_dependent_rows():
    with pytest.raises(DependentRows):
        canonical_basis([qv(1, 2), qv(2, 4)], QQ)


@given(int_rows)
@settings(max_examples=150, deadline=None)
def test_span_basis_matches_sympy_rref(rows):
    rows = [tuple(Q(a) for a in r) for r in rows]
    if not rows:
        return
    d = len(rows[0])
    B = span_basis(rows, QQ, d)
    R, piv = rref_q(rows, d)
    assert list(B.rows) == R and B.pivots == piv
    assert span_basis(B.rows, QQ, d) == B


@given(int_rows)
@settings(max_examples=80, deadline=None)
def test_span_basis_gf5_same_span_as_enumeration(rows):
    rows = [GF5.vec(r) for r in rows]
    if not rows:
        return
    d = len(rows[0])
    B = span_basis(rows, GF5, d)
    assert span_set(list(B.rows), 5, d) == span_set(rows, 5, d)
    for v in rows:
        assert B.contains(v)


def test_solve_exact_examples():
    assert solve_exact([qv(1, 0), qv(0, 1)], qv(3, 7), QQ) == Solution(qv(3, 7))
    s = solve_exact([(1, 1)], (0,), GF2)
    assert isinstance(s, AffineSolutionSpace)
    assert s.particular == (0, 0) and s.null_basis == ((1, 1),)
    assert isinstance(solve_exact([qv(1, 0), qv(1, 0)], qv(0, 1), QQ), Infeasible)


@given(int_rows, st.lists(st.integers(-4, 4), min_size=5, max_size=5))
@settings(max_examples=150, deadline=None)
def test_solve_exact_certificates(rows, bs):
    if not rows:
        return
    d = len(rows[0])
    A = [tuple(Q(a) for a in r) for r in rows]
    b = [Q(x) for x in bs[:len(A)]]
    s = solve_exact(A, b, QQ, d)

    def dot(a, x):
        return sum(ai * xi for ai, xi in zip(a, x))
    if isinstance(s, Solution):
        assert all(dot(a, s.x) == bi for a, bi in zip(A, b))
    elif isinstance(s, AffineSolutionSpace):
        assert all(dot(a, s.particular) == bi for a, bi in zip(A, b))
        assert all(dot(a, v) == 0 for a in A for v in s.null_basis)
        assert len(s.null_basis) == d - rank_q(A)
    else:
        assert rank_q([a + (bi,) for a, bi in zip(A, b)]) > rank_q(A)


def test_affine_membership_examples():
    assert affine_membership(qv(1, 1), [qv(0, 0), qv(2, 2)], QQ)
    assert not affine_membership(qv(1, 0), [qv(0, 0), qv(2, 2)], QQ)
    assert not affine_membership(qv(0, 0), [], QQ)


def test_convex_membership_examples():
    S = [qv(-1, 0), qv(1, 0), qv(0, 1)]
    r = convex_membership(qv(0, 0), S)
    assert isinstance(r, Inside)
    assert sum(r.coefficients) == 1 and all(c >= 0 for c in r.coefficients)
    assert tuple(sum(c * s[i] for c, s in zip(r.coefficients, S)) for i in range(2)) == qv(0, 0)
    assert isinstance(convex_membership(qv(2, 0), S), Outside)
    assert convex_membership(qv(3, 4), [qv(3, 4)]) == Inside((Q(1),))


pts2 = st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=6)


@given(pts2, st.tuples(st.integers(-6, 6), st.integers(-6, 6)), st.integers(1, 3))
@settings(max_examples=200, deadline=None)
def test_convex_membership_certificates(S, x, den):
    S = [qv(*s) for s in S]
    x = (Q(x[0], den), Q(x[1], den))
    r = convex_membership(x, S)
    if isinstance(r, Inside):
        c = r.coefficients
        assert sum(c) == 1 and all(v >= 0 for v in c)
        assert tuple(sum(ci * s[i] for ci, s in zip(c, S)) for i in range(2)) == x
    else:
        h = r.witness
        assert all(sum(hi * (si - xi) for hi, si, xi in zip(h, s, x)) > 0 for s in S)


def test_nonneg_solve_and_farkas():
    assert isinstance(nonneg_solve([qv(1, 1)], qv(2), 2), Feasible)
    r = nonneg_solve([qv(1, 1)], qv(-1), 2)
    assert isinstance(r, FarkasWitness)
    # w^T M >= 0 and w^T r < 0
    assert all(r.w[0] * a >= 0 for a in (1, 1)) and r.w[0] * -1 < 0


def test_feasible_point():
    x = feasible_point([qv(1, 1), qv(-1, 0)], qv(2, -1), 2)
    assert x is not None and x[0] + x[1] <= 2 and x[0] >= 1 and min(x) >= 0
    assert feasible_point([qv(1)], qv(-1), 1) is None
