"""Private feasibility for {Ax <= b, x >= 0}: perturb, homogenize, solve, reduce."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InconsistentEqualities
from .exact import QQ, Infeasible, Solution, _rref, nonneg_solve, Feasible, solve_exact
from .noise import PrivacyLedger, PrivacyParams, RngStream
from .perceptron import HomogeneousLP, ThresholdPolicy, private_lp_homogeneous
from .spans import LinearSystem, sanitize_linear_system

Row = Tuple[Fraction, ...]


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


@dataclass
class LPInstance:
    """Private rows A x <= b, implicit x >= 0, optional public rows P x <= q.

    Entries of A and b are bounded by U in absolute value.  Public rows only
    appear after a dimension reduction turns x_p >= 0 into general rows.
    """

    A: List[Row]
    b: List[Fraction]
    U: int
    d: int
    public: List[Tuple[Row, Fraction]] = field(default_factory=list)
    _groups: Optional[list] = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def from_ints(cls, A, b, U: int = None, d: int = None) -> "LPInstance":
        A = [tuple(Fraction(a) for a in r) for r in A]
        b = [Fraction(x) for x in b]
        if d is None:
            d = len(A[0])
        bound = max([abs(a) for r in A for a in r] + [abs(x) for x in b] + [1])
        if U is None:
            U = int(bound)
        if bound > U:
            raise ValueError(f"entries exceed the declared bound U={U}")
        return cls(A, b, U, d)

    @property
    def m(self) -> int:
        return len(self.A)

    def groups(self) -> List[Tuple[Row, Fraction, List[int]]]:
        """Distinct private rows (a, b) with the positions where they occur.

        Computed once; instances are treated as immutable.
        """
        if self._groups is None:
            out: dict = {}
            for i, key in enumerate(zip(self.A, self.b)):
                out.setdefault(key, []).append(i)
            self._groups = [(a, b, idx) for (a, b), idx in out.items()]
        return self._groups

    def violations(self, x: Sequence[Fraction]) -> int:
        """Exact count of private rows with a . x > b."""
        return sum(len(idx) for a, bi, idx in self.groups()
                   if sum((ai * xi for ai, xi in zip(a, x)), Fraction(0)) > bi)


def perturbation_eta(d: int, U: int) -> Fraction:
    return Fraction(1, 2 * (d + 1) * ((d + 1) * U) ** (d + 1))


def perturbation_roundness(d: int, U: int) -> Fraction:
    return perturbation_eta(d, U) / (d * U)


def homogenize(lp: LPInstance, eta: Fraction, dup: int):
    """Homogeneous rows over (x, x0) and the back-map (x, x0) -> x / x0.

    Private row i becomes (-a_i, b_i + eta); repeated private rows are
    stored once with their multiplicity as weight.  Each public constraint
    (x_j >= 0, x0 >= 0, and any public P x <= q) is one row of weight
    ``dup``.  Returns (HomogeneousLP, back_map, dup).
    """
    d = lp.d
    rows, weights = [], []
    for a, bi, idx in lp.groups():
        rows.append([float(-x) for x in a] + [float(bi + eta)])
        weights.append(len(idx))
    for j in range(d + 1):
        r = [0.0] * (d + 1)
        r[j] = 1.0
        rows.append(r)
        weights.append(dup)
    for p, q in lp.public:
        rows.append([float(-x) for x in p] + [float(q)])
        weights.append(dup)

    def back_map(xh) -> Optional[Tuple[Fraction, ...]]:
        xh = [Fraction(v) for v in xh]   # floats convert exactly
        if xh[-1] <= 0:
            return None
        return tuple(v / xh[-1] for v in xh[:-1])

    return HomogeneousLP(np.array(rows), np.array(weights)), back_map, dup


@dataclass
class ReductionState:
    lp: LPInstance
    U: int
    stack: List[tuple] = field(default_factory=list)
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)

    def lift(self, x: Sequence[Fraction]) -> Tuple[Fraction, ...]:
        """Map a point in the current variables back to the original ones."""
        x = list(x)
        for pivots, frees, dvals, coef in reversed(self.stack):
            full = [Fraction(0)] * (len(pivots) + len(frees))
            for k, f in enumerate(frees):
                full[f] = x[k]
            for p in pivots:
                full[p] = dvals[p] - sum((coef[p][f] * full[f] for f in frees), Fraction(0))
            x = full
        return tuple(x)


def _integerize(row: Sequence[Fraction], rhs: Fraction) -> Tuple[Row, Fraction]:
    """Multiply by the (positive) lcm of denominators."""
    den = 1
    for v in list(row) + [rhs]:
        den = _lcm(den, Fraction(v).denominator)
    return tuple(Fraction(v * den) for v in row), Fraction(rhs * den)


def reduce_dimension(state: ReductionState, eqs: LinearSystem) -> ReductionState:
    """Pin t variables using the equalities and substitute them everywhere."""
    lp = state.lp
    d = lp.d
    aug = [tuple(Fraction(a) for a in r) + (Fraction(b),) for r, b in eqs.rows]
    T, piv = _rref(aug, QQ, d + 1) if aug else ([], [])
    if piv and piv[-1] == d:
        raise InconsistentEqualities("equalities have no solution")
    t = len(piv)
    frees = [j for j in range(d) if j not in piv]
    dvals = {p: row[d] for row, p in zip(T, piv)}
    coef = {p: {f: row[f] for f in frees} for row, p in zip(T, piv)}

    def subst(a: Row, rhs: Fraction):
        new = [a[f] - sum((a[p] * coef[p][f] for p in piv), Fraction(0)) for f in frees]
        nrhs = rhs - sum((a[p] * dvals[p] for p in piv), Fraction(0))
        return _integerize(new, nrhs)

    A, b = [], []
    for a, rhs in zip(lp.A, lp.b):
        na, nb = subst(a, rhs)
        A.append(na)
        b.append(nb)
    public = [subst(p, q) for p, q in lp.public]
    # x_p >= 0 for an eliminated variable:  sum_f c_pf x_f <= d_p
    public += [_integerize([coef[p][f] for f in frees], dvals[p]) for p in piv]
    # 0 <= q with q >= 0 says nothing; keeping it would give a zero homogeneous row
    public = [(r, q) for r, q in public if any(r) or q < 0]
    bound = max([abs(v) for r in A for v in r] + [abs(v) for v in b] + [1])
    U = max(state.U ** max(t, 1), int(math.ceil(bound)))
    new_lp = LPInstance(A, b, U, d - t, public)
    return ReductionState(new_lp, U, state.stack + [(piv, frees, dvals, coef)], state.ledger)


@dataclass
class DPLPResult:
    x_star: Tuple[Fraction, ...]
    violated: int
    ledger: PrivacyLedger
    telemetry: dict


PolicySource = Union[ThresholdPolicy, Callable[[int, PrivacyParams, float], ThresholdPolicy]]


def j2_bound(d: int, params: PrivacyParams, C: float = 200.0) -> float:
    return C * (d * d / params.epsilon) * math.log(max(d, 1) / params.delta)


def _nonneg_point(C: List[Row], dv: List[Fraction], d: int):
    """A solution of C x = dv, preferring one with x >= 0."""
    if not C:
        return tuple(Fraction(0) for _ in range(d)), True
    res = nonneg_solve(C, dv, d)
    if isinstance(res, Feasible):
        return res.point, True
    sol = solve_exact(C, dv, QQ, d)
    if isinstance(sol, Infeasible):
        return None, False
    x = sol.x if isinstance(sol, Solution) else sol.particular
    return x, False


def solve_dp_lp(lp: LPInstance, params: PrivacyParams, policy: PolicySource, rng: RngStream,
                ledger: PrivacyLedger = None) -> DPLPResult:
    """Return x* >= 0 violating few constraints of a feasible system.

    ``policy`` is either a fixed ThresholdPolicy or a factory called as
    ``policy(dim, params, log_rho0)`` for each homogeneous solve.
    SolverFailed from the inner solver propagates.
    """
    if ledger is None:
        ledger = PrivacyLedger()
    state = ReductionState(lp, lp.U, ledger=ledger)
    tel: dict = {"iterations": 0, "flags": []}
    orig = lp

    def finish(x):
        x = state.lift(x)
        return DPLPResult(x, orig.violations(x), ledger, tel)

    while True:
        tel["iterations"] += 1
        cur = state.lp
        d, U = cur.d, state.U
        eta = perturbation_eta(d, U)
        log_rho = math.log(eta.numerator) - math.log(eta.denominator) - math.log(d * U)
        pol = policy if isinstance(policy, ThresholdPolicy) else policy(d + 1, params, log_rho)
        dup = math.ceil(2 * pol.Gamma) + 1
        H, back, _ = homogenize(cur, eta, dup)
        out = private_lp_homogeneous(H, math.exp(log_rho), pol, params, rng, ledger)
        x = back(out.x_star)
        if x is None:
            tel["flags"].append("nonpositive_x0")
            x = tuple(Fraction(0) for _ in range(d))
        if any(v < 0 for v in x):
            tel["flags"].append("clamped_negative")
            x = tuple(max(v, Fraction(0)) for v in x)
        J1, J2 = [], []
        for a, bi, idx in cur.groups():
            lhs = sum((ai * xi for ai, xi in zip(a, x)), Fraction(0))
            if lhs <= bi:
                J1 += idx
            elif lhs <= bi + eta:
                J2 += idx
        J2.sort()
        tel.setdefault("J2_sizes", []).append(len(J2))
        if len(J2) <= j2_bound(d, params):
            return finish(x)
        eqs = LinearSystem([(cur.A[i], cur.b[i]) for i in J2], d, QQ)
        san = sanitize_linear_system(eqs, params, rng, ledger=ledger)
        t = len(san.rows)
        if t == 0:
            tel["flags"].append("empty_sanitized_system")
            return finish(x)
        if t == d or len(J1) < pol.Gamma:
            if t < d:
                tel["flags"].append("few_satisfied_rows")
            pt, nonneg = _nonneg_point(san.A, san.b, d)
            if pt is None:
                tel["flags"].append("inconsistent_sanitized_system")
                return finish(x)
            if not nonneg:
                tel["flags"].append("negative_solution")
            return finish(pt)
        state = reduce_dimension(state, san)
