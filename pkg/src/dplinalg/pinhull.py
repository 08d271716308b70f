"""Ellipsoid geometry, the Aff2Lin chart and the private point-in-hull search."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (AffinelyDependent, DatasetExhausted, DegenerateDirection,
                     DimensionTooLarge, InsufficientRows, LiftDegeneracy, SolverFailed)
from .exact import QQ, _rref, span_basis
from .noise import NoiseMode, PrivacyLedger, PrivacyParams, RngStream, sample_laplace
from .perceptron import ThresholdPolicy, private_lp_homogeneous
from .spans import lift_points, private_affine_span


# --- ellipsoids ---------------------------------------------------------------

@dataclass
class Ellipsoid:
    """{c + sum a_i v_i : sum (a_i / r_i)^2 <= 1}; ``axes`` holds v_i as rows."""

    center: np.ndarray
    axes: np.ndarray
    radii: np.ndarray

    @classmethod
    def ball(cls, q: int, radius: float, center=None) -> "Ellipsoid":
        c = np.zeros(q) if center is None else np.asarray(center, dtype=float)
        return cls(c, np.eye(q), np.full(q, float(radius)))

    @property
    def q(self) -> int:
        return len(self.radii)

    def shape(self) -> np.ndarray:
        """Q = sum r_i^2 v_i v_i^T."""
        return (self.axes.T * self.radii ** 2) @ self.axes

    def log_volume(self) -> float:
        q = self.q
        return (q / 2) * math.log(math.pi) - math.lgamma(q / 2 + 1) + float(np.log(self.radii).sum())

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        coords = (pts - self.center) @ self.axes.T / self.radii
        return (coords ** 2).sum(axis=1) <= 1 + tol

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points of the ellipsoid."""
        q = self.q
        g = rng.normal(size=(n, q))
        g /= np.linalg.norm(g, axis=1)[:, None]
        r = rng.random(n) ** (1 / q)
        return self.center + ((g * r[:, None]) * self.radii) @ self.axes


def _from_shape(center, Q) -> Ellipsoid:
    Q = (Q + Q.T) / 2
    w, V = np.linalg.eigh(Q)
    w = np.maximum(w, 0.0)
    return Ellipsoid(np.asarray(center, dtype=float), V.T.copy(), np.sqrt(w))


def half_ellipsoid_update(E: Ellipsoid, g) -> Ellipsoid:
    """Minimal ellipsoid containing E intersected with {z : <g, z - c> >= 0}."""
    g = np.asarray(g, dtype=float)
    q = E.q
    Q = E.shape()
    Qg = Q @ g
    s = float(g @ Qg)
    if not s > 1e-300 or np.linalg.norm(g) < 1e-12:
        raise DegenerateDirection("cut normal is numerically zero")
    b = Qg / math.sqrt(s)
    if q == 1:
        return Ellipsoid(E.center + b / 2, E.axes.copy(), E.radii / 2)
    c = E.center + b / (q + 1)
    Qn = (q * q / (q * q - 1.0)) * (Q - (2.0 / (q + 1)) * np.outer(b, b))
    return _from_shape(c, Qn)


def round_to_grid(c, Y: int) -> Tuple[Fraction, ...]:
    """Nearest multiple of 1/Y per coordinate, ties toward +infinity."""
    out = []
    for v in c:
        k = math.floor(Fraction(v) * Y + Fraction(1, 2))
        out.append(Fraction(k, Y))
    return tuple(out)


def inflate_and_round(E: Ellipsoid, gamma: float, Y: int) -> Ellipsoid:
    c = np.array([float(v) for v in round_to_grid(E.center, Y)])
    return Ellipsoid(c, E.axes.copy(), E.radii * (1 + gamma))


def center_shift_tolerance(E: Ellipsoid, gamma: float, d: int) -> float:
    """Largest sup-norm center shift still covered by a (1+gamma) inflation."""
    return gamma / (6 * d ** 1.5) * float(E.radii.min())


# --- grids and constants -------------------------------------------------------

def separation_roundness(Y: int, d: int) -> float:
    """ln rho for rho = 1 / (d (d!)^(2d+2) (2Y)^(2d^2+2d) Y^d)."""
    lf = math.lgamma(d + 1)
    return -(math.log(d) + (2 * d + 2) * lf + (2 * d * d + 2 * d) * math.log(2 * Y) + d * math.log(Y))


def pinhull_rounds(d: int, X: int) -> int:
    return math.ceil(8 * d * d * math.log((d + 1) * X) + 8)


def paper_grid_Y(d: int, X: int, T: int) -> int:
    """Smallest multiple of X at least 144 d^3.5 d! X^d d^(d/2) (2T)^(dT)."""
    if d >= 4:
        raise DimensionTooLarge("paper-default grid is refused for d >= 4; use the test-scale policy")
    K = 144 * math.factorial(d) * X ** d * (2 * T) ** (d * T)
    e = 7 + d                      # d^3.5 * d^(d/2) = d^(e/2)
    if e % 2 == 0:
        lo = K * d ** (e // 2)
    else:
        sq = K * K * d ** e        # ceil(sqrt(sq))
        r = math.isqrt(sq)
        lo = r if r * r == sq else r + 1
    return X * -(-lo // X)


def paper_log_Y(d: int, X: int, T: int) -> float:
    return (math.log(144) + 3.5 * math.log(d) + math.lgamma(d + 1) + d * math.log(X)
            + (d / 2) * math.log(d) + d * T * math.log(2 * T))


@dataclass(frozen=True)
class GridSpec:
    X: int
    Y: int
    d: int

    def __post_init__(self):
        if self.X < 1 or self.Y % self.X:
            raise ValueError("Y must be a positive multiple of X")

    def on_input_grid(self, p) -> bool:
        return all(abs(v) <= 1 and (Fraction(v) * self.X).denominator == 1 for v in p)


def simplex_volume(pts: Sequence[Sequence]) -> Fraction:
    """Exact volume of the simplex spanned by d+1 points in Q^d."""
    p0 = [Fraction(v) for v in pts[0]]
    M = [[Fraction(v) - w for v, w in zip(p, p0)] for p in pts[1:]]
    d = len(M)
    det = Fraction(1)
    M = [r[:] for r in M]
    for c in range(d):
        k = next((i for i in range(c, d) if M[i][c] != 0), None)
        if k is None:
            return Fraction(0)
        if k != c:
            M[c], M[k] = M[k], M[c]
            det = -det
        det *= M[c][c]
        for i in range(c + 1, d):
            f = M[i][c] / M[c][c]
            M[i] = [a - f * b for a, b in zip(M[i], M[c])]
    return abs(det) / math.factorial(d)


# --- Aff2Lin -------------------------------------------------------------------

@dataclass(frozen=True)
class AffineTransform:
    """Chart of a (k-1)-dim affine span; pivots c_1 < ... < c_{k-1}, then c_k = q."""

    pivots: Tuple[int, ...]
    T: Tuple[Tuple[Fraction, ...], ...]
    q: int

    @property
    def k(self) -> int:
        return len(self.T)

    def project(self, x: Sequence) -> Tuple[Fraction, ...]:
        return tuple(Fraction(x[c]) for c in self.pivots[:-1])

    def go_up(self, v: Sequence) -> Tuple[Fraction, ...]:
        acc = list(self.T[-1])
        for vi, t in zip(v, self.T[:-1]):
            vi = Fraction(vi)
            acc = [a + vi * b for a, b in zip(acc, t)]
        return tuple(acc[:-1])


def aff2lin(us: Sequence[Sequence]) -> AffineTransform:
    us = [tuple(Fraction(v) for v in u) for u in us]
    if not us:
        raise AffinelyDependent("need at least one point")
    q = len(us[0])
    k = len(us)
    M = lift_points(us, QQ)
    # put the all-ones column first so it is always a pivot, then columns 0..q-1
    order = [q] + list(range(q))
    reordered = [[row[j] for j in order] for row in M]
    R, piv = _rref(reordered, QQ, q + 1)
    if len(piv) != k:
        raise AffinelyDependent("points are affinely dependent")
    cols = [order[p] for p in piv]         # cols[0] == q
    pairs = sorted(zip(cols[1:], R[1:])) + [(q, R[0])]
    T = tuple(tuple(row[order.index(j)] for j in range(q + 1)) for _, row in pairs)
    return AffineTransform(tuple(c for c, _ in pairs), T, q)


# --- PinHull -------------------------------------------------------------------

LPPolicySource = Union[ThresholdPolicy, Callable[[int, PrivacyParams, float], ThresholdPolicy]]


@dataclass(frozen=True)
class PinHullPolicy:
    T: int
    Gamma: float
    gamma: float
    Y: int
    lp_policy: LPPolicySource
    max_affine_calls: int
    min_points: int = 1
    noise: Optional[NoiseMode] = None
    name: str = "custom"

    @classmethod
    def paper_default(cls, d: int, X: int, params: PrivacyParams, noise: NoiseMode = None) -> "PinHullPolicy":
        T = pinhull_rounds(d, X)
        Y = paper_grid_Y(d, X, T)
        lp = ThresholdPolicy.paper_default(d, params, log_rho0=separation_roundness(Y, d))

        def factory(q, p, log_rho, _Y=Y):
            return ThresholdPolicy.paper_default(q, p, log_rho0=log_rho)
        return cls(T=T, Gamma=lp.Gamma, gamma=1 / (4 * d * d), Y=Y, lp_policy=factory,
                   max_affine_calls=d, min_points=math.ceil(d * T * lp.Gamma),
                   noise=noise, name="paper-default")

    @classmethod
    def test_scale(cls, d: int, X: int, params: PrivacyParams, noise: NoiseMode = None,
                   lp_overrides: dict = None, **override) -> "PinHullPolicy":
        """Desk-scale preset: Y = 1024 X, small explicit LP thresholds."""
        lo = dict(nu=20.0, zeta=20.0, T=2, improve_cap=300, perceptron_cap=300,
                  restarts=math.ceil(8 * math.log(3 / params.beta)))
        lo.update(lp_overrides or {})

        def factory(q, p, log_rho):
            return ThresholdPolicy.test_scale(q, p, log_rho0=log_rho, **lo)
        probe = factory(d, params, -1.0)
        vals = dict(T=pinhull_rounds(d, X), Gamma=probe.zeta + probe.nu, gamma=1 / (4 * d * d),
                    Y=1024 * X, lp_policy=factory, max_affine_calls=d, min_points=1,
                    noise=noise, name="test-scale")
        vals.update(override)
        return cls(**vals)


@dataclass
class PinHullResult:
    point: Tuple[Fraction, ...]
    ledger: PrivacyLedger
    telemetry: dict


def _resolve(pol: LPPolicySource, q, params, log_rho) -> ThresholdPolicy:
    return pol if isinstance(pol, ThresholdPolicy) else pol(q, params, log_rho)


def pinhull(S: Sequence[Sequence], grid: GridSpec, params: PrivacyParams, policy: PinHullPolicy,
            rng: RngStream, ledger: PrivacyLedger = None) -> PinHullResult:
    """Privately return a point of Conv(S) for a multiset S of grid points."""
    if policy.noise is not None:
        rng = rng.with_noise(policy.noise)
    if ledger is None:
        ledger = PrivacyLedger()
    eps = params.epsilon
    d = grid.d
    pts = [tuple(Fraction(v) for v in p) for p in S]
    if len(pts) < policy.min_points:
        raise InsufficientRows(f"PinHull needs at least {policy.min_points} points")
    charts: List[AffineTransform] = []
    tel = {"rounds": 0, "affine_calls": 0, "flags": [], "max_radius": 0.0,
           "enclosure_misses": 0, "dropped_rows": 0, "lp_failures": 0}
    log_rho = separation_roundness(policy.Y, d)
    radius_cap = math.sqrt(d) * (2 * d) ** policy.T if policy.T < 300 else math.inf

    def go_all_up(v):
        for ch in reversed(charts):
            v = ch.go_up(v)
        return v

    def done(c, why):
        tel["exit"] = why
        return PinHullResult(tuple(go_all_up(c)), ledger, tel)

    q = d
    while True:
        if q == 0:
            return done((), "dimension_zero")
        E = Ellipsoid.ball(q, math.sqrt(q))
        c = tuple(Fraction(0) for _ in range(q))
        lp_pol = _resolve(policy.lp_policy, q, params, log_rho)
        P = np.array([[float(v) for v in p] for p in pts]).reshape(len(pts), q)
        for _ in range(policy.T):
            tel["rounds"] += 1
            diff = P - np.array([float(v) for v in c])
            keep = np.linalg.norm(diff, axis=1) >= 1e-12
            tel["dropped_rows"] += int((~keep).sum())
            ledger.charge("private_lp", eps, params.delta)
            x = None
            try:
                x = private_lp_homogeneous(diff[keep], None, lp_pol, params, rng).x_star
            except SolverFailed as e:
                tel["lp_failures"] += 1
                x = e.outcome.x_star
            except InsufficientRows:
                tel["flags"].append("lp_insufficient_rows")
            if x is None or np.linalg.norm(x) < 1e-12:
                x = np.eye(q)[0]
            side = diff @ x
            bad = side < 0
            ledger.charge("laplace_violations", eps)
            noisy = int(bad.sum()) + sample_laplace(1 / eps, rng)
            if noisy > policy.Gamma + (1 / eps) * math.log(1 / params.beta):
                return done(c, "violations_above_threshold")
            pts = [p for p, b in zip(pts, bad) if not b]
            P = P[~bad]
            if not pts:
                raise DatasetExhausted("every point was deleted")
            E = half_ellipsoid_update(E, x)
            E = inflate_and_round(E, policy.gamma, policy.Y)
            c = round_to_grid(E.center, policy.Y)
            tel["max_radius"] = max(tel["max_radius"], float(E.radii.max()))
            if tel["max_radius"] > radius_cap:
                tel["flags"].append("radius_bound_exceeded")
            tel["enclosure_misses"] += int((~E.contains(P, 1e-7)).sum())
        if tel["affine_calls"] >= policy.max_affine_calls:
            tel["flags"].append("affine_budget_exhausted")
            return done(c, "affine_budget_exhausted")
        tel["affine_calls"] += 1
        try:
            us = private_affine_span(pts, params, rng, QQ, q, ledger=ledger)
        except LiftDegeneracy:
            us = []
        if not us:
            tel["flags"].append("affine_span_failed")
            return done(c, "affine_span_failed")
        hull = span_basis(lift_points(us, QQ), QQ, q + 1)
        pts = [p for p in pts if hull.contains(p + (Fraction(1),))]
        if not pts:
            raise DatasetExhausted("no point lies in the released affine span")
        ch = aff2lin(us)
        charts.append(ch)
        pts = [ch.project(p) for p in pts]
        q = ch.k - 1
