"""Private Dunagan-Vempala solver for homogeneous systems <a_i, x> >= 0."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .errors import DimensionTooLarge, InsufficientRows, SolverFailed, ZeroVector
from .noise import NoiseMode, PrivacyLedger, PrivacyParams, RngStream, noisy_avg, sample_laplace

TINY = 1e-12


@dataclass
class HomogeneousLP:
    """Rows a_i (float64) with integer multiplicities."""

    rows: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.weights is None:
            self.weights = np.ones(len(self.rows), dtype=np.int64)
        else:
            self.weights = np.asarray(self.weights, dtype=np.int64)
        if len(self.rows) and np.any(np.linalg.norm(self.rows, axis=1) < TINY):
            raise ZeroVector("homogeneous system contains a zero row")

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    @property
    def n(self) -> int:
        return int(self.weights.sum())

    def normalized(self) -> np.ndarray:
        return normalize_rows(self.rows)


def normalize_rows(A: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(A, axis=1)
    n = np.where(n < TINY, 1.0, n)
    return A / n[:, None]


def rescale_rows(A: np.ndarray, ybar: np.ndarray) -> np.ndarray:
    """a -> a + <a, ybar> ybar for every row, i.e. A (I + ybar ybar^T)."""
    A = np.atleast_2d(A)
    return A + np.outer(A @ ybar, ybar)


@dataclass(frozen=True)
class ThresholdPolicy:
    Delta: float
    nu: float
    zeta: float
    Gamma: float
    T: int
    improve_cap: int
    perceptron_cap: int
    restarts: int
    noise: Optional[NoiseMode] = None
    name: str = "custom"

    @classmethod
    def paper_default(cls, d: int, params: PrivacyParams, rho0: float = None,
                      log_rho0: float = None, noise: NoiseMode = None) -> "ThresholdPolicy":
        """Concrete constants for every Theta(.) in the solver.

        ``log_rho0`` (natural log) may replace ``rho0`` when rho0 underflows.
        """
        eps, L = params.epsilon, math.log(1 / (params.beta * params.delta))
        if log_rho0 is None:
            log_rho0 = math.log(rho0)
        Delta = 1 / (500 * d)
        nu = (40 / eps) * d ** 2.5 * math.log(d + 1) * L
        zeta = (40 / eps) * d * d * L
        T = math.ceil(4 * d * (-log_rho0) + 8 * math.log(1 / params.beta))
        return cls(
            Delta=Delta, nu=nu, zeta=zeta, Gamma=2 * zeta + nu * T, T=T,
            improve_cap=math.ceil((8 / Delta ** 2) * math.log(3 * math.sqrt(d))),
            perceptron_cap=9_000_000 * d * d,
            restarts=math.ceil(8 * math.log(3 / params.beta)),
            noise=noise, name="paper-default")

    @classmethod
    def test_scale(cls, d: int, params: PrivacyParams, rho0: float = None,
                   log_rho0: float = None, noise: NoiseMode = None, **override) -> "ThresholdPolicy":
        """Desk-scale preset: the paper-default shapes with constant 4 for
        nu and zeta, T capped at 8, loop caps of 2000 and 3 restarts.
        Any field can be overridden by keyword."""
        eps, L = params.epsilon, math.log(1 / (params.beta * params.delta))
        if rho0 is None and log_rho0 is None:
            rho0 = 1 / (500 * d)
        if log_rho0 is None:
            log_rho0 = math.log(rho0)
        nu = (4 / eps) * d ** 2.5 * math.log(d + 1) * L
        zeta = (4 / eps) * d * d * L
        T = min(8, math.ceil(4 * d * (-log_rho0) + 8 * math.log(1 / params.beta)))
        vals = dict(Delta=1 / (500 * d), nu=nu, zeta=zeta, Gamma=2 * zeta + nu * T, T=T,
                    improve_cap=2000, perceptron_cap=2000, restarts=3, noise=noise,
                    name="test-scale")
        vals.update(override)
        if "Gamma" not in override:
            vals["Gamma"] = 2 * vals["zeta"] + vals["nu"] * vals["T"]
        return cls(**vals)

    def snapshot(self) -> dict:
        out = asdict(self)
        out["noise"] = None if self.noise is None else str(self.noise)
        return out


@dataclass
class SolveOutcome:
    x_star: np.ndarray
    halted: bool
    violated: int               # rows of the original system below the final margin
    margin: float
    rescales: int = 0
    improve_iters: int = 0
    perceptron_iters: int = 0
    deleted: int = 0
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)
    telemetry: dict = field(default_factory=dict)


def count_violations(A, x, margin: float, weights=None) -> int:
    """Number of normalized rows with <a_i, x/|x|> < margin."""
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx < TINY:
        raise ZeroVector("x must be nonzero")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    bad = normalize_rows(A) @ (x / nx) < margin
    if weights is None:
        return int(bad.sum())
    return int(np.asarray(weights)[bad].sum())


def roundness_oracle(A, resolution: int = 2000) -> float:
    """Grid lower bound on max over unit x of min_i <a_i/|a_i|, x>, d <= 3."""
    Abar = normalize_rows(np.atleast_2d(np.asarray(A, dtype=float)))
    d = Abar.shape[1]
    if d > 3:
        raise DimensionTooLarge("roundness oracle supports d <= 3")
    if d == 1:
        X = np.array([[1.0], [-1.0]])
    elif d == 2:
        t = np.linspace(0, 2 * math.pi, resolution, endpoint=False)
        X = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        k = max(8, int(math.sqrt(resolution)))
        th = np.linspace(0, math.pi, k)
        ph = np.linspace(0, 2 * math.pi, 2 * k, endpoint=False)
        TH, PH = np.meshgrid(th, ph)
        X = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=-1).reshape(-1, 3)
    return float((X @ Abar.T).min(axis=1).max())


def _weighted_count(mask, weights) -> float:
    return float(weights[mask].sum())


def improvement_phase(Abar, weights, policy: ThresholdPolicy, params: PrivacyParams,
                      rng: RngStream, ledger: PrivacyLedger, tel: dict) -> np.ndarray:
    """Find y with few rows satisfying <a, y/|y|> < -Delta."""
    eps, delta = params.epsilon, params.delta
    d = Abar.shape[1]
    y = rng.unit_vector(d)
    for _ in range(policy.restarts):
        y = rng.unit_vector(d)
        for _ in range(policy.improve_cap):
            tel["improve_iters"] = tel.get("improve_iters", 0) + 1
            ny = np.linalg.norm(y)
            if ny < TINY:
                break
            mask = Abar @ (y / ny) < -policy.Delta
            ledger.charge("laplace_count", eps)
            if _weighted_count(mask, weights) + sample_laplace(1 / eps, rng) <= policy.nu:
                tel["improve_broke"] = True
                return y
            u = noisy_avg(Abar, mask, eps, delta, rng, weights, ledger)
            if u is None:
                tel["bottom"] = tel.get("bottom", 0) + 1
                continue
            y = y - (u @ y) * u
    tel["improve_broke"] = False
    if np.linalg.norm(y) < TINY:
        y = rng.unit_vector(d)
    return y


def perceptron_phase(Abar, weights, policy: ThresholdPolicy, params: PrivacyParams,
                     rng: RngStream, ledger: PrivacyLedger, tel: dict = None):
    """Averaged perceptron from e_1. Returns (x, halted, iterations)."""
    if tel is None:
        tel = {}
    eps, delta = params.epsilon, params.delta
    d = Abar.shape[1]
    x = np.zeros(d)
    x[0] = 1.0
    for it in range(policy.perceptron_cap):
        nx = np.linalg.norm(x)
        if nx < TINY:
            mask = np.ones(len(Abar), dtype=bool)
        else:
            mask = Abar @ (x / nx) <= policy.Delta / 24
        ledger.charge("laplace_count", eps)
        if _weighted_count(mask, weights) + sample_laplace(1 / eps, rng) <= policy.zeta:
            return x, True, it
        u = noisy_avg(Abar, mask, eps, delta, rng, weights, ledger)
        if u is None:
            tel["bottom"] = tel.get("bottom", 0) + 1
            continue
        x = x + u
    return x, False, policy.perceptron_cap


def private_lp_homogeneous(A, rho0: Optional[float], policy: ThresholdPolicy,
                           params: PrivacyParams, rng: RngStream,
                           ledger: PrivacyLedger = None, check_rows: bool = True) -> SolveOutcome:
    """Find x != 0 with <a_i, x> >= 0 for most rows, privately.

    ``rho0`` only enters through ``policy.T``; it is accepted for the
    record.  Raises SolverFailed after more than T rescalings, carrying
    the last iterate B x in ``outcome``.
    """
    if not isinstance(A, HomogeneousLP):
        A = HomogeneousLP(A)
    if policy.noise is not None:
        rng = rng.with_noise(policy.noise)
    if ledger is None:
        ledger = PrivacyLedger()
    if check_rows and A.n <= 2 * policy.zeta:
        raise InsufficientRows(f"need more than 2*zeta = {2 * policy.zeta:.1f} rows, got {A.n}")
    d = A.d
    orig = A.rows
    cur = A.rows.copy()
    w = A.weights
    alive = np.ones(len(cur), dtype=bool)
    B = np.eye(d)
    final_margin = policy.Delta / 24 * 2.0 ** (-policy.T)
    tel: dict = {}
    rescales = 0
    p_iters = 0
    while True:
        Abar = normalize_rows(cur[alive])
        wa = w[alive]
        y = improvement_phase(Abar, wa, policy, params, rng, ledger, tel)
        ybar = y / np.linalg.norm(y)
        drop = Abar @ ybar < -policy.Delta
        idx = np.flatnonzero(alive)
        alive[idx[drop]] = False
        Abar, wa = Abar[~drop], wa[~drop]
        x, halted, it = perceptron_phase(Abar, wa, policy, params, rng, ledger, tel)
        p_iters += it
        xs = B @ x
        if halted or rescales + 1 > policy.T:
            viol = count_violations(orig, xs, final_margin, w) if np.linalg.norm(xs) > TINY else A.n
            out = SolveOutcome(xs, halted, viol, final_margin, rescales, tel.get("improve_iters", 0),
                               p_iters, int(w[~alive].sum()), ledger, tel)
            if halted:
                return out
            raise SolverFailed(f"rescaling budget T={policy.T} exhausted", out)
        M = np.eye(d) + np.outer(ybar, ybar)
        cur = cur @ M
        B = B @ M
        rescales += 1
