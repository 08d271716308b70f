"""Seeded noise, the NoisyAVG mechanism and privacy bookkeeping.

Uniforms come from numpy's Philox4x64-10 keyed directly by the 64-bit seed.
Laplace draws use the inverse CDF on one uniform, Gaussians use Box-Muller
on two uniforms, so a port with the same uniform stream reproduces samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .errors import DeltaTooLarge, NonPositiveScale, NonUnitVector

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseMode:
    """Multiplier applied to every noise draw: 1 (paper), 0 (zeroed), or f."""

    factor: float = 1.0

    @classmethod
    def paper(cls):
        return cls(1.0)

    @classmethod
    def zeroed(cls):
        return cls(0.0)

    @classmethod
    def scaled(cls, f: float):
        return cls(float(f))

    def __str__(self):
        if self.factor == 1.0:
            return "paper"
        if self.factor == 0.0:
            return "zeroed"
        return f"scaled({self.factor!r})"

    @classmethod
    def parse(cls, text: str) -> "NoiseMode":
        if text == "paper":
            return cls.paper()
        if text == "zeroed":
            return cls.zeroed()
        if text.startswith("scaled(") and text.endswith(")"):
            return cls.scaled(float(text[7:-1]))
        raise ValueError(f"unknown noise mode {text!r}")


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for stream splitting."""
    ss = np.random.SeedSequence([seed & MASK64, *[k & MASK64 for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


class RngStream:
    """Counter-based uniform stream plus the active noise mode.

    Views created by ``with_noise`` share the underlying generator.
    """

    def __init__(self, seed: int, noise: NoiseMode = NoiseMode(), _gen=None):
        self.seed = seed & MASK64
        self.noise = noise
        self._gen = _gen if _gen is not None else np.random.Generator(
            np.random.Philox(key=self.seed))

    def with_noise(self, noise: NoiseMode) -> "RngStream":
        return RngStream(self.seed, noise, self._gen)

    def spawn(self, key: int) -> "RngStream":
        return RngStream(derive_seed(self.seed, key), self.noise)

    def uniform(self, size=None):
        """Uniform on the open interval (0, 1)."""
        u = self._gen.random(size)
        if size is None:
            while u == 0.0:
                u = self._gen.random()
            return u
        bad = u == 0.0
        while bad.any():
            u[bad] = self._gen.random(int(bad.sum()))
            bad = u == 0.0
        return u

    def unit_vector(self, d: int) -> np.ndarray:
        while True:
            g = self.standard_normal(d)
            n = np.linalg.norm(g)
            if n > 1e-12:
                return g / n

    def standard_normal(self, size: int) -> np.ndarray:
        u1 = self.uniform(size)
        u2 = self.uniform(size)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)


def laplace_from_uniform(u, b: float):
    """Inverse CDF of Laplace(0, b)."""
    w = np.asarray(u) - 0.5
    return -b * np.sign(w) * np.log1p(-2.0 * np.abs(w))


def sample_laplace(b: float, rng: RngStream, size=None):
    if not b > 0:
        raise NonPositiveScale(f"Laplace scale must be positive, got {b}")
    x = laplace_from_uniform(rng.uniform(size), b)
    x = x * rng.noise.factor
    return float(x) if size is None else x


def sample_gaussian(sigma: float, rng: RngStream, size=None):
    if not sigma > 0:
        raise NonPositiveScale(f"Gaussian scale must be positive, got {sigma}")
    n = 1 if size is None else size
    x = sigma * rng.standard_normal(n) * rng.noise.factor
    return float(x[0]) if size is None else x


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    beta: float = 0.1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")


def compose_advanced(k: int, eps: float, delta: float) -> Tuple[float, float]:
    """Total (eps_hat, 2k delta) for k adaptive (eps, delta) mechanisms."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k * delta >= 1:
        raise DeltaTooLarge(f"k*delta = {k * delta} >= 1")
    eps_hat = math.sqrt(2 * k * math.log(1 / (k * delta))) * eps + 2 * k * eps * eps
    return eps_hat, 2 * k * delta


@dataclass
class PrivacyLedger:
    """Append-only list of (mechanism, eps, delta) charges."""

    charges: List[Tuple[str, float, float]] = field(default_factory=list)

    def charge(self, name: str, eps: float, delta: float = 0.0) -> None:
        self.charges.append((name, float(eps), float(delta)))

    def __len__(self):
        return len(self.charges)

    def basic(self) -> Tuple[float, float]:
        return (sum(c[1] for c in self.charges), sum(c[2] for c in self.charges))

    def headline(self) -> Tuple[float, float]:
        """Advanced composition over all charges at the largest (eps, delta).

        Pure-eps charges count with delta 0; when every charge is pure the
        composition is taken with a nominal delta of 1e-9 per charge.
        """
        k = len(self.charges)
        if k == 0:
            return 0.0, 0.0
        eps = max(c[1] for c in self.charges)
        delta = max(c[2] for c in self.charges) or 1e-9
        return compose_advanced(k, eps, delta)

    def counts(self) -> dict:
        out: dict = {}
        for name, _, _ in self.charges:
            out[name] = out.get(name, 0) + 1
        return out


Selector = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], None]


def noisy_avg(V, g: Selector, eps: float, delta: float, rng: RngStream,
              weights: Optional[np.ndarray] = None, ledger: Optional[PrivacyLedger] = None):
    """NoisyAVG over the rows of V selected by g; None stands for bottom.

    ``g`` is a boolean mask, a vectorized predicate on the row array, or
    None for "select everything".  ``weights`` gives integer row
    multiplicities, so a duplicated row need not be stored twice.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if g is None:
        mask = np.ones(len(V), dtype=bool)
    elif callable(g):
        mask = np.asarray(g(V), dtype=bool)
    else:
        mask = np.asarray(g, dtype=bool)
    sel = V[mask]
    w = None if weights is None else np.asarray(weights)[mask]
    if len(sel):
        norms = np.linalg.norm(sel, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise NonUnitVector("NoisyAVG input rows must be unit vectors")
    count = float(len(sel) if w is None else w.sum())
    if ledger is not None:
        ledger.charge("noisy_avg", eps, delta)
    m_hat = count + sample_laplace(2 / eps, rng) - (2 / eps) * math.log(2 / delta)
    if m_hat <= 0:
        return None
    sigma = (4 / (eps * m_hat)) * math.sqrt(2 * math.log(8 / delta))
    if count == 0:
        avg = np.zeros(V.shape[1])
    elif w is None:
        avg = sel.mean(axis=0)
    else:
        avg = (sel * w[:, None]).sum(axis=0) / count
    return avg + sample_gaussian(sigma, rng, size=V.shape[1])
