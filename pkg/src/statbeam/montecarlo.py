"""Monte Carlo oracles for ergodic rates and quadratic-form densities.

Samples are generated in fixed-size blocks. Block ``b`` of user ``u``
draws from a Philox stream keyed by ``(seed, u, b)``, so any block can be
produced independently of the others, and block statistics are merged
by a fixed-order pairwise reduction. The estimate therefore depends only
on ``(inputs, seed, samples)`` and never on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import BeamformerSet, as_covariance, effective_spectrum_general

BLOCK_SIZE = 1 << 15
MIN_RATE_SAMPLES = 1000
MIN_DENSITY_SAMPLES = 10_000


class MonteCarloError(ValueError):
    pass


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class _Moments:
    n: int
    mean: float
    m2: float

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        mean = float(np.mean(values))
        return cls(values.size, mean, float(np.sum((values - mean) ** 2)))

    def merge(self, other: "_Moments") -> "_Moments":
        # Chan et al. parallel variance update.
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return _Moments(n, mean, m2)


def pairwise_reduce(parts: list[_Moments]) -> _Moments:
    """Merge block moments as a balanced binary tree in index order."""
    if not parts:
        raise MonteCarloError("nothing to reduce")
    while len(parts) > 1:
        merged = [parts[k].merge(parts[k + 1]) for k in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def block_stream(seed: int, user: int, block: int) -> np.random.Generator:
    """Counter-based generator for one ``(seed, user, block)`` cell."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(user), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def _block_sizes(samples: int) -> list[int]:
    full, rest = divmod(samples, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def _run_blocks(fn, sizes: list[int], workers: int) -> list[_Moments]:
    if workers <= 1 or len(sizes) == 1:
        return [fn(b, n) for b, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def _estimate(parts: list[_Moments]) -> McEstimate:
    total = pairwise_reduce(parts)
    var = total.m2 / (total.n - 1) if total.n > 1 else 0.0
    return McEstimate(mean=total.mean, stderr=math.sqrt(var / total.n), samples=total.n)


def instantaneous_rates(h: np.ndarray, w: np.ndarray, user: int, rho: float) -> np.ndarray:
    """Per-realization rate of ``user``; rows of ``h`` are channel draws."""
    m = w.shape[1]
    gains = np.abs(h.conj() @ w) ** 2
    scale = rho / m
    interference = gains.sum(axis=1) - gains[:, user]
    return np.log1p(scale * gains[:, user] / (1.0 + scale * interference))


def mc_ergodic_rate(sigmas: Sequence, ws: BeamformerSet, user: int, rho: float,
                    samples: int, seed: int, workers: int = 1) -> McEstimate:
    """Monte Carlo estimate of the ergodic rate of ``user``.

    Uses the direct definition ``log(1 + S / (1 + I))`` on channel draws
    ``h = Sigma^{1/2} g``.
    """
    if samples < MIN_RATE_SAMPLES:
        raise MonteCarloError(f"need at least {MIN_RATE_SAMPLES} samples, got {samples}")
    if rho <= 0:
        raise MonteCarloError("rho must be positive")
    sigma = as_covariance(sigmas[user])
    root_t = sigma.sqrt.T
    w = ws.matrix
    m = sigma.dim

    def block(b: int, n: int) -> _Moments:
        rng = block_stream(seed, user, b)
        h = _complex_gaussian(rng, (n, m)) @ root_t
        return _Moments.of(instantaneous_rates(h, w, user, rho))

    return _estimate(_run_blocks(block, _block_sizes(samples), workers))


def mc_ergodic_rate_factored(sigmas: Sequence, ws: BeamformerSet, user: int, rho: float,
                             samples: int, seed: int) -> McEstimate:
    """Cross-check estimator built on the magnitude/direction factorization.

    Draws ``||g||^2 ~ Gamma(M, 1)`` and an independent isotropic unit
    direction ``u``, then averages
    ``log(1 + c X u^H L u) - log(1 + c X u^H Lt u)`` with the effective
    spectra ``L`` and ``Lt`` placed on the diagonal.
    """
    if samples < MIN_RATE_SAMPLES:
        raise MonteCarloError(f"need at least {MIN_RATE_SAMPLES} samples, got {samples}")
    sigma = as_covariance(sigmas[user])
    spec = effective_spectrum_general(sigma, ws, user)
    m = ws.users
    lam = spec.signal_plus_interference
    lam_t = spec.interference_only
    scale = rho / m
    parts = []
    for b, n in enumerate(_block_sizes(samples)):
        rng = block_stream(seed, user, b)
        mag = rng.gamma(shape=len(lam), scale=1.0, size=n)
        z = _complex_gaussian(rng, (n, len(lam)))
        u2 = np.abs(z) ** 2
        u2 /= u2.sum(axis=1, keepdims=True)
        vals = np.log1p(scale * mag * (u2 @ lam)) - np.log1p(scale * mag * (u2 @ lam_t))
        parts.append(_Moments.of(vals))
    return _estimate(parts)


class EmpiricalCdf:
    """Empirical distribution of a scalar sample."""

    def __init__(self, values):
        self.values = np.sort(np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return self.values.size

    def __call__(self, y):
        return np.searchsorted(self.values, y, side="right") / self.values.size

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def ks_distance(self, cdf) -> float:
        """Kolmogorov-Smirnov distance to a continuous reference ``cdf``."""
        n = self.values.size
        ref = np.asarray(cdf(self.values), dtype=float)
        upper = np.arange(1, n + 1) / n - ref
        lower = ref - np.arange(n) / n
        return float(max(upper.max(), lower.max()))

    def ks_uniform(self, lo: float, hi: float) -> float:
        return self.ks_distance(lambda y: np.clip((y - lo) / (hi - lo), 0.0, 1.0))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value ``c(alpha) / sqrt(n)``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c / math.sqrt(n)


def mc_quadratic_form_density(spectrum, samples: int, seed: int) -> EmpiricalCdf:
    """Empirical CDF of ``Y = sum_j L_j |u_j|^2`` for isotropic unit ``u``.

    The direction is a normalized i.i.d. complex Gaussian vector.
    """
    lam = np.sort(np.asarray(spectrum, dtype=float))[::-1]
    if lam.size < 2:
        raise MonteCarloError("spectrum needs at least two entries")
    if samples < MIN_DENSITY_SAMPLES:
        raise MonteCarloError(f"need at least {MIN_DENSITY_SAMPLES} samples, got {samples}")
    if np.any(lam < 0):
        raise MonteCarloError("spectrum must be nonnegative")
    if not np.any(lam > 0):
        raise MonteCarloError("all-zero spectrum has a degenerate distribution")
    values = []
    for b, n in enumerate(_block_sizes(samples)):
        rng = block_stream(seed, 0, b)
        z = _complex_gaussian(rng, (n, lam.size))
        u2 = np.abs(z) ** 2
        values.append((u2 @ lam) / u2.sum(axis=1))
    return EmpiricalCdf(np.concatenate(values))
