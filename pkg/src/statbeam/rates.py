"""Closed-form and asymptotic ergodic rates for linear statistical beamforming.

All rates are in nats/s/Hz. ``rho`` is the total transmit power, split
equally over the M users, so every per-user SNR scale is ``rho / M``.

The central identity is ``E[log(1 + c X)] = exp_e1(1 / c)`` for
``X ~ Exp(1)``; a weighted sum of independent exponentials with distinct
weights has a partial-fraction density, which is what the closed forms
expand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .channel import (
    BeamformerSet,
    ChannelError,
    LinkStatistics,
    as_covariance,
    effective_spectrum_general,
    effective_spectrum_m2,
    link_statistics,
)
from .numerics import DomainError, exp_e1

CLUSTER_RTOL = 1e-6
CLUSTER_SPREAD = 1e-7
CONFLUENT_RTOL = 1e-5
CS_SLACK = 1e-12

METHODS = (
    "closed-form",
    "monte-carlo",
    "high-snr-asymptote",
    "low-snr-asymptote",
    "large-M-asymptote",
)


class RateError(ValueError):
    pass


class UnboundedRateError(RateError):
    """The requested high-SNR asymptote diverges (no interference)."""


@dataclass
class RateReport:
    per_user: np.ndarray
    method: str
    stderr: Optional[np.ndarray] = None
    sum: float = field(init=False)

    def __post_init__(self):
        self.per_user = np.asarray(self.per_user, dtype=float)
        if self.method not in METHODS:
            raise RateError(f"unknown rate method {self.method!r}")
        if not np.all(np.isfinite(self.per_user)):
            raise RateError("rates must be finite")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
        self.sum = float(math.fsum(self.per_user))


@dataclass(frozen=True)
class SinrBreakdown:
    signal: float
    interference_plus_noise: float
    sinr: float
    rate: float


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0 and math.isfinite(rho)):
        raise RateError(f"rho must be a positive finite number, got {rho}")
    return rho


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def _scaled_term(lam, nu):
    """``lam * exp_e1(nu / lam)``, zero where ``lam == 0`` (vectorized)."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    pos = lam > 0
    if np.any(pos):
        out[pos] = lam[pos] * exp_e1(nu / lam[pos])
    return out


def confluent_term(lam, nu):
    """Derivative of ``lam * exp_e1(nu / lam)`` in ``lam``: ``(1 - x) exp_e1(x) + 1``.

    This is ``E[log(1 + lam Y / nu)]`` for ``Y ~ Gamma(2, 1)``, i.e. the
    two-eigenvalue expectation when both eigenvalues equal ``lam``.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    pos = lam > 0
    if np.any(pos):
        x = nu / lam[pos]
        out[pos] = (1.0 - x) * exp_e1(x) + 1.0
    return out if out.ndim else float(out)


def _pair_expectation(lam1, lam2, nu):
    """``E[log(1 + (lam1 X1 + lam2 X2) / nu)]`` for i.i.d. ``Exp(1)`` X's.

    Vectorized; ``lam1 >= lam2 >= 0``. Near-equal pairs use the confluent
    form at the midpoint, which is accurate to second order in the gap.
    """
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    gap = lam1 - lam2
    close = gap <= CONFLUENT_RTOL * lam1
    out = np.zeros(np.broadcast(lam1, lam2).shape)
    far = ~close & (lam1 > 0)
    if np.any(far):
        l1, l2 = lam1[far], lam2[far]
        out[far] = (_scaled_term(l1, nu) - _scaled_term(l2, nu)) / (l1 - l2)
    near = close & (lam1 > 0)
    if np.any(near):
        out[near] = confluent_term(0.5 * (lam1[near] + lam2[near]), nu)
    return out


def _spread_clusters(lam: np.ndarray) -> tuple[np.ndarray, int]:
    """Split near-equal eigenvalues multiplicatively by (1 +/- n * 1e-7).

    Returns the perturbed values and the size of the largest cluster.
    """
    lam = np.sort(lam)[::-1].copy()
    if lam.size < 2:
        return lam, lam.size
    tol = CLUSTER_RTOL * lam[0]
    largest = 1
    start = 0
    for k in range(1, lam.size + 1):
        if k == lam.size or lam[start] - lam[k] >= tol:
            size = k - start
            largest = max(largest, size)
            if size > 1:
                offsets = np.arange(size) - 0.5 * (size - 1)
                lam[start:k] = lam[start:k] * (1.0 - offsets * CLUSTER_SPREAD)
            start = k
    return lam, largest


def _quadrature_expectation(lam: np.ndarray, nu: float) -> float:
    """``E[log(1 + sum lam_k X_k / nu)]`` by quadrature of the Laplace form.

    Uses ``E[log(1 + Y)] = int_0^inf e^{-s} (1 - E[e^{-sY}]) / s ds`` with
    ``s = e^t``; valid for any multiplicities.
    """
    c = lam[lam > 0] / nu
    if c.size == 0:
        return 0.0

    def integrand(t):
        s = math.exp(t)
        return math.exp(-s) * -math.expm1(-float(np.sum(np.log1p(s * c))))

    lo = -math.log(c.sum()) - 40.0
    val, _ = integrate.quad(integrand, lo, 4.0, limit=400, epsabs=1e-14, epsrel=1e-13)
    return val


def expected_log_term(spectrum, rho: float, m: int) -> float:
    """``E[log(1 + (rho/m) g^H diag(spectrum) g)]`` with ``g`` i.i.d. CN(0, 1).

    Evaluated by the distinct-eigenvalue partial-fraction sum over the
    strictly positive eigenvalues. Pairs of near-equal eigenvalues are
    split by a relative 1e-7 perturbation; clusters of three or more fall
    back to quadrature, where the partial fractions lose all precision.
    """
    rho = _check_rho(rho)
    lam = np.asarray(spectrum, dtype=float)
    lam = lam[lam > 0]
    nu = m / rho
    if lam.size == 0:
        return 0.0
    if lam.size == 1:
        return float(exp_e1(nu / lam[0]))
    if lam.size == 2:
        hi, lo = max(lam), min(lam)
        return float(_pair_expectation(np.array([hi]), np.array([lo]), nu)[0])
    lam, largest = _spread_clusters(lam)
    if largest > 2:
        return _quadrature_expectation(lam, nu)
    x = exp_e1(nu / lam)
    parts = []
    for k in range(lam.size):
        others = np.delete(lam, k)
        parts.append(np.prod(lam[k] / (lam[k] - others)) * x[k])
    return float(math.fsum(parts))


# ---------------------------------------------------------------------------
# Two-user closed form
# ---------------------------------------------------------------------------

def _rate_m2_arrays(a, b, c, rho: float):
    """Vectorized two-user ergodic rate from quadratic-form statistics."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    return np.clip(_signal_term_m2(a, b, c, rho) - _interference_term_m2(b, rho), 0.0, None)


def _signal_term_m2(a, b, c, rho: float):
    """``E[log(1 + (rho/2) h^H (w1 w1^H + w2 w2^H) h)]`` from ``(A, B, C)``."""
    root = np.hypot(a - b, 2.0 * c)
    lam1 = 0.5 * (a + b + root)
    det = np.clip(a * b - c * c, 0.0, None)
    lam2 = np.divide(det, lam1, out=np.zeros_like(lam1), where=lam1 > 0)
    lam2 = np.minimum(lam2, lam1)
    return _pair_expectation(lam1, lam2, 2.0 / rho)


def _interference_term_m2(b, rho: float):
    """``E[log(1 + (rho/2) |h^H w2|^2)]`` from ``B``."""
    b = np.asarray(b, dtype=float)
    out = np.zeros_like(b)
    pos = b > 0
    if np.any(pos):
        out[pos] = exp_e1((2.0 / rho) / b[pos])
    return out


def ergodic_rate_from_stats(stats: LinkStatistics, rho: float) -> float:
    """Two-user ergodic rate of one link given its ``(A, B, C)``."""
    rho = _check_rho(rho)
    return float(_rate_m2_arrays(stats.A, stats.B, stats.C, rho))


def ergodic_rate_m2(sigma_i, w_i, w_j, rho: float) -> float:
    """Ergodic rate of user ``i`` in the two-user case (nats/s/Hz).

    Parameters
    ----------
    sigma_i : CovarianceMatrix or array_like
        2x2 positive definite covariance of user ``i``.
    w_i, w_j : array_like
        Unit-norm beamformers of user ``i`` and of the other user.
    rho : float
        Total transmit power (linear SNR).
    """
    rho = _check_rho(rho)
    sigma_i = as_covariance(sigma_i)
    if sigma_i.dim != 2:
        raise RateError(f"ergodic_rate_m2 needs M = 2, got M = {sigma_i.dim}")
    sigma_i.require_positive_definite()
    return ergodic_rate_from_stats(link_statistics(sigma_i, w_i, w_j), rho)


def _two_user_stats(sigmas, ws: BeamformerSet) -> list[LinkStatistics]:
    return [
        link_statistics(sigmas[0], ws[0], ws[1]),
        link_statistics(sigmas[1], ws[1], ws[0]),
    ]


# ---------------------------------------------------------------------------
# General M
# ---------------------------------------------------------------------------

def ergodic_rate_general(sigma_i, ws: BeamformerSet, user: int, rho: float) -> float:
    """Ergodic rate of ``user`` for any M from the effective spectra."""
    rho = _check_rho(rho)
    sigma_i = as_covariance(sigma_i)
    if ws.users < 2:
        raise RateError("need at least two users")
    spec = effective_spectrum_general(sigma_i, ws, user)
    m = ws.users
    total = expected_log_term(spec.signal_plus_interference, rho, m)
    interf = expected_log_term(spec.interference_only, rho, m)
    return max(total - interf, 0.0)


def closed_form_report(sigmas: Sequence, ws: BeamformerSet, rho: float) -> RateReport:
    """Per-user closed-form rates; uses the two-user formula when M = 2."""
    sigmas = [as_covariance(s) for s in sigmas]
    if len(sigmas) != ws.users:
        raise RateError("need one covariance per user")
    if ws.users == 2 and ws.dim == 2:
        rates = [ergodic_rate_m2(sigmas[0], ws[0], ws[1], rho),
                 ergodic_rate_m2(sigmas[1], ws[1], ws[0], rho)]
    else:
        rates = [ergodic_rate_general(sigmas[i], ws, i, rho) for i in range(ws.users)]
    return RateReport(per_user=np.array(rates), method="closed-form")


# ---------------------------------------------------------------------------
# SNR extremes
# ---------------------------------------------------------------------------

def low_snr_rate(stats: LinkStatistics, rho: float) -> float:
    """First-order small-``rho`` rate ``(rho / 2) * A`` (two users)."""
    rho = _check_rho(rho)
    return 0.5 * rho * stats.A


def _log_ratio_over_gap(t):
    """``-t log(t) / (1 - t)`` on ``[0, 1]`` with limits 0 at t=0 and 1 at t=1."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    u = t - 1.0
    mid = (t > 0) & (np.abs(u) > 1e-8)
    close = np.abs(u) < 0.5
    logs = np.array(np.log(np.where(t > 0, t, 1.0)), dtype=float)
    logs[close] = np.log1p(u[close])
    out[mid] = t[mid] * logs[mid] / u[mid]
    near = np.abs(u) <= 1e-8
    out[near] = 1.0 + 0.5 * u[near]
    out[t <= 0] = 0.0
    return out


def _high_snr_arrays(a, b, c):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    root = np.hypot(a - b, 2.0 * c)
    lam1 = 0.5 * (a + b + root)
    det = np.clip(a * b - c * c, 0.0, None)
    lam2 = np.minimum(det / lam1, lam1)
    # [L1 log L1 - L2 log L2] / (L1 - L2) = log L1 - t log t / (1 - t), t = L2 / L1
    return np.log(lam1 / b) + _log_ratio_over_gap(lam2 / lam1)


def high_snr_rate_m2(stats: LinkStatistics) -> float:
    """High-SNR limit of the two-user ergodic rate.

    Raises
    ------
    UnboundedRateError
        When ``B == 0``: without interference the rate grows without bound.
    """
    if stats.B <= 0:
        raise UnboundedRateError("high-SNR rate diverges when B = 0 (no interference)")
    if stats.A + stats.B <= 0:
        raise RateError("degenerate link statistics")
    return float(_high_snr_arrays(stats.A, stats.B, stats.C))


def high_snr_rate_m2_gd(stats: LinkStatistics) -> float:
    """The same limit via ``g(d) / 2 + log(1 + A / B) - log 2``."""
    if stats.B <= 0:
        raise UnboundedRateError("high-SNR rate diverges when B = 0 (no interference)")
    d = semi_metric_d(stats)
    if d == 0.0:
        # g(0+) / 2 = log 2 cancels the offset.
        return math.log1p(stats.A / stats.B)
    return 0.5 * g_func(d) + math.log1p(stats.A / stats.B) - math.log(2.0)


def semi_metric_d(stats: LinkStatistics) -> float:
    """Semi-metric ``sqrt(4 (AB - C^2)) / (A + B)`` in ``[0, 1]``."""
    a, b, c = stats.A, stats.B, stats.C
    det = a * b - c * c
    if det < -CS_SLACK * max(a * b, 1.0):
        raise RateError(f"link statistics violate C^2 <= AB (AB - C^2 = {det:.3e})")
    if a + b <= 0:
        return 0.0
    return float(min(1.0, 2.0 * math.sqrt(max(det, 0.0)) / (a + b)))


def _check_unit_interval(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)) or np.any(z > 1):
        raise DomainError("argument must lie in (0, 1]")
    return z


def _atanh_over_s(z):
    # s = sqrt(1 - z^2); atanh(s) = log((1 + s) / z) avoids the 1 - s cancellation.
    s = np.sqrt((1.0 - z) * (1.0 + z))
    out = np.ones_like(z)
    pos = s > 0
    out[pos] = (np.log1p(s[pos]) - np.log(z[pos])) / s[pos]
    return out


def f_func(z):
    """``f(z) = log((1 + s) / (1 - s)) / s``, ``s = sqrt(1 - z^2)``; ``f(1) = 2``."""
    z = _check_unit_interval(z)
    out = 2.0 * _atanh_over_s(z)
    return float(out) if out.ndim == 0 else out


def g_func(z):
    """``g(z) = f(z) + 2 log z``; increasing from ``2 log 2`` (z -> 0) to 2."""
    z = _check_unit_interval(z)
    out = 2.0 * _atanh_over_s(z) + 2.0 * np.log(z)
    return float(out) if out.ndim == 0 else out


def _log_over_gap(k: float) -> float:
    """``log(k) / (k - 1)`` with the limit 1 at ``k = 1``."""
    u = k - 1.0
    if abs(u) < 1e-8:
        return 1.0 - 0.5 * u
    return math.log1p(u) / u


def high_snr_sum_rate_common_basis(kappa1: float, kappa2: float) -> float:
    """Optimal high-SNR sum-rate when both covariances share an eigenbasis."""
    if not kappa1 > 1:
        raise RateError("kappa1 must exceed 1")
    if not kappa2 > 0:
        raise RateError("kappa2 must be positive")
    big, small = (kappa1, kappa2) if kappa1 >= kappa2 else (kappa2, kappa1)
    return big * _log_over_gap(big) + _log_over_gap(small)


# ---------------------------------------------------------------------------
# Large-M asymptote
# ---------------------------------------------------------------------------

def asymptotic_sinr(sigmas: Sequence, ws: BeamformerSet, user: int, rho: float) -> SinrBreakdown:
    """Deterministic-equivalent SINR of ``user`` as M grows."""
    rho = _check_rho(rho)
    sigma = as_covariance(sigmas[user])
    m = ws.users
    if sigma.dim != ws.dim:
        raise ChannelError("covariance and beamformer dimensions differ")
    w = ws.matrix
    loads = np.real(np.einsum("ki,kl,li->i", w.conj(), sigma.entries, w))
    loads = np.clip(loads, 0.0, None)
    scale = rho / m
    signal = scale * loads[user]
    interference = 1.0 + scale * (loads.sum() - loads[user])
    sinr = signal / interference
    return SinrBreakdown(signal=float(signal), interference_plus_noise=float(interference),
                         sinr=float(sinr), rate=float(math.log1p(sinr)))


def asymptotic_report(sigmas: Sequence, ws: BeamformerSet, rho: float) -> RateReport:
    rates = [asymptotic_sinr(sigmas, ws, i, rho).rate for i in range(ws.users)]
    return RateReport(per_user=np.array(rates), method="large-M-asymptote")


def low_snr_report(sigmas: Sequence, ws: BeamformerSet, rho: float) -> RateReport:
    """``(rho / M) w_i^H S_i w_i`` per user."""
    rho = _check_rho(rho)
    m = ws.users
    rates = [rho / m * as_covariance(sigmas[i]).quad(ws[i]).real for i in range(m)]
    return RateReport(per_user=np.array(rates), method="low-snr-asymptote")


def high_snr_report(sigmas: Sequence, ws: BeamformerSet) -> RateReport:
    if ws.users != 2 or ws.dim != 2:
        raise RateError("high-SNR closed form needs M = 2")
    stats = _two_user_stats([as_covariance(s) for s in sigmas], ws)
    return RateReport(per_user=np.array([high_snr_rate_m2(s) for s in stats]),
                      method="high-snr-asymptote")
