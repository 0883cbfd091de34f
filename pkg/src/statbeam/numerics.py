"""Special functions and Hermitian linear algebra.

The rate formulas only ever need the scaled exponential integral
``exp(x) * E1(x)``, so that product is evaluated directly; the factors
individually over/underflow long before the product does.

The eigensolver is a cyclic complex Jacobi method using a round-robin
pair ordering, so each step applies ``M // 2`` disjoint rotations at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-12
DEGENERACY_GAP = 1e-10

_SERIES_TERMS = 20
_ASYMPTOTIC_FROM = 50.0
_ASYMPTOTIC_TERMS = 20
_CF_EPS = 5e-16
_CF_MAX_ITER = 500
_JACOBI_MAX_SWEEPS = 60


class NumericsError(ValueError):
    """Raised when an input violates a numerical precondition."""


class DomainError(NumericsError):
    pass


class NotHermitianError(NumericsError):
    pass


class NotPSDError(NumericsError):
    pass


class SingularMatrixError(NumericsError):
    pass


# ---------------------------------------------------------------------------
# Exponential integral
# ---------------------------------------------------------------------------

_SERIES_COEFFS = [(-1.0) ** k / (k * math.factorial(k)) for k in range(1, _SERIES_TERMS + 1)]


def _exp_e1_series(x: np.ndarray) -> np.ndarray:
    # E1(x) = -gamma - ln x - sum_k (-x)^k / (k k!), summed by Horner
    total = np.full_like(x, _SERIES_COEFFS[-1])
    for coeff in reversed(_SERIES_COEFFS[:-1]):
        total = total * x + coeff
    total *= x
    return np.exp(x) * (-EULER_GAMMA - np.log(x) - total)


def _exp_e1_asymptotic(x: np.ndarray) -> np.ndarray:
    # exp(x) E1(x) ~ (1/x) sum_k (-1)^k k! / x^k; the truncation error is
    # below 20!/50^20 ~ 3e-16 relative for x >= 50.
    inv = 1.0 / x
    x_min = float(x.min())
    terms, bound = 1, 1.0 / x_min
    while bound > 1e-17 and terms < _ASYMPTOTIC_TERMS:
        terms += 1
        bound *= terms / x_min
    total = np.ones_like(x)
    for k in range(terms, 0, -1):
        total = 1.0 - k * inv * total
    return inv * total


def _exp_e1_cfrac(x: np.ndarray) -> np.ndarray:
    """Modified Lentz evaluation of exp(x) E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))."""
    tiny = 1e-300
    b = x + 1.0
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    out = h.copy()
    idx = np.arange(x.size)
    for i in range(1, _CF_MAX_ITER + 1):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        live = np.abs(delta - 1.0) >= _CF_EPS
        if not live.all():
            out[idx[~live]] = h[~live]
            idx, b, c, d, h = idx[live], b[live], c[live], d[live], h[live]
            if idx.size == 0:
                return out
    out[idx] = h
    return out


def exp_e1(x):
    """Return ``exp(x) * E1(x)`` for ``x > 0``.

    Accepts a scalar or an array. The power series is used on ``(0, 1]``,
    a continued fraction on ``(1, 50)`` and the asymptotic expansion above.

    Raises
    ------
    DomainError
        If any entry is non-positive or non-finite.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("exp_e1 requires finite x > 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = flat <= 1.0
    large = flat >= _ASYMPTOTIC_FROM
    middle = ~(small | large)
    if small.any():
        out[small] = _exp_e1_series(flat[small])
    if middle.any():
        out[middle] = _exp_e1_cfrac(flat[middle])
    if large.any():
        out[large] = _exp_e1_asymptotic(flat[large])
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def scaled_exp_e1(lam, nu):
    """Return ``lam * exp_e1(nu / lam)`` with the ``lam -> 0`` limit of 0.

    This is the building block of every ergodic rate term:
    ``E[log(1 + lam * X / nu)] = exp_e1(nu / lam)`` for ``X ~ Exp(1)``.
    ``nu`` must be positive; ``lam`` is a nonnegative array or scalar.
    """
    lam_arr = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam_arr)
    pos = lam_arr > 0.0
    if np.any(pos):
        out[pos] = lam_arr[pos] * exp_e1(nu / lam_arr[pos])
    if lam_arr.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Hermitian eigendecomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    @property
    def dominant(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def check_hermitian(h, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``h`` as a complex square array, raising if it is not Hermitian."""
    a = np.asarray(h, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotHermitianError("matrix has non-finite entries")
    asym = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if asym > tol:
        raise NotHermitianError(f"matrix is not Hermitian (max asymmetry {asym:.3e})")
    return a


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Circle method; index m stands in for the bye when m is odd.
    n = m + (m % 2)
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        ps, qs = [], []
        for k in range(n // 2):
            a, b = players[k], players[n - 1 - k]
            if a < m and b < m:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def normalize_phase(v: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Rotate ``v`` so its largest-magnitude entry is real and positive.

    Entries within ``rtol`` of the maximum magnitude tie; the lowest index wins.
    """
    v = np.asarray(v, dtype=complex)
    mags = np.abs(v)
    top = mags.max()
    if top == 0.0:
        return v.copy()
    idx = int(np.flatnonzero(mags >= top * (1.0 - rtol))[0])
    out = v * (np.conj(v[idx]) / mags[idx])
    out[idx] = mags[idx]
    return out


def hermitian_eig(h) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi.

    Eigenvalues are returned in descending order and each eigenvector is
    phase-normalized (see :func:`normalize_phase`). Eigenvectors of a
    cluster of (near-)equal eigenvalues form an arbitrary orthonormal basis
    of the cluster subspace.

    Raises
    ------
    NotHermitianError
        If the entrywise asymmetry exceeds ``HERMITIAN_TOL``.
    """
    a = check_hermitian(h)
    a = 0.5 * (a + a.conj().T)
    m = a.shape[0]
    v = np.eye(m, dtype=complex)
    if m > 1:
        scale = np.linalg.norm(a)
        rounds = _round_robin(m)
        offdiag = ~np.eye(m, dtype=bool)
        for _ in range(_JACOBI_MAX_SWEEPS):
            off = np.sqrt(np.sum(np.abs(a[offdiag]) ** 2))
            if off <= 1e-15 * scale or off == 0.0:
                break
            for p, q in rounds:
                z = a[p, q]
                r = np.abs(z)
                if not np.any(r > 1e-300):
                    continue
                app = a[p, p].real
                aqq = a[q, q].real
                theta = 0.5 * np.arctan2(2.0 * r, app - aqq)
                c = np.cos(theta)
                s = np.sin(theta)
                phase = np.where(r > 0.0, z / np.where(r > 0.0, r, 1.0), 1.0)
                # G = [[c, -s e^{ia}], [s e^{-ia}, c]] on columns (p, q)
                g_qp = s * np.conj(phase)
                g_pq = -s * phase
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = cp * c + cq * g_qp
                a[:, q] = cp * g_pq + cq * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c[:, None] * rp + np.conj(g_qp)[:, None] * rq
                a[q, :] = np.conj(g_pq)[:, None] * rp + c[:, None] * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vp * c + vq * g_qp
                v[:, q] = vp * g_pq + vq * c
    evals = np.real(np.diag(a)).copy()
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    vecs = v[:, order]
    vecs = np.column_stack([normalize_phase(vecs[:, k]) for k in range(m)]) if m else vecs
    return EigenDecomposition(eigenvalues=evals, eigenvectors=vecs)


def matrix_sqrt_psd(h) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-PSD_TOL, 0)`` are clamped to zero.
    """
    eig = hermitian_eig(h)
    if eig.eigenvalues.size and eig.eigenvalues[-1] < -PSD_TOL:
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {eig.eigenvalues[-1]:.3e})")
    root = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    s = (eig.eigenvectors * root) @ eig.eigenvectors.conj().T
    return 0.5 * (s + s.conj().T)


def inverse_sqrt_pd(h) -> np.ndarray:
    eig = hermitian_eig(h)
    if eig.eigenvalues[-1] <= PSD_TOL:
        raise SingularMatrixError(
            f"matrix is not positive definite (min eigenvalue {eig.eigenvalues[-1]:.3e})")
    root = 1.0 / np.sqrt(eig.eigenvalues)
    s = (eig.eigenvectors * root) @ eig.eigenvectors.conj().T
    return 0.5 * (s + s.conj().T)


def generalized_dominant_eigvec(a, b) -> tuple[np.ndarray, float]:
    """Dominant generalized eigenpair of ``(a, b)``: ``a x = sigma b x``.

    Uses the symmetric reduction ``b^{-1/2} a b^{-1/2}``, back-transforms
    the dominant eigenvector and renormalizes it to unit length.

    Returns
    -------
    x : ndarray
        Unit-norm, phase-normalized generalized eigenvector.
    sigma : float
        The largest generalized eigenvalue.
    """
    a = check_hermitian(a)
    b = check_hermitian(b)
    if a.shape != b.shape:
        raise NumericsError("matrix pair must have the same shape")
    b_isqrt = inverse_sqrt_pd(b)
    reduced = b_isqrt @ a @ b_isqrt
    eig = hermitian_eig(0.5 * (reduced + reduced.conj().T))
    x = b_isqrt @ eig.dominant
    x = normalize_phase(x / np.linalg.norm(x))
    return x, float(eig.eigenvalues[0])


def generalized_eigenvalues(a, b) -> np.ndarray:
    """All generalized eigenvalues of ``(a, b)``, descending (``b`` PD)."""
    b_isqrt = inverse_sqrt_pd(b)
    reduced = b_isqrt @ check_hermitian(a) @ b_isqrt
    return hermitian_eig(0.5 * (reduced + reduced.conj().T)).eigenvalues


def principal_angle(w, v) -> float:
    """Phase-blind angle ``arccos |w^H v|`` between two vectors.

    Evaluated as ``atan2(|v_perp|, |w^H v|)`` so that small angles keep
    full relative precision; ``arccos`` near 1 resolves only ~1e-8.
    """
    w = np.asarray(w, dtype=complex).ravel()
    v = np.asarray(v, dtype=complex).ravel()
    w = w / np.linalg.norm(w)
    v = v / np.linalg.norm(v)
    inner = np.vdot(w, v)
    perp = np.linalg.norm(v - inner * w)
    return float(math.atan2(perp, abs(inner)))
