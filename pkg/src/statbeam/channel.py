"""Channel statistics, correlated Rayleigh sampling and effective spectra.

A user's channel is ``h = Sigma^{1/2} g`` with ``g`` i.i.d. CN(0, 1)
(variance 1/2 per real component). Every rate formula in :mod:`statbeam.rates`
is driven by either the quadratic-form triple ``(A, B, C)`` (two users) or
the eigenvalues of ``Sigma^{1/2} (sum_j w_j w_j^H) Sigma^{1/2}`` (any M).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import (
    NumericsError,
    check_hermitian,
    hermitian_eig,
    matrix_sqrt_psd,
)

UNIT_NORM_TOL = 1e-12
CONDITION_FLOOR = 1e-10


class ChannelError(ValueError):
    """Raised for malformed covariance matrices or beamformers."""


class IllConditionedError(ChannelError):
    """A two-user closed form was given a (numerically) singular covariance."""


class CovarianceMatrix:
    """Hermitian PSD spatial covariance of one user's channel.

    Validation happens on construction; the matrix square root used for
    sampling is computed lazily and cached.
    """

    def __init__(self, entries, *, psd_tol: float = 1e-12):
        try:
            a = check_hermitian(entries)
        except NumericsError as exc:
            raise ChannelError(str(exc)) from exc
        a = 0.5 * (a + a.conj().T)
        eig = hermitian_eig(a)
        if eig.eigenvalues.size == 0:
            raise ChannelError("covariance must be at least 1x1")
        if eig.eigenvalues[-1] < -psd_tol:
            raise ChannelError(
                f"covariance is not PSD (min eigenvalue {eig.eigenvalues[-1]:.3e})")
        self._entries = a
        self._entries.setflags(write=False)
        self._eig = eig
        self._sqrt = None

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eig.eigenvalues

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eig.eigenvectors

    @property
    def sqrt(self) -> np.ndarray:
        if self._sqrt is None:
            self._sqrt = matrix_sqrt_psd(self._entries)
            self._sqrt.setflags(write=False)
        return self._sqrt

    @property
    def condition_number(self) -> float:
        lo = self.eigenvalues[-1]
        return float(self.eigenvalues[0] / lo) if lo > 0 else float("inf")

    def is_positive_definite(self, floor: float = CONDITION_FLOOR) -> bool:
        top = self.eigenvalues[0]
        return bool(top > 0 and self.eigenvalues[-1] >= floor * top)

    def require_positive_definite(self, floor: float = CONDITION_FLOOR) -> None:
        if not self.is_positive_definite(floor):
            raise IllConditionedError(
                "covariance must be positive definite with min/max eigenvalue "
                f">= {floor:g} (eigenvalues {self.eigenvalues})")

    def quad(self, w, v=None) -> complex:
        """Return ``w^H Sigma v`` (``v`` defaults to ``w``)."""
        v = w if v is None else v
        return complex(np.vdot(w, self._entries @ v))

    def conjugated(self, q) -> "CovarianceMatrix":
        """Return ``Q Sigma Q^H``."""
        q = np.asarray(q, dtype=complex)
        return CovarianceMatrix(q @ self._entries @ q.conj().T)

    def scaled(self, factor: float) -> "CovarianceMatrix":
        return CovarianceMatrix(factor * self._entries)

    # JSON wire format: {"dim": M, "re": [[...]], "im": [[...]]}
    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "re": self._entries.real.tolist(),
            "im": self._entries.imag.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CovarianceMatrix":
        try:
            dim = int(obj["dim"])
            re = np.asarray(obj["re"], dtype=float)
            im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ChannelError(f"malformed covariance JSON: {exc}") from exc
        if re.shape != (dim, dim) or im.shape != (dim, dim):
            raise ChannelError(
                f"covariance JSON arrays must be {dim}x{dim}, got {re.shape} and {im.shape}")
        return cls(re + 1j * im)

    def __repr__(self) -> str:
        return f"CovarianceMatrix(dim={self.dim}, eigenvalues={np.round(self.eigenvalues, 6)})"


def load_covariance(path) -> CovarianceMatrix:
    return CovarianceMatrix.from_json(json.loads(Path(path).read_text()))


def save_covariance(sigma: CovarianceMatrix, path) -> None:
    Path(path).write_text(json.dumps(sigma.to_json()))


def as_covariance(sigma) -> CovarianceMatrix:
    return sigma if isinstance(sigma, CovarianceMatrix) else CovarianceMatrix(sigma)


class BeamformerSet:
    """One unit-norm beamforming vector per user, stored as matrix columns."""

    def __init__(self, vectors, *, tol: float = UNIT_NORM_TOL):
        w = np.array(vectors, dtype=complex)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2:
            raise ChannelError("beamformers must be given as an (M, K) matrix")
        norms = np.linalg.norm(w, axis=0)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ChannelError(f"beamformers must be unit-norm, got norms {norms}")
        self._w = w
        self._w.setflags(write=False)

    @classmethod
    def normalized(cls, vectors) -> "BeamformerSet":
        w = np.array(vectors, dtype=complex)
        if w.ndim == 1:
            w = w[:, None]
        return cls(w / np.linalg.norm(w, axis=0))

    @classmethod
    def from_list(cls, vectors) -> "BeamformerSet":
        return cls(np.column_stack([np.asarray(v, dtype=complex) for v in vectors]))

    @property
    def matrix(self) -> np.ndarray:
        return self._w

    @property
    def dim(self) -> int:
        return self._w.shape[0]

    @property
    def users(self) -> int:
        return self._w.shape[1]

    def __getitem__(self, i: int) -> np.ndarray:
        return self._w[:, i]

    def __len__(self) -> int:
        return self.users

    def __iter__(self):
        return (self._w[:, i] for i in range(self.users))

    def gram(self, exclude: int | None = None) -> np.ndarray:
        """``sum_j w_j w_j^H``, optionally without user ``exclude``."""
        w = self._w if exclude is None else np.delete(self._w, exclude, axis=1)
        return w @ w.conj().T

    def to_json(self) -> list[dict]:
        return [{"re": v.real.tolist(), "im": v.imag.tolist()} for v in self]

    def __repr__(self) -> str:
        return f"BeamformerSet(dim={self.dim}, users={self.users})"


@dataclass(frozen=True)
class LinkStatistics:
    """Quadratic forms ``A = w_i^H S w_i``, ``B = w_j^H S w_j``, ``C = |w_i^H S w_j|``."""

    A: float
    B: float
    C: float

    def __post_init__(self):
        if min(self.A, self.B, self.C) < 0:
            raise ChannelError(f"link statistics must be nonnegative: {self}")


@dataclass(frozen=True)
class EffectiveSpectrum:
    """Descending eigenvalues of the signal-plus-interference and
    interference-only effective matrices."""

    signal_plus_interference: np.ndarray
    interference_only: np.ndarray


def _unit(w, dim: int) -> np.ndarray:
    w = np.asarray(w, dtype=complex).ravel()
    if w.shape != (dim,):
        raise ChannelError(f"beamformer has dimension {w.shape[0]}, expected {dim}")
    if abs(np.linalg.norm(w) - 1.0) > UNIT_NORM_TOL:
        raise ChannelError("beamformer must be unit-norm")
    return w


def link_statistics(sigma_i, w_i, w_j) -> LinkStatistics:
    """Return the two-user quadratic-form statistics of link ``i``."""
    sigma_i = as_covariance(sigma_i)
    w_i = _unit(w_i, sigma_i.dim)
    w_j = _unit(w_j, sigma_i.dim)
    s = sigma_i.entries
    a = max(float(np.real(np.vdot(w_i, s @ w_i))), 0.0)
    b = max(float(np.real(np.vdot(w_j, s @ w_j))), 0.0)
    c = float(abs(np.vdot(w_i, s @ w_j)))
    # Cauchy-Schwarz holds exactly in exact arithmetic; clip rounding excess.
    c = min(c, float(np.sqrt(a * b)))
    return LinkStatistics(a, b, c)


def effective_spectrum_m2(stats: LinkStatistics) -> EffectiveSpectrum:
    a, b, c = stats.A, stats.B, stats.C
    root = np.hypot(a - b, 2.0 * c)
    lam1 = 0.5 * (a + b + root)
    # a + b - root cancels badly when the pair is near-parallel; use the determinant.
    det = max(a * b - c * c, 0.0)
    lam2 = det / lam1 if lam1 > 0 else 0.0
    return EffectiveSpectrum(
        signal_plus_interference=np.array([lam1, lam2]),
        interference_only=np.array([b, 0.0]),
    )


def _sym_eigvals(h: np.ndarray) -> np.ndarray:
    vals = hermitian_eig(0.5 * (h + h.conj().T)).eigenvalues
    return np.clip(vals, 0.0, None)


def effective_spectrum_general(sigma_i, ws: BeamformerSet, exclude: int) -> EffectiveSpectrum:
    """Spectra of ``S^{1/2} (sum_j w_j w_j^H) S^{1/2}`` with and without user ``exclude``."""
    sigma_i = as_covariance(sigma_i)
    if ws.dim != sigma_i.dim:
        raise ChannelError("beamformer and covariance dimensions differ")
    if not 0 <= exclude < ws.users:
        raise ChannelError(f"user index {exclude} out of range for {ws.users} users")
    root = sigma_i.sqrt
    total = _sym_eigvals(root @ ws.gram() @ root)
    interf = _sym_eigvals(root @ ws.gram(exclude) @ root)
    # The interference matrix has rank <= K-1; its trailing eigenvalue is zero.
    if ws.users <= sigma_i.dim:
        interf[-1] = 0.0
    return EffectiveSpectrum(signal_plus_interference=total, interference_only=interf)


def sample_channels(sigma, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` channel realizations as rows of an ``(n, M)`` array."""
    sigma = as_covariance(sigma)
    m = sigma.dim
    g = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) * np.sqrt(0.5)
    # Rows are h^T = g^T S^T.
    return g @ sigma.sqrt.T


def sample_channel(sigma, rng: np.random.Generator) -> np.ndarray:
    """One realization ``h = Sigma^{1/2} g``."""
    return sample_channels(sigma, 1, rng)[0]


def exponential_correlation(m: int, r: float, scale: float = 1.0, angle: float = 0.0) -> CovarianceMatrix:
    """``scale * r^{|k-l|}``, optionally with steering phase ``exp(j angle (k - l))``."""
    if not 0.0 <= r < 1.0:
        raise ChannelError(f"correlation coefficient must lie in [0, 1), got {r}")
    if scale <= 0:
        raise ChannelError("scale must be positive")
    k = np.arange(m)
    diff = k[:, None] - k[None, :]
    entries = scale * r ** np.abs(diff) * np.exp(1j * angle * diff)
    return CovarianceMatrix(entries)


def random_unitary(m: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_spectrum_covariance(eigenvalues, rng: np.random.Generator) -> CovarianceMatrix:
    """``U diag(eigenvalues) U^H`` with ``U`` Haar unitary."""
    lam = np.asarray(eigenvalues, dtype=float)
    u = random_unitary(lam.size, rng)
    return CovarianceMatrix((u * lam) @ u.conj().T)


def random_unit_vector(m: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return z / np.linalg.norm(z)
