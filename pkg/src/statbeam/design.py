"""Beamformer designs from channel statistics and a brute-force oracle.

Designs
-------
low-snr        each user on the dominant eigenvector of its own covariance
high-snr-gev   two users, dominant generalized eigenvectors of the pair
common-basis   two commuting covariances, eigenvector assignment by condition numbers
fixed-point    large-M stationarity equations, solved on the unit spheres
grid-oracle    exhaustive search over a (theta, phi) grid, two users
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import BeamformerSet, ChannelError, as_covariance, link_statistics, random_unit_vector
from .numerics import (
    generalized_eigenvalues,
    hermitian_eig,
    inverse_sqrt_pd,
    normalize_phase,
    principal_angle,
)
from .rates import (
    _high_snr_arrays,
    _interference_term_m2,
    _signal_term_m2,
    asymptotic_sinr,
    high_snr_rate_m2,
    high_snr_sum_rate_common_basis,
)

DESIGN_METHODS = ("low-snr", "high-snr-gev", "common-basis", "grid-oracle", "fixed-point")
COMMUTE_TOL = 1e-10
DEGENERATE_GAP = 1e-10
OBJECTIVE_TIE = 1e-12


class DesignError(ValueError):
    pass


@dataclass
class DesignResult:
    ws: BeamformerSet
    objective: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in DESIGN_METHODS:
            raise DesignError(f"unknown design method {self.method!r}")
        if not math.isfinite(self.objective):
            raise DesignError("design objective must be finite")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "beamformers": self.ws.to_json(),
            "objective_nats": self.objective,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _covariances(sigmas):
    sigmas = [as_covariance(s) for s in sigmas]
    if len({s.dim for s in sigmas}) != 1:
        raise DesignError("all covariances must have the same dimension")
    return sigmas


def _two_users(sigma1, sigma2):
    s1, s2 = as_covariance(sigma1), as_covariance(sigma2)
    if s1.dim != 2 or s2.dim != 2:
        raise DesignError("two-user designs need M = 2")
    return s1, s2


def high_snr_sum_rate(sigma1, sigma2, ws: BeamformerSet) -> float:
    s1, s2 = _two_users(sigma1, sigma2)
    return (high_snr_rate_m2(link_statistics(s1, ws[0], ws[1]))
            + high_snr_rate_m2(link_statistics(s2, ws[1], ws[0])))


# ---------------------------------------------------------------------------
# Low SNR
# ---------------------------------------------------------------------------

def design_low_snr(sigmas, rho: Optional[float] = None) -> DesignResult:
    """Beamform each user along the dominant eigenvector of its covariance.

    The objective is the first-order sum-rate ``(rho / M) sum_i lambda_max``;
    without ``rho`` the slope ``sum_i lambda_max / M`` is reported.
    """
    sigmas = _covariances(sigmas)
    m = len(sigmas)
    vecs, degenerate = [], []
    for s in sigmas:
        lam = s.eigenvalues
        if lam[0] <= 0:
            raise DesignError("covariance with zero dominant eigenvalue has no preferred direction")
        vecs.append(s.eigenvectors[:, 0])
        degenerate.append(bool(lam.size > 1 and lam[0] - lam[1] < DEGENERATE_GAP * lam[0]))
    slope = float(sum(s.eigenvalues[0] for s in sigmas)) / m
    return DesignResult(
        ws=BeamformerSet.from_list(vecs),
        objective=slope * (rho if rho is not None else 1.0),
        method="low-snr",
        diagnostics={"degenerate": any(degenerate), "degenerate_users": degenerate,
                     "rho": rho, "slope": slope},
    )


# ---------------------------------------------------------------------------
# High SNR, two users
# ---------------------------------------------------------------------------

def design_high_snr_m2(sigma1, sigma2) -> DesignResult:
    """Dominant generalized eigenvectors of ``(S1, S2)`` and ``(S2, S1)``.

    Both come from one eigendecomposition of ``S2^{-1/2} S1 S2^{-1/2}``:
    ``w1 ~ S2^{-1/2} v_1`` and ``w2 ~ S2^{-1/2} v_2``. The generalized
    eigenvalues of the two users are then ``eta_1`` and ``1 / eta_2``.
    """
    s1, s2 = _two_users(sigma1, sigma2)
    s1.require_positive_definite()
    s2.require_positive_definite()
    isqrt = inverse_sqrt_pd(s2.entries)
    reduced = isqrt @ s1.entries @ isqrt
    eig = hermitian_eig(0.5 * (reduced + reduced.conj().T))
    eta = eig.eigenvalues
    x1 = isqrt @ eig.eigenvectors[:, 0]
    x2 = isqrt @ eig.eigenvectors[:, 1]
    ws = BeamformerSet.from_list([normalize_phase(x1 / np.linalg.norm(x1)),
                                  normalize_phase(x2 / np.linalg.norm(x2))])
    return DesignResult(
        ws=ws,
        objective=high_snr_sum_rate(s1, s2, ws),
        method="high-snr-gev",
        diagnostics={
            "eta": eta,
            "user_eigenvalues": [float(eta[0]), float(1.0 / eta[1])],
            "degenerate": bool(eta[0] - eta[1] < DEGENERATE_GAP * eta[0]),
        },
    )


def commutator_norm(sigma1, sigma2) -> float:
    a, b = as_covariance(sigma1).entries, as_covariance(sigma2).entries
    return float(np.linalg.norm(a @ b - b @ a) / max(np.linalg.norm(a) * np.linalg.norm(b), 1e-300))


def common_eigenbasis(sigma1, sigma2) -> np.ndarray:
    """Unitary whose columns diagonalize both commuting covariances.

    Columns are ordered by decreasing eigenvalue of ``sigma1`` (ties
    broken by ``sigma2``).
    """
    s1, s2 = as_covariance(sigma1), as_covariance(sigma2)
    if commutator_norm(s1, s2) > COMMUTE_TOL:
        raise DesignError("covariances do not commute; no common eigenbasis")
    # A generic combination has simple eigenvalues whenever the pair is jointly diagonalizable.
    t = 1.0 / (1.0 + math.pi)
    mix = hermitian_eig(s1.entries + t * s2.entries).eigenvectors
    d1 = np.real(np.einsum("ki,kl,li->i", mix.conj(), s1.entries, mix))
    d2 = np.real(np.einsum("ki,kl,li->i", mix.conj(), s2.entries, mix))
    order = np.lexsort((-d2, -d1))
    return mix[:, order]


def design_common_basis(sigma1, sigma2) -> DesignResult:
    """Optimal high-SNR pair for commuting covariances.

    With ``u1, u2`` ordered so that ``kappa1 = l1 / l2 > 1`` and
    ``kappa2 = mu1 / mu2``: assign ``(u1, u2)`` unless ``kappa2 > kappa1``,
    in which case ``(u2, u1)``. At ``kappa1 == kappa2`` both give the same
    sum-rate and ``(u1, u2)`` is kept. If only the second user has a
    non-trivial spectrum the roles are swapped internally.
    """
    s1, s2 = _two_users(sigma1, sigma2)
    s1.require_positive_definite()
    s2.require_positive_definite()
    u = common_eigenbasis(s1, s2)
    lam = np.real([s1.quad(u[:, k]) for k in range(2)])
    mu = np.real([s2.quad(u[:, k]) for k in range(2)])
    kappa1 = lam[0] / lam[1]
    swapped = False
    if not kappa1 > 1.0 + 1e-12:
        if mu.max() / mu.min() <= 1.0 + 1e-12:
            raise DesignError("both covariances are scaled identities; every orthonormal pair is optimal")
        # Relabel users so the first one is non-isotropic.
        swapped = True
        s1, s2 = s2, s1
        u = common_eigenbasis(s1, s2)
        lam = np.real([s1.quad(u[:, k]) for k in range(2)])
        mu = np.real([s2.quad(u[:, k]) for k in range(2)])
        kappa1 = lam[0] / lam[1]
    kappa2 = mu[0] / mu[1]
    if kappa2 > kappa1:
        case = "iii"
        w1, w2 = u[:, 1], u[:, 0]
    else:
        case = "i" if kappa2 <= 1.0 + 1e-12 else "ii"
        w1, w2 = u[:, 0], u[:, 1]
    if swapped:
        w1, w2 = w2, w1
    ws = BeamformerSet.from_list([normalize_phase(w1), normalize_phase(w2)])
    return DesignResult(
        ws=ws,
        objective=high_snr_sum_rate_common_basis(kappa1, kappa2),
        method="common-basis",
        diagnostics={"kappa1": kappa1, "kappa2": kappa2, "case": case, "swapped_users": swapped},
    )


# ---------------------------------------------------------------------------
# Grid oracle, two users
# ---------------------------------------------------------------------------

def grid_vectors(n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Candidates ``(cos t, sin t e^{j p})`` as columns, theta-major order."""
    theta = np.linspace(0.0, 0.5 * np.pi, n_theta)
    phi = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    t, p = np.meshgrid(theta, phi, indexing="ij")
    w = np.stack([np.cos(t).ravel() + 0j, (np.sin(t) * np.exp(1j * p)).ravel()])
    return w, theta, phi


def _pair_objective(s1, s2, w_a, w_b, rho):
    """Sum-rate on the block of pairs (w_a[:, r], w_b[:, c])."""
    a1 = np.real(np.einsum("ka,kl,la->a", w_a.conj(), s1, w_a))
    b1 = np.real(np.einsum("ka,kl,la->a", w_b.conj(), s1, w_b))
    a2 = np.real(np.einsum("ka,kl,la->a", w_b.conj(), s2, w_b))
    b2 = np.real(np.einsum("ka,kl,la->a", w_a.conj(), s2, w_a))
    c1 = np.abs(w_a.conj().T @ s1 @ w_b)
    c2 = np.abs(w_a.conj().T @ s2 @ w_b)
    a1 = np.broadcast_to(a1[:, None], c1.shape)
    b1 = np.broadcast_to(b1[None, :], c1.shape)
    a2 = np.broadcast_to(a2[None, :], c1.shape)
    b2 = np.broadcast_to(b2[:, None], c1.shape)
    if rho is None:
        return _high_snr_arrays(a1, b1, c1) + _high_snr_arrays(a2, b2, c2)
    # Interference terms depend on one vector only; evaluate them per vector.
    i1 = _interference_term_m2(b1[0], rho)[None, :]
    i2 = _interference_term_m2(b2[:, 0], rho)[:, None]
    r1 = np.clip(_signal_term_m2(a1, b1, c1, rho) - i1, 0.0, None)
    r2 = np.clip(_signal_term_m2(a2, b2, c2, rho) - i2, 0.0, None)
    return r1 + r2


def grid_search_oracle_m2(sigma1, sigma2, rho: Optional[float] = None, n_theta: int = 96,
                          n_phi: int = 48, chunk: int = 1 << 20) -> DesignResult:
    """Exhaustive sum-rate maximization over a grid of beamformer pairs.

    Each beamformer ranges over ``(cos t, sin t e^{j p})`` with ``n_theta``
    values of ``t`` in ``[0, pi/2]`` and ``n_phi`` values of ``p`` in
    ``[0, 2 pi)``. ``rho=None`` maximizes the high-SNR asymptote instead of
    the closed-form ergodic sum-rate. Ties go to the lowest grid index.

    When the two covariances commute and the high-SNR objective is used,
    the search runs in the common eigenbasis with the first beamformer's
    phase fixed at zero: the objective there only sees the relative phase
    and the phase grid is closed under shifts, so nothing is lost.
    """
    if n_theta < 8 or n_phi < 8:
        raise DesignError("grid resolution must be at least 8 in each angle")
    s1, s2 = _two_users(sigma1, sigma2)
    s1.require_positive_definite()
    s2.require_positive_definite()
    if rho is not None and not rho > 0:
        raise DesignError("rho must be positive")
    cand, theta, phi = grid_vectors(n_theta, n_phi)
    basis = np.eye(2, dtype=complex)
    reduced = False
    if rho is None and commutator_norm(s1, s2) <= COMMUTE_TOL:
        basis = common_eigenbasis(s1, s2)
        reduced = True
    e1 = basis.conj().T @ s1.entries @ basis
    e2 = basis.conj().T @ s2.entries @ basis
    first = cand[:, ::n_phi] if reduced else cand
    rows = max(1, chunk // cand.shape[1])
    best_val, best_idx = -np.inf, (0, 0)
    for start in range(0, first.shape[1], rows):
        block = _pair_objective(e1, e2, first[:, start:start + rows], cand, rho)
        flat = int(np.argmax(block))
        val = block.flat[flat]
        if val > best_val:
            best_val = float(val)
            r, c = divmod(flat, block.shape[1])
            best_idx = (start + r, c)
    ia, ib = best_idx
    w1 = basis @ first[:, ia]
    w2 = basis @ cand[:, ib]
    if reduced:
        ia = ia * n_phi
    ws = BeamformerSet.from_list([w1, w2])
    return DesignResult(
        ws=ws,
        objective=best_val,
        method="grid-oracle",
        diagnostics={
            "n_theta": n_theta,
            "n_phi": n_phi,
            "rho": rho,
            "mode": "high-snr" if rho is None else "closed-form",
            "common_basis_reduction": reduced,
            "index": [divmod(ia, n_phi), divmod(ib, n_phi)],
            "theta_step": float(theta[1] - theta[0]),
            "phi_step": float(phi[1] - phi[0]),
        },
    )


def sum_rate_m2(sigma1, sigma2, ws: BeamformerSet, rho: Optional[float]) -> float:
    """Closed-form sum-rate (or its high-SNR limit for ``rho=None``)."""
    s1, s2 = _two_users(sigma1, sigma2)
    w = ws.matrix
    return float(_pair_objective(s1.entries, s2.entries, w[:, :1], w[:, 1:], rho)[0, 0])


# ---------------------------------------------------------------------------
# Large-M bounds
# ---------------------------------------------------------------------------

def per_user_upper_bound(sigma_i, rho: float, m: int) -> float:
    """Upper bound on user ``i``'s large-M rate over all beamformer sets."""
    lam = np.clip(as_covariance(sigma_i).eigenvalues, 0.0, None)
    scale = rho / m
    return math.log1p(scale * lam[0] / (1.0 + scale * float(np.sum(lam[1:m]))))


def per_user_bound_achiever(sigma_i, user: int) -> BeamformerSet:
    """``w_user = u_1`` and the other users on ``u_2 .. u_M`` (in order)."""
    u = as_covariance(sigma_i).eigenvectors
    m = u.shape[0]
    if not 0 <= user < m:
        raise DesignError("user index out of range")
    others = [u[:, k] for k in range(1, m)]
    cols = others[:user] + [u[:, 0]] + others[user:]
    return BeamformerSet.from_list(cols)


def _loads(sigmas, w: np.ndarray) -> np.ndarray:
    """``L[i, j] = w_j^H S_i w_j``."""
    stack = np.stack([s.entries for s in sigmas])
    return np.real(np.einsum("kj,ikl,lj->ij", w.conj(), stack, w))


def asymptotic_sum_rate(sigmas, ws: BeamformerSet, rho: float) -> float:
    return _asymptotic_sum_rate(_covariances(sigmas), ws.matrix, rho)


def _asymptotic_sum_rate(sigmas, w: np.ndarray, rho: float) -> float:
    m = w.shape[1]
    scale = rho / m
    loads = _loads(sigmas, w)
    signal = scale * np.diag(loads)
    interference = 1.0 + scale * (loads.sum(axis=1) - np.diag(loads))
    return float(np.sum(np.log1p(signal / interference)))


def low_snr_sum_rate_bound(sigmas, ws: BeamformerSet, rho: float) -> tuple[float, float]:
    """Bounds on ``sum_i R_i,inf / ((rho / M) sum_i w_i^H S_i w_i)``."""
    sigmas = _covariances(sigmas)
    m = ws.users
    loads = _loads(sigmas, ws.matrix)
    lower = 1.0 - rho / m * float(np.max(loads.sum(axis=1)))
    return lower, 1.0


def normalized_asymptotic_sum_rate(sigmas, ws: BeamformerSet, rho: float) -> float:
    """The ratio bounded by :func:`low_snr_sum_rate_bound`."""
    sigmas = _covariances(sigmas)
    m = ws.users
    signal = rho / m * float(np.trace(_loads(sigmas, ws.matrix)))
    return asymptotic_sum_rate(sigmas, ws, rho) / signal


# ---------------------------------------------------------------------------
# Fixed-point design for large M
# ---------------------------------------------------------------------------

def _stationarity_matrices(sigmas, w: np.ndarray, rho: float) -> list[np.ndarray]:
    """``T_k = S_k / (I_k (1 + SINR_k)) - sum_{i != k} SINR_i S_i / (I_i (1 + SINR_i))``.

    The gradient of the asymptotic sum-rate with respect to the real
    coordinates of ``w_k`` is ``2 (rho / M) T_k w_k``.
    """
    m = w.shape[1]
    scale = rho / m
    loads = _loads(sigmas, w)
    signal = scale * np.diag(loads)
    interference = 1.0 + scale * (loads.sum(axis=1) - np.diag(loads))
    total = interference + signal
    weights = signal / (interference * total)
    mats = [s.entries for s in sigmas]
    penalty = sum(weights[i] * mats[i] for i in range(m))
    return [mats[k] / total[k] - (penalty - weights[k] * mats[k]) for k in range(m)]


def _stationarity_matrix(sigmas, w: np.ndarray, rho: float, k: int) -> np.ndarray:
    return _stationarity_matrices(sigmas, w, rho)[k]


def sum_rate_gradient(sigmas, ws: BeamformerSet, rho: float) -> np.ndarray:
    """Gradient of ``sum_i log(1 + SINR_i)`` packed as ``d/dRe + j d/dIm`` per entry."""
    sigmas = _covariances(sigmas)
    w = ws.matrix
    scale = rho / w.shape[1]
    mats = _stationarity_matrices(sigmas, w, rho)
    return np.column_stack([2.0 * scale * (mats[k] @ w[:, k]) for k in range(w.shape[1])])


def projected_gradient_norm(sigmas, ws: BeamformerSet, rho: float) -> float:
    """Norm of the sum-rate gradient projected onto the product of unit spheres."""
    grad = sum_rate_gradient(sigmas, ws, rho)
    w = ws.matrix
    radial = np.real(np.sum(w.conj() * grad, axis=0))
    tangent = grad - w * radial
    return float(np.linalg.norm(tangent))


def fixed_point_residual(sigmas, ws: BeamformerSet, rho: float) -> float:
    """Largest component of ``T_i w_i`` orthogonal to ``w_i``."""
    sigmas = _covariances(sigmas)
    w = ws.matrix
    mats = _stationarity_matrices(sigmas, w, rho)
    worst = 0.0
    for k, t in enumerate(mats):
        v = t @ w[:, k]
        worst = max(worst, float(np.linalg.norm(v - np.vdot(w[:, k], v) * w[:, k])))
    return worst


def _fixed_point_run(sigmas, w0: np.ndarray, rho: float, tol: float, max_iter: int):
    w = w0.copy()
    m = w.shape[1]
    history = [_asymptotic_sum_rate(sigmas, w, rho)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        moved = 0.0
        for k in range(m):
            t = _stationarity_matrix(sigmas, w, rho, k)
            t = 0.5 * (t + t.conj().T)
            eig = hermitian_eig(t)
            new = eig.dominant
            # Inside a degenerate top eigenspace the current vector is already
            # a valid choice; jumping to an arbitrary basis vector is not progress.
            spread = max(abs(eig.eigenvalues[0]), abs(eig.eigenvalues[-1]), 1e-300)
            if np.real(np.vdot(w[:, k], t @ w[:, k])) >= eig.eigenvalues[0] - 1e-13 * spread:
                new = w[:, k]
            moved = max(moved, principal_angle(new, w[:, k]))
            w[:, k] = new
        history.append(_asymptotic_sum_rate(sigmas, w, rho))
        if moved < tol:
            converged = True
            break
    return w, converged, sweeps, history


def fixed_point_design(sigmas, rho: float, init: Optional[BeamformerSet] = None,
                       tol: float = 1e-6, max_iter: int = 500, restarts: int = 5,
                       seed: int = 0) -> DesignResult:
    """Solve the large-M stationarity equations by dominant-eigenvector sweeps.

    Each sweep visits the users in order and replaces ``w_k`` by the
    dominant eigenvector of ``T_k(w)`` evaluated at the current iterate, so
    ``w_k`` becomes an eigenvector of ``T_k`` at a fixed point, which is
    exactly stationarity on the unit sphere. The run stops when no
    beamformer moves by more than ``tol`` (principal angle).

    Restart 0 starts from ``init`` (default: the low-SNR design); further
    restarts start from seeded random unit vectors. The best converged
    run wins; objectives within 1e-12 (relative) tie and go to the
    lowest restart index. Non-convergence is
    reported in the diagnostics, never raised.
    """
    sigmas = _covariances(sigmas)
    for s in sigmas:
        s.require_positive_definite()
    if not rho > 0:
        raise DesignError("rho must be positive")
    m = sigmas[0].dim
    if len(sigmas) != m:
        raise DesignError("fixed-point design needs one covariance per antenna (M users)")
    if init is None:
        init = design_low_snr(sigmas).ws
    if init.dim != m or init.users != m:
        raise DesignError("initial beamformer set has the wrong shape")
    rng = np.random.default_rng(seed)
    starts = [init.matrix.copy()]
    for _ in range(1, max(1, restarts)):
        starts.append(np.column_stack([random_unit_vector(m, rng) for _ in range(m)]))

    runs = []
    for start in starts:
        w, ok, sweeps, hist = _fixed_point_run(sigmas, start, rho, tol, max_iter)
        runs.append((w, ok, sweeps, hist))
    objectives = [h[-1] for _, _, _, h in runs]
    pool = [k for k, r in enumerate(runs) if r[1]] or list(range(len(runs)))
    top = max(objectives[k] for k in pool)
    best = min(k for k in pool if objectives[k] >= top - OBJECTIVE_TIE * max(1.0, abs(top)))
    w, ok, sweeps, hist = runs[best]
    ws = BeamformerSet.normalized(np.column_stack([normalize_phase(w[:, k]) for k in range(m)]))
    increments = np.diff(hist)
    return DesignResult(
        ws=ws,
        objective=objectives[best],
        method="fixed-point",
        diagnostics={
            "converged": bool(ok),
            "iterations": sweeps,
            "restart": best,
            "restart_objectives": objectives,
            "restart_converged": [bool(r[1]) for r in runs],
            "monotone": bool(np.all(increments >= -1e-12)),
            "stationarity_residual": projected_gradient_norm(sigmas, ws, rho),
            "fixed_point_residual": fixed_point_residual(sigmas, ws, rho),
            "tol": tol,
            "rho": rho,
        },
    )


def per_user_sinr_table(sigmas, ws: BeamformerSet, rho: float) -> list:
    return [asymptotic_sinr(sigmas, ws, i, rho) for i in range(ws.users)]
