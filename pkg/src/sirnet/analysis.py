"""Eradication certificates and reproduction-number tracking.

Two matrices govern the fate of virus k:

    M^k        = I - h*Gamma^k + h*B^k          (all-susceptible linearization)
    M~^k[t]    = I + h*(S[t] B^k - Gamma^k)     (state matrix along a trajectory)

spectral_radius(M^k) is the basic reproduction number; if it is below one
the virus dies out exponentially fast, certified here by a diagonal
Lyapunov matrix P with M^T P M - P negative definite.  spectral_radius of
M~^k[t] is the effective reproduction number; its trace along a
trajectory locates the infection peak (the crossing of 1) and yields the
per-step contraction margin eps[t] = 1 - rho(M~^k[t]).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import numerics
from .model import EpidemicState, NetworkModel, Trajectory

# strict-definiteness margin for certificate verification, relative to P
CERT_MARGIN = 1e-10


@dataclass(frozen=True)
class StabilityCertificate:
    """Schur-stability certificate for one virus.

    When ``schur_stable`` the diagonal matrix P satisfies P > 0 and
    M^T P M - P < 0, and the constants sigma1 = eigmin(P),
    sigma2 = eigmax(P), sigma3 = eigmin(P - M^T P M) certify decay of
    ||x^k[t]|| at rate ``rate_bound`` = sqrt(1 - sigma3/sigma2) < 1.
    """

    virus: int
    rho_M: float
    schur_stable: bool
    P: Optional[np.ndarray] = None
    sigma1: Optional[float] = None
    sigma2: Optional[float] = None
    sigma3: Optional[float] = None
    rate_bound: Optional[float] = None


@dataclass(frozen=True)
class EffectiveReproductionTrace:
    """rho(M~^k[t]) along a trajectory, with the threshold crossing."""

    virus: int
    rho: np.ndarray
    epsilon: np.ndarray
    min_epsilon: float
    threshold_time: Optional[int]   # first t with rho <= 1, None if never


def build_M(model: NetworkModel, k: int) -> np.ndarray:
    """All-susceptible linearization I - h*Gamma^k + h*B^k."""
    if not 0 <= k < model.m:
        raise ValueError(f"virus index {k} out of range [0, {model.m})")
    n = model.n
    return np.eye(n) - model.h * np.diag(model.gamma[k]) + model.h * model.beta[k]


def build_M_tilde(model: NetworkModel, k: int,
                  state: Union[EpidemicState, np.ndarray]) -> np.ndarray:
    """State matrix I + h*(diag(s) B^k - Gamma^k) at the given state.

    Accepts a full epidemic state or a bare susceptible vector.
    """
    if not 0 <= k < model.m:
        raise ValueError(f"virus index {k} out of range [0, {model.m})")
    s = np.asarray(getattr(state, "s", state), dtype=float)
    n = model.n
    return np.eye(n) + model.h * (s[:, np.newaxis] * model.beta[k]
                                  - np.diag(model.gamma[k]))


def diagonal_lyapunov(M: np.ndarray, margin: float = CERT_MARGIN) -> np.ndarray:
    """Diagonal P > 0 with M^T P M - P < 0, for nonnegative Schur-stable M.

    Construction: xi = (I-M)^{-1} 1 and eta = (I-M^T)^{-1} 1 are
    entrywise positive (Neumann series of a nonnegative matrix with
    spectral radius below one), and P = diag(eta_i / xi_i) empirically
    certifies.  The result is verified; if verification fails, a
    projection-based feasibility search over diagonal P is run instead.
    One of the two must succeed when rho(M) < 1.
    """
    n = M.shape[0]
    eye = np.eye(n)
    xi = np.linalg.solve(eye - M, np.ones(n))
    eta = np.linalg.solve(eye - M.T, np.ones(n))
    if np.all(xi > 0) and np.all(eta > 0):
        P = np.diag(eta / xi)
        if _lyapunov_margin_ok(M, P, margin):
            return P
    P = _diagonal_lyapunov_projection(M, margin)
    if P is None:
        raise ArithmeticError(
            "failed to construct a diagonal Lyapunov certificate for a "
            "matrix with spectral radius below one")
    return P


def _lyapunov_margin_ok(M: np.ndarray, P: np.ndarray, margin: float) -> bool:
    X = M.T @ P @ M - P
    lam_max = numerics.symmetric_eigenvalues(X)[-1]
    return lam_max <= -margin * float(np.diag(P).max())


def _diagonal_lyapunov_projection(M: np.ndarray, margin: float,
                                  max_iter: int = 5000) -> Optional[np.ndarray]:
    """Alternating projections between {X <= -delta I} and the image of
    diagonal P under P -> M^T P M - P, clamping P to stay positive."""
    from .synthesis import project_negative_definite

    n = M.shape[0]
    eye = np.eye(n)
    # M^T diag(p) M - diag(p) = sum_i p_i * (row_i row_i^T - e_i e_i^T)
    basis = [np.outer(M[i], M[i]) - np.outer(eye[i], eye[i]) for i in range(n)]
    gram = np.array([[np.tensordot(a, b) for b in basis] for a in basis])
    p = np.ones(n)
    delta = margin
    for _ in range(max_iter):
        P = np.diag(p)
        X = M.T @ P @ M - P
        if _lyapunov_margin_ok(M, P, margin) and p.min() > 0:
            return P
        target = project_negative_definite(X, delta)
        rhs = np.array([np.tensordot(b, target) for b in basis])
        p = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        p = np.clip(p, delta, None)
        scale = p.max()
        if scale > 0:
            p = p / scale
    return None


def eradication_certificate(model: NetworkModel, k: int,
                            margin: float = CERT_MARGIN) -> StabilityCertificate:
    """Exponential-eradication certificate for virus k.

    Computes the basic reproduction number rho(M^k).  Below one, a
    diagonal Lyapunov matrix is constructed and the decay-rate constants
    are filled in; at or above one the certificate only reports the
    radius with ``schur_stable`` false.
    """
    M = build_M(model, k)
    rho = numerics.spectral_radius(M).spectral_radius
    if rho >= 1.0:
        return StabilityCertificate(virus=k, rho_M=rho, schur_stable=False)
    P = diagonal_lyapunov(M, margin)
    diff_eigs = numerics.symmetric_eigenvalues(P - M.T @ P @ M)
    sigma1 = float(np.diag(P).min())
    sigma2 = float(np.diag(P).max())
    sigma3 = float(diff_eigs[0])
    rate = float(np.sqrt(1.0 - sigma3 / sigma2))
    return StabilityCertificate(virus=k, rho_M=rho, schur_stable=True, P=P,
                                sigma1=sigma1, sigma2=sigma2, sigma3=sigma3,
                                rate_bound=rate)


def effective_R_trace(model: NetworkModel, trajectory: Trajectory,
                      k: int) -> EffectiveReproductionTrace:
    """Effective reproduction number rho(M~^k[t]) for every stored state."""
    if len(trajectory) == 0:
        raise ValueError("trajectory is empty")
    rho = np.array([
        numerics.spectral_radius(build_M_tilde(model, k, st)).spectral_radius
        for st in trajectory.states])
    eps = 1.0 - rho
    below = np.nonzero(rho <= 1.0)[0]
    threshold_time = int(below[0]) if below.size else None
    return EffectiveReproductionTrace(
        virus=k, rho=rho, epsilon=eps, min_epsilon=float(eps.min()),
        threshold_time=threshold_time)
