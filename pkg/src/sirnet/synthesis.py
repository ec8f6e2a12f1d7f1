"""Observer-gain synthesis via a linear matrix inequality.

The estimation error contracts asymptotically when there are a symmetric
Q > 0 and tau in (0, 1] with

    (M - L C)^T [Q - Q (Q - tau I)^{-1} Q] (M - L C) - Q + tau l^2 I < 0
    Q - tau I < 0

where l bounds the residual-to-error ratio of the nonlinear terms.
Substituting R^T = Q L and applying Schur complements twice, the pair is
equivalent to one block LMI in (Q, R):

    [ -Q + tau l^2 I    M^T Q - C^T R    M^T Q - C^T R ]
    [      (.)^T          Q - tau I           0        ]   <  0
    [      (.)^T             0               -Q        ]

``assemble_lmi`` builds the block matrix, ``solve_feasibility`` searches
for (Q, R) by deterministic alternating projections between the shifted
negative-definite cone and the affine image of (Q, R), and
``verify_certificate`` evaluates both the Schur-complement form and the
assembled form on any candidate, whose verdicts must agree.

Note the diagonal blocks force tau*l^2 I < Q < tau I, so no certificate
exists for l >= 1; that contradiction is detected up front rather than
burning the iteration budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics

DEFAULT_MARGIN_REL = 1e-9
DEFAULT_MAX_ITER = 50_000


@dataclass(frozen=True)
class LmiProblem:
    """Data of one per-virus gain-synthesis problem.

    M:      n x n state matrix (all-susceptible linearization).
    C:      n x n diagonal measurement matrix.
    tau:    scalar in (0, 1].
    l:      nonnegative residual-to-error bound.
    margin: required definiteness margin; None resolves to
            ``DEFAULT_MARGIN_REL`` relative to the assembled matrix.
    """

    M: np.ndarray
    C: np.ndarray
    tau: float
    l: float
    margin: Optional[float] = None

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"M must be square, got shape {M.shape}")
        if C.shape != M.shape:
            raise ValueError(f"C must match M's shape {M.shape}, got {C.shape}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.l < 0.0:
            raise ValueError(f"l must be nonnegative, got {self.l}")
        if self.margin is not None and self.margin <= 0.0:
            raise ValueError("margin must be positive")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class LmiCertificate:
    Q: np.ndarray
    R: np.ndarray
    L: Optional[np.ndarray]
    lambda_max_F: float
    lambda_min_Q: float
    feasible: bool
    iterations: int
    tau: float
    reason: str = ""


@dataclass(frozen=True)
class CertificateVerification:
    """Joint evaluation of the Schur-complement form and the block form."""

    lambda_max_assembled: float
    assembled_negative_definite: bool
    q_positive_definite: bool
    precondition_ok: bool                     # Q - tau I < 0
    lambda_max_schur: Optional[float]         # None when precondition fails
    schur_negative_definite: Optional[bool]
    verdicts_agree: Optional[bool]


def _symmetric_q(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    scale = max(1.0, float(np.abs(Q).max(initial=0.0)))
    if float(np.abs(Q - Q.T).max(initial=0.0)) > 1e-9 * scale:
        raise ValueError("Q must be symmetric")
    return (Q + Q.T) / 2.0


def assemble_lmi(problem: LmiProblem, Q, R) -> np.ndarray:
    """Assemble the 3n x 3n block matrix for a candidate (Q, R)."""
    Q = _symmetric_q(Q)
    R = np.asarray(R, dtype=float)
    n = problem.n
    if Q.shape != (n, n) or R.shape != (n, n):
        raise ValueError(f"Q and R must be {n} x {n}")
    eye = np.eye(n)
    G = problem.M.T @ Q - problem.C.T @ R
    Z = np.zeros((n, n))
    return np.block([
        [-Q + problem.tau * problem.l ** 2 * eye, G, G],
        [G.T, Q - problem.tau * eye, Z],
        [G.T, Z, -Q],
    ])


def project_negative_definite(X: np.ndarray, bound: float) -> np.ndarray:
    """Nearest symmetric matrix with all eigenvalues <= -bound."""
    w, v = np.linalg.eigh((X + X.T) / 2.0)
    w = np.minimum(w, -bound)
    out = (v * w) @ v.T
    return (out + out.T) / 2.0


def _start_point(problem: LmiProblem) -> tuple[np.ndarray, np.ndarray]:
    # midpoint of the band tau*l^2 I < Q < tau I; R chosen to null the
    # off-diagonal blocks when C is invertible (least squares otherwise)
    n = problem.n
    q0 = problem.tau * (problem.l ** 2 + 1.0) / 2.0
    Q0 = q0 * np.eye(n)
    R0 = np.linalg.lstsq(problem.C.T, problem.M.T @ Q0, rcond=None)[0]
    return Q0, R0


def _resolve_margin(problem: LmiProblem, F0: np.ndarray) -> float:
    if problem.margin is not None:
        return problem.margin
    return DEFAULT_MARGIN_REL * max(1.0, float(np.linalg.norm(F0)))


def solve_feasibility(problem: LmiProblem,
                      max_iter: int = DEFAULT_MAX_ITER) -> LmiCertificate:
    """Search for (Q, R) making the block matrix negative definite.

    Deterministic throughout: fixed start point, alternating projections
    between {X <= -margin I} and the affine image of (Q, R).  On success
    the gain L = Q^{-1} R^T is extracted.  Infeasibility (the diagonal
    contradiction for l >= 1, or an exhausted iteration budget) is a
    result carrying the best lambda_max found, not an error.
    """
    Q, R = _start_point(problem)
    F = assemble_lmi(problem, Q, R)
    margin = _resolve_margin(problem, F)

    if problem.tau * problem.l ** 2 >= problem.tau - 2.0 * margin:
        return LmiCertificate(
            Q=Q, R=R, L=None,
            lambda_max_F=float(numerics.symmetric_eigenvalues(F)[-1]),
            lambda_min_Q=float(numerics.symmetric_eigenvalues(Q)[0]),
            feasible=False, iterations=0, tau=problem.tau,
            reason="diagonal blocks require tau*l^2 I < Q < tau I, "
                   "impossible for l >= 1")

    best = (np.inf, Q, R)
    for it in range(1, max_iter + 1):
        lam_max = float(numerics.symmetric_eigenvalues(F)[-1])
        lam_min_q = float(numerics.symmetric_eigenvalues(Q)[0])
        if lam_max < best[0]:
            best = (lam_max, Q, R)
        if lam_max <= -margin and lam_min_q >= margin:
            L = np.linalg.solve(Q, R.T)
            return LmiCertificate(Q=Q, R=R, L=L, lambda_max_F=lam_max,
                                  lambda_min_Q=lam_min_q, feasible=True,
                                  iterations=it, tau=problem.tau)
        # aim past the acceptance margin so the iterates cross it in
        # finite time instead of approaching it asymptotically
        X = project_negative_definite(F, 2.0 * margin)
        Q, R = _project_affine(problem, X)
        F = assemble_lmi(problem, Q, R)

    lam_max, Q, R = best
    return LmiCertificate(
        Q=Q, R=R, L=None, lambda_max_F=lam_max,
        lambda_min_Q=float(numerics.symmetric_eigenvalues(Q)[0]),
        feasible=False, iterations=max_iter, tau=problem.tau,
        reason="iteration budget exhausted")


def _project_affine(problem: LmiProblem,
                    X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares preimage (Q, R) of a symmetric 3n x 3n target.

    The three diagonal blocks each pin Q up to a shift, so their average
    is the Frobenius-optimal Q; R then matches the off-diagonal blocks
    (exactly when C is invertible).
    """
    n = problem.n
    eye = np.eye(n)
    X11 = X[:n, :n]
    X12 = X[:n, n:2 * n]
    X13 = X[:n, 2 * n:]
    X22 = X[n:2 * n, n:2 * n]
    X33 = X[2 * n:, 2 * n:]
    Q = (problem.tau * problem.l ** 2 * eye - X11 + X22
         + problem.tau * eye - X33) / 3.0
    Q = (Q + Q.T) / 2.0
    G_target = (X12 + X13) / 2.0
    R = np.linalg.lstsq(problem.C.T, problem.M.T @ Q - G_target, rcond=None)[0]
    return Q, R


def verify_certificate(problem: LmiProblem, Q, R=None,
                       L=None) -> CertificateVerification:
    """Evaluate a candidate certificate in both equivalent forms.

    Exactly one of R, L may be omitted; the other is derived through
    R^T = Q L.  The Schur-complement form needs Q - tau I < 0 to be
    well-posed; when that precondition fails, only the assembled block
    form is evaluated and no agreement verdict is produced.
    """
    Q = _symmetric_q(Q)
    if (R is None) == (L is None):
        raise ValueError("provide exactly one of R or L")
    if R is None:
        R = (Q @ np.asarray(L, dtype=float)).T
    else:
        R = np.asarray(R, dtype=float)
        L = np.linalg.solve(Q, R.T)

    F = assemble_lmi(problem, Q, R)
    lam_max_f = float(numerics.symmetric_eigenvalues(F)[-1])
    assembled_nd = lam_max_f < 0.0
    q_pd = float(numerics.symmetric_eigenvalues(Q)[0]) > 0.0

    n = problem.n
    tau_eye = problem.tau * np.eye(n)
    precond = float(numerics.symmetric_eigenvalues(Q - tau_eye)[-1]) < 0.0
    lam_max_schur = None
    schur_nd = None
    agree = None
    if precond:
        closed = problem.M - L @ problem.C
        mid = Q - Q @ np.linalg.solve(Q - tau_eye, Q)
        lhs = (closed.T @ mid @ closed - Q
               + problem.tau * problem.l ** 2 * np.eye(n))
        lam_max_schur = float(numerics.symmetric_eigenvalues(lhs)[-1])
        schur_nd = lam_max_schur < 0.0
        agree = (schur_nd and q_pd) == assembled_nd
    return CertificateVerification(
        lambda_max_assembled=lam_max_f,
        assembled_negative_definite=assembled_nd,
        q_positive_definite=q_pd,
        precondition_ok=precond,
        lambda_max_schur=lam_max_schur,
        schur_negative_definite=schur_nd,
        verdicts_agree=agree)


def solve_feasibility_fixed_gain(problem: LmiProblem, L,
                                 max_iter: int = DEFAULT_MAX_ITER
                                 ) -> LmiCertificate:
    """Feasibility over Q alone, with the gain held fixed.

    With L pinned (R is tied through R^T = Q L) the block matrix is affine
    in the single symmetric unknown Q, so structured gains -- the observer
    uses one scalar per node, i.e. diagonal L -- can be certified even
    though the joint search over (Q, diagonal L) would not be convex.
    Same alternating projections as ``solve_feasibility``; the projection
    onto the affine image solves a least-squares problem over the
    symmetric-basis coefficients of Q.
    """
    L = np.asarray(L, dtype=float)
    n = problem.n
    if L.shape != (n, n):
        raise ValueError(f"L must be {n} x {n}, got {L.shape}")

    # vectorized affine map: F(Q) = F0 + sum_ij q_ij * F(E_ij)
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    F0 = assemble_lmi(problem, np.zeros((n, n)), np.zeros((n, n)))
    columns = [assemble_lmi(problem, E, (E @ L).T) - F0 for E in basis]
    op = np.stack([c.ravel() for c in columns], axis=1)

    q0 = problem.tau * (problem.l ** 2 + 1.0) / 2.0
    Q = q0 * np.eye(n)
    F = assemble_lmi(problem, Q, (Q @ L).T)
    margin = _resolve_margin(problem, F)

    if problem.tau * problem.l ** 2 >= problem.tau - 2.0 * margin:
        return LmiCertificate(
            Q=Q, R=(Q @ L).T, L=L,
            lambda_max_F=float(numerics.symmetric_eigenvalues(F)[-1]),
            lambda_min_Q=float(numerics.symmetric_eigenvalues(Q)[0]),
            feasible=False, iterations=0, tau=problem.tau,
            reason="diagonal blocks require tau*l^2 I < Q < tau I, "
                   "impossible for l >= 1")

    best = (np.inf, Q)
    for it in range(1, max_iter + 1):
        lam_max = float(numerics.symmetric_eigenvalues(F)[-1])
        lam_min_q = float(numerics.symmetric_eigenvalues(Q)[0])
        if lam_max < best[0]:
            best = (lam_max, Q)
        if lam_max <= -margin and lam_min_q >= margin:
            return LmiCertificate(Q=Q, R=(Q @ L).T, L=L, lambda_max_F=lam_max,
                                  lambda_min_Q=lam_min_q, feasible=True,
                                  iterations=it, tau=problem.tau)
        X = project_negative_definite(F, 2.0 * margin)
        coeff = np.linalg.lstsq(op, (X - F0).ravel(), rcond=None)[0]
        Q = sum(c * E for c, E in zip(coeff, basis))
        Q = (Q + Q.T) / 2.0
        F = assemble_lmi(problem, Q, (Q @ L).T)

    lam_max, Q = best
    return LmiCertificate(
        Q=Q, R=(Q @ L).T, L=L, lambda_max_F=lam_max,
        lambda_min_Q=float(numerics.symmetric_eigenvalues(Q)[0]),
        feasible=False, iterations=max_iter, tau=problem.tau,
        reason="iteration budget exhausted for the fixed-gain restriction")


def solve_feasibility_tau_grid(M, C, l: float, taus=None,
                               margin: Optional[float] = None,
                               max_iter: int = DEFAULT_MAX_ITER) -> LmiCertificate:
    """Outer grid search over tau; returns the first feasible certificate.

    When no grid point is feasible, the certificate with the smallest
    lambda_max is returned (feasible=False).
    """
    if taus is None:
        taus = [round(0.05 * i, 2) for i in range(1, 21)]
    best = None
    for tau in taus:
        cert = solve_feasibility(LmiProblem(M=M, C=C, tau=float(tau), l=l,
                                            margin=margin), max_iter)
        if cert.feasible:
            return cert
        if best is None or cert.lambda_max_F < best.lambda_max_F:
            best = cert
    return best
