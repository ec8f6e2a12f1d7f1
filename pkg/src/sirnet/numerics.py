"""Dense linear-algebra kernel for small matrices.

Everything downstream (reproduction numbers, Lyapunov certificates, rank
tests, LMI feasibility) is built on the four routines here: spectral
radius, symmetric eigenvalues, numerical rank, and projection onto the
positive-semidefinite cone.  Matrices in this package are tiny (at most a
few dozen rows), dense, and real, so ``numpy.linalg`` factorizations are
used as the backing decompositions.  The spectral radius additionally has
a deterministic power-iteration path so that repeated runs are
bit-reproducible and so the full eigensolver remains available as an
independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EIG_TOL = 1e-10
DEFAULT_RANK_TOL = 1e-9
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class SpectrumResult:
    """Spectral radius together with the full eigenvalue list.

    ``converged`` reports whether the power iteration reached its residual
    tolerance; when it did not (or was not applicable), the radius comes
    from the dense eigensolver and ``iterations`` holds the iteration
    count spent before falling back.
    """

    spectral_radius: float
    eigenvalues: np.ndarray
    converged: bool
    iterations: int


def _as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _as_square(m, name: str = "matrix") -> np.ndarray:
    a = _as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def _is_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    return float(np.abs(a - a.T).max(initial=0.0)) <= tol * scale


def spectral_radius(m, tol: float = DEFAULT_EIG_TOL,
                    max_iter: int = 10_000) -> SpectrumResult:
    """Spectral radius of a square matrix.

    For elementwise-nonnegative input the dominant (Perron) eigenvalue is
    found by power iteration from the normalized all-ones vector; at the
    residual tolerance ``tol`` the Rayleigh quotient is returned.  On
    breakdown or non-convergence -- and for matrices with negative
    entries -- the radius is taken from the dense eigensolver instead.
    The full eigenvalue list is always included in the result.
    """
    a = _as_square(m)
    if tol <= 0:
        raise ValueError("tol must be positive")

    if _is_symmetric(a):
        eigenvalues = np.linalg.eigvalsh((a + a.T) / 2.0)
    else:
        eigenvalues = np.linalg.eigvals(a)
    rho_eig = float(np.abs(eigenvalues).max()) if a.size else 0.0

    if not np.all(a >= 0.0):
        return SpectrumResult(rho_eig, eigenvalues, True, 0)

    # power iteration, advancing a fixed block of steps per residual check
    # (the dominant eigenvector of a^block is the Perron vector of a)
    n = a.shape[0]
    block = 16
    a_block = np.linalg.matrix_power(a, block)
    v = np.ones(n) / np.sqrt(n)
    for it in range(block, max_iter + 1, block):
        w = a_block @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0 or not np.isfinite(norm_w):
            break  # start vector died out; let the eigensolver decide
        v = w / norm_w
        av = a @ v
        lam = float(v @ av)
        residual = float(np.linalg.norm(av - lam * v))
        if residual <= tol * max(1.0, abs(lam)):
            # guard the result against the independent eigensolver value
            if abs(lam - rho_eig) <= 10.0 * tol * max(1.0, rho_eig):
                return SpectrumResult(lam, eigenvalues, True, it)
            break
    return SpectrumResult(rho_eig, eigenvalues, False, max_iter)


def symmetric_eigenvalues(m, asym_tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted ascending.

    The input is symmetrized before decomposition; asymmetry beyond
    ``asym_tol`` (relative to the largest entry) is an error.
    """
    a = _as_square(m)
    if not _is_symmetric(a, asym_tol):
        raise ValueError(
            f"matrix is asymmetric beyond tolerance {asym_tol:g}: "
            f"max |m - m^T| = {np.abs(a - a.T).max():.3e}")
    return np.linalg.eigvalsh((a + a.T) / 2.0)


def rank(m, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank: singular values above ``tol`` times the largest."""
    a = _as_matrix(m)
    if a.size == 0:
        return 0
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > tol * sv[0]))


def project_to_psd(m) -> np.ndarray:
    """Nearest positive-semidefinite matrix in Frobenius norm.

    Eigendecomposes the (symmetric) input and clamps negative eigenvalues
    to zero.  Symmetric input is required; the result is symmetric and
    idempotent under re-projection.
    """
    a = _as_square(m)
    if not _is_symmetric(a):
        raise ValueError("project_to_psd requires a symmetric matrix")
    w, v = np.linalg.eigh((a + a.T) / 2.0)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    return (out + out.T) / 2.0
