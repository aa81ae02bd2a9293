"""Truncated eigenbasis of the surface operator and heat-diffusion solvers.

Two time-stepping routes are provided.  The spectral route decays each basis
coefficient by exp(-lambda tau) (exact in time on the truncated basis); the
implicit route takes one backward-Euler step by solving (M + tau S) u = M u0
with a cached sparse factorization.  `diffuse_spectral_implicit` applies the
backward-Euler transfer function (1 + lambda tau)^-1 in the spectral domain,
which reproduces the implicit solve exactly when the basis is complete.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError
from .laplacian import LaplacianOperator

DEFAULT_MODES = 100
LANCZOS_TOL = 1e-10


@dataclass
class SpectralBasis:
    """Ascending eigenvalues and M-orthonormal eigenvectors of S phi = lam M phi."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (n_points, n_modes)
    mass: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)


def timestep(h: float, alpha: float) -> float:
    """Diffusion time tau = alpha h^2 for mean spacing h."""
    if h <= 0 or alpha <= 0:
        raise DomainError("h and alpha must be positive")
    return alpha * h * h


def _fix_signs(phi: np.ndarray) -> np.ndarray:
    lead = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[lead, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return phi * signs


def compute_basis(op: LaplacianOperator, n_modes: int = DEFAULT_MODES, seed: int = 0) -> SpectralBasis:
    """Smallest n_modes generalized eigenpairs via shift-invert Lanczos.

    Falls back to a dense solve when the requested basis is (nearly) complete,
    where Lanczos iteration is not applicable.
    """
    n = op.n
    if not 1 <= n_modes <= n:
        raise DomainError(f"n_modes must be in [1, {n}]")
    S = op.stiffness
    M = op.mass

    if n_modes >= n - 1 or n < 64:
        lam_all, phi_all = scipy.linalg.eigh(S.toarray(), np.diag(M))
        lam, phi = lam_all[:n_modes], phi_all[:, :n_modes]
    else:
        sigma = -1e-8 * S.diagonal().sum() / n
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            lam, phi = spla.eigsh(
                S,
                k=n_modes,
                M=sp.diags(M).tocsc(),
                sigma=sigma,
                which="LM",
                v0=v0,
                tol=LANCZOS_TOL,
                maxiter=max(1000, 50 * n_modes),
            )
        except spla.ArpackNoConvergence as exc:
            raise SolverError(
                f"eigensolver converged only {len(exc.eigenvalues)}/{n_modes} pairs"
            ) from exc

    order = np.argsort(lam)
    lam = lam[order]
    phi = phi[:, order]
    lam = np.maximum(lam, 0.0)  # clamp solver noise on the null mode

    # enforce M-orthonormality (guards against degenerate-cluster drift)
    gram = phi.T @ (M[:, None] * phi)
    chol = np.linalg.cholesky(gram)
    phi = scipy.linalg.solve_triangular(chol, phi.T, lower=True).T
    phi = _fix_signs(phi)
    return SpectralBasis(eigenvalues=lam, eigenvectors=phi, mass=M)


def project(basis: SpectralBasis, u: np.ndarray) -> np.ndarray:
    """Spectral coefficients Phi^T M u of a per-point field."""
    u = np.asarray(u, dtype=float)
    if u.shape != basis.mass.shape:
        raise DomainError("field length does not match the basis")
    return basis.eigenvectors.T @ (basis.mass * u)


def reconstruct(basis: SpectralBasis, coeffs: np.ndarray) -> np.ndarray:
    """Per-point field Phi c from spectral coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.n_modes,):
        raise DomainError("coefficient length does not match the basis")
    return basis.eigenvectors @ coeffs


def diffuse_spectral(basis: SpectralBasis, u0: np.ndarray, tau: float) -> np.ndarray:
    """Heat flow for time tau: coefficients decay by exp(-lambda tau)."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    return reconstruct(basis, np.exp(-basis.eigenvalues * tau) * project(basis, u0))


def diffuse_spectral_implicit(basis: SpectralBasis, u0: np.ndarray, tau: float) -> np.ndarray:
    """Backward-Euler step evaluated in the spectral domain."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    return reconstruct(basis, project(basis, u0) / (1.0 + basis.eigenvalues * tau))


def diffuse_implicit(op: LaplacianOperator, u0: np.ndarray, tau: float) -> np.ndarray:
    """Backward-Euler step (M + tau S) u = M u0 with a cached factorization."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (op.n,):
        raise DomainError("field length does not match the operator")
    if tau == 0.0:
        return u0.copy()
    with op._cache_lock:
        solve = op._factor_cache.get(tau)
    if solve is None:
        A = (sp.diags(op.mass) + tau * op.stiffness).tocsc()
        try:
            solve = spla.factorized(A)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed for tau={tau}") from exc
        with op._cache_lock:
            solve = op._factor_cache.setdefault(tau, solve)
    return solve(op.mass * u0)


def save_basis(basis: SpectralBasis, path) -> None:
    np.savez(
        path,
        eigenvalues=basis.eigenvalues,
        eigenvectors=basis.eigenvectors,
        mass=basis.mass,
    )


def load_basis(path) -> SpectralBasis:
    data = np.load(path)
    return SpectralBasis(
        eigenvalues=data["eigenvalues"],
        eigenvectors=data["eigenvectors"],
        mass=data["mass"],
    )
