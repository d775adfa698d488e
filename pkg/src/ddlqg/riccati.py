"""Model-based reference gains from the two discrete algebraic Riccati equations.

Everything here uses the true (A, B, C) and serves as the independent oracle
against which the data-based semidefinite programs are checked.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

SCHUR_MARGIN = 1e-9


class DareNoConvergence(RuntimeError):
    """Fixed-point iteration hit its iteration cap."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"DARE iteration did not converge after {iterations} steps "
                         f"(last residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class DareSolution:
    P: np.ndarray
    iterations: int
    residual: float


def _sym(M):
    return 0.5 * (M + M.T)


def _spd_solve(S: np.ndarray, R: np.ndarray) -> np.ndarray:
    """S^{-1} R for symmetric positive definite S."""
    try:
        c = sla.cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix expected to be positive definite is not") from exc
    return sla.cho_solve(c, R, check_finite=False)


def riccati_map(P, A, B, Wx, Wu):
    """One value-iteration step A'PA - A'PB (Wu + B'PB)^{-1} B'PA + Wx."""
    PA = P @ A
    BtPA = B.T @ PA
    return _sym(A.T @ PA - BtPA.T @ _spd_solve(Wu + B.T @ P @ B, BtPA) + Wx)


def dare_residual(P, A, B, Wx, Wu) -> float:
    """Frobenius norm of the LQR-form DARE residual at P."""
    return float(np.linalg.norm(riccati_map(P, A, B, Wx, Wu) - P))


def solve_dare(A, B, Wx, Wu, tol: float = 1e-12, max_iter: int = 100_000,
               P0: Optional[np.ndarray] = None) -> DareSolution:
    """Solve A'PA - P - A'PB(Wu + B'PB)^{-1}B'PA + Wx = 0 by value iteration.

    Starts from ``P0`` (default ``Wx``) and stops once the update, which equals
    the DARE residual at the current iterate, drops below ``tol``.
    """
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Wx, Wu = np.atleast_2d(Wx).astype(float), np.atleast_2d(Wu).astype(float)
    try:
        np.linalg.cholesky(Wu)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Wu must be positive definite") from exc
    P = _sym(Wx.copy() if P0 is None else np.asarray(P0, dtype=float))
    res = np.inf
    for k in range(1, max_iter + 1):
        P_next = riccati_map(P, A, B, Wx, Wu)
        res = float(np.linalg.norm(P_next - P))
        P = P_next
        if res <= tol:
            return DareSolution(P, k, dare_residual(P, A, B, Wx, Wu))
        if not np.isfinite(res):
            break
    raise DareNoConvergence(res, max_iter)


def lqr_gain(A, B, Wx, Wu, **kw) -> np.ndarray:
    """K = -(Wu + B'PB)^{-1} B'PA, so that u = K x."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Wu = np.atleast_2d(Wu).astype(float)
    P = solve_dare(A, B, Wx, Wu, **kw).P
    return -_spd_solve(Wu + B.T @ P @ B, B.T @ P @ A)


def kalman_gain(A, C, Nx, Ny, **kw) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state predictor gain L = A S C'(C S C' + Ny)^{-1}.

    S solves the filtering DARE, obtained from the LQR form on (A', C').
    Returns ``(S, L)``.
    """
    A, C = np.atleast_2d(A).astype(float), np.atleast_2d(C).astype(float)
    Ny = np.atleast_2d(Ny).astype(float)
    S = solve_dare(A.T, C.T, Nx, Ny, **kw).P
    L = _spd_solve(C @ S @ C.T + Ny, C @ S @ A.T).T
    return S, L


def spectral_radius(M) -> float:
    M = np.atleast_2d(M)
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def is_schur_stable(M, margin: float = SCHUR_MARGIN) -> bool:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    return spectral_radius(M) < 1.0 - margin
