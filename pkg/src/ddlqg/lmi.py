"""LMI formulations of the LQR and steady-state Kalman design problems.

Model-based programs use (A, B, C); data-based ones use only the offline
matrices X0, X1, U0, Y0 and a right inverse [Phi1 Phi2] of [X0; U0]. Every
term of the form M S^{-1} M' is lowered to a Schur-complement block.

Observer convention: with L = Sigma^{-1} Pi the estimation-error matrix is
A - L C, whose data form is Sigma^{-1} (Sigma X1 - Pi Y0) Phi1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .lti_sim import LtiSystem, TrajectoryData, check_rank_condition
from .sdp import SdpBuilder, SdpModel, SdpSolution, bmat, solve_or_raise

PD_FLOOR = 1.0 - 1e-6


class RankConditionError(ValueError):
    """rank([X0; U0]) < n_x + n_u."""


class DegenerateSolution(ValueError):
    """A solution whose P / Sigma is not positive definite enough to invert."""


class GroundTruthUnavailable(ValueError):
    """An operation needs the simulated noise record W0, V0."""


def _require_rank(data: TrajectoryData) -> None:
    if not check_rank_condition(data):
        raise RankConditionError(
            f"rank([X0; U0]) must equal n_x + n_u = {data.n_x + data.n_u}")


@dataclass(frozen=True)
class PseudoInverseSplit:
    """Right inverse of [X0; U0] split by rows of the stacked matrix."""

    Phi1: np.ndarray  # T x n_x
    Phi2: np.ndarray  # T x n_u
    source: str = "MoorePenrose"

    def residual(self, data: TrajectoryData) -> float:
        n = data.n_x + data.n_u
        return float(np.linalg.norm(data.Phi0 @ np.hstack([self.Phi1, self.Phi2]) - np.eye(n)))


def pseudo_inverse_split(data: TrajectoryData) -> PseudoInverseSplit:
    """Moore-Penrose (minimum Frobenius norm) right inverse."""
    _require_rank(data)
    Pinv = np.linalg.pinv(data.Phi0)
    return PseudoInverseSplit(Pinv[:, :data.n_x], Pinv[:, data.n_x:], "MoorePenrose")


def identified_matrices(data: TrajectoryData, split: PseudoInverseSplit):
    """(X1 Phi1, X1 Phi2, Y0 Phi1): exact (A, B, C) for noise-free data."""
    return data.X1 @ split.Phi1, data.X1 @ split.Phi2, data.Y0 @ split.Phi1


# -- model-based programs ---------------------------------------------------

def build_model_based_sdp(sys: LtiSystem, W1, W2, variant: str = "lqr") -> SdpModel:
    """H2 program for the LQR gain (``variant="lqr"``, weights Wx, Wu) or the
    Kalman gain (``variant="kalman"``, covariances Nx, Ny).

    LQR uses Y = K P, Kalman uses Pi = Sigma L.
    """
    A, B, C = sys.A, sys.B, sys.C
    n = sys.n_x
    I = np.eye(n)
    if variant == "lqr":
        b = SdpBuilder("model_lqr")
        gamma = b.scalar("gamma")
        Y = b.matrix("Y", sys.n_u, n)
        P = b.symmetric("P", n)
        G = b.symmetric("G", sys.n_u)
        AP_BY = A @ P + B @ Y
        b.lmi(bmat([[P - I, AP_BY], [AP_BY.T, P]]), "lyapunov")
        b.lmi(P - I, "P>=I")
        b.lmi(bmat([[G, Y], [Y.T, P]]), "G>=KPK'")
        b.le((np.atleast_2d(W1) @ P).trace() + (np.atleast_2d(W2) @ G).trace(), gamma, "cost")
        b.minimize(gamma)
        return b.build()
    if variant == "kalman":
        b = SdpBuilder("model_kalman")
        eps = b.scalar("eps")
        Pi = b.matrix("Pi", n, sys.n_y)
        Sig = b.symmetric("Sigma", n)
        Ups = b.symmetric("Upsilon", sys.n_y)
        E = Sig @ A - Pi @ C
        b.lmi(bmat([[Sig - I, E.T], [E, Sig]]), "lyapunov")
        b.lmi(Sig - I, "Sigma>=I")
        b.lmi(bmat([[Ups, Pi.T], [Pi, Sig]]), "Upsilon>=L'SigmaL")
        b.le((np.atleast_2d(W1) @ Sig).trace() + (np.atleast_2d(W2) @ Ups).trace(), eps, "cost")
        b.minimize(eps)
        return b.build()
    raise ValueError(f"unknown variant {variant!r}")


# -- data-based LQR ---------------------------------------------------------

def _lqr_data_core(b: SdpBuilder, data: TrajectoryData, Wx, Wu):
    n, T = data.n_x, data.T
    gamma = b.scalar("gamma")
    Q = b.matrix("Q", T, n)
    P = b.symmetric("P", n)
    G = b.symmetric("G", data.n_u)
    X1Q = data.X1 @ Q
    U0Q = data.U0 @ Q
    b.lmi(bmat([[P - np.eye(n), X1Q], [X1Q.T, P]]), "lyapunov")
    b.lmi(P - np.eye(n), "P>=I")
    b.lmi(bmat([[G, U0Q], [U0Q.T, P]]), "G>=U0QP^-1Q'U0'")
    b.eq(data.X0 @ Q - P)
    cost = (np.atleast_2d(Wx) @ P).trace() + (np.atleast_2d(Wu) @ G).trace()
    return gamma, Q, P, cost


def build_lqr_data_sdp(data: TrajectoryData, Wx, Wu) -> SdpModel:
    """Data-based LQR program for noise-free state data; K = U0 Q P^{-1}."""
    _require_rank(data)
    b = SdpBuilder("data_lqr")
    gamma, Q, P, cost = _lqr_data_core(b, data, Wx, Wu)
    b.le(cost, gamma, "cost")
    b.minimize(gamma)
    return b.build()


def build_lqr_regularized_sdp(data: TrajectoryData, Wx, Wu, alpha1: float) -> SdpModel:
    """Noise-robust LQR program: adds M1 >= Q P^{-1} Q' with penalty alpha1 tr(M1)."""
    if alpha1 <= 0:
        raise ValueError("alpha1 must be positive")
    _require_rank(data)
    b = SdpBuilder("data_lqr_regularized")
    gamma, Q, P, cost = _lqr_data_core(b, data, Wx, Wu)
    M1 = b.symmetric("M1", data.T)
    b.lmi(bmat([[M1, Q], [Q.T, P]]), "M1>=QP^-1Q'")
    b.le(cost + alpha1 * M1.trace(), gamma, "cost")
    b.minimize(gamma)
    return b.build()


# -- data-based Kalman ------------------------------------------------------

def _kalman_data_core(b: SdpBuilder, data: TrajectoryData, split: PseudoInverseSplit, Nx, Ny):
    n, p = data.n_x, data.n_y
    eps = b.scalar("eps")
    Pi = b.matrix("Pi", n, p)
    Sig = b.symmetric("Sigma", n)
    Ups = b.symmetric("Upsilon", p)
    E = (Sig @ data.X1 - Pi @ data.Y0) @ split.Phi1
    b.lmi(bmat([[Sig - np.eye(n), E.T], [E, Sig]]), "lyapunov")
    b.lmi(Sig - np.eye(n), "Sigma>=I")
    b.lmi(bmat([[Ups, Pi.T], [Pi, Sig]]), "Upsilon>=Pi'Sigma^-1Pi")
    cost = (np.atleast_2d(Nx) @ Sig).trace() + (np.atleast_2d(Ny) @ Ups).trace()
    return eps, Pi, Sig, Ups, cost


def build_kalman_data_sdp(data: TrajectoryData, split: PseudoInverseSplit, Nx, Ny) -> SdpModel:
    """Data-based steady-state Kalman program; L = Sigma^{-1} Pi."""
    _require_rank(data)
    b = SdpBuilder("data_kalman")
    eps, _, _, _, cost = _kalman_data_core(b, data, split, Nx, Ny)
    b.le(cost, eps, "cost")
    b.minimize(eps)
    return b.build()


def build_kalman_robust_sdp(data: TrajectoryData, split: PseudoInverseSplit, Nx, Ny,
                            alpha2: float) -> SdpModel:
    """Kalman program with alpha2 (||Upsilon|| + ||Sigma|| + ||Pi||) added to the cost.

    Spectral norms enter through epigraph scalars: s I - Upsilon >= 0,
    s I - Sigma >= 0 and [[s I, Pi], [Pi', s I]] >= 0.
    """
    if alpha2 <= 0:
        raise ValueError("alpha2 must be positive")
    _require_rank(data)
    n, p = data.n_x, data.n_y
    b = SdpBuilder("data_kalman_robust")
    eps, Pi, Sig, Ups, cost = _kalman_data_core(b, data, split, Nx, Ny)
    s_ups = b.scalar("s_Upsilon")
    s_sig = b.scalar("s_Sigma")
    s_pi = b.scalar("s_Pi")
    b.lmi(s_ups.eye(p) - Ups, "||Upsilon||")
    b.lmi(s_sig.eye(n) - Sig, "||Sigma||")
    b.lmi(bmat([[s_pi.eye(n), Pi], [Pi.T, s_pi.eye(p)]]), "||Pi||")
    b.le(cost + alpha2 * (s_ups + s_sig + s_pi), eps, "cost")
    b.minimize(eps)
    return b.build()


# -- pseudo-inverse selection -----------------------------------------------

def build_phi_min_sdp(data: TrajectoryData) -> SdpModel:
    """Right inverse of [X0; U0] minimizing tr(Phi1' Phi1) via M2 >= Phi1' Phi1."""
    _require_rank(data)
    n, m, T = data.n_x, data.n_u, data.T
    b = SdpBuilder("phi_min")
    rho = b.scalar("rho")
    M2 = b.symmetric("M2", n)
    Phi1 = b.matrix("Phi1", T, n)
    Phi2 = b.matrix("Phi2", T, m)
    b.eq(data.X0 @ Phi1, np.eye(n))
    b.eq(data.U0 @ Phi1, np.zeros((m, n)))
    b.eq(data.X0 @ Phi2, np.zeros((n, m)))
    b.eq(data.U0 @ Phi2, np.eye(m))
    b.lmi(bmat([[M2, Phi1.T], [Phi1, np.eye(T)]]), "M2>=Phi1'Phi1")
    b.le(M2.trace(), rho, "cost")
    b.minimize(rho)
    return b.build()


def split_from_solution(solution: SdpSolution) -> PseudoInverseSplit:
    v = solution.values
    return PseudoInverseSplit(np.asarray(v["Phi1"]), np.asarray(v["Phi2"]), "NormMinimizing")


def norm_minimizing_split(data: TrajectoryData, **solve_kw) -> PseudoInverseSplit:
    return split_from_solution(solve_or_raise(build_phi_min_sdp(data), **solve_kw))


# -- gain recovery ----------------------------------------------------------

def _spd_inverse_apply(S: np.ndarray, R: np.ndarray, what: str) -> np.ndarray:
    """S^{-1} R with S checked to satisfy S >= (1 - 1e-6) I."""
    S, R = np.atleast_2d(S), np.atleast_2d(R)
    S = 0.5 * (S + S.T)
    if np.linalg.eigvalsh(S)[0] < PD_FLOOR:
        raise DegenerateSolution(f"{what} is not positive definite above the I floor")
    return sla.cho_solve(sla.cho_factor(S), R)


def _require_optimal(solution: SdpSolution) -> None:
    if not solution.ok:
        raise DegenerateSolution(f"solution status is {solution.status.value}, not Optimal")


def recover_lqr_gain(solution: SdpSolution, data: Optional[TrajectoryData] = None) -> np.ndarray:
    """K = U0 Q P^{-1} (data programs) or K = Y P^{-1} (model-based program)."""
    _require_optimal(solution)
    v = solution.values
    P = np.atleast_2d(v["P"])
    if "Y" in v:
        R = np.atleast_2d(v["Y"])
    else:
        if data is None:
            raise ValueError("data-based solution needs the trajectory to recover K")
        R = data.U0 @ np.asarray(v["Q"])
    return _spd_inverse_apply(P, R.T, "P").T


def recover_kalman_gain(solution: SdpSolution) -> np.ndarray:
    """L = Sigma^{-1} Pi."""
    _require_optimal(solution)
    v = solution.values
    return _spd_inverse_apply(np.asarray(v["Sigma"]), np.asarray(v["Pi"]), "Sigma")


# -- noise-gap diagnostics --------------------------------------------------

@dataclass(frozen=True)
class GapDiagnostics:
    Theta: np.ndarray
    M: np.ndarray
    Psi: np.ndarray
    psi_norm: float
    psi_lambda_max: float
    margin: float  # 1 - 1/eta1
    condition_holds: bool  # lambda_max(Psi) <= margin
    bound_product: float  # ||M|| ||Phi1' Phi1||
    bound_holds: bool  # bound_product <= margin


def gap_diagnostics(data: TrajectoryData, Sigma, Pi, split: PseudoInverseSplit,
                    eta1: float = 2.0) -> GapDiagnostics:
    """Discrepancy between the certainty-equivalent and the true stability constraint.

    Theta is the certainty-equivalent left-hand side (without +I) and
    Psi = Phi1' M Phi1 the correction such that Theta + Psi equals the same
    expression built from noise-free data, i.e. (A - LC)' Sigma (A - LC) - Sigma.
    """
    if not data.has_ground_truth:
        raise GroundTruthUnavailable("gap diagnostics need W0 and V0")
    if eta1 < 1:
        raise ValueError("eta1 must be >= 1")
    Sigma = np.asarray(Sigma, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    Sinv = np.linalg.inv(Sigma)
    a = Sigma @ data.X1 - Pi @ data.Y0
    d = Sigma @ data.W0 - Pi @ data.V0
    Theta = split.Phi1.T @ a.T @ Sinv @ a @ split.Phi1 - Sigma
    M = (a - d).T @ Sinv @ (a - d) - a.T @ Sinv @ a
    M = 0.5 * (M + M.T)
    Psi = split.Phi1.T @ M @ split.Phi1
    Psi = 0.5 * (Psi + Psi.T)
    margin = 1.0 - 1.0 / eta1
    lam = float(np.linalg.eigvalsh(Psi)[-1])
    prod = float(np.linalg.norm(M, 2) * np.linalg.norm(split.Phi1.T @ split.Phi1, 2))
    return GapDiagnostics(Theta, M, Psi, float(np.linalg.norm(Psi, 2)), lam, margin,
                          lam <= margin, prod, prod <= margin)
