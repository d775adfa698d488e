"""Data-driven dynamic output-feedback controller and closed-loop evaluation.

The controller is

    xhat(t+1) = A_cl xhat(t) + L y(t),    u(t) = K xhat(t),
    A_cl = X1 Phi1 + X1 Phi2 K - L Y0 Phi1,

assembled from data only. Simulation runs it against a ground-truth plant.
"""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lmi import (
    PseudoInverseSplit,
    GroundTruthUnavailable,
    build_kalman_data_sdp,
    build_kalman_robust_sdp,
    build_lqr_data_sdp,
    build_lqr_regularized_sdp,
    build_phi_min_sdp,
    pseudo_inverse_split,
    recover_kalman_gain,
    recover_lqr_gain,
    split_from_solution,
)
from .lti_sim import LtiSystem, NoiseSpec, TrajectoryData, generate_noise, make_rng
from .riccati import spectral_radius
from .sdp import solve_or_raise

DIVERGENCE_THRESHOLD = 1e12
DECAY_FIT_WINDOW = (5, 60)


@dataclass
class ControllerRealization:
    """Observer/controller recursion with its current estimate.

    ``A_hat``, ``B_hat``, ``C_hat`` are the data-based stand-ins for A, B, C
    used to build ``A_cl``; they are kept for diagnostics only.
    """

    A_cl: np.ndarray
    K: np.ndarray
    L: np.ndarray
    xhat: np.ndarray
    A_hat: Optional[np.ndarray] = None
    B_hat: Optional[np.ndarray] = None
    C_hat: Optional[np.ndarray] = None

    @property
    def n_x(self) -> int:
        return self.A_cl.shape[0]

    def reset(self, xhat0=None) -> None:
        self.xhat = np.zeros(self.n_x) if xhat0 is None else np.asarray(xhat0, dtype=float).copy()

    def clone(self) -> "ControllerRealization":
        return copy.deepcopy(self)


def build_controller(data: TrajectoryData, split: PseudoInverseSplit, K, L) -> ControllerRealization:
    """Assemble the recursion from X1, Y0 and the right inverse (never from A, B, C)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n = data.n_x
    if K.shape != (data.n_u, n):
        raise ValueError(f"K must be {data.n_u}x{n}, got {K.shape}")
    if L.shape != (n, data.n_y):
        raise ValueError(f"L must be {n}x{data.n_y}, got {L.shape}")
    if split.Phi1.shape != (data.T, n) or split.Phi2.shape != (data.T, data.n_u):
        raise ValueError("right inverse does not match the data dimensions")
    A_hat = data.X1 @ split.Phi1
    B_hat = data.X1 @ split.Phi2
    C_hat = data.Y0 @ split.Phi1
    A_cl = A_hat + B_hat @ K - L @ C_hat
    return ControllerRealization(A_cl, K, L, np.zeros(n), A_hat, B_hat, C_hat)


def model_based_controller(sys: LtiSystem, K, L) -> ControllerRealization:
    """The same recursion built from the true matrices: A_cl = A + B K - L C."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    return ControllerRealization(sys.A + sys.B @ K - L @ sys.C, K, L, np.zeros(sys.n_x),
                                 sys.A, sys.B, sys.C)


def controller_step(ctrl: ControllerRealization, y) -> tuple[np.ndarray, np.ndarray]:
    """Emit u(t) = K xhat(t), then advance xhat to A_cl xhat + L y(t).

    Mutates ``ctrl`` and returns ``(u, xhat_next)``.
    """
    u = ctrl.K @ ctrl.xhat
    ctrl.xhat = ctrl.A_cl @ ctrl.xhat + ctrl.L @ np.asarray(y, dtype=float)
    return u, ctrl.xhat


# -- design pipelines -------------------------------------------------------

@dataclass(frozen=True)
class GainPair:
    """Designed gains, the right inverse they were built with, and solver objectives."""

    K: np.ndarray
    L: np.ndarray
    split: PseudoInverseSplit
    objectives: dict = field(default_factory=dict)
    kind: str = "noise-free"

    def controller(self, data: TrajectoryData) -> ControllerRealization:
        return build_controller(data, self.split, self.K, self.L)


def design_noise_free(data: TrajectoryData, Wx, Wu, Nx, Ny, **solve_kw) -> GainPair:
    """Gains from the noise-free data programs with the Moore-Penrose split."""
    split = pseudo_inverse_split(data)
    s_k = solve_or_raise(build_lqr_data_sdp(data, Wx, Wu), **solve_kw)
    s_l = solve_or_raise(build_kalman_data_sdp(data, split, Nx, Ny), **solve_kw)
    return GainPair(recover_lqr_gain(s_k, data), recover_kalman_gain(s_l), split,
                    {"lqr": s_k.objective, "kalman": s_l.objective}, "noise-free")


def design_robust(data: TrajectoryData, Wx, Wu, Nx, Ny, alpha1: float, alpha2: float,
                  **solve_kw) -> GainPair:
    """Gains from the regularized LQR program, the norm-minimizing right inverse
    and the norm-penalized Kalman program."""
    s_k = solve_or_raise(build_lqr_regularized_sdp(data, Wx, Wu, alpha1), **solve_kw)
    s_phi = solve_or_raise(build_phi_min_sdp(data), **solve_kw)
    split = split_from_solution(s_phi)
    s_l = solve_or_raise(build_kalman_robust_sdp(data, split, Nx, Ny, alpha2), **solve_kw)
    return GainPair(recover_lqr_gain(s_k, data), recover_kalman_gain(s_l), split,
                    {"lqr": s_k.objective, "phi": s_phi.objective, "kalman": s_l.objective},
                    "robust")


# -- composite closed-loop matrices ----------------------------------------

@dataclass(frozen=True)
class CompositeReport:
    """Closed-loop matrices in (x, xhat) coordinates (Xi0) and in
    (x, xhat - x) coordinates split as Xi3 = Xi1 + Xi2."""

    Xi0: np.ndarray
    Xi1: np.ndarray
    Xi2: np.ndarray
    Xi3: np.ndarray
    rho_xi0: float
    rho_xi1: float
    norm_xi2: float
    eig_xi0: np.ndarray
    eig_xi3: np.ndarray
    similarity_residual: float
    block_union_residual: float

    @property
    def stable(self) -> bool:
        return self.rho_xi0 < 1.0

    def to_dict(self) -> dict:
        def cplx(v):
            return [[float(z.real), float(z.imag)] for z in v]
        return {
            "rho_xi0": self.rho_xi0,
            "rho_xi1": self.rho_xi1,
            "norm_xi2": self.norm_xi2,
            "eig_xi0": cplx(self.eig_xi0),
            "eig_xi3": cplx(self.eig_xi3),
            "similarity_residual": self.similarity_residual,
            "block_union_residual": self.block_union_residual,
        }


def _sorted_eigs(M) -> np.ndarray:
    ev = np.linalg.eigvals(M)
    return ev[np.lexsort((ev.imag, ev.real, np.round(np.abs(ev), 10)))]


def eig_multiset_distance(M1, M2) -> float:
    """Largest distance between matched eigenvalues of two square matrices.

    Matching is an optimal assignment on |lambda_i - mu_j|, so ordering ties do
    not matter.
    """
    from scipy.optimize import linear_sum_assignment

    a, b = np.linalg.eigvals(M1), np.linalg.eigvals(M2)
    if len(a) != len(b):
        return np.inf
    D = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(D)
    return float(D[r, c].max()) if len(a) else 0.0


def composite_matrices(data: TrajectoryData, split: PseudoInverseSplit, K, L):
    """(Xi0, Xi1, Xi2, Xi3) built from the data and its recorded noise."""
    if not data.has_ground_truth:
        raise GroundTruthUnavailable("composite matrices need W0 and V0")
    K = np.atleast_2d(K)
    L = np.atleast_2d(L)
    P1, P2 = split.Phi1, split.Phi2
    X1, Y0, W0, V0 = data.X1, data.Y0, data.W0, data.V0
    A_cl = X1 @ P1 + X1 @ P2 @ K - L @ Y0 @ P1
    Xi0 = np.block([[(X1 - W0) @ P1, (X1 - W0) @ P2 @ K],
                    [L @ (Y0 - V0) @ P1, A_cl]])
    n = data.n_x
    Z = np.zeros((n, n))
    Xi1 = np.block([[(X1 - W0) @ P1 + (X1 - W0) @ P2 @ K, (X1 - W0) @ P2 @ K],
                    [Z, X1 @ P1 - L @ Y0 @ P1]])
    Xi2 = np.block([[Z, Z],
                    [W0 @ P1 + W0 @ P2 @ K - L @ V0 @ P1, W0 @ P2 @ K]])
    return Xi0, Xi1, Xi2, Xi1 + Xi2


def composite_stability(data: TrajectoryData, split: PseudoInverseSplit, K, L,
                        sys: Optional[LtiSystem] = None) -> CompositeReport:
    """Spectral report of the closed loop, including the Xi0 / Xi3 similarity check.

    When ``sys`` is given the data must be consistent with it (the recorded
    noise reproduces the trajectory); this is asserted to 1e-8.
    """
    if sys is not None:
        ex, ey = data.reconstruction_error(sys)
        if max(ex, ey) > 1e-8:
            raise ValueError("trajectory is not consistent with the given plant")
    Xi0, Xi1, Xi2, Xi3 = composite_matrices(data, split, K, L)
    n = data.n_x
    blocks = np.concatenate([np.linalg.eigvals(Xi1[:n, :n]), np.linalg.eigvals(Xi1[n:, n:])])
    union_res = eig_multiset_distance(Xi1, np.diag(blocks))
    return CompositeReport(
        Xi0, Xi1, Xi2, Xi3,
        rho_xi0=spectral_radius(Xi0), rho_xi1=spectral_radius(Xi1),
        norm_xi2=float(np.linalg.norm(Xi2, 2)),
        eig_xi0=_sorted_eigs(Xi0), eig_xi3=_sorted_eigs(Xi3),
        similarity_residual=eig_multiset_distance(Xi0, Xi3),
        block_union_residual=union_res,
    )


# -- simulation -------------------------------------------------------------

@dataclass(frozen=True)
class ClosedLoopTrace:
    """Closed-loop record.

    ``x`` and ``xhat`` hold samples t = 0..N (N + 1 columns); ``u``, ``y``
    hold t = 0..N-1. N equals the requested horizon unless the loop diverged.
    """

    x: np.ndarray
    xhat: np.ndarray
    u: np.ndarray
    y: np.ndarray
    step_times: np.ndarray
    diverged: bool = False
    composite: Optional[CompositeReport] = None

    @property
    def steps(self) -> int:
        return self.u.shape[1]

    @property
    def e(self) -> np.ndarray:
        return self.x - self.xhat

    @property
    def err_norm(self) -> np.ndarray:
        return np.linalg.norm(self.e, axis=0)

    @property
    def status(self) -> str:
        return "diverged" if self.diverged else "ok"


def simulate_closed_loop(sys: LtiSystem, ctrl: ControllerRealization, x0, noise: NoiseSpec,
                         horizon: int, rng: Optional[np.random.Generator] = None,
                         data: Optional[TrajectoryData] = None,
                         split: Optional[PseudoInverseSplit] = None) -> ClosedLoopTrace:
    """Run plant and controller for ``horizon`` steps.

    The controller instance is cloned, so the caller's estimate is untouched.
    Passing the offline ``data`` and ``split`` (with recorded noise) attaches a
    composite-stability report. A state norm above 1e12 (or a non-finite
    value) stops the run and flags divergence.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.shape != (sys.n_x,):
        raise ValueError(f"x0 must have length {sys.n_x}")
    ctrl = ctrl.clone()
    W, V = generate_noise(noise, horizon, sys.n_x, sys.n_y, rng)
    xs = np.empty((sys.n_x, horizon + 1))
    xh = np.empty((sys.n_x, horizon + 1))
    us = np.empty((sys.n_u, horizon))
    ys = np.empty((sys.n_y, horizon))
    times = np.empty(horizon)
    xs[:, 0], xh[:, 0] = x, ctrl.xhat
    diverged = False
    N = horizon
    for t in range(horizon):
        y = sys.C @ x + V[:, t]
        t0 = time.perf_counter()
        u, _ = controller_step(ctrl, y)
        times[t] = time.perf_counter() - t0
        x = sys.A @ x + sys.B @ u + W[:, t]
        us[:, t], ys[:, t] = u, y
        xs[:, t + 1], xh[:, t + 1] = x, ctrl.xhat
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_THRESHOLD:
            diverged = True
            N = t + 1
            break
    report = None
    if data is not None and split is not None and data.has_ground_truth:
        report = composite_stability(data, split, ctrl.K, ctrl.L)
    return ClosedLoopTrace(xs[:, :N + 1], xh[:, :N + 1], us[:, :N], ys[:, :N], times[:N],
                           diverged, report)


@dataclass(frozen=True)
class EstimationMetrics:
    ebar: float
    decay_slope: float
    per_step_time: float


def estimation_metrics(trace: ClosedLoopTrace, window: int = 100,
                       fit: tuple[int, int] = DECAY_FIT_WINDOW) -> EstimationMetrics:
    """Mean ||xhat(t) - x(t)|| over t = 0..window-1, the least-squares slope of
    log ||e(t)|| over ``fit`` (inclusive), and the mean controller-step time.

    The averaging range is exactly the rows of the exported trace CSV, so the
    value can be recomputed from that file.
    """
    en = trace.err_norm
    if trace.steps < window:
        raise ValueError(f"trace has {trace.steps} steps, need at least {window}")
    ebar = float(np.mean(en[:window]))
    lo, hi = fit
    ts = np.arange(lo, min(hi, len(en) - 1) + 1)
    vals = en[ts]
    keep = vals > 0
    slope = np.nan
    if keep.sum() >= 2:
        slope = float(np.polyfit(ts[keep], np.log(vals[keep]), 1)[0])
    return EstimationMetrics(ebar, slope, float(np.mean(trace.step_times)))


def random_initial_state(n: int, seed: int) -> np.ndarray:
    return make_rng(seed).uniform(-1.0, 1.0, n)
