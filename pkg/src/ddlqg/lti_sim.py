"""Ground-truth LTI plant, noise generation and offline data collection.

The plant is

    x(t+1) = A x(t) + B u(t) + w(t)
    y(t)   = C x(t) + v(t)

and an offline experiment of length T is stored column-wise as the data
matrices X0, X1, U0, Y0 (plus the noise records W0, V0 when simulated).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NOISE_KINDS = ("uniform", "gaussian", "zero")


def make_rng(seed: int) -> np.random.Generator:
    """Portable seeded generator (PCG64), identical streams across platforms."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def numerical_rank(M: np.ndarray) -> int:
    """Rank counting singular values above ``max(M.shape) * eps * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(M.shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1) if name == "C" else M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {M.shape}")
    return M


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time plant (A, B, C). Only used for data generation and oracle checks."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        if C.shape[1] != A.shape[0]:
            raise ValueError(f"C has {C.shape[1]} columns, expected {A.shape[0]}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def controllability_matrix(self) -> np.ndarray:
        blocks = [self.B]
        for _ in range(self.n_x - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)

    def observability_matrix(self) -> np.ndarray:
        blocks = [self.C]
        for _ in range(self.n_x - 1):
            blocks.append(blocks[-1] @ self.A)
        return np.vstack(blocks)

    def is_controllable(self) -> bool:
        return numerical_rank(self.controllability_matrix()) == self.n_x

    def is_observable(self) -> bool:
        return numerical_rank(self.observability_matrix()) == self.n_x

    @classmethod
    def from_dict(cls, cfg: dict) -> "LtiSystem":
        return cls(np.array(cfg["A"], dtype=float), np.array(cfg["B"], dtype=float),
                   np.array(cfg["C"], dtype=float))


@dataclass(frozen=True)
class NoiseSpec:
    """Process/measurement noise description.

    ``uniform``: every component i.i.d. on [-wbar, wbar] (resp. [-vbar, vbar]).
    ``gaussian``: zero-mean with covariances ``Nx`` and ``Ny``.
    ``zero``: no noise.

    ``Ew`` optionally maps a lower-dimensional process noise into the state,
    w(t) = Ew w_raw(t); the raw noise then has ``Ew.shape[1]`` components.
    """

    kind: str = "zero"
    wbar: float = 0.0
    vbar: float = 0.0
    Nx: Optional[np.ndarray] = None
    Ny: Optional[np.ndarray] = None
    seed: int = 0
    Ew: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.wbar < 0 or self.vbar < 0:
            raise ValueError("noise bounds must be non-negative")
        for name in ("Nx", "Ny"):
            M = getattr(self, name)
            if M is None:
                continue
            M = np.atleast_2d(np.asarray(M, dtype=float))
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, M)
        if self.kind == "gaussian" and (self.Nx is None or self.Ny is None):
            raise ValueError("gaussian noise needs both Nx and Ny")
        if self.Ew is not None:
            object.__setattr__(self, "Ew", np.atleast_2d(np.asarray(self.Ew, dtype=float)))

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls("zero")

    @classmethod
    def uniform(cls, wbar: float, vbar: float, seed: int = 0, Ew=None) -> "NoiseSpec":
        return cls("uniform", wbar=wbar, vbar=vbar, seed=seed, Ew=Ew)

    @classmethod
    def gaussian(cls, Nx, Ny, seed: int = 0) -> "NoiseSpec":
        return cls("gaussian", Nx=Nx, Ny=Ny, seed=seed)

    def with_seed(self, seed: int) -> "NoiseSpec":
        return NoiseSpec(self.kind, self.wbar, self.vbar, self.Nx, self.Ny, seed, self.Ew)

    def ball_bounds(self, n_x: int, n_y: int) -> tuple[float, float]:
        """Euclidean-ball radii implied by the per-component uniform amplitudes."""
        n_w = n_x if self.Ew is None else self.Ew.shape[1]
        w = self.wbar * np.sqrt(n_w)
        if self.Ew is not None:
            w *= np.linalg.norm(self.Ew, 2)
        return float(w), float(self.vbar * np.sqrt(n_y))

    @classmethod
    def from_dict(cls, cfg: dict, seed: int = 0) -> "NoiseSpec":
        kind = cfg.get("kind", "zero")
        return cls(kind=kind, wbar=float(cfg.get("wbar", 0.0)), vbar=float(cfg.get("vbar", 0.0)),
                   Nx=cfg.get("Nx"), Ny=cfg.get("Ny"), seed=int(cfg.get("seed", seed)),
                   Ew=cfg.get("Ew"))


@dataclass(frozen=True)
class TrajectoryData:
    """Offline record; every matrix has one column per sample."""

    X0: np.ndarray
    X1: np.ndarray
    U0: np.ndarray
    Y0: np.ndarray
    W0: Optional[np.ndarray] = None
    V0: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        T = np.shape(self.X0)[1]
        for name in ("X0", "X1", "U0", "Y0", "W0", "V0"):
            M = getattr(self, name)
            if M is None:
                continue
            M = np.atleast_2d(np.asarray(M, dtype=float))
            if M.shape[1] != T:
                raise ValueError(f"{name} has {M.shape[1]} columns, expected {T}")
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        if self.X1.shape[0] != self.X0.shape[0]:
            raise ValueError("X0 and X1 must have the same number of rows")

    @property
    def T(self) -> int:
        return self.X0.shape[1]

    @property
    def n_x(self) -> int:
        return self.X0.shape[0]

    @property
    def n_u(self) -> int:
        return self.U0.shape[0]

    @property
    def n_y(self) -> int:
        return self.Y0.shape[0]

    @property
    def Phi0(self) -> np.ndarray:
        return np.vstack([self.X0, self.U0])

    @property
    def has_ground_truth(self) -> bool:
        return self.W0 is not None and self.V0 is not None

    def reconstruction_error(self, sys: LtiSystem) -> tuple[float, float]:
        """Norms of X1 - A X0 - B U0 - W0 and Y0 - C X0 - V0."""
        if not self.has_ground_truth:
            raise ValueError("trajectory carries no noise record")
        ex = self.X1 - sys.A @ self.X0 - sys.B @ self.U0 - self.W0
        ey = self.Y0 - sys.C @ self.X0 - self.V0
        return float(np.linalg.norm(ex)), float(np.linalg.norm(ey))


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(M)
    return V * np.sqrt(np.clip(lam, 0.0, None))


def generate_noise(spec: NoiseSpec, T: int, n_x: int, n_y: int,
                   rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw process and measurement noise for T steps.

    Returns ``(W, V)`` with shapes (n_x, T) and (n_y, T). The process noise is
    drawn first, so a given seed always produces the same pair.
    """
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if rng is None:
        rng = make_rng(spec.seed)
    n_w = n_x if spec.Ew is None else spec.Ew.shape[1]
    if spec.kind == "zero":
        W, V = np.zeros((n_w, T)), np.zeros((n_y, T))
    elif spec.kind == "uniform":
        W = rng.uniform(-spec.wbar, spec.wbar, size=(n_w, T))
        V = rng.uniform(-spec.vbar, spec.vbar, size=(n_y, T))
    else:
        if spec.Nx.shape != (n_w, n_w) or spec.Ny.shape != (n_y, n_y):
            raise ValueError("covariance dimensions do not match the system")
        W = _psd_sqrt(spec.Nx) @ rng.standard_normal((n_w, T))
        V = _psd_sqrt(spec.Ny) @ rng.standard_normal((n_y, T))
    if spec.Ew is not None:
        if spec.Ew.shape[0] != n_x:
            raise ValueError(f"Ew must have {n_x} rows")
        W = spec.Ew @ W
    return W, V


def _inputs_matrix(inputs, n_u: int) -> np.ndarray:
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, 1) if n_u == 1 else U.reshape(1, -1)
    if U.ndim != 2 or U.shape[1] != n_u:
        raise ValueError(f"inputs must be a sequence of {n_u}-vectors, got shape {U.shape}")
    return U.T


def simulate_openloop(sys: LtiSystem, x0, inputs, noise: NoiseSpec = NoiseSpec(),
                      rng: Optional[np.random.Generator] = None) -> TrajectoryData:
    """Run the plant on a given input sequence and record the data matrices."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n_x,):
        raise ValueError(f"x0 must have length {sys.n_x}")
    U0 = _inputs_matrix(inputs, sys.n_u)
    T = U0.shape[1]
    if T < 1:
        raise ValueError("need at least one input sample")
    W0, V0 = generate_noise(noise, T, sys.n_x, sys.n_y, rng)
    X = np.empty((sys.n_x, T + 1))
    X[:, 0] = x0
    for t in range(T):
        X[:, t + 1] = sys.A @ X[:, t] + sys.B @ U0[:, t] + W0[:, t]
    X0 = X[:, :T]
    Y0 = sys.C @ X0 + V0
    return TrajectoryData(X0, X[:, 1:], U0, Y0, W0, V0)


def collect_offline_data(sys: LtiSystem, T: int, noise: NoiseSpec = NoiseSpec(),
                         seed: int = 0) -> TrajectoryData:
    """Offline experiment: x(0) and inputs i.i.d. uniform on [-1, 1]."""
    rng = make_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, sys.n_x)
    inputs = rng.uniform(-1.0, 1.0, (T, sys.n_u))
    data = simulate_openloop(sys, x0, inputs, noise, rng)
    data.meta.update(seed=seed, noise_kind=noise.kind, wbar=noise.wbar, vbar=noise.vbar)
    return data


def hankel(signal, L: int) -> np.ndarray:
    """Block Hankel matrix of depth ``L``.

    ``signal`` is a sequence of N vectors (shape (N, n), or (N,) for scalars).
    Column j stacks signal[j], ..., signal[j + L - 1]; the result is
    (n L) x (N - L + 1).
    """
    S = np.asarray(signal, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    N, n = S.shape
    if L < 1 or L > N:
        raise ValueError(f"depth L={L} must satisfy 1 <= L <= N={N}")
    cols = N - L + 1
    H = np.empty((n * L, cols))
    for i in range(L):
        H[i * n:(i + 1) * n, :] = S[i:i + cols].T
    return H


def is_persistently_exciting(signal, L: int) -> bool:
    """True iff the depth-L Hankel matrix of ``signal`` has full row rank n L."""
    S = np.asarray(signal, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    N, n = S.shape
    # rank n L needs at least n L columns
    min_len = (n + 1) * L - 1
    if L < 1 or N < min_len:
        logger.info("sequence of length %d too short for PE of order %d (need %d)", N, L, min_len)
        return False
    return numerical_rank(hankel(S, L)) == n * L


def min_samples_for_rank(n_x: int, n_u: int) -> int:
    """Shortest experiment for which a PE input of order n_x + 1 is possible."""
    return n_x + n_u * (n_x + 1)


def check_rank_condition(data: TrajectoryData) -> bool:
    """rank([X0; U0]) == n_x + n_u."""
    return numerical_rank(data.Phi0) == data.n_x + data.n_u
