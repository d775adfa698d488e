"""Zonotope set-based state estimation from noisy data with unknown C.

A zonotope <c, G> is {c + G b : ||b||_inf <= 1}. A matrix zonotope
<C, [G_1..G_k]> is {C + sum_i b_i G_i : |b_i| <= 1}. The estimator keeps a
reachable set, propagates it through a data-consistent matrix zonotope of
[A B], and intersects it with each measurement through an output-matrix
zonotope, choosing the correction gain lambda by least squares.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .lti_sim import TrajectoryData, numerical_rank

REDUCTION_FACTOR = 5


@dataclass(frozen=True)
class Zonotope:
    c: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        G = np.asarray(self.G, dtype=float)
        if G.size == 0:
            G = np.zeros((len(c), 0))
        G = G.reshape(len(c), -1)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)

    @classmethod
    def point(cls, c) -> "Zonotope":
        c = np.asarray(c, dtype=float).reshape(-1)
        return cls(c, np.zeros((len(c), 0)))

    @classmethod
    def box(cls, c, radius) -> "Zonotope":
        """Axis-aligned box; ``radius`` is a scalar or one half-width per axis."""
        c = np.asarray(c, dtype=float).reshape(-1)
        r = np.broadcast_to(np.asarray(radius, dtype=float), c.shape)
        return cls(c, np.diag(r))

    @property
    def dim(self) -> int:
        return len(self.c)

    @property
    def order(self) -> int:
        """Number of generators."""
        return self.G.shape[1]

    def __add__(self, other: "Zonotope") -> "Zonotope":
        return Zonotope(self.c + other.c, np.hstack([self.G, other.G]))

    def linear_map(self, M) -> "Zonotope":
        M = np.atleast_2d(M)
        return Zonotope(M @ self.c, M @ self.G)

    def interval_hull(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.abs(self.G).sum(axis=1)
        return self.c - r, self.c + r

    def without_zero_generators(self, tol: float = 0.0) -> "Zonotope":
        keep = np.linalg.norm(self.G, axis=0) > tol
        return Zonotope(self.c, self.G[:, keep])

    def to_dict(self) -> dict:
        return {"center": self.c.tolist(), "generators": self.G.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Zonotope":
        c = np.asarray(d["center"], dtype=float)
        G = np.asarray(d["generators"], dtype=float).reshape(len(c), -1)
        return cls(c, G)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)


def center(z: Zonotope) -> np.ndarray:
    return z.c.copy()


@dataclass(frozen=True)
class MatrixZonotope:
    C: np.ndarray
    generators: tuple = field(default_factory=tuple)

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        gens = tuple(np.asarray(g, dtype=float).reshape(C.shape) for g in self.generators)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "generators", gens)

    @property
    def order(self) -> int:
        return len(self.generators)

    @property
    def shape(self) -> tuple[int, int]:
        return self.C.shape

    def stacked(self) -> np.ndarray:
        """Generators as an array of shape (k, rows, cols)."""
        if not self.generators:
            return np.zeros((0,) + self.C.shape)
        return np.stack(self.generators)

    def right_multiply(self, M) -> "MatrixZonotope":
        M = np.atleast_2d(M)
        return MatrixZonotope(self.C @ M, tuple(g @ M for g in self.generators))


def noise_matrix_zonotope(z: Zonotope, T: int) -> MatrixZonotope:
    """Matrix zonotope of n x T noise records whose every column lies in ``z``.

    Column t gets its own copy of each generator, so the order is
    ``z.order * T``.
    """
    n = z.dim
    C = np.tile(z.c[:, None], (1, T))
    gens = []
    for t in range(T):
        for j in range(z.order):
            g = np.zeros((n, T))
            g[:, t] = z.G[:, j]
            gens.append(g)
    return MatrixZonotope(C, tuple(gens))


def _full_row_rank(M: np.ndarray, what: str) -> None:
    if numerical_rank(M) < M.shape[0]:
        raise ValueError(f"{what} does not have full row rank")


def system_matrix_zonotope(data: TrajectoryData, Mw: MatrixZonotope) -> MatrixZonotope:
    """Set of [A B] consistent with the data: (X1 - Mw) [X0; U0]^+."""
    Phi0 = data.Phi0
    _full_row_rank(Phi0, "[X0; U0]")
    P = np.linalg.pinv(Phi0)
    return MatrixZonotope((data.X1 - Mw.C) @ P, tuple(-g @ P for g in Mw.generators))


def output_matrix_zonotope(data: TrajectoryData, Mv: MatrixZonotope) -> MatrixZonotope:
    """Set of C consistent with the data: (Y0 - Mv) X0^+."""
    _full_row_rank(data.X0, "X0")
    P = np.linalg.pinv(data.X0)
    return MatrixZonotope((data.Y0 - Mv.C) @ P, tuple(-g @ P for g in Mv.generators))


def mat_zono_times_zono(M: MatrixZonotope, z: Zonotope) -> Zonotope:
    """Over-approximation of {A x : A in M, x in z}.

    Generators, in order: C G (g), G_i c (k), then G_i G (k*g) with the
    cross terms grouped by matrix generator.
    """
    gens = [M.C @ z.G]
    S = M.stacked()
    if len(S):
        gens.append((S @ z.c).T)  # (n, k)
        cross = S @ z.G  # (k, n, g)
        gens.append(np.concatenate(list(cross), axis=1) if z.order else np.zeros((M.C.shape[0], 0)))
    return Zonotope(M.C @ z.c, np.hstack(gens))


def reduce_girard(z: Zonotope, max_order: int) -> Zonotope:
    """Keep the longest generators and box the rest (Girard's method).

    The result has at most ``max_order`` generators (requires
    ``max_order >= dim``) and contains ``z``.
    """
    z = z.without_zero_generators()
    n = z.dim
    if z.order <= max_order:
        return z
    if max_order < n:
        raise ValueError("reduced order must be at least the dimension")
    score = np.linalg.norm(z.G, 1, axis=0) - np.linalg.norm(z.G, np.inf, axis=0)
    idx = np.argsort(score, kind="stable")
    n_box = z.order - (max_order - n)
    boxed, kept = idx[:n_box], idx[n_box:]
    box = np.diag(np.abs(z.G[:, boxed]).sum(axis=1))
    G = np.hstack([z.G[:, np.sort(kept)], box])
    return Zonotope(z.c, G).without_zero_generators()


def propagate(R: Zonotope, u, M_sigma: MatrixZonotope, Zw: Zonotope,
              max_order: Optional[int] = None) -> Zonotope:
    """M_sigma (R x {u}) + Zw.

    Without reduction the generator count is g_R + k (g_R + 1) + g_w, where
    k is the order of ``M_sigma``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    stacked = Zonotope(np.concatenate([R.c, u]), np.vstack([R.G, np.zeros((len(u), R.order))]))
    out = mat_zono_times_zono(M_sigma, stacked) + Zw
    if max_order is not None:
        out = reduce_girard(out, max_order)
    return out


def _lambda_blocks(R: Zonotope, M_C: MatrixZonotope, Zv: Zonotope):
    """Blocks (F, H) with objective blocks F - lambda H for lambda n x p.

    The blocks are (I - lambda C) G, -lambda G_i (one per C generator),
    -lambda G_v and -lambda G_i G. Returns F (n x N) and H (p x N).
    """
    n, p = R.dim, M_C.shape[0]
    S = M_C.stacked()
    F_parts = [R.G]
    H_parts = [M_C.C @ R.G]
    for g in S:
        F_parts.append(np.zeros((n, n)))
        H_parts.append(g)
    F_parts.append(np.zeros((n, Zv.order)))
    H_parts.append(Zv.G)
    for g in S:
        F_parts.append(np.zeros((n, R.order)))
        H_parts.append(g @ R.G)
    return np.hstack(F_parts), np.hstack(H_parts)


def lambda_objective(lam, R: Zonotope, M_C: MatrixZonotope, Zv: Zonotope) -> float:
    F, H = _lambda_blocks(R, M_C, Zv)
    return float(np.sum((F - np.atleast_2d(lam) @ H) ** 2))


def lambda_star(R: Zonotope, M_C: MatrixZonotope, Zv: Zonotope) -> np.ndarray:
    """Minimizer of ||F - lambda H||_F^2; minimum-norm if H H' is singular."""
    F, H = _lambda_blocks(R, M_C, Zv)
    # lambda H = F in the least-squares sense  <=>  H' lambda' = F'
    lam_t, *_ = np.linalg.lstsq(H.T, F.T, rcond=None)
    return lam_t.T


def intersect_measurement(R: Zonotope, y, M_C: MatrixZonotope, Zv: Zonotope,
                          lam: Optional[np.ndarray] = None,
                          max_order: Optional[int] = None) -> Zonotope:
    """Zonotope containing {x in R : y = C x + v, C in M_C, v in Zv}.

    Center c + lambda (y - C_c c - c_v); generators (I - lambda C_c) G,
    -lambda G_i c, -lambda G_v and -lambda G_i G. Zero columns are dropped.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if lam is None:
        lam = lambda_star(R, M_C, Zv)
    lam = np.atleast_2d(lam)
    n = R.dim
    S = M_C.stacked()
    c = R.c + lam @ (y - M_C.C @ R.c - Zv.c)
    parts = [(np.eye(n) - lam @ M_C.C) @ R.G]
    if len(S):
        parts.append(-lam @ (S @ R.c).T)
    parts.append(-lam @ Zv.G)
    for g in S:
        parts.append(-lam @ g @ R.G)
    out = Zonotope(c, np.hstack(parts)).without_zero_generators()
    if max_order is not None:
        out = reduce_girard(out, max_order)
    return out


def membership_level(z: Zonotope, x) -> float:
    """Smallest s with x in <c, s G>, i.e. min ||b||_inf s.t. G b = x - c.

    Returns ``inf`` when x - c is outside the range of G. The level is
    homogeneous (degree 1 in x - c, degree -1 in G), so both are rescaled to
    unit size before the LP and the factor is applied afterwards; this keeps
    the LP well conditioned for very large or very small sets.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x - z.c
    z = z.without_zero_generators()
    g = z.order
    delta = float(np.max(np.abs(d))) if d.size else 0.0
    if delta == 0.0:
        return 0.0
    if g == 0:
        return np.inf
    gamma = float(np.max(np.abs(z.G)))
    G, d = z.G / gamma, d / delta
    # variables (b, s): minimize s subject to G b = d and -s <= b_j <= s
    cost = np.zeros(g + 1)
    cost[-1] = 1.0
    A_ub = np.block([[np.eye(g), -np.ones((g, 1))], [-np.eye(g), -np.ones((g, 1))]])
    b_ub = np.zeros(2 * g)
    A_eq = np.hstack([G, np.zeros((z.dim, 1))])
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=d,
                  bounds=[(None, None)] * g + [(0, None)], method="highs")
    if res.status != 0:
        return np.inf
    return float(res.x[-1]) * delta / gamma


def contains(z: Zonotope, x, tol: float = 1e-7) -> bool:
    """Point membership: x = c + G b for some ||b||_inf <= 1 + tol."""
    return membership_level(z, x) <= 1.0 + tol


@dataclass(frozen=True)
class SetEstimate:
    predicted: list
    corrected: list

    @property
    def centers(self) -> np.ndarray:
        return np.column_stack([z.c for z in self.corrected])


def run_set_estimator(data: TrajectoryData, Zw: Zonotope, Zv: Zonotope, X0: Zonotope,
                      inputs: np.ndarray, outputs: np.ndarray,
                      max_order: Optional[int] = None) -> SetEstimate:
    """Estimate sets for t = 0..N-1 from inputs u(t) and outputs y(t).

    ``inputs`` is n_u x N, ``outputs`` n_y x N. ``X0`` bounds x(0). Each step
    intersects with y(t), then propagates with u(t) to the next prediction.
    ``max_order`` defaults to 5 n_x.
    """
    n = data.n_x
    if max_order is None:
        max_order = REDUCTION_FACTOR * n
    T = data.T
    M_sigma = system_matrix_zonotope(data, noise_matrix_zonotope(Zw, T))
    M_C = output_matrix_zonotope(data, noise_matrix_zonotope(Zv, T))
    inputs = np.atleast_2d(inputs)
    outputs = np.atleast_2d(outputs)
    pred, corr = [], []
    R = X0
    for t in range(outputs.shape[1]):
        pred.append(R)
        Rhat = intersect_measurement(R, outputs[:, t], M_C, Zv, max_order=max_order)
        corr.append(Rhat)
        if t < inputs.shape[1]:
            R = propagate(Rhat, inputs[:, t], M_sigma, Zw, max_order=max_order)
    return SetEstimate(pred, corr)
