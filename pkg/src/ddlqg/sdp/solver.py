"""Dense primal-dual interior-point method for small LMI problems.

Linear equalities are eliminated up front (x = x_p + N z, N an orthonormal
null-space basis); directions that touch no LMI and no objective are dropped.
What remains is

    minimize c'w  s.t.  S = F0 + sum_j w_j G_j >= 0,

solved together with its conic dual (multiplier Z >= 0, <G_j, Z> = c_j)
by an infeasible-start Mehrotra predictor-corrector using the
Nesterov-Todd scaling on every block.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .model import SdpModel

logger = logging.getLogger(__name__)

INFEASIBLE_BLOWUP = 1e8


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"
    NUMERICAL_TROUBLE = "NumericalTrouble"


class SdpError(RuntimeError):
    """A program that had to be solved did not reach Optimal."""

    def __init__(self, solution: "SdpSolution", context: str = ""):
        msg = f"SDP {context or solution.model_name!r} ended with status {solution.status.value}"
        super().__init__(msg)
        self.solution = solution


@dataclass
class SdpSolution:
    x: np.ndarray
    objective: float
    status: Status
    primal_lmi_mineig: float
    eq_residual: float
    dual_residual: float
    gap: float
    Z: list = field(default_factory=list)
    y_eq: np.ndarray = None
    iterations: int = 0
    history: list = field(default_factory=list)
    model_name: str = ""
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class Residuals:
    primal_lmi_mineig: float
    eq_residual: float
    gap: float
    dual_residual: float


REFINE_STEPS = 2  # iterative refinement of the Schur-complement solve


def residuals(model: SdpModel, solution: SdpSolution) -> Residuals:
    """Recompute feasibility and optimality measures from (x, Z, y) alone.

    ``gap`` is the relative gap |c'x - d| / (||c|| + |c'x| + |d|) with the dual
    objective d = -sum_k <F0_k, Z_k> + b_eq' y. Using ||c|| (1 when c = 0) in
    place of the usual 1 keeps the measure invariant under rescaling of c.
    """
    x = np.asarray(solution.x, dtype=float)
    mineig = min(model.lmi_min_eigs(x)) if model.blocks else np.inf
    eq = float(np.linalg.norm(model.A_eq @ x - model.b_eq)) if len(model.b_eq) else 0.0
    y = solution.y_eq if solution.y_eq is not None else np.zeros(len(model.b_eq))
    Fz = np.zeros(model.m)
    d = float(model.b_eq @ y) if len(model.b_eq) else 0.0
    for B, Z in zip(model.blocks, solution.Z):
        Fz += np.tensordot(B.F, Z, axes=([1, 2], [0, 1]))
        d -= float(np.sum(B.F0 * Z))
    dres = float(np.linalg.norm(model.c - Fz - model.A_eq.T @ y))
    p = float(model.c @ x)
    normc = float(np.linalg.norm(model.c)) or 1.0
    gap = abs(p - d) / (normc + abs(p) + abs(d))
    return Residuals(float(mineig), eq, float(gap), dres)


def _max_step(X, dX, Lx=None):
    """Largest a with X + a dX >= 0 (inf if dX keeps X feasible)."""
    if Lx is None:
        Lx = np.linalg.cholesky(X)
    Li = sla.solve_triangular(Lx, np.eye(len(X)), lower=True, check_finite=False)
    M = Li @ dX @ Li.T
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _reduce(model: SdpModel, rtol: float):
    """Eliminate equalities and LMI-free directions."""
    m = model.m
    if len(model.b_eq):
        x_p, *_ = np.linalg.lstsq(model.A_eq, model.b_eq, rcond=None)
        eq_res = np.linalg.norm(model.A_eq @ x_p - model.b_eq)
        if eq_res > 1e-9 * (1.0 + np.linalg.norm(model.b_eq)):
            return None
        N = sla.null_space(model.A_eq, rcond=1e-12)
    else:
        x_p, N = np.zeros(m), np.eye(m)
    k = N.shape[1]
    if k == 0:
        return x_p, np.zeros((m, 0)), False
    G = np.hstack([np.tensordot(N.T, B.F, axes=1).reshape(k, -1) for B in model.blocks]) \
        if model.blocks else np.zeros((k, 0))
    if G.shape[1] == 0:
        R = np.zeros((k, 0))
    else:
        U, s, _ = np.linalg.svd(G, full_matrices=False)
        r = int(np.sum(s > rtol * (s[0] if s.size else 0.0)))
        R = U[:, :r]
    c_z = N.T @ model.c
    leak = c_z - R @ (R.T @ c_z)
    unbounded = np.linalg.norm(leak) > 1e-9 * (1.0 + np.linalg.norm(c_z))
    return x_p, N @ R, unbounded


def _nt_scaling(X, S):
    """G with G G' = W (W S W = X); G^{-1} X G^{-T} = G' S G = diag(d)."""
    Lx = np.linalg.cholesky(X)
    Ls = np.linalg.cholesky(S)
    U, d, Vt = np.linalg.svd(Ls.T @ Lx)
    G = Lx @ Vt.T / np.sqrt(d)
    return G, d, Lx, Ls


def solve_or_raise(model: SdpModel, **kw) -> "SdpSolution":
    sol = solve(model, **kw)
    if not sol.ok:
        raise SdpError(sol)
    return sol


def solve(model: SdpModel, tol: float = 1e-8, max_iter: int = 200,
          reduce_rtol: float = 1e-9) -> SdpSolution:
    """Solve ``model``; see the module docstring for the method.

    The objective is normalized to unit length before iterating, so the
    iterates (and hence ``x``) do not depend on a positive rescaling of ``c``.
    Objective, multipliers and history are reported in the original units.
    """
    s = float(np.linalg.norm(model.c))
    if s == 0.0 or s == 1.0:
        return _solve_core(model, tol, max_iter, reduce_rtol)
    unit = SdpModel(model.c / s, model.blocks, model.A_eq, model.b_eq, model.variables, model.name)
    sol = _solve_core(unit, tol, max_iter, reduce_rtol)
    return replace(sol, objective=float(model.c @ sol.x), Z=[s * Zb for Zb in sol.Z],
                   y_eq=s * sol.y_eq, dual_residual=s * sol.dual_residual,
                   history=[s * h for h in sol.history])


def _solve_core(model: SdpModel, tol: float, max_iter: int, reduce_rtol: float) -> SdpSolution:
    m = model.m
    red = _reduce(model, reduce_rtol)
    if red is None:
        return _finish(model, np.zeros(m), None, Status.INFEASIBLE, [], 0, (np.nan,) * 3, None)
    x_p, Tm, unbounded = red
    eq_internal = float(np.linalg.norm(model.A_eq @ x_p - model.b_eq)) if len(model.b_eq) else 0.0
    if unbounded:
        return _finish(model, x_p, None, Status.UNBOUNDED, [], 0, (np.nan,) * 3, None)
    r = Tm.shape[1]
    c = Tm.T @ model.c
    c_off = float(model.c @ x_p)
    F0 = [B.value(x_p) for B in model.blocks]
    F0 = [0.5 * (A + A.T) for A in F0]
    G = [np.tensordot(Tm.T, B.F, axes=1) for B in model.blocks]  # (r, k, k)
    G = [0.5 * (g + np.swapaxes(g, 1, 2)) for g in G]
    sizes = [len(f) for f in F0]
    ntot = sum(sizes)

    if r == 0:
        x = x_p
        ok = all(np.linalg.eigvalsh(f)[0] >= -tol for f in F0)
        status = Status.OPTIMAL if ok else Status.INFEASIBLE
        Z = [np.zeros_like(f) for f in F0]
        mineig = min(np.linalg.eigvalsh(f)[0] for f in F0) if F0 else np.inf
        return _finish(model, x, Z, status, [c_off], 0, (0.0, 0.0, 0.0), (mineig, eq_internal))

    # starting point
    X, S = [], []
    for f, g in zip(F0, G):
        n = len(f)
        gn = np.sqrt(np.sum(g * g, axis=(1, 2)))
        xi = max(10.0, np.sqrt(n), n * np.max((1.0 + np.abs(c)) / (1.0 + gn)))
        eta = max(10.0, np.sqrt(n), np.linalg.norm(f), np.max(gn))
        X.append(xi * np.eye(n))
        S.append(eta * np.eye(n))
    w = np.zeros(r)

    normc = 1.0 + np.linalg.norm(c)
    normF = 1.0 + np.sqrt(sum(np.sum(f * f) for f in F0))
    history = []
    status = Status.MAX_ITER
    it = 0
    measures = (np.inf, np.inf, np.inf)

    def lmi_val(wv):
        return [f + np.tensordot(wv, g, axes=1) for f, g in zip(F0, G)]

    for it in range(1, max_iter + 1):
        Fw = lmi_val(w)
        Rd = [fw - s for fw, s in zip(Fw, S)]
        AX = sum(np.tensordot(g, Xb, axes=([1, 2], [0, 1])) for g, Xb in zip(G, X))
        rp = c - AX
        pobj = float(c @ w)
        dobj = -float(sum(np.sum(f * Xb) for f, Xb in zip(F0, X)))
        mu = float(sum(np.sum(Xb * Sb) for Xb, Sb in zip(X, S))) / ntot
        # relative to the multiplier size: <G_j, Z> = c_j is formed from terms
        # of size ||Z||, so its rounding floor scales with ||Z||, not with ||c||
        pinf = np.linalg.norm(rp) / (normc + np.sqrt(sum(np.sum(Xb * Xb) for Xb in X)))
        dinf = np.sqrt(sum(np.sum(R * R) for R in Rd)) / normF
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj + c_off) + abs(dobj + c_off))
        measures = (pinf, dinf, relgap)
        history.append(pobj + c_off)
        logger.debug("it %3d pobj %.10e dobj %.10e pinf %.2e dinf %.2e gap %.2e",
                     it, pobj + c_off, dobj + c_off, pinf, dinf, relgap)
        if pinf <= tol and dinf <= tol and relgap <= tol:
            status = Status.OPTIMAL
            break
        # infeasibility certificates
        trX = sum(np.trace(Xb) for Xb in X)
        f0X = -dobj
        if f0X < 0 and np.linalg.norm(AX) <= 1e-8 * (-f0X) * normc:
            status = Status.INFEASIBLE
            break
        if pobj < 0 and dinf <= 1e-6:
            wh = w / (-pobj)
            Gw = [np.tensordot(wh, g, axes=1) for g in G]
            if all(np.linalg.eigvalsh(gw)[0] >= -1e-8 for gw in Gw) and np.linalg.norm(wh) > 0:
                if -pobj > INFEASIBLE_BLOWUP:
                    status = Status.UNBOUNDED
                    break
        if trX > INFEASIBLE_BLOWUP * normF * normc:
            status = Status.INFEASIBLE
            break

        try:
            scal = [_nt_scaling(Xb, Sb) for Xb, Sb in zip(X, S)]
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_TROUBLE
            break
        Ws = [Gb @ Gb.T for Gb, *_ in scal]
        # Schur complement M_ij = sum_k tr(G_i W G_j W)
        M = np.zeros((r, r))
        for g, Wb in zip(G, Ws):
            GW = g @ Wb
            M += np.einsum("ikl,jlk->ij", GW, GW, optimize=True)
        M = 0.5 * (M + M.T)
        try:
            cho = sla.cho_factor(M + 1e-14 * np.trace(M) / r * np.eye(r), check_finite=False)
            msolve = lambda v: sla.cho_solve(cho, v, check_finite=False)
        except np.linalg.LinAlgError:
            lu = sla.lu_factor(M, check_finite=False)
            msolve = lambda v: sla.lu_solve(lu, v, check_finite=False)

        def direction(sigma_mu, corr):
            Rc = []
            for (Gb, d, *_), cb in zip(scal, corr):
                n = len(d)
                rhs = -np.diag(d * d)
                rhs[np.diag_indices(n)] += sigma_mu
                if cb is not None:
                    rhs = rhs - cb
                H = 2.0 * rhs / (d[:, None] + d[None, :])
                Rc.append(Gb @ H @ Gb.T)
            rhs = np.zeros(r)
            for g, Wb, Rcb, Rdb in zip(G, Ws, Rc, Rd):
                T = Rcb - Wb @ Rdb @ Wb
                rhs += np.tensordot(g, T, axes=([1, 2], [0, 1]))
            rhs -= rp
            dw = msolve(rhs)
            for _ in range(REFINE_STEPS):
                dw = dw + msolve(rhs - M @ dw)
            dS, dX = [], []
            for g, Wb, Rcb, Rdb in zip(G, Ws, Rc, Rd):
                ds = Rdb + np.tensordot(dw, g, axes=1)
                ds = 0.5 * (ds + ds.T)
                dx = Rcb - Wb @ ds @ Wb
                dS.append(ds)
                dX.append(0.5 * (dx + dx.T))
            return dw, dX, dS

        def steps(dX, dS):
            ap = min([_max_step(Xb, dx, sc[2]) for Xb, dx, sc in zip(X, dX, scal)] + [np.inf])
            ad = min([_max_step(Sb, ds, sc[3]) for Sb, ds, sc in zip(S, dS, scal)] + [np.inf])
            return ap, ad

        try:
            dw_a, dX_a, dS_a = direction(0.0, [None] * len(X))
            ap, ad = steps(dX_a, dS_a)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = sum(np.sum((Xb + ap * dx) * (Sb + ad * ds))
                         for Xb, dx, Sb, ds in zip(X, dX_a, S, dS_a)) / ntot
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
            # Mehrotra term in the scaled space: sym(Dx_aff Ds_aff)
            corr = []
            for (Gb, d, *_), dx, ds in zip(scal, dX_a, dS_a):
                Gi = np.linalg.inv(Gb)
                Dx = Gi @ dx @ Gi.T
                Ds = Gb.T @ ds @ Gb
                P = Dx @ Ds
                corr.append(0.5 * (P + P.T))
            dw, dX, dS = direction(sigma * mu, corr)
            ap, ad = steps(dX, dS)
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_TROUBLE
            break
        if not (np.isfinite(ap) or np.isfinite(ad)) and not all(np.all(np.isfinite(d)) for d in dX):
            status = Status.NUMERICAL_TROUBLE
            break
        gamma = 0.9 + 0.09 * min(1.0, 1.0 - sigma) if sigma < 1 else 0.9
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        X = [Xb + ap * dx for Xb, dx in zip(X, dX)]
        S = [Sb + ad * ds for Sb, ds in zip(S, dS)]
        w = w + ad * dw
        if ap < 1e-12 and ad < 1e-12:
            status = Status.NUMERICAL_TROUBLE
            break

    x = x_p + Tm @ w
    mineig = min(np.linalg.eigvalsh(0.5 * (f + f.T))[0] for f in lmi_val(w))
    return _finish(model, x, X, status, history, it, measures, (mineig, eq_internal))


def _finish(model, x, Z, status, history, it, measures, internal) -> SdpSolution:
    if Z is None:
        Z = [np.zeros((B.size, B.size)) for B in model.blocks]
    # equality multipliers from stationarity
    Fz = np.zeros(model.m)
    for B, Zb in zip(model.blocks, Z):
        Fz += np.tensordot(B.F, Zb, axes=([1, 2], [0, 1]))
    if len(model.b_eq):
        y, *_ = np.linalg.lstsq(model.A_eq.T, model.c - Fz, rcond=None)
    else:
        y = np.zeros(0)
    if internal is None:
        mineig, eq = np.nan, np.nan
    else:
        mineig, eq = internal
    dres = float(np.linalg.norm(model.c - Fz - model.A_eq.T @ y))
    sol = SdpSolution(
        x=x, objective=float(model.c @ x), status=status,
        primal_lmi_mineig=float(mineig), eq_residual=eq, dual_residual=dres,
        gap=float(measures[2]), Z=list(Z), y_eq=y, iterations=it,
        history=list(history), model_name=model.name, values=model.unpack(x),
    )
    return sol
