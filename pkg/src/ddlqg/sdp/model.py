"""Standard-form SDP model and a small affine-expression layer for building it.

A model is

    minimize    c' x
    subject to  F0_k + sum_i x_i F_ik  >= 0     (one LMI per block k)
                A_eq x = b_eq

over scalar decision variables x. Matrix decision variables are declared by
name and expanded into scalars (symmetric ones by their upper triangle).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SYM_TOL = 1e-12


class Affine:
    """Matrix-valued affine function of the decision vector.

    ``coef[0]`` is the constant term and ``coef[1 + i]`` the coefficient of
    variable i, so ``coef`` has shape (1 + m, rows, cols). Expressions with
    fewer variables are zero-padded when combined.
    """

    __array_ufunc__ = None  # make ndarray @ Affine dispatch to __rmatmul__

    def __init__(self, coef: np.ndarray):
        coef = np.asarray(coef, dtype=float)
        if coef.ndim != 3:
            raise ValueError("coefficient stack must be 3-D")
        self.coef = coef

    @classmethod
    def constant(cls, M) -> "Affine":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M[None])

    @property
    def shape(self) -> tuple[int, int]:
        return self.coef.shape[1:]

    @property
    def nvars(self) -> int:
        return self.coef.shape[0] - 1

    def _padded(self, m: int) -> np.ndarray:
        if self.nvars >= m:
            return self.coef
        pad = np.zeros((m - self.nvars,) + self.shape)
        return np.concatenate([self.coef, pad], axis=0)

    @staticmethod
    def _lift(other) -> "Affine":
        if isinstance(other, Affine):
            return other
        return Affine.constant(other)

    def __add__(self, other):
        other = self._lift(other)
        m = max(self.nvars, other.nvars)
        a, b = self._padded(m), other._padded(m)
        if a.shape[1:] != b.shape[1:]:
            if b.shape[1:] == (1, 1):
                b = b * np.ones(a.shape[1:])
            elif a.shape[1:] == (1, 1):
                a = a * np.ones(b.shape[1:])
            else:
                raise ValueError(f"shape mismatch {a.shape[1:]} vs {b.shape[1:]}")
        return Affine(a + b)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, s):
        if not np.isscalar(s):
            raise TypeError("only scalar multiplication is supported; use @")
        return Affine(self.coef * s)

    __rmul__ = __mul__

    def __matmul__(self, M):
        if isinstance(M, Affine):
            raise TypeError("product of two affine expressions is not affine")
        return Affine(self.coef @ np.atleast_2d(np.asarray(M, dtype=float)))

    def __rmatmul__(self, M):
        return Affine(np.atleast_2d(np.asarray(M, dtype=float)) @ self.coef)

    @property
    def T(self) -> "Affine":
        return Affine(np.swapaxes(self.coef, 1, 2))

    def eye(self, n: int) -> "Affine":
        """s I_n for a scalar expression s."""
        if self.shape != (1, 1):
            raise ValueError("eye() needs a scalar expression")
        return Affine(self.coef[:, 0, 0][:, None, None] * np.eye(n)[None])

    def trace(self) -> "Affine":
        return Affine(np.trace(self.coef, axis1=1, axis2=2)[:, None, None])

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        C = self._padded(len(x))
        return C[0] + np.tensordot(x, C[1:len(x) + 1], axes=1)

    def __repr__(self):
        return f"Affine(shape={self.shape}, nvars={self.nvars})"


def bmat(blocks) -> Affine:
    """Assemble a block matrix from nested lists of Affine / arrays / None (zero)."""
    rows = []
    heights, widths = [], []
    for r, row in enumerate(blocks):
        h = None
        for item in row:
            if item is not None:
                h = Affine._lift(item).shape[0]
                break
        heights.append(h)
    for c in range(len(blocks[0])):
        w = None
        for row in blocks:
            if row[c] is not None:
                w = Affine._lift(row[c]).shape[1]
                break
        widths.append(w)
    if None in heights or None in widths:
        raise ValueError("every block row and column needs at least one non-empty entry")
    items = [[Affine._lift(x) if x is not None else Affine.constant(np.zeros((heights[r], widths[c])))
              for c, x in enumerate(row)] for r, row in enumerate(blocks)]
    m = max(it.nvars for row in items for it in row)
    for row in items:
        rows.append(np.concatenate([it._padded(m) for it in row], axis=2))
    return Affine(np.concatenate(rows, axis=1))


@dataclass(frozen=True)
class VarInfo:
    """Placement of a named matrix variable inside the scalar decision vector.

    ``index`` has the variable's shape; entry (i, j) is the position of the
    scalar feeding that matrix entry (symmetric variables share positions).
    """

    name: str
    shape: tuple
    symmetric: bool
    index: np.ndarray


@dataclass(frozen=True)
class LmiBlock:
    name: str
    F0: np.ndarray
    F: np.ndarray  # (m, k, k)

    @property
    def size(self) -> int:
        return self.F0.shape[0]

    def value(self, x) -> np.ndarray:
        return self.F0 + np.tensordot(np.asarray(x, dtype=float), self.F, axes=1)


@dataclass(frozen=True)
class SdpModel:
    c: np.ndarray
    blocks: tuple
    A_eq: np.ndarray
    b_eq: np.ndarray
    variables: dict = field(default_factory=dict)
    name: str = ""

    @property
    def m(self) -> int:
        return len(self.c)

    def unpack(self, x) -> dict:
        """Named matrix variables evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        out = {}
        for name, info in self.variables.items():
            v = x[info.index]
            out[name] = float(v[0, 0]) if info.shape == (1, 1) else v
        return out

    def lmi_min_eigs(self, x) -> list[float]:
        return [float(np.linalg.eigvalsh(0.5 * (B.value(x) + B.value(x).T))[0]) for B in self.blocks]

    def to_dict(self) -> dict:
        """Self-describing dense dump for cross-checking with an external solver."""
        return {
            "format": "ddlqg-sdp-v1",
            "name": self.name,
            "sense": "minimize c'x s.t. F0 + sum_i x_i F_i >= 0 (each block), A_eq x = b_eq",
            "m": self.m,
            "c": self.c.tolist(),
            "blocks": [{"name": B.name, "F0": B.F0.tolist(), "F": B.F.tolist()} for B in self.blocks],
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "variables": {k: {"shape": list(v.shape), "symmetric": v.symmetric,
                              "index": v.index.tolist()} for k, v in self.variables.items()},
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d: dict) -> "SdpModel":
        m = int(d["m"])
        blocks = []
        for b in d["blocks"]:
            F0 = np.array(b["F0"], dtype=float)
            F = np.array(b["F"], dtype=float).reshape(m, *F0.shape)
            blocks.append(LmiBlock(b["name"], F0, F))
        A_eq = np.array(d["A_eq"], dtype=float).reshape(-1, m)
        variables = {k: VarInfo(k, tuple(v["shape"]), v["symmetric"], np.array(v["index"], dtype=int))
                     for k, v in d["variables"].items()}
        return cls(np.array(d["c"], dtype=float), tuple(blocks), A_eq,
                   np.array(d["b_eq"], dtype=float), variables, d.get("name", ""))


class SdpBuilder:
    """Incrementally declare variables and constraints, then ``build()``."""

    def __init__(self, name: str = ""):
        self.name = name
        self._m = 0
        self._vars: dict[str, VarInfo] = {}
        self._lmis: list[tuple[str, Affine]] = []
        self._eqs: list[Affine] = []
        self._objective: Optional[Affine] = None

    @property
    def nvars(self) -> int:
        return self._m

    def _register(self, name, shape, symmetric, index) -> None:
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        self._vars[name] = VarInfo(name, shape, symmetric, index)

    def scalar(self, name: str) -> Affine:
        return self.matrix(name, 1, 1)

    def matrix(self, name: str, rows: int, cols: int) -> Affine:
        start, count = self._m, rows * cols
        self._m += count
        coef = np.zeros((1 + self._m, rows, cols))
        index = np.arange(start, start + count).reshape(rows, cols)
        for k, (i, j) in enumerate(np.ndindex(rows, cols)):
            coef[1 + start + k, i, j] = 1.0
        self._register(name, (rows, cols), False, index)
        return Affine(coef)

    def symmetric(self, name: str, n: int) -> Affine:
        iu = np.triu_indices(n)
        count = len(iu[0])
        start = self._m
        self._m += count
        coef = np.zeros((1 + self._m, n, n))
        index = np.zeros((n, n), dtype=int)
        for k, (i, j) in enumerate(zip(*iu)):
            coef[1 + start + k, i, j] = 1.0
            coef[1 + start + k, j, i] = 1.0
            index[i, j] = index[j, i] = start + k
        self._register(name, (n, n), True, index)
        return Affine(coef)

    def lmi(self, expr: Affine, name: str = "") -> None:
        """Require ``expr`` (square, symmetric) to be positive semidefinite."""
        expr = Affine._lift(expr)
        r, c = expr.shape
        if r != c:
            raise ValueError(f"LMI {name!r} is not square: {expr.shape}")
        asym = np.max(np.abs(expr.coef - np.swapaxes(expr.coef, 1, 2))) if r > 1 else 0.0
        if asym > SYM_TOL * max(1.0, np.max(np.abs(expr.coef))):
            raise ValueError(f"LMI {name!r} is not symmetric (asymmetry {asym:.2e})")
        expr = Affine(0.5 * (expr.coef + np.swapaxes(expr.coef, 1, 2)))
        self._lmis.append((name or f"lmi{len(self._lmis)}", expr))

    def le(self, lhs, rhs, name: str = "") -> None:
        """Scalar inequality lhs <= rhs as a 1x1 LMI."""
        self.lmi(Affine._lift(rhs) - lhs, name)

    def eq(self, lhs, rhs=0.0) -> None:
        """Entrywise equality lhs == rhs."""
        self._eqs.append(Affine._lift(lhs) - rhs)

    def minimize(self, expr: Affine) -> None:
        expr = Affine._lift(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective must be scalar")
        self._objective = expr

    def build(self) -> SdpModel:
        m = self._m
        if self._objective is None:
            raise ValueError("no objective set")
        obj = self._objective._padded(m)
        c = obj[1:, 0, 0].copy()
        blocks = []
        for name, expr in self._lmis:
            C = expr._padded(m)
            blocks.append(LmiBlock(name, C[0].copy(), C[1:].copy()))
        rows, rhs = [], []
        for e in self._eqs:
            C = e._padded(m)
            rows.append(C[1:].reshape(m, -1).T)
            rhs.append(-C[0].reshape(-1))
        A_eq = np.vstack(rows) if rows else np.zeros((0, m))
        b_eq = np.concatenate(rhs) if rhs else np.zeros(0)
        return SdpModel(c, tuple(blocks), A_eq, b_eq, dict(self._vars), self.name)
