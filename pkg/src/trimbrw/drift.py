"""Drift fields and the jump-rate tables built from them.

The rate perturbations follow the mollified positive-part construction:
``g_i = (b.e_i)^+ * eta`` along axis ``i`` and ``g_{i+d} = -b.e_i + g_i``, so the
discrete drift ``sum_i q_i k_i`` reproduces ``b`` exactly at every site.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import GridSpec, reverse_direction


class EpsilonTooLarge(ValueError):
    pass


class IrregularDrift(ValueError):
    pass


DRIFT_KINDS = ("zero", "tanh_well", "sign_well", "tabulated")


@dataclass(frozen=True)
class DriftModel:
    """A vector field ``b`` on R^d.

    ``tanh_well`` is ``b_j(x) = -scale * tanh(x_j)``; ``sign_well`` is
    ``b_j(x) = -a * sign(x_j)`` and is kept only for closed-form work.
    """

    kind: str = "zero"
    dim: int = 1
    scale: float = 2.0
    a: float = 2.0
    table_points: tuple = ()
    table_values: tuple = ()

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind == "sign_well" and self.a < 2:
            raise ValueError(f"sign_well needs a >= 2, got {self.a}")

    @classmethod
    def zero(cls, dim: int = 1) -> "DriftModel":
        return cls("zero", dim)

    @classmethod
    def tanh_well(cls, scale: float = 2.0, dim: int = 1) -> "DriftModel":
        return cls("tanh_well", dim, scale=scale)

    @classmethod
    def sign_well(cls, a: float) -> "DriftModel":
        return cls("sign_well", 1, a=a)

    @classmethod
    def tabulated(cls, points, values) -> "DriftModel":
        pts = np.atleast_2d(np.asarray(points, float))
        if pts.shape[0] == 1 and pts.shape[1] > 1 and np.ndim(points) == 1:
            pts = pts.T
        vals = np.asarray(values, float).reshape(pts.shape[0], -1)
        if vals.shape[1] != pts.shape[1]:
            raise ValueError("tabulated drift needs as many b columns as x columns")
        return cls(
            "tabulated",
            pts.shape[1],
            table_points=tuple(map(tuple, pts)),
            table_values=tuple(map(tuple, vals)),
        )

    @classmethod
    def from_csv(cls, path) -> "DriftModel":
        """Read columns ``x_1..x_d, b_1..b_d`` (header row required)."""
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        header = [h.strip() for h in rows[0]]
        xcols = [k for k, h in enumerate(header) if h.startswith("x_")]
        bcols = [k for k, h in enumerate(header) if h.startswith("b_")]
        if not xcols or len(xcols) != len(bcols):
            raise ValueError(f"{path}: expected columns x_1..x_d, b_1..b_d, got {header}")
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        return cls.tabulated(data[:, xcols], data[:, bcols])

    @property
    def regular(self) -> bool:
        return self.kind != "sign_well"

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of ``b`` (estimated for tabulated fields)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "tanh_well":
            return abs(self.scale)
        if self.kind == "sign_well":
            return float("inf")
        pts = np.asarray(self.table_points)
        vals = np.asarray(self.table_values)
        if pts.shape[1] == 1:
            order = np.argsort(pts[:, 0])
            dx = np.diff(pts[order, 0])
            db = np.abs(np.diff(vals[order, 0]))
            return float(np.max(db / dx))
        return float("nan")

    @cached_property
    def _interp(self):
        pts = np.asarray(self.table_points)
        vals = np.asarray(self.table_values)
        if pts.shape[1] == 1:
            order = np.argsort(pts[:, 0])
            xs, bs = pts[order, 0], vals[order, 0]
            return lambda x: np.interp(x[:, 0], xs, bs)[:, None]
        axes = [np.unique(pts[:, j]) for j in range(pts.shape[1])]
        shape = tuple(len(a) for a in axes)
        if np.prod(shape) != len(pts):
            raise ValueError("tabulated drift in d >= 2 must be sampled on a tensor grid")
        order = np.lexsort(tuple(pts[:, j] for j in reversed(range(pts.shape[1]))))
        grid_vals = vals[order].reshape(*shape, pts.shape[1])
        rgi = RegularGridInterpolator(axes, grid_vals, bounds_error=False, fill_value=None)
        return rgi

    def __call__(self, x) -> np.ndarray:
        """Evaluate at points of shape ``(n, d)``; returns ``(n, d)``."""
        x = np.atleast_2d(np.asarray(x, float))
        if x.shape[1] != self.dim:
            x = x.reshape(-1, self.dim)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "tanh_well":
            return -self.scale * np.tanh(x)
        if self.kind == "sign_well":
            return -self.a * np.sign(x)
        return np.asarray(self._interp(x), float).reshape(x.shape)


@dataclass(frozen=True)
class MollifierSpec:
    """Standard bump ``eta(s) ~ exp(-1/(1-(s/R)^2))`` normalised to unit mass."""

    radius: float = 0.5
    nodes: int = 64

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("mollifier radius must be positive")
        if self.nodes < 2:
            raise ValueError("need at least two quadrature nodes")

    @cached_property
    def normaliser(self) -> float:
        # high-order Gauss-Legendre resolves the bump to ~1e-16
        x, w = np.polynomial.legendre.leggauss(512)
        return float(np.sum(w * np.exp(-1.0 / (1.0 - x * x))))

    def density(self, s) -> np.ndarray:
        s = np.asarray(s, float) / self.radius
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out / (self.normaliser * self.radius)

    @cached_property
    def rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature offsets and weights with ``eta`` folded into the weights."""
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        s = self.radius * x
        return s, w * self.radius * self.density(s)

    def mass(self) -> float:
        return float(np.sum(self.rule[1]))


def mollified_q(b: DriftModel, mollifier: MollifierSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``points -> q`` of shape ``(n, 2d)`` for the positive-part construction."""
    d = b.dim
    offsets, weights = mollifier.rule

    def qfunc(points):
        pts = np.atleast_2d(np.asarray(points, float))
        n = pts.shape[0]
        bx = b(pts)
        q = np.empty((n, 2 * d))
        for i in range(d):
            shifted = np.repeat(pts[:, None, :], offsets.size, axis=1)
            shifted[:, :, i] -= offsets[None, :]
            bi = b(shifted.reshape(-1, d))[:, i].reshape(n, offsets.size)
            g = np.maximum(bi, 0.0) @ weights
            q[:, i] = g
            q[:, i + d] = -bx[:, i] + g
        return q

    return qfunc


class RateTable:
    """Per-site, per-direction jump rates ``r = eps^-2 + eps^-1 q`` and adjoint rates.

    ``rho[x, i] = r_{i*}(x + eps k_i)`` is evaluated from ``q`` off the box when
    needed; ``*_eff`` arrays zero out the moves that reflection suppresses.
    """

    def __init__(self, grid: GridSpec, qfunc: Callable[[np.ndarray], np.ndarray], drift: DriftModel | None = None):
        self.grid = grid
        self.qfunc = qfunc
        self.drift = drift
        eps = grid.epsilon
        d, nd = grid.dim, grid.n_dirs
        pts = grid.points
        self.q = np.asarray(qfunc(pts), float).reshape(grid.n_sites, nd)
        r = eps**-2 + self.q / eps
        rho = np.empty_like(r)
        for i in range(nd):
            j = i % d
            step = 1.0 if i < d else -1.0
            shifted = pts.copy()
            shifted[:, j] += step * eps
            q_there = np.asarray(qfunc(shifted), float).reshape(grid.n_sites, nd)
            rho[:, i] = eps**-2 + q_there[:, reverse_direction(i, d)] / eps
        # snap to a dyadic lattice fine enough to be a rounding-level change but
        # coarse enough that every partial row sum is exact, so the generator
        # annihilates constants bit for bit
        top = float(max(np.max(np.abs(r).sum(axis=1)), np.max(np.abs(rho).sum(axis=1)), 1.0))
        self.quantum = 2.0 ** (math.ceil(math.log2(top)) + 1 - 52)
        self.r = np.round(r / self.quantum) * self.quantum
        self.rho = np.round(rho / self.quantum) * self.quantum
        self.allowed = grid.neighbor_table >= 0
        self.r_eff = np.where(self.allowed, self.r, 0.0)
        self.rho_eff = np.where(self.allowed, self.rho, 0.0)
        self.rbar = self.r.sum(axis=1)
        self.rhobar = self.rho.sum(axis=1)
        self.rbar_eff = self.r_eff.sum(axis=1)
        self.rhobar_eff = self.rho_eff.sum(axis=1)
        for arr in (self.q, self.r, self.rho, self.r_eff, self.rho_eff):
            arr.setflags(write=False)
        if np.any(self.r <= 0) or np.any(self.rho <= 0):
            worst = float(min(self.r.min(), self.rho.min()))
            raise EpsilonTooLarge(
                f"epsilon={eps} gives a non-positive jump rate (min {worst:.4g}); refine the grid"
            )

    @classmethod
    def from_q(cls, grid: GridSpec, qfunc) -> "RateTable":
        return cls(grid, qfunc)

    @property
    def c1(self) -> float:
        return float(np.max(np.abs(self.q)))

    @property
    def max_total_rate(self) -> float:
        return float(np.max(self.rbar_eff))

    def discrete_drift(self) -> np.ndarray:
        """``b_eps(x) = sum_i q_i(x) k_i`` at every site, shape ``(n_sites, d)``."""
        d = self.grid.dim
        return self.q[:, :d] - self.q[:, d:]


def build_q_from_b(b: DriftModel, mollifier: MollifierSpec | None = None, grid: GridSpec | None = None) -> RateTable:
    """Rate table for drift ``b`` on ``grid`` via the mollified positive-part construction."""
    if grid is None:
        raise ValueError("grid is required")
    if not b.regular:
        raise IrregularDrift(f"{b.kind} drift is discontinuous; it cannot drive a rate table")
    if b.dim != grid.dim:
        raise ValueError(f"drift dim {b.dim} != grid dim {grid.dim}")
    mollifier = mollifier or MollifierSpec()
    if b.kind == "zero":
        nd = grid.n_dirs
        qfunc = lambda pts: np.zeros((np.atleast_2d(pts).shape[0], nd))  # noqa: E731
    else:
        qfunc = mollified_q(b, mollifier)
    return RateTable(grid, qfunc, drift=b)


@dataclass
class AssumptionReport:
    sup_q: float
    lip_q: float
    lip_dq: float
    drift_error: float
    c1: float | None
    pairs_checked: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _pairs(n: int, max_pairs: int, rng) -> tuple[np.ndarray, np.ndarray]:
    if n * (n - 1) // 2 <= max_pairs:
        a, b = np.triu_indices(n, k=1)
        return a, b
    a = rng.integers(0, n, size=max_pairs)
    b = rng.integers(0, n, size=max_pairs)
    keep = a != b
    return a[keep], b[keep]


def _max_quotient(values: np.ndarray, pts: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 200_000) -> float:
    best = 0.0
    for s in range(0, a.size, chunk):
        ia, ib = a[s : s + chunk], b[s : s + chunk]
        dist = np.linalg.norm(pts[ia] - pts[ib], axis=1)
        diff = np.max(np.abs(values[ia] - values[ib]), axis=1)
        best = max(best, float(np.max(diff / dist)) if ia.size else 0.0)
    return best


def validate_assumption1(rt: RateTable, b: DriftModel | None = None, c1: float | None = None,
                         max_pairs: int = 2_000_000, seed: int = 0) -> AssumptionReport:
    """Measure ``sup|q|``, the Lipschitz quotient of ``q`` and of its directional difference quotient."""
    grid = rt.grid
    pts = grid.points
    eps = grid.epsilon
    d = grid.dim
    rng = np.random.default_rng(seed)
    a, bb = _pairs(grid.n_sites, max_pairs, rng)
    # nearest-neighbour pairs always included: they carry the largest quotients for jumps
    nbr = grid.neighbor_table
    src = np.repeat(np.arange(grid.n_sites), grid.n_dirs)
    dst = nbr.reshape(-1)
    ok = dst >= 0
    a = np.concatenate([a, src[ok]])
    bb = np.concatenate([bb, dst[ok]])

    dq = np.empty_like(rt.q)
    for i in range(grid.n_dirs):
        j = i % d
        shifted = pts.copy()
        shifted[:, j] += (1.0 if i < d else -1.0) * eps
        dq[:, i] = (np.asarray(rt.qfunc(shifted))[:, i] - rt.q[:, i]) / eps

    sup_q = rt.c1
    lip_q = _max_quotient(rt.q, pts, a, bb)
    lip_dq = _max_quotient(dq, pts, a, bb)
    drift_error = 0.0
    if b is not None:
        drift_error = float(np.max(np.abs(rt.discrete_drift() - b(pts))))
    violations = []
    if c1 is not None:
        for name, val in (("sup|q|", sup_q), ("Lip(q)", lip_q), ("Lip(dq)", lip_dq)):
            if val > c1:
                violations.append(f"{name} = {val:.6g} exceeds C1 = {c1:.6g}")
    return AssumptionReport(sup_q, lip_q, lip_dq, drift_error, c1, int(a.size), violations)


@dataclass
class HField:
    """``h = rbar - rhobar`` at every site plus its size and Lipschitz quotient."""

    h: np.ndarray
    h_formula: np.ndarray
    sup: float
    lipschitz: float

    @property
    def formula_gap(self) -> float:
        return float(np.max(np.abs(self.h - self.h_formula)))


def compute_h(rt: RateTable, max_pairs: int = 2_000_000) -> HField:
    grid = rt.grid
    eps = grid.epsilon
    d = grid.dim
    pts = grid.points
    h = rt.rbar - rt.rhobar
    # second evaluation: eps^-1 sum_i (q_i(x) - q_i(x - eps k_i))
    hf = np.zeros(grid.n_sites)
    for i in range(grid.n_dirs):
        shifted = pts.copy()
        shifted[:, i % d] -= (1.0 if i < d else -1.0) * eps
        hf += rt.q[:, i] - np.asarray(rt.qfunc(shifted))[:, i]
    hf /= eps
    a, b = _pairs(grid.n_sites, max_pairs, np.random.default_rng(0))
    lip = _max_quotient(h[:, None], pts, a, b) if a.size else 0.0
    return HField(h=h, h_formula=hf, sup=float(np.max(np.abs(h))), lipschitz=lip)
