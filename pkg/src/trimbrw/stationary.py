"""Closed-form stationary pairs ``(u, beta)`` in one dimension and a weak-form checker.

The checker evaluates, for smooth compactly supported ``phi``,

    t * ( <phi'' + b phi' + phi, u> - <phi, beta> )

which must vanish for a stationary solution. Kinks of ``u`` and atoms of ``beta``
are handled by splitting the quadrature at the break points, never by
differentiating ``u``.
"""
from __future__ import annotations

import csv
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_legendre

from .drift import DriftModel
from .grid import GridSpec


class InvalidParameter(ValueError):
    pass


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-1, 1]``; cached because large rules are reused."""
    z, w = roots_legendre(n)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@dataclass
class ClosedFormSolution:
    name: str
    drift: DriftModel
    u: Callable[[np.ndarray], np.ndarray]
    beta_density: Callable[[np.ndarray], np.ndarray] | None
    beta_support: tuple[float, float] | None
    beta_atoms: list[tuple[float, float]]
    argmax: tuple[float, float]
    params: dict = field(default_factory=dict)
    breakpoints: tuple[float, ...] = (0.0,)

    @property
    def peak(self) -> float:
        return float(self.u(np.array([self.argmax[0]]))[0])

    def mass(self) -> float:
        """``int u`` by adaptive quadrature split at the break points."""
        pts = sorted({abs(p) for p in self.breakpoints} | {0.0})
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            total += quad(lambda x: float(self.u(np.array([x]))[0]), a, b, epsabs=1e-14, epsrel=1e-13)[0]
        total += quad(lambda x: float(self.u(np.array([x]))[0]), pts[-1], np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        return 2.0 * total

    def beta_rate(self) -> float:
        """Total removal per unit time: density integral plus atom weights."""
        total = sum(wt for _, wt in self.beta_atoms)
        if self.beta_density is not None and self.beta_support is not None:
            lo, hi = self.beta_support
            total += quad(lambda x: float(self.beta_density(np.array([x]))[0]), lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        return total

    def max_on_descriptor(self, half_width: float = 40.0, n: int = 100_001) -> bool:
        """Grid scan: ``u`` peaks on the argmax descriptor and is strictly lower elsewhere."""
        x = np.linspace(-half_width, half_width, n)
        ux = self.u(x)
        lo, hi = self.argmax
        inside = (x >= lo) & (x <= hi)
        top = self.peak
        flat = True
        if np.any(inside):
            flat = bool(np.all(np.abs(ux[inside] - top) <= 1e-14 * top))
        below = bool(np.all(ux[~inside] < top))
        return flat and below and bool(np.all(ux >= 0.0))

    def sample(self, grid: GridSpec, mode: str = "centered", nodes: int = 8) -> np.ndarray:
        """Site masses for ODE/particle initial data, renormalised to sum one on the box.

        ``centered`` integrates over ``[x - eps/2, x + eps/2]``; ``cell`` over
        ``[x, x + eps]``; ``point`` uses ``eps * u(x)``.
        """
        if grid.dim != 1:
            raise ValueError("closed forms are one-dimensional")
        x = grid.axis
        eps = grid.epsilon
        if mode == "point":
            m = eps * self.u(x)
        elif mode in ("centered", "cell"):
            z, w = gauss_legendre(nodes)
            left = x - eps / 2 if mode == "centered" else x
            pts = left[:, None] + eps * (z[None, :] + 1) / 2
            m = (self.u(pts.reshape(-1)).reshape(pts.shape) @ w) * eps / 2
        else:
            raise ValueError(f"unknown sampling mode {mode!r}")
        return m / m.sum()

    def to_csv(self, path, grid: GridSpec, mode: str = "centered"):
        m = self.sample(grid, mode)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_1", "mass", "density"])
            for xi, mi in zip(grid.axis, m):
                w.writerow([f"{xi:.17g}", f"{mi:.17g}", f"{mi / grid.epsilon:.17g}"])


def example1(beta_variant: str = "derived") -> ClosedFormSolution:
    """Flat-top pair for ``b = -2 tanh``.

    ``beta_variant="derived"`` uses the density ``h(1 + 2 sech^2 x)`` obtained by
    substituting into the stationary equation; ``"printed"`` uses ``h(1 + sech^2 x)``.
    """
    w = math.log(1.0 + math.sqrt(2.0))
    h = 1.0 / (2.0 * (w + math.sqrt(2.0)))
    coef = {"derived": 2.0, "printed": 1.0}
    if beta_variant not in coef:
        raise InvalidParameter(f"beta_variant must be 'derived' or 'printed', got {beta_variant!r}")
    c = coef[beta_variant]

    def u(x):
        ax = np.abs(np.asarray(x, float))
        out = np.full_like(ax, h)
        tail = ax > w
        # sinh/cosh^2 = tanh * sech, written to avoid overflow for large |x|
        e = np.exp(-ax[tail])
        out[tail] = 2.0 * h * np.tanh(ax[tail]) * 2.0 * e / (1.0 + e * e)
        return out

    def beta(x):
        x = np.asarray(x, float)
        inside = np.abs(x) <= w
        return np.where(inside, h * (1.0 + c / np.cosh(np.where(inside, x, 0.0)) ** 2), 0.0)

    return ClosedFormSolution(
        name=f"example1[{beta_variant}]",
        drift=DriftModel.tanh_well(2.0),
        u=u,
        beta_density=beta,
        beta_support=(-w, w),
        beta_atoms=[],
        argmax=(-w, w),
        params={"w": w, "h": h, "beta_variant": beta_variant},
        breakpoints=(-w, 0.0, w),
    )


def _sign_well_constants(a: float):
    r = math.sqrt(a * a - 4.0)
    return r, (a - r) / 2.0, (a + r) / 2.0


def example2_flat(a: float, w: float) -> ClosedFormSolution:
    """Plateau of half-width ``w`` for ``b = -a sign(x)``, ``a > 2``."""
    if not a > 2.0:
        raise InvalidParameter(f"example2_flat needs a > 2, got {a}")
    if w < 0:
        raise InvalidParameter(f"plateau half-width must be non-negative, got {w}")
    r, l1, l2 = _sign_well_constants(a)
    level = 1.0 / (2.0 * (w + a))

    def u(x):
        ax = np.abs(np.asarray(x, float))
        s = np.maximum(ax - w, 0.0)
        tail = level / r * (l2 * np.exp(-l1 * s) - l1 * np.exp(-l2 * s))
        return np.where(ax <= w, level, tail)

    density = None
    support = None
    if w > 0:
        density = lambda x: np.where(np.abs(np.asarray(x, float)) <= w, level, 0.0)  # noqa: E731
        support = (-w, w)
    return ClosedFormSolution(
        name=f"example2_flat(a={a:g},w={w:g})",
        drift=DriftModel.sign_well(a),
        u=u,
        beta_density=density,
        beta_support=support,
        beta_atoms=[(0.0, a / (w + a))],
        argmax=(-w, w),
        params={"a": a, "w": w, "r": r, "lambda1": l1, "lambda2": l2, "level": level},
        breakpoints=tuple(sorted({-w, 0.0, w})),
    )


def example2_sharp(a: float, v0: float) -> ClosedFormSolution:
    """Sharp-top member with peak value ``v0`` and ``beta = delta_0``.

    ``u = A exp(-l1|x|) + B exp(-l2|x|)`` with ``A + B = v0`` and unit mass; the
    unit atom at the origin then balances the flux jump. Valid for
    ``1/(2a) <= v0 <= 1/(a - r)``.
    """
    if not a > 2.0:
        raise InvalidParameter(f"example2_sharp needs a > 2, got {a}")
    r, l1, l2 = _sign_well_constants(a)
    lo, hi = 1.0 / (2.0 * a), 1.0 / (a - r)
    tol = 1e-12 * hi
    if not lo - tol <= v0 <= hi + tol:
        raise InvalidParameter(f"v0 = {v0} outside [{lo}, {hi}]")
    A = (0.5 - v0 * l1) / r
    B = (v0 * l2 - 0.5) / r

    def u(x):
        ax = np.abs(np.asarray(x, float))
        return A * np.exp(-l1 * ax) + B * np.exp(-l2 * ax)

    return ClosedFormSolution(
        name=f"example2_sharp(a={a:g},v0={v0:.6g})",
        drift=DriftModel.sign_well(a),
        u=u,
        beta_density=None,
        beta_support=None,
        beta_atoms=[(0.0, 1.0)],
        argmax=(0.0, 0.0),
        params={"a": a, "v0": v0, "A": A, "B": B, "r": r, "lambda1": l1, "lambda2": l2},
        breakpoints=(0.0,),
    )


def example2_critical() -> ClosedFormSolution:
    """The ``a = 2`` member ``u = exp(-|x|)(|x| + 1)/4``, ``beta = delta_0``."""

    def u(x):
        ax = np.abs(np.asarray(x, float))
        return 0.25 * np.exp(-ax) * (ax + 1.0)

    return ClosedFormSolution(
        name="example2_critical",
        drift=DriftModel.sign_well(2.0),
        u=u,
        beta_density=None,
        beta_support=None,
        beta_atoms=[(0.0, 1.0)],
        argmax=(0.0, 0.0),
        params={"a": 2.0},
        breakpoints=(0.0,),
    )


@dataclass(frozen=True)
class Bump:
    """``phi(x) = exp(-1/(1 - z^2))`` with ``z = (x - center)/radius`` on ``|z| < 1``."""

    center: float
    radius: float

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.radius, self.center + self.radius

    def derivatives(self, x):
        z = (np.asarray(x, float) - self.center) / self.radius
        phi = np.zeros_like(z)
        d1 = np.zeros_like(z)
        d2 = np.zeros_like(z)
        inside = np.abs(z) < 1
        zi = z[inside]
        s = 1.0 - zi * zi
        p = np.exp(-1.0 / s)
        g1 = -2.0 * zi / s**2
        g2 = -(2.0 + 6.0 * zi * zi) / s**3
        phi[inside] = p
        d1[inside] = p * g1 / self.radius
        d2[inside] = p * (g1 * g1 + g2) / self.radius**2
        return phi, d1, d2


def default_bumps() -> list[Bump]:
    return [Bump(0.0, 1.5), Bump(-0.6, 1.0), Bump(0.9, 1.2), Bump(-2.0, 1.5), Bump(3.5, 1.5)]


@dataclass
class WeakFormReport:
    name: str
    residuals: list[float]
    error_estimates: list[float]
    converged: bool

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0


def _bump_integrals(sol: ClosedFormSolution, phi: Bump, nodes: int) -> tuple[float, float]:
    lo, hi = phi.support
    cuts = [lo] + [p for p in sorted(set(sol.breakpoints)) if lo < p < hi] + [hi]
    z, wq = gauss_legendre(max(2, nodes // (len(cuts) - 1)))
    lhs = 0.0
    rhs = 0.0
    b = sol.drift
    for a_, b_ in zip(cuts[:-1], cuts[1:]):
        x = a_ + (b_ - a_) * (z + 1) / 2
        wt = wq * (b_ - a_) / 2
        p0, p1, p2 = phi.derivatives(x)
        bx = b(x[:, None])[:, 0]
        lhs += float(np.sum(wt * (p2 + bx * p1 + p0) * sol.u(x)))
        if sol.beta_density is not None:
            rhs += float(np.sum(wt * p0 * sol.beta_density(x)))
    for loc, weight in sol.beta_atoms:
        rhs += weight * float(phi.derivatives(np.array([loc]))[0][0])
    return lhs, rhs


def weak_form_residual(sol: ClosedFormSolution, test_functions=None, T: float = 1.0,
                       nodes: int = 10_000, tol: float = 1e-9) -> WeakFormReport:
    """Residual of the stationary weak identity over ``[0, T]`` for each test function.

    The error estimate is the change when the node count is halved; ``converged``
    is False if any estimate exceeds ``tol``.
    """
    test_functions = list(test_functions or default_bumps())
    res, errs = [], []
    for phi in test_functions:
        lhs, rhs = _bump_integrals(sol, phi, nodes)
        lhs2, rhs2 = _bump_integrals(sol, phi, nodes // 2)
        r1 = T * abs(lhs - rhs)
        res.append(r1)
        errs.append(abs(r1 - T * abs(lhs2 - rhs2)))
    return WeakFormReport(sol.name, res, errs, all(e <= tol for e in errs))


def example2_family_members(a: float = 3.0) -> list[ClosedFormSolution]:
    r = math.sqrt(a * a - 4.0)
    lo, hi = 1.0 / (2.0 * a), 1.0 / (a - r)
    return [example2_sharp(a, v) for v in (lo, 0.5 * (lo + hi), hi)]
