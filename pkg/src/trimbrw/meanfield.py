"""Deterministic solver for the grid equation with removal at the top.

The unknowns are site masses ``u`` (summing to one) and a removal rate
``Lambda >= 0`` with unit total, supported where ``u`` is maximal:

    du/dt = L* u + u - Lambda.

Two independent explicit schemes are provided. ``trim_splitting`` takes a free
Euler step and then shaves the excess mass off the top with an exact water-level
cap. ``active_set`` spreads the removal over a tracked flat set so that every
member rises or falls at a common rate.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .drift import RateTable, compute_h
from .grid import GridSpec
from .operators import DiscreteGenerator, GridFunction

SCHEMES = ("trim_splitting", "active_set")
BINARY_MAGIC = b"TBRWPATH"
BINARY_VERSION = 1


class InfeasibleMass(ValueError):
    pass


class UnstableStep(ValueError):
    pass


class ActiveSetCycle(RuntimeError):
    pass


class ClipBudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# water-level cap


def water_level_cap(f, m: float) -> tuple[np.ndarray, float]:
    """Level ``c`` with ``sum (f - c)^+ = m`` and the capped vector ``min(f, c)``.

    Exact piecewise-linear solve over the sorted values: if the top ``k`` values
    sit above the level, then ``c = (S_k - m) / k`` where ``S_k`` is their sum.
    """
    vals = f.values if isinstance(f, GridFunction) else np.asarray(f, float)
    if m < 0:
        raise InfeasibleMass(f"mass to remove must be non-negative, got {m}")
    if np.any(vals < 0):
        raise InfeasibleMass("water-level cap needs a non-negative vector")
    if m == 0:
        c = float(vals.max())
        out = vals.copy()
    else:
        srt = np.sort(vals)[::-1]
        n = srt.size
        csum = np.cumsum(srt)
        budget = float(csum[-1] - n * srt[-1])
        if m > budget:
            raise InfeasibleMass(f"cannot remove {m:.6g} from above the floor; at most {budget:.6g} available")
        # removable mass when the level drops to the (k+1)-th value
        nxt = np.append(srt[1:], srt[-1])
        k_arr = np.arange(1, n + 1)
        reach = csum - k_arr * nxt
        k = int(np.searchsorted(reach, m, side="left")) + 1
        k = min(k, n)
        c = float((csum[k - 1] - m) / k)
        out = np.minimum(vals, c)
    if isinstance(f, GridFunction):
        return GridFunction(f.grid, out), c
    return out, c


# ---------------------------------------------------------------------------
# configuration and paths


@dataclass
class SchemeConfig:
    """Time step, scheme name and tolerances.

    ``tau_flat`` is the active-set band width in density units. ``stride`` keeps
    every ``stride``-th state in the returned paths; diagnostics are per step.
    """

    dt: float = 1e-4
    scheme: str = "trim_splitting"
    tau_flat: float = 1e-7
    growth: bool = True
    removal: bool = True
    stride: int = 1
    clip_tol: float = 1e-12
    clip_budget: float = 1e-6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.tau_flat < 0:
            raise ValueError("tau_flat must be non-negative")
        if int(self.stride) < 1:
            raise ValueError("stride must be a positive integer")
        self.stride = int(self.stride)

    def check_positivity(self, rates: RateTable):
        bound = self.dt * float(np.max(rates.rbar_eff + 1.0))
        if not bound < 1.0:
            raise UnstableStep(f"dt * max(rbar + 1) = {bound:.4g} must be below 1; reduce dt")


@dataclass
class DensityPath:
    """Recorded site masses ``u[k]`` at ``times[k]`` (each row sums to one)."""

    grid: GridSpec
    times: np.ndarray
    u: np.ndarray
    stride: int = 1

    def __len__(self):
        return len(self.times)

    def at(self, k: int) -> GridFunction:
        return GridFunction(self.grid, self.u[k])

    def density(self, k: int = -1) -> np.ndarray:
        return self.u[k] / self.grid.cell_volume

    @property
    def final(self) -> GridFunction:
        return self.at(-1)


@dataclass
class RemovalRatePath:
    """Removal rate per recorded step; ``rates[k]`` acts on ``[times[k], times[k] + dt]``."""

    grid: GridSpec
    times: np.ndarray
    rates: np.ndarray
    dt: float
    stride: int = 1

    def support(self, k: int) -> np.ndarray:
        return np.nonzero(self.rates[k] > 0)[0]

    def totals(self) -> np.ndarray:
        return self.rates.sum(axis=1)


@dataclass
class SolveDiagnostics:
    """Per-step bookkeeping; arrays are indexed by step."""

    scheme: str
    dt: float
    c2: float
    linf0: float
    mass: np.ndarray
    lam_sum: np.ndarray
    lam_min: np.ndarray
    support_gap: np.ndarray
    clip_mass: np.ndarray
    linf: np.ndarray
    retries: np.ndarray
    n_active: np.ndarray
    support_integral: float
    lam_integral: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.mass.size + 1)

    @property
    def max_mass_error(self) -> float:
        return float(np.max(np.abs(self.mass - 1.0))) if self.mass.size else 0.0

    @property
    def max_lam_sum_error(self) -> float:
        return float(np.max(np.abs(self.lam_sum - 1.0))) if self.lam_sum.size else 0.0

    @property
    def total_clip(self) -> float:
        return float(self.clip_mass.sum())

    def growth_bound(self) -> np.ndarray:
        return self.linf0 * np.exp((1.0 + self.c2) * self.times)

    def growth_ok(self, rel: float = 1e-6) -> bool:
        return bool(np.all(self.linf <= self.growth_bound() * (1.0 + rel)))

    def admissible(self, band: float, tol: float = 1e-9) -> bool:
        """``Lambda >= 0``, unit total and support within ``band`` (density units) of the top."""
        return bool(
            np.all(self.lam_min >= 0.0)
            and self.max_lam_sum_error <= tol
            and np.all(self.support_gap <= band)
        )


@dataclass
class Solution:
    path: DensityPath
    removal: RemovalRatePath
    diagnostics: SolveDiagnostics
    config: SchemeConfig = field(repr=False)

    def to_csv(self, path):
        write_path_csv(path, self.path, self.removal)

    def to_binary(self, path):
        write_path_binary(path, self.path, self.removal)


# ---------------------------------------------------------------------------
# single steps


def _as_generator(rates) -> DiscreteGenerator:
    return rates if isinstance(rates, DiscreteGenerator) else DiscreteGenerator(rates)


def _growth(gen: DiscreteGenerator, u: np.ndarray, growth: bool) -> np.ndarray:
    g = gen.adjoint_matrix @ u
    if growth:
        g = g + u
    return g


def step_trim_splitting(gen, u, dt: float, growth: bool = True, removal: bool = True):
    """Free Euler step followed by a water-level cap back to unit mass.

    Returns ``(u_next, Lambda)`` with ``Lambda = (u_free - u_next) / dt``.
    """
    gen = _as_generator(gen)
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, float)
    free = vals + dt * _growth(gen, vals, growth)
    if not removal:
        return free, np.zeros_like(free)
    free = np.maximum(free, 0.0)
    excess = float(free.sum()) - 1.0
    nxt, _ = water_level_cap(free, max(excess, 0.0))
    return nxt, (free - nxt) / dt


def step_active_set(gen, u, active, dt: float, tau: float = 0.0, growth: bool = True):
    """Removal spread over the flat set ``active`` at a common level rate.

    ``tau`` is the band width in mass units. Sites with negative removal leave
    the set; sites that reach the level join it; the step is redone after each
    change. Returns ``(u_next, Lambda, active_next, retries)``.
    """
    gen = _as_generator(gen)
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, float)
    n = vals.size
    g = _growth(gen, vals, growth)
    active = np.asarray(active)
    A = active.copy() if active.dtype == bool else np.isin(np.arange(n), active)
    if not A.any():
        A[int(np.argmax(vals))] = True
    dropped = np.zeros(n, dtype=bool)
    for attempt in range(n + 1):
        k = int(A.sum())
        hdot = (float(g[A].sum()) - 1.0) / k
        lam = np.zeros(n)
        lam[A] = g[A] - hdot
        nxt = vals + dt * (g - lam)
        neg = A & (lam < 0)
        if neg.any():
            A &= ~neg
            dropped |= neg
            continue
        level = float(nxt[A].max())
        join = ~A & ~dropped & (nxt > level - tau)
        if join.any():
            A |= join
            continue
        return nxt, lam, np.nonzero(A)[0], attempt
    raise ActiveSetCycle(f"active set did not settle after {n} retries")


# ---------------------------------------------------------------------------
# time integration


def _growth_constant(gen: DiscreteGenerator) -> float:
    """Bound on the zeroth-order term: interior ``sup |h|`` or boundary ``sup(-h_eff)``."""
    hf = compute_h(gen.rates, max_pairs=0)
    return float(max(hf.sup, np.max(-gen.h_eff), 0.0))


def solve(u0, T: float, cfg: SchemeConfig, rates) -> Solution:
    """Integrate from ``u0`` (unit mass, non-negative) to time ``T``."""
    gen = _as_generator(rates)
    grid = gen.grid
    u = np.array(u0.values if isinstance(u0, GridFunction) else u0, dtype=float)
    if u.shape != (grid.n_sites,):
        raise ValueError(f"initial data has shape {u.shape}, grid has {grid.n_sites} sites")
    if np.any(u < 0):
        raise ValueError("initial data must be non-negative")
    if cfg.removal and cfg.growth and abs(u.sum() - 1.0) > 1e-9:
        raise ValueError(f"initial mass must be 1, got {u.sum():.12g}")
    cfg.check_positivity(gen.rates)
    if T < 0:
        raise ValueError("T must be non-negative")
    K = int(np.ceil(T / cfg.dt - 1e-9)) if T > 0 else 0
    dt = T / K if K else cfg.dt
    vol = grid.cell_volume
    tau = cfg.tau_flat * vol

    rec_steps = [k for k in range(K + 1) if k % cfg.stride == 0 or k == K]
    u_rec = np.empty((len(rec_steps), grid.n_sites))
    lam_rec = np.empty((sum(1 for k in rec_steps if k < K), grid.n_sites))
    ri = li = 0

    mass = np.empty(K)
    lam_sum = np.empty(K)
    lam_min = np.empty(K)
    gap = np.empty(K)
    clip = np.empty(K)
    linf = np.empty(K)
    retries = np.zeros(K, dtype=np.int64)
    n_active = np.zeros(K, dtype=np.int64)
    support_integral = 0.0
    lam_integral = np.zeros(grid.n_sites)
    active = np.nonzero(u >= u.max() - tau)[0]

    for k in range(K):
        if k % cfg.stride == 0:
            u_rec[ri] = u
            ri += 1
        if cfg.scheme == "trim_splitting" or not cfg.removal:
            nxt, lam = step_trim_splitting(gen, u, dt, cfg.growth, cfg.removal)
            n_active[k] = int(np.count_nonzero(lam))
        else:
            nxt, lam, active, retries[k] = step_active_set(gen, u, active, dt, tau, cfg.growth)
            n_active[k] = active.size
        neg = nxt < 0
        clip[k] = float(-nxt[neg].sum()) if neg.any() else 0.0
        if neg.any():
            if np.min(nxt) < -cfg.clip_tol * max(1.0, float(u.max())) and clip[:k + 1].sum() > cfg.clip_budget:
                raise ClipBudgetExceeded(f"clipped mass {clip[:k + 1].sum():.3g} exceeds {cfg.clip_budget:g}")
            nxt = np.where(neg, 0.0, nxt)
        if k % cfg.stride == 0:
            lam_rec[li] = lam
            li += 1
        top = float(nxt.max())
        supp = lam > 0
        gap[k] = float(np.max(top - nxt[supp])) / vol if supp.any() else 0.0
        support_integral += dt * float(np.dot(top - nxt, lam))
        lam_integral += dt * lam
        mass[k] = float(nxt.sum())
        lam_sum[k] = float(lam.sum())
        lam_min[k] = float(lam.min())
        linf[k] = top / vol
        u = nxt
        if cfg.scheme == "active_set" and cfg.removal:
            active = np.union1d(active, np.nonzero(u >= top - tau)[0])
    u_rec[ri] = u

    times = np.array([k * dt for k in rec_steps])
    path = DensityPath(grid, times, u_rec, cfg.stride)
    removal = RemovalRatePath(grid, times[: lam_rec.shape[0]], lam_rec, dt, cfg.stride)
    u0v = u_rec[0]
    diag = SolveDiagnostics(
        scheme=cfg.scheme, dt=dt, c2=_growth_constant(gen), linf0=float(u0v.max()) / vol,
        mass=mass, lam_sum=lam_sum, lam_min=lam_min, support_gap=gap, clip_mass=clip, linf=linf,
        retries=retries, n_active=n_active, support_integral=support_integral, lam_integral=lam_integral,
    )
    return Solution(path, removal, diag, cfg)


# ---------------------------------------------------------------------------
# residuals and diagnostics


@dataclass
class ODEResidualReport:
    intervals: list[tuple[float, float, float]]
    lam_sum_deviation: float
    lam_min: float
    support_integral: float

    @property
    def max_integrated(self) -> float:
        return max(r for _, _, r in self.intervals) if self.intervals else 0.0


def ode_residuals(gen, path: DensityPath, removal: RemovalRatePath, levels: int = 3,
                  growth: bool = True) -> ODEResidualReport:
    """Residuals of the integrated equation, the unit-removal constraint and the support condition.

    The integrated residual ``|u(b) - u(a) - int_a^b (L*u + u - Lambda)|_1`` uses the
    trapezoid rule on the recorded mesh over dyadic subintervals of ``[0, T]``.
    """
    gen = _as_generator(gen)
    times = np.asarray(path.times)
    U = np.asarray(path.u)
    R = np.asarray(removal.rates)
    nr = R.shape[0]
    lam_nodes = np.vstack([R, R[-1:]]) if nr and nr < len(times) else R
    if not nr:
        lam_nodes = np.zeros_like(U)
    F = np.asarray((gen.adjoint_matrix @ U.T).T)
    if growth:
        F = F + U
    F = F - lam_nodes
    seg = 0.5 * (F[1:] + F[:-1]) * np.diff(times)[:, None]
    cum = np.vstack([np.zeros(U.shape[1]), np.cumsum(seg, axis=0)])
    out = []
    K = len(times) - 1
    for lev in range(levels + 1):
        parts = 2**lev
        edges = np.unique(np.round(np.linspace(0, K, parts + 1)).astype(int))
        for a, b in itertools.pairwise(edges):
            r = U[b] - U[a] - (cum[b] - cum[a])
            out.append((float(times[a]), float(times[b]), float(np.abs(r).sum())))
    totals = R.sum(axis=1) if nr else np.ones(1)
    tops = U[: max(nr, 1)].max(axis=1)
    support = float(np.sum(removal.dt * removal.stride * np.sum((tops[:nr, None] - U[:nr]) * R, axis=1))) if nr else 0.0
    return ODEResidualReport(
        intervals=out,
        lam_sum_deviation=float(np.max(np.abs(totals - 1.0))),
        lam_min=float(R.min()) if nr else 0.0,
        support_integral=support,
    )


def modulus_of_continuity(u, eta: float) -> float:
    """``max |U(x) - U(y)|`` over sites with ``|x - y| <= eta``, in density units."""
    if not isinstance(u, GridFunction):
        raise TypeError("modulus_of_continuity expects a GridFunction")
    grid = u.grid
    U = u.density().reshape((grid.side,) * grid.dim)
    kmax = int(np.floor(eta / grid.epsilon + 1e-9))
    best = 0.0
    for off in itertools.product(range(-kmax, kmax + 1), repeat=grid.dim):
        if off <= (0,) * grid.dim or sum(o * o for o in off) > kmax * kmax + 1e-9:
            continue
        if any(abs(o) >= grid.side for o in off):
            continue
        a = tuple(slice(max(0, o), grid.side + min(0, o)) for o in off)
        b = tuple(slice(max(0, -o), grid.side + min(0, -o)) for o in off)
        diff = np.abs(U[a] - U[b])
        if diff.size:
            best = max(best, float(diff.max()))
    return best


# ---------------------------------------------------------------------------
# output


def write_path_csv(path, dens: DensityPath, removal: RemovalRatePath):
    """Rows ``t, x_1..x_d, u, Lambda`` in mass units; ``Lambda`` is blank at the final time."""
    grid = dens.grid
    pts = [[f"{v:.17g}" for v in row] for row in grid.points]
    header = "t," + ",".join(f"x_{j + 1}" for j in range(grid.dim)) + ",u,Lambda\n"
    nr = removal.rates.shape[0]
    with open(path, "w", newline="") as fh:
        fh.write(header)
        for k, t in enumerate(dens.times):
            ts = f"{t:.17g}"
            lam = removal.rates[k] if k < nr else None
            for s in range(grid.n_sites):
                ls = f"{lam[s]:.17g}" if lam is not None else ""
                fh.write(f"{ts},{','.join(pts[s])},{dens.u[k, s]:.17g},{ls}\n")


_HEADER = struct.Struct("<8sIIddQQ")


def write_path_binary(path, dens: DensityPath, removal: RemovalRatePath):
    """Little-endian header ``magic, version, d, eps, L, K, n_sites`` then
    ``times[K]``, ``u[K, n]`` and ``Lambda[K, n]`` (NaN rows where no step follows)."""
    grid = dens.grid
    K, n = dens.u.shape
    lam = np.full((K, n), np.nan)
    lam[: removal.rates.shape[0]] = removal.rates
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, grid.dim, grid.epsilon, grid.half_width, K, n))
        fh.write(np.ascontiguousarray(dens.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dens.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(lam, dtype="<f8").tobytes())


def read_path_binary(path) -> tuple[DensityPath, RemovalRatePath]:
    raw = Path(path).read_bytes()
    magic, version, d, eps, L, K, n = _HEADER.unpack_from(raw, 0)
    if magic != BINARY_MAGIC:
        raise ValueError("not a path file (bad magic)")
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported path file version {version}")
    grid = GridSpec(eps, d, L)
    off = _HEADER.size
    times = np.frombuffer(raw, "<f8", K, off).copy()
    off += 8 * K
    u = np.frombuffer(raw, "<f8", K * n, off).reshape(K, n).copy()
    off += 8 * K * n
    lam = np.frombuffer(raw, "<f8", K * n, off).reshape(K, n).copy()
    keep = ~np.all(np.isnan(lam), axis=1)
    dt = float(times[1] - times[0]) if K > 1 else 0.0
    return DensityPath(grid, times, u), RemovalRatePath(grid, times[keep], lam[keep], dt)
