"""Two walkers driven by shared marked Poisson events.

Per direction ``i`` candidate events arrive at the envelope rate
``max_x rho_i(x)``. A candidate with mark ``theta`` uniform on ``[0, envelope)``
moves a walker at ``x`` iff ``theta < rho_i(x)``, so walkers sitting at sites
with equal rates move together and only rate differences separate them.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .drift import DriftModel, RateTable, build_q_from_b
from .grid import GridSpec

MOVED_X, MOVED_Y, MOVED_BOTH = 1, 2, 3


@dataclass
class CoupledPairPath:
    """Event log of a coupled pair; positions are site indices after each recorded move."""

    grid: GridSpec
    x0: int
    y0: int
    T: float
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    flags: np.ndarray
    seed: int = 0

    def _pos(self, sites) -> np.ndarray:
        return self.grid.points[np.asarray(sites, dtype=np.int64)]

    @property
    def initial_distance(self) -> float:
        return float(np.linalg.norm(self.grid.points[self.x0] - self.grid.points[self.y0]))

    def distances(self) -> np.ndarray:
        """``|X - Y|`` after each recorded event."""
        if self.times.size == 0:
            return np.zeros(0)
        return np.linalg.norm(self._pos(self.x) - self._pos(self.y), axis=1)

    def sup_distance(self, t: float | None = None) -> float:
        """``sup_{s <= t} |X_s - Y_s|`` (the path is piecewise constant)."""
        t = self.T if t is None else t
        d = self.distances()[self.times <= t]
        return max(self.initial_distance, float(d.max()) if d.size else 0.0)

    def position_at(self, t: float) -> tuple[int, int]:
        k = int(np.searchsorted(self.times, t, side="right"))
        if k == 0:
            return self.x0, self.y0
        return int(self.x[k - 1]), int(self.y[k - 1])

    @property
    def n_shared(self) -> int:
        return int(np.count_nonzero(self.flags == MOVED_BOTH))

    @property
    def n_single(self) -> int:
        return int(np.count_nonzero(self.flags != MOVED_BOTH))

    def stopping_time(self, radius: float = 1.0) -> float:
        """First time ``|X - Y| >= radius``; ``inf`` if it never happens before ``T``."""
        if self.initial_distance >= radius:
            return 0.0
        hit = np.nonzero(self.distances() >= radius)[0]
        return float(self.times[hit[0]]) if hit.size else math.inf

    def to_csv(self, path):
        """Rows ``t, X_1..X_d, Y_1..Y_d, shared`` starting with the initial state."""
        d = self.grid.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"X_{j + 1}" for j in range(d)] + [f"Y_{j + 1}" for j in range(d)] + ["shared"])
            rows = [(0.0, self.x0, self.y0, 0)] + list(zip(self.times, self.x, self.y, self.flags))
            for t, xs, ys, f in rows:
                px = self.grid.points[int(xs)]
                py = self.grid.points[int(ys)]
                w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in px), *(f"{v:.17g}" for v in py),
                            int(f == MOVED_BOTH)])


def _site(grid: GridSpec, s) -> int:
    if isinstance(s, (int, np.integer)):
        if not 0 <= int(s) < grid.n_sites:
            raise ValueError(f"site index {s} outside the grid")
        return int(s)
    return grid.index(s)


def simulate_coupled_walkers(x0, y0, rt: RateTable, T: float, seed: int, backend: str | None = None) -> CoupledPairPath:
    """Exact thinning realisation of the shared-noise pair up to time ``T``.

    ``x0`` and ``y0`` are site indices or integer lattice coordinates.
    """
    grid = rt.grid
    xs, ys = _site(grid, x0), _site(grid, y0)
    if T < 0:
        raise ValueError("T must be non-negative")
    k = _backend.get(backend)
    times, xa, ya, flags = k.walkers_run(xs, ys, rt.rho_eff, grid.neighbor_table, float(T), int(seed))
    return CoupledPairPath(grid, xs, ys, float(T), np.asarray(times), np.asarray(xa, dtype=np.int64),
                           np.asarray(ya, dtype=np.int64), np.asarray(flags, dtype=np.int8), int(seed))


@dataclass
class ContractionStats:
    epsilon: float
    n_paths: int
    initial_distance: float
    T: float
    C: float
    delta: float
    mean_sup: float
    stderr_sup: float
    tail_probability: float
    tail_stderr: float
    bound: float

    @property
    def mean_ok(self) -> bool:
        return self.mean_sup <= self.bound


def contraction_report(paths: list[CoupledPairPath], C: float, delta: float = 0.2,
                       margin: float = 0.2) -> ContractionStats:
    """Mean sup-distance against ``(1 + margin) e^{CT} |x0 - y0|`` and the tail beyond ``e^{CT}|x0 - y0| + delta``."""
    if not paths:
        raise ValueError("no paths")
    p0 = paths[0]
    for p in paths[1:]:
        if (p.x0, p.y0, p.T) != (p0.x0, p0.y0, p0.T) or not p.grid.compatible(p0.grid):
            raise ValueError("paths must share grid, start points and horizon")
    sups = np.array([p.sup_distance() for p in paths])
    d0 = p0.initial_distance
    growth = d0 * math.exp(C * p0.T)
    tail = sups > growth + delta
    n = len(paths)
    prob = float(tail.mean())
    return ContractionStats(
        epsilon=p0.grid.epsilon, n_paths=n, initial_distance=d0, T=p0.T, C=C, delta=delta,
        mean_sup=float(sups.mean()),
        stderr_sup=float(sups.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        tail_probability=prob,
        tail_stderr=math.sqrt(prob * (1 - prob) / n),
        bound=(1.0 + margin) * growth,
    )


def run_pairs(drift: DriftModel, epsilon: float, x0: float, y0: float, T: float, seeds,
              half_width: float = 8.0, backend: str | None = None) -> list[CoupledPairPath]:
    """Coupled pairs from physical start points ``x0``, ``y0`` (1-d) for each seed."""
    grid = GridSpec(epsilon, drift.dim, half_width)
    rt = build_q_from_b(drift, grid=grid)
    out = []
    for pt in (x0, y0):
        k = pt / epsilon
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"start point {pt} is not on the grid of spacing {epsilon}")
    xs = grid.index((round(x0 / epsilon),))
    ys = grid.index((round(y0 / epsilon),))
    for s in seeds:
        out.append(simulate_coupled_walkers(xs, ys, rt, T, int(s), backend))
    return out


def tail_sweep(drift: DriftModel, epsilons, x0: float, y0: float, T: float, seeds, C: float,
               delta: float = 0.2) -> list[ContractionStats]:
    """Contraction statistics across a list of grid spacings (same seeds for each)."""
    return [contraction_report(run_pairs(drift, e, x0, y0, T, seeds), C, delta) for e in epsilons]
