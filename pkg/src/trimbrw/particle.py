"""N-particle trimmed branching random walk and its untrimmed coupling.

Each particle jumps ``x -> x + eps k_i`` at rate ``r_i(x)`` and branches at rate 1.
A branch at ``x`` adds a particle there and removes one from the most populated
site (lowest index on ties). The untrimmed companion process keeps every newborn.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _backend
from ._rng import INIT, stream_key
from .drift import RateTable
from .grid import GridSpec

REMOVAL_CONVENTIONS = ("pre_birth", "post_birth")


class EmptyPopulation(ValueError):
    pass


@dataclass(frozen=True)
class SimSeed:
    """64-bit seed; engines derive one counter-based stream per event category."""

    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def numpy_rng(self, stream: int = INIT) -> np.random.Generator:
        return np.random.default_rng(stream_key(int(self.seed), stream))


@dataclass
class ParticleConfiguration:
    grid: GridSpec
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).copy()
        if self.counts.shape != (self.grid.n_sites,):
            raise ValueError(f"expected {self.grid.n_sites} counts, got shape {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def argmax_star(self) -> int:
        """Most populated site, ties broken by the lexicographic order (brute force)."""
        return int(np.argmax(self.counts))

    @classmethod
    def point_mass(cls, grid: GridSpec, n: int, coords=None) -> "ParticleConfiguration":
        counts = np.zeros(grid.n_sites, dtype=np.int64)
        counts[grid.index(coords if coords is not None else (0,) * grid.dim)] = n
        return cls(grid, counts)

    @classmethod
    def from_density(cls, grid: GridSpec, mass: np.ndarray, n: int, seed: SimSeed | int | None = None,
                     method: str = "multinomial") -> "ParticleConfiguration":
        """Place ``n`` particles following the site masses ``mass`` (summing to one).

        ``multinomial`` draws i.i.d. positions; ``quantize`` rounds deterministically
        with the largest-remainder rule.
        """
        p = np.clip(np.asarray(mass, float), 0.0, None)
        p = p / p.sum()
        if method == "multinomial":
            seed = seed if isinstance(seed, SimSeed) else SimSeed(int(seed or 0))
            counts = seed.numpy_rng().multinomial(n, p)
        elif method == "quantize":
            raw = n * p
            counts = np.floor(raw).astype(np.int64)
            short = n - int(counts.sum())
            if short:
                order = np.lexsort((np.arange(p.size), -(raw - counts)))
                counts[order[:short]] += 1
        else:
            raise ValueError(f"unknown placement method {method!r}")
        return cls(grid, counts)


def empirical_measure(cfg: ParticleConfiguration) -> np.ndarray:
    """Site weights ``counts / N``."""
    n = cfg.n
    if n <= 0:
        raise EmptyPopulation("empirical measure of an empty configuration")
    return cfg.counts / n


def _fmt_point(grid: GridSpec, site: int) -> list[str]:
    return [f"{v:.17g}" for v in grid.points[site]]


@dataclass
class RemovalLedger:
    """Where the removal point (argmax*) sat over ``[0, T]``.

    ``occupation[x]`` is the total time ``x`` was the argmax* site; interval and
    per-removal records are present only when requested from the engine.
    """

    grid: GridSpec
    T: float
    occupation: np.ndarray
    interval_site: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    interval_t0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    interval_t1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    removal_site: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    removal_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_changes: int = 0

    def total_mass(self) -> Fraction:
        """``beta^N(R^d x [0, T])`` in exact rational arithmetic."""
        if self.interval_site.size == 0:
            raise ValueError("ledger was recorded without intervals")
        return sum((Fraction(b) - Fraction(a) for a, b in zip(self.interval_t0, self.interval_t1)), Fraction(0))

    def is_partition(self) -> bool:
        t0, t1 = self.interval_t0, self.interval_t1
        if t0.size == 0:
            return False
        return bool(t0[0] == 0.0 and t1[-1] == self.T and np.all(t0[1:] == t1[:-1]) and np.all(t1 >= t0))

    def time_average(self) -> np.ndarray:
        """Time-averaged removal location histogram (sums to one)."""
        return self.occupation / self.T

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{j + 1}" for j in range(self.grid.dim)] + ["t_start", "t_end"])
            for s, a, b in zip(self.interval_site, self.interval_t0, self.interval_t1):
                w.writerow([*_fmt_point(self.grid, int(s)), f"{a:.17g}", f"{b:.17g}"])


@dataclass
class TrimmedRun:
    times: np.ndarray
    snapshots: list[ParticleConfiguration]
    final: ParticleConfiguration
    ledger: RemovalLedger
    n_events: int
    n_jumps: int
    n_branches: int

    def snapshots_to_csv(self, path):
        write_snapshots_csv(path, self.times, self.snapshots)


def write_snapshots_csv(path, times, snapshots):
    """Rows ``t, x_1..x_d, count`` for occupied sites, fixed 17-digit formatting."""
    grid = snapshots[0].grid if snapshots else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = grid.dim if grid else 1
        w.writerow(["t"] + [f"x_{j + 1}" for j in range(dim)] + ["count"])
        for t, cfg in zip(times, snapshots):
            for s in np.nonzero(cfg.counts)[0]:
                w.writerow([f"{t:.17g}", *_fmt_point(cfg.grid, int(s)), int(cfg.counts[s])])


def _check_inputs(cfg: ParticleConfiguration, rt: RateTable, T: float, snapshot_times):
    if not cfg.grid.compatible(rt.grid):
        raise ValueError("configuration and rate table live on different grids")
    if cfg.n <= 0:
        raise EmptyPopulation("simulation needs at least one particle")
    if T < 0:
        raise ValueError("T must be non-negative")
    snaps = np.sort(np.asarray([] if snapshot_times is None else snapshot_times, dtype=float).reshape(-1))
    if snaps.size and (snaps[0] < 0 or snaps[-1] > T):
        raise ValueError("snapshot times must lie in [0, T]")
    return snaps


def simulate_trimmed(cfg: ParticleConfiguration, rt: RateTable, T: float, seed: SimSeed | int,
                     snapshot_times=None, removal: str = "pre_birth", record_intervals: bool = True,
                     record_removals: bool = False, backend: str | None = None) -> TrimmedRun:
    """Exact next-event simulation of the trimmed process up to time ``T``.

    ``removal="pre_birth"`` removes from argmax* of the configuration just before
    the branch; ``"post_birth"`` counts the newborn first.
    """
    if removal not in REMOVAL_CONVENTIONS:
        raise ValueError(f"removal must be one of {REMOVAL_CONVENTIONS}")
    snaps = _check_inputs(cfg, rt, T, snapshot_times)
    seed = seed.seed if isinstance(seed, SimSeed) else int(seed)
    k = _backend.get(backend)
    out = k.trimmed_run(cfg.counts, rt.r_eff, rt.grid.neighbor_table, rt.rbar_eff + 1.0, float(T), seed,
                        snaps, removal == "post_birth", record_intervals, record_removals)
    grid = cfg.grid
    ledger = RemovalLedger(
        grid, float(T), out["occupation"], out["interval_site"], out["interval_t0"], out["interval_t1"],
        out["removal_site"], out["removal_t"], int(out["n_argmax_changes"]),
    )
    snapshots = [ParticleConfiguration(grid, row) for row in out["snapshots"]]
    return TrimmedRun(snaps, snapshots, ParticleConfiguration(grid, out["counts"]), ledger,
                      int(out["n_events"]), int(out["n_jumps"]), int(out["n_branches"]))


@dataclass
class CoupledRun:
    times: np.ndarray
    trimmed: list[ParticleConfiguration]
    untrimmed: list[ParticleConfiguration]
    final_trimmed: ParticleConfiguration
    final_untrimmed: ParticleConfiguration
    domination_ok: bool
    t_violation: float
    n_events: int


def simulate_coupled_pair(cfg: ParticleConfiguration, rt: RateTable, T: float, seed: SimSeed | int,
                          snapshot_times=None, removal: str = "pre_birth", backend: str | None = None) -> CoupledRun:
    """Trimmed and untrimmed processes driven by one shared stream of marked events.

    Candidate events at site ``x`` arrive at rate ``max(n_trim(x), n_free(x)) * (rbar(x) + 1)``;
    a uniform mark ``theta`` in ``[0, max)`` fires the event in each process whose own
    count exceeds ``theta``. Domination is checked at every site touched by an event.
    """
    if removal not in REMOVAL_CONVENTIONS:
        raise ValueError(f"removal must be one of {REMOVAL_CONVENTIONS}")
    snaps = _check_inputs(cfg, rt, T, snapshot_times)
    seed = seed.seed if isinstance(seed, SimSeed) else int(seed)
    k = _backend.get(backend)
    out = k.coupled_run(cfg.counts, rt.r_eff, rt.grid.neighbor_table, rt.rbar_eff + 1.0, float(T), seed,
                        snaps, removal == "post_birth")
    g = cfg.grid
    return CoupledRun(
        snaps,
        [ParticleConfiguration(g, r) for r in out["snapshots_trimmed"]],
        [ParticleConfiguration(g, r) for r in out["snapshots_untrimmed"]],
        ParticleConfiguration(g, out["trimmed"]),
        ParticleConfiguration(g, out["untrimmed"]),
        bool(out["domination_ok"]),
        float(out["t_violation"]),
        int(out["n_events"]),
    )


def write_ledger_csv(path: str | Path, ledger: RemovalLedger):
    ledger.to_csv(path)
