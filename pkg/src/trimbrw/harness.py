"""Distances between grid measures and the end-to-end convergence experiments.

Experiments fan out over ``(N, seed)`` or ``(epsilon,)`` tasks; results come
back in task order so tables and CSV files are reproducible byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import __version__
from .drift import DriftModel, MollifierSpec, build_q_from_b
from .grid import GridSpec
from .meanfield import SchemeConfig, modulus_of_continuity, solve
from .operators import GridFunction
from .particle import ParticleConfiguration, SimSeed, empirical_measure, simulate_coupled_pair, simulate_trimmed
from .stationary import example1

METRIC_KINDS = ("wasserstein1_1d", "sup_density", "site_sup")
INITIAL_PROFILES = ("example1", "gaussian", "point")


# ---------------------------------------------------------------------------
# metrics


def _pair(a, b, grid: GridSpec):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != (grid.n_sites,) or b.shape != (grid.n_sites,):
        raise ValueError("measures must live on the given grid")
    return a, b


def wasserstein1_1d(a, b, grid: GridSpec) -> float:
    """Exact ``W_1`` between two equal-mass measures on a 1-d grid (CDF integral)."""
    if grid.dim != 1:
        raise ValueError(f"wasserstein1_1d needs a 1-d grid, got dim={grid.dim}")
    a, b = _pair(a, b, grid)
    if abs(a.sum() - b.sum()) > 1e-9 * max(a.sum(), b.sum(), 1.0):
        raise ValueError("W1 needs measures of equal total mass")
    return float(grid.epsilon * np.sum(np.abs(np.cumsum(a - b)[:-1])))


def site_sup(a, b, grid: GridSpec) -> float:
    a, b = _pair(a, b, grid)
    return float(np.max(np.abs(a - b)))


def smoothed_density(a, grid: GridSpec, bandwidth: float) -> np.ndarray:
    """Gaussian-kernel density of a grid measure, evaluated at the sites."""
    a = np.asarray(a, float).reshape((grid.side,) * grid.dim)
    if bandwidth > 0:
        a = gaussian_filter(a, sigma=bandwidth / grid.epsilon, mode="reflect", truncate=6.0)
    return a.reshape(-1) / grid.cell_volume


def sup_density(a, b, grid: GridSpec, bandwidth: float = 0.1) -> float:
    a, b = _pair(a, b, grid)
    return float(np.max(np.abs(smoothed_density(a, grid, bandwidth) - smoothed_density(b, grid, bandwidth))))


@dataclass(frozen=True)
class MetricSpec:
    kind: str = "wasserstein1_1d"
    bandwidth: float = 0.1

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"metric kind must be one of {METRIC_KINDS}, got {self.kind!r}")

    def __call__(self, a, b, grid: GridSpec) -> float:
        if self.kind == "wasserstein1_1d":
            return wasserstein1_1d(a, b, grid)
        if self.kind == "site_sup":
            return site_sup(a, b, grid)
        return sup_density(a, b, grid, self.bandwidth)


def metric(a, b, grid: GridSpec, spec: MetricSpec | None = None) -> float:
    return (spec or MetricSpec())(a, b, grid)


# ---------------------------------------------------------------------------
# configuration and shared helpers


@dataclass
class ExperimentConfig:
    drift: DriftModel = field(default_factory=lambda: DriftModel.tanh_well(2.0))
    epsilons: tuple = (0.1,)
    ns: tuple = (1000, 10000, 100000)
    T: float = 1.0
    dt: float = 1e-4
    seeds: tuple = tuple(range(1, 21))
    half_width: float = 8.0
    mollifier_radius: float = 0.5
    initial: str = "example1"
    scheme: str = "trim_splitting"
    metric: MetricSpec = field(default_factory=MetricSpec)
    removal: str = "pre_birth"
    etas: tuple = (0.5, 0.25, 0.1)
    reference: str = "auto"
    output_dir: str | None = None
    jobs: int = 1
    backend: str | None = None

    def __post_init__(self):
        if self.initial not in INITIAL_PROFILES:
            raise ValueError(f"initial must be one of {INITIAL_PROFILES}, got {self.initial!r}")
        if self.reference not in ("auto", "closed_form", "richardson"):
            raise ValueError(f"unknown reference {self.reference!r}")
        self.epsilons = tuple(float(e) for e in self.epsilons)
        self.ns = tuple(int(n) for n in self.ns)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.etas = tuple(float(e) for e in self.etas)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        d.pop("jobs")
        return d


@dataclass
class Gate:
    name: str
    value: float
    threshold: float
    passed: bool
    note: str = ""


@lru_cache(maxsize=16)
def rates_for(drift: DriftModel, epsilon: float, half_width: float = 8.0, radius: float = 0.5):
    return build_q_from_b(drift, MollifierSpec(radius=radius), grid=GridSpec(epsilon, drift.dim, half_width))


def initial_profile(name: str, grid: GridSpec) -> np.ndarray:
    """Unit-mass site weights for a named initial condition."""
    if name == "example1":
        if grid.dim != 1:
            raise ValueError("the example1 profile is one-dimensional")
        return example1().sample(grid)
    if name == "gaussian":
        m = np.exp(-0.5 * np.sum(grid.points**2, axis=1))
        return m / m.sum()
    if name == "point":
        m = np.zeros(grid.n_sites)
        m[grid.index((0,) * grid.dim)] = 1.0
        return m
    raise ValueError(f"unknown initial profile {name!r}")


def stable_dt(dt: float, rt) -> float:
    """``dt`` reduced if needed so that ``dt * max(rbar + 1) <= 1/2``."""
    return min(dt, 0.5 / float(np.max(rt.rbar_eff + 1.0)))


def parallel_map(fn, tasks, jobs: int = 1) -> list:
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_rows_csv(path, rows: list[dict]):
    """Dict rows with fixed 17-significant-digit float formatting."""
    if not rows:
        Path(path).write_text("")
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])


def git_style_hash(data: bytes) -> str:
    """SHA-1 over ``blob <len>\\0<data>``, the way git names file contents."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def config_hash(config: dict) -> str:
    payload = json.dumps({"config": _jsonable(config), "version": __version__}, sort_keys=True).encode()
    return git_style_hash(payload)


def write_manifest(path, config: dict, seeds, gates: list[Gate], artifacts=()) -> dict:
    """JSON manifest with config, seeds, versions, content hashes and gate outcomes."""
    files = {}
    for a in artifacts:
        p = Path(a)
        if p.exists():
            files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "config": _jsonable(config),
        "seeds": [int(s) for s in seeds],
        "versions": {"trimbrw": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "hashes": {"config": config_hash(config), "artifacts": files},
        "gates": [
            {"name": g.name, "value": _jsonable(g.value), "threshold": _jsonable(g.threshold),
             "pass": bool(g.passed), **({"note": g.note} if g.note else {})}
            for g in gates
        ],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def plot_lines(path, x, series: dict, xlabel: str = "", ylabel: str = "", logx: bool = False,
               logy: bool = False, title: str = "") -> bool:
    """Self-contained SVG line plot; returns False when matplotlib is unavailable."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        warnings.warn("matplotlib not installed; skipping plot", RuntimeWarning)
        return False
    plt.rcParams["svg.hashsalt"] = "trimbrw"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        ax.plot(x, y, marker="o" if len(x) < 20 else None, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


def _mean_stderr(x) -> tuple[float, float]:
    x = np.asarray(x, float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


# ---------------------------------------------------------------------------
# N -> infinity at fixed epsilon


@dataclass
class ConvergeNResult:
    runs: list[dict]
    summary: list[dict]
    slope: float
    gates: list[Gate]
    reference_mass: np.ndarray
    reference_removal: np.ndarray

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


def reference_solution(cfg: ExperimentConfig, epsilon: float):
    rt = rates_for(cfg.drift, epsilon, cfg.half_width, cfg.mollifier_radius)
    u0 = initial_profile(cfg.initial, rt.grid)
    sc = SchemeConfig(dt=stable_dt(cfg.dt, rt), scheme=cfg.scheme, stride=10**9)
    return u0, solve(u0, cfg.T, sc, rt)


def _converge_n_task(args):
    drift, eps, L, initial, n, seed, T, removal, backend, ref_u, ref_beta, spec = args
    rt = rates_for(drift, eps, *L)
    grid = rt.grid
    u0 = initial_profile(initial, grid)
    cfg0 = ParticleConfiguration.from_density(grid, u0, n, SimSeed(seed))
    run = simulate_trimmed(cfg0, rt, T, SimSeed(seed), removal=removal, record_intervals=False, backend=backend)
    xi = empirical_measure(run.final)
    beta = run.ledger.time_average()
    return {
        "N": n,
        "seed": seed,
        "distance": spec(xi, ref_u, grid),
        "beta_distance": spec(beta, ref_beta, grid),
        "population": run.final.n,
        "events": run.n_events,
    }


def experiment_converge_N(cfg: ExperimentConfig, tol: float = 0.05) -> ConvergeNResult:
    """Distance between the particle empirical measure and the grid ODE at time ``T`` for each ``N``."""
    eps = cfg.epsilons[0]
    _, ref = reference_solution(cfg, eps)
    ref_u = ref.path.u[-1]
    ref_beta = ref.diagnostics.lam_integral / cfg.T
    tasks = [
        (cfg.drift, eps, (cfg.half_width, cfg.mollifier_radius), cfg.initial, n, s, cfg.T, cfg.removal, cfg.backend,
         ref_u, ref_beta, cfg.metric)
        for n in cfg.ns for s in cfg.seeds
    ]
    runs = parallel_map(_converge_n_task, tasks, cfg.jobs)
    summary = []
    for n in cfg.ns:
        d = [r["distance"] for r in runs if r["N"] == n]
        bd = [r["beta_distance"] for r in runs if r["N"] == n]
        m, se = _mean_stderr(d)
        bm, bse = _mean_stderr(bd)
        summary.append({"N": n, "seeds": len(d), "mean_distance": m, "stderr_distance": se,
                        "mean_beta_distance": bm, "stderr_beta_distance": bse})
    means = np.array([row["mean_distance"] for row in summary])
    slope = float(np.polyfit(np.log(cfg.ns), np.log(means), 1)[0]) if len(cfg.ns) > 1 else float("nan")
    decreasing = bool(np.all(np.diff(means) < 0))
    gates = [
        Gate("distance strictly decreasing in N", float(np.max(np.diff(means))) if means.size > 1 else 0.0, 0.0, decreasing),
        Gate(f"distance at N={cfg.ns[-1]}", float(means[-1]), tol, bool(means[-1] <= tol)),
    ]
    res = ConvergeNResult(runs, summary, slope, gates, ref_u, ref_beta)
    if cfg.output_dir:
        _emit(cfg, "converge_n", [("runs.csv", runs), ("summary.csv", summary)], gates,
              plot=("distance_vs_N.svg", list(cfg.ns), {"mean distance": means}, "N", "distance", True, True))
    return res


# ---------------------------------------------------------------------------
# epsilon -> 0


@dataclass
class ConvergeEpsResult:
    rows: list[dict]
    omega: list[dict]
    gates: list[Gate]
    reference_points: np.ndarray
    reference_values: np.ndarray
    profiles: dict

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


def _coarse_sample(U: np.ndarray, grid: GridSpec, coarse: GridSpec) -> np.ndarray:
    ratio = coarse.epsilon / grid.epsilon
    f = int(round(ratio))
    if abs(ratio - f) > 1e-9 or grid.dim != 1:
        raise ValueError("coarse grid spacing must be an integer multiple of the fine one (1-d)")
    idx = grid.m + f * np.arange(-coarse.m, coarse.m + 1)
    return U[idx]


def _converge_eps_task(args):
    cfg, eps = args
    rt = rates_for(cfg.drift, eps, cfg.half_width, cfg.mollifier_radius)
    _, sol = reference_solution(cfg, eps)
    gf = GridFunction(rt.grid, sol.path.u[-1])
    omega = {eta: modulus_of_continuity(gf, eta) for eta in cfg.etas}
    return eps, gf.density(), omega, sol.diagnostics.growth_ok(), sol.diagnostics.max_mass_error


def experiment_converge_eps(cfg: ExperimentConfig, tol: float = 5e-2, gate_omega: bool = True) -> ConvergeEpsResult:
    """Sup-density error of the grid ODE against a limit profile, plus the modulus-of-continuity table.

    With the Example-1 profile and ``b = -2 tanh`` the reference is the closed-form
    stationary density; otherwise it is a Richardson extrapolation of two runs at
    half and a quarter of the finest spacing.
    """
    eps_list = sorted(cfg.epsilons, reverse=True)
    coarse = GridSpec(eps_list[0], cfg.drift.dim, cfg.half_width)
    use_closed = cfg.reference == "closed_form" or (
        cfg.reference == "auto" and cfg.initial == "example1" and cfg.drift == DriftModel.tanh_well(2.0)
    )
    out = parallel_map(_converge_eps_task, [(cfg, e) for e in eps_list], cfg.jobs)
    if use_closed:
        ref = example1().u(coarse.axis)
    else:
        fine = [eps_list[-1] / 2, eps_list[-1] / 4]
        extra = parallel_map(_converge_eps_task, [(cfg, e) for e in fine], cfg.jobs)
        u_half = _coarse_sample(extra[0][1], GridSpec(fine[0], 1, cfg.half_width), coarse)
        u_quarter = _coarse_sample(extra[1][1], GridSpec(fine[1], 1, cfg.half_width), coarse)
        ref = 2.0 * u_quarter - u_half
    rows, omega_rows, profiles = [], [], {}
    for eps, U, omega, growth_ok, mass_err in out:
        g = GridSpec(eps, cfg.drift.dim, cfg.half_width)
        Uc = _coarse_sample(U, g, coarse)
        profiles[eps] = Uc
        rows.append({"epsilon": eps, "sup_error": float(np.max(np.abs(Uc - ref))),
                     "growth_bound_ok": growth_ok, "mass_error": mass_err})
        omega_rows.append({"epsilon": eps, **{f"omega_{eta:g}": omega[eta] for eta in cfg.etas}})
    errs = np.array([r["sup_error"] for r in rows])
    gates = [
        Gate("sup error strictly decreasing as epsilon shrinks",
             float(np.max(np.diff(errs))) if errs.size > 1 else 0.0, 0.0, bool(np.all(np.diff(errs) < 0))),
        Gate(f"sup error at epsilon={eps_list[-1]:g}", float(errs[-1]), tol, bool(errs[-1] <= tol)),
    ]
    # the coarse grid cannot see separations close to eta, so omega is expected
    # to approach its limit from below: it must not decrease as epsilon shrinks
    for eta in cfg.etas:
        w = np.array([r[f"omega_{eta:g}"] for r in omega_rows if r["epsilon"] > 0])
        drop = float(-np.min(np.diff(w))) if w.size > 1 else 0.0
        ok = bool(drop <= 1e-12)
        gates.append(Gate(f"omega(eta={eta:g}) non-increasing in epsilon", drop, 0.0, ok or not gate_omega,
                          "" if gate_omega else "monitored only"))
    if use_closed:
        lim = GridFunction(GridSpec(eps_list[-1] / 4, 1, cfg.half_width),
                           example1().u(GridSpec(eps_list[-1] / 4, 1, cfg.half_width).axis) * eps_list[-1] / 4)
        omega_rows.append({"epsilon": 0.0, **{f"omega_{eta:g}": modulus_of_continuity(lim, eta) for eta in cfg.etas}})
    res = ConvergeEpsResult(rows, omega_rows, gates, coarse.axis, ref, profiles)
    if cfg.output_dir:
        prof = [{"x": float(x), "reference": float(r), **{f"U_eps_{e:g}": float(profiles[e][i]) for e in eps_list}}
                for i, (x, r) in enumerate(zip(coarse.axis, ref))]
        _emit(cfg, "converge_eps", [("errors.csv", rows), ("omega.csv", omega_rows), ("profiles.csv", prof)], gates,
              plot=("profiles.svg", coarse.axis, {"reference": ref, **{f"eps={e:g}": profiles[e] for e in eps_list}},
                    "x", "density", False, False))
    return res


# ---------------------------------------------------------------------------
# domination


@dataclass
class DominationResult:
    runs: list[dict]
    pass_count: int
    n_runs: int
    untrimmed_mean: float
    untrimmed_stderr: float
    expected_untrimmed: float
    gates: list[Gate]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


def _domination_task(args):
    drift, eps, L, initial, n, seed, T, removal, backend = args
    rt = rates_for(drift, eps, *L)
    grid = rt.grid
    if initial == "point":
        cfg0 = ParticleConfiguration.point_mass(grid, n)
    else:
        cfg0 = ParticleConfiguration.from_density(grid, initial_profile(initial, grid), n, SimSeed(seed))
    run = simulate_coupled_pair(cfg0, rt, T, SimSeed(seed), removal=removal, backend=backend)
    return {
        "seed": seed,
        "dominated": run.domination_ok,
        "t_violation": run.t_violation,
        "trimmed_final": run.final_trimmed.n,
        "untrimmed_final": run.final_untrimmed.n,
        "events": run.n_events,
    }


def experiment_domination(cfg: ExperimentConfig, n: int | None = None) -> DominationResult:
    """Coupled trimmed/untrimmed runs; every seed must keep per-site domination."""
    eps = cfg.epsilons[0]
    n = int(n if n is not None else cfg.ns[0])
    L = (cfg.half_width, cfg.mollifier_radius)
    tasks = [(cfg.drift, eps, L, cfg.initial, n, s, cfg.T, cfg.removal, cfg.backend) for s in cfg.seeds]
    runs = parallel_map(_domination_task, tasks, cfg.jobs)
    ok = sum(1 for r in runs if r["dominated"])
    m, se = _mean_stderr([r["untrimmed_final"] for r in runs])
    expected = n * math.exp(cfg.T)
    z = abs(m - expected) / se if se > 0 else (0.0 if m == expected else math.inf)
    gates = [
        Gate("pathwise domination pass rate", ok / len(runs), 1.0, ok == len(runs)),
        Gate("untrimmed mean within 3 stderr of N e^T", z, 3.0, bool(z <= 3.0)),
    ]
    res = DominationResult(runs, ok, len(runs), m, se, expected, gates)
    if cfg.output_dir:
        _emit(cfg, "dominate", [("runs.csv", runs)], gates)
    return res


# ---------------------------------------------------------------------------
# artifact output


def _emit(cfg: ExperimentConfig, name: str, tables, gates, plot=None):
    out = Path(cfg.output_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for fname, rows in tables:
        p = out / fname
        write_rows_csv(p, rows)
        files.append(p)
    if plot is not None:
        fname, x, series, xl, yl, lx, ly = plot
        p = out / fname
        if plot_lines(p, x, series, xl, yl, lx, ly, title=name):
            files.append(p)
    write_manifest(out / "manifest.json", cfg.to_dict(), cfg.seeds, gates, files)
