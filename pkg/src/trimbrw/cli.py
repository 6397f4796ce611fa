"""Command-line front end.

Every subcommand reads one TOML configuration file, validates it before doing
any work, writes its artifacts plus a JSON manifest into the output directory
and exits 0 only when all of its gates pass (1 on a failed gate, 2 on a
configuration error).
"""
from __future__ import annotations

import argparse
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .drift import DriftModel, EpsilonTooLarge, IrregularDrift, MollifierSpec, build_q_from_b
from .grid import GridError, GridSpec

SUBCOMMANDS = ("simulate", "solve", "stationary", "converge-n", "converge-eps", "dominate", "couple", "verify")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    epsilon: float
    dim: int = 1
    half_width: float = 8.0
    T: float = 1.0
    output_dir: str = "out"
    drift: DriftModel = field(default_factory=lambda: DriftModel.tanh_well(2.0))
    mollifier_radius: float = 0.5
    n: int = 1000
    seeds: tuple = (1,)
    snapshot_times: tuple = ()
    removal: str = "pre_birth"
    initial: str = "example1"
    dt: float = 1e-4
    scheme: str = "trim_splitting"
    tau_flat: float = 1e-7
    stride: int = 100
    epsilons: tuple = ()
    ns: tuple = (1000, 10000, 100000)
    metric: str = "wasserstein1_1d"
    bandwidth: float = 0.1
    etas: tuple = (0.5, 0.25, 0.1)
    x0: float = -0.05
    y0: float = 0.05
    C: float = 2.0
    delta: float = 0.2
    margin: float = 0.2
    coupling_epsilons: tuple = (0.2, 0.1, 0.05)
    sweep_distance: float = 0.2
    stationary: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def grid(self, epsilon: float | None = None) -> GridSpec:
        return GridSpec(self.epsilon if epsilon is None else epsilon, self.dim, self.half_width)

    def rates(self, epsilon: float | None = None):
        try:
            return build_q_from_b(self.drift, MollifierSpec(radius=self.mollifier_radius), grid=self.grid(epsilon))
        except IrregularDrift as exc:
            raise ConfigError("drift.kind", str(exc)) from None


# ---------------------------------------------------------------------------
# parsing and validation


def _get(tbl: dict, key: str, prefix: str, kind, default=None, required: bool = False):
    name = f"{prefix}.{key}" if prefix else key
    if key not in tbl:
        if required:
            raise ConfigError(name, "required")
        return default
    v = tbl[key]
    try:
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            return float(v)
        if kind is int:
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise TypeError
            return int(v)
        if kind is str:
            if not isinstance(v, str):
                raise TypeError
            return v
        if kind is list:
            if not isinstance(v, list):
                raise TypeError
            return tuple(v)
        if kind is dict:
            if not isinstance(v, dict):
                raise TypeError
            return v
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {v!r}") from None
    return v


def _set_dotted(tbl: dict, dotted: str, value):
    parts = dotted.split(".")
    cur = tbl
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(dotted, "cannot override inside a non-table value")
    cur[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, val = (s.strip() for s in text.split("=", 1))
    try:
        parsed = tomllib.loads(f"v = {val}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = val
    return key, parsed


def load_config(path: str | Path | None, overrides=()) -> RunConfig:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError("config", f"file {p} not found")
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"cannot parse {p}: {exc}") from None
    for o in overrides:
        k, v = parse_override(o)
        _set_dotted(raw, k, v)
    return build_config(raw)


def build_config(raw: dict) -> RunConfig:
    """Typed config from a parsed table; raises ``ConfigError`` naming the offending key."""
    cfg = RunConfig(epsilon=_get(raw, "epsilon", "", float, required=True), raw=raw)
    cfg.dim = _get(raw, "dim", "", int, 1)
    cfg.half_width = _get(raw, "half_width", "", float, 8.0)
    cfg.T = _get(raw, "T", "", float, 1.0)
    cfg.output_dir = _get(raw, "output_dir", "", str, "out")

    dr = _get(raw, "drift", "", dict, {})
    kind = _get(dr, "kind", "drift", str, "tanh_well")
    try:
        if kind == "tanh_well":
            cfg.drift = DriftModel.tanh_well(_get(dr, "scale", "drift", float, 2.0), cfg.dim)
        elif kind == "zero":
            cfg.drift = DriftModel.zero(cfg.dim)
        elif kind == "sign_well":
            cfg.drift = DriftModel.sign_well(_get(dr, "a", "drift", float, 3.0))
        elif kind == "tabulated":
            src = _get(dr, "path", "drift", str, required=True)
            cfg.drift = DriftModel.from_csv(src)
        else:
            raise ConfigError("drift.kind", f"unknown drift {kind!r}")
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("drift", str(exc)) from None

    mo = _get(raw, "mollifier", "", dict, {})
    cfg.mollifier_radius = _get(mo, "radius", "mollifier", float, 0.5)

    pa = _get(raw, "particles", "", dict, {})
    cfg.n = _get(pa, "N", "particles", int, 1000)
    seeds = _get(pa, "seeds", "particles", list, None)
    if seeds is None:
        start = _get(pa, "seed_start", "particles", int, 1)
        count = _get(pa, "seed_count", "particles", int, 1)
        seeds = tuple(range(start, start + count))
    if not seeds:
        raise ConfigError("particles.seeds", "at least one seed is required")
    if not all(isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2**64 for s in seeds):
        raise ConfigError("particles.seeds", "seeds must be non-negative 64-bit integers")
    cfg.seeds = tuple(seeds)
    cfg.snapshot_times = tuple(float(t) for t in _get(pa, "snapshot_times", "particles", list, ()))
    cfg.removal = _get(pa, "removal", "particles", str, "pre_birth")
    cfg.initial = _get(pa, "initial", "particles", str, "example1")

    so = _get(raw, "solver", "", dict, {})
    cfg.dt = _get(so, "dt", "solver", float, 1e-4)
    cfg.scheme = _get(so, "scheme", "solver", str, "trim_splitting")
    cfg.tau_flat = _get(so, "tau_flat", "solver", float, 1e-7)
    cfg.stride = _get(so, "stride", "solver", int, 100)

    ex = _get(raw, "experiment", "", dict, {})
    cfg.epsilons = tuple(float(e) for e in _get(ex, "epsilons", "experiment", list, (cfg.epsilon,)))
    cfg.ns = tuple(int(n) for n in _get(ex, "ns", "experiment", list, (1000, 10000, 100000)))
    cfg.metric = _get(ex, "metric", "experiment", str, "wasserstein1_1d")
    cfg.bandwidth = _get(ex, "bandwidth", "experiment", float, 0.1)
    cfg.etas = tuple(float(e) for e in _get(ex, "etas", "experiment", list, (0.5, 0.25, 0.1)))

    co = _get(raw, "coupling", "", dict, {})
    cfg.x0 = _get(co, "x0", "coupling", float, -0.05)
    cfg.y0 = _get(co, "y0", "coupling", float, 0.05)
    cfg.C = _get(co, "C", "coupling", float, 2.0)
    cfg.delta = _get(co, "delta", "coupling", float, 0.2)
    cfg.margin = _get(co, "margin", "coupling", float, 0.2)
    cfg.coupling_epsilons = tuple(float(e) for e in _get(co, "epsilons", "coupling", list, (0.2, 0.1, 0.05)))
    cfg.sweep_distance = _get(co, "sweep_distance", "coupling", float, 0.2)

    cfg.stationary = _get(raw, "stationary", "", dict, {})
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Cross-field checks run before any simulation."""
    if not 0 < cfg.epsilon < 1:
        raise ConfigError("epsilon", f"must lie in (0, 1), got {cfg.epsilon}")
    if cfg.dim < 1:
        raise ConfigError("dim", "must be at least 1")
    if cfg.T < 0:
        raise ConfigError("T", "must be non-negative")
    if cfg.n < 1:
        raise ConfigError("particles.N", "must be positive")
    if cfg.removal not in ("pre_birth", "post_birth"):
        raise ConfigError("particles.removal", f"must be pre_birth or post_birth, got {cfg.removal!r}")
    if cfg.initial not in ("example1", "gaussian", "point"):
        raise ConfigError("particles.initial", f"unknown profile {cfg.initial!r}")
    if cfg.scheme not in ("trim_splitting", "active_set"):
        raise ConfigError("solver.scheme", f"unknown scheme {cfg.scheme!r}")
    if not cfg.dt > 0:
        raise ConfigError("solver.dt", "must be positive")
    if cfg.stride < 1:
        raise ConfigError("solver.stride", "must be positive")
    if cfg.metric not in ("wasserstein1_1d", "sup_density", "site_sup"):
        raise ConfigError("experiment.metric", f"unknown metric {cfg.metric!r}")
    if any(t < 0 or t > cfg.T for t in cfg.snapshot_times):
        raise ConfigError("particles.snapshot_times", "must lie in [0, T]")
    for key, eps in [("epsilon", cfg.epsilon)] + [("experiment.epsilons", e) for e in cfg.epsilons]:
        try:
            GridSpec(eps, cfg.dim, cfg.half_width)
        except GridError as exc:
            raise ConfigError(key, str(exc)) from None
    if cfg.drift.dim != cfg.dim:
        raise ConfigError("drift", f"drift dimension {cfg.drift.dim} does not match dim={cfg.dim}")
    if cfg.drift.regular:
        try:
            rt = cfg.rates()
        except EpsilonTooLarge as exc:
            raise ConfigError("epsilon", str(exc)) from None
        except IrregularDrift as exc:
            raise ConfigError("drift.kind", str(exc)) from None
        bound = cfg.dt * float(np.max(rt.rbar_eff + 1.0))
        if not bound < 1.0:
            raise ConfigError("solver.dt", f"dt * max(rbar + 1) = {bound:.4g} must be below 1")


def validate_coupling(cfg: RunConfig):
    """Start points and sweep spacings must sit on the grids the walkers use."""
    for key, pt in (("coupling.x0", cfg.x0), ("coupling.y0", cfg.y0)):
        k = pt / cfg.epsilon
        if abs(k - round(k)) > 1e-9 or abs(pt) > cfg.half_width:
            raise ConfigError(key, f"{pt} is not a site of the grid with spacing {cfg.epsilon}")
    for e in cfg.coupling_epsilons:
        k = cfg.sweep_distance / e
        if abs(k - round(k)) > 1e-9:
            raise ConfigError("coupling.sweep_distance", f"{cfg.sweep_distance} is not a multiple of spacing {e}")
        try:
            GridSpec(e, cfg.dim, cfg.half_width)
        except GridError as exc:
            raise ConfigError("coupling.epsilons", str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


@dataclass
class Outcome:
    gates: list
    artifacts: list


def _gate(name, value, threshold, passed, note=""):
    from .harness import Gate

    return Gate(name, float(value), float(threshold), bool(passed), note)


def _outdir(cfg: RunConfig, name: str) -> Path:
    p = Path(cfg.output_dir) / name
    p.mkdir(parents=True, exist_ok=True)
    return p


def _experiment(cfg: RunConfig, args, epsilons=None, seeds=None):
    from .harness import ExperimentConfig, MetricSpec

    return ExperimentConfig(
        drift=cfg.drift, epsilons=epsilons or cfg.epsilons, ns=cfg.ns, T=cfg.T, dt=cfg.dt,
        seeds=seeds or cfg.seeds, half_width=cfg.half_width, mollifier_radius=cfg.mollifier_radius,
        initial=cfg.initial, scheme=cfg.scheme, metric=MetricSpec(cfg.metric, cfg.bandwidth),
        removal=cfg.removal, etas=cfg.etas, output_dir=cfg.output_dir, jobs=args.jobs, backend=args.backend,
    )


def cmd_simulate(cfg: RunConfig, args) -> Outcome:
    from .harness import initial_profile
    from .particle import ParticleConfiguration, SimSeed, simulate_trimmed, write_snapshots_csv

    out = _outdir(cfg, "simulate")
    rt = cfg.rates()
    grid = rt.grid
    gates, files = [], []
    snaps = sorted(set(cfg.snapshot_times) | {cfg.T})
    for s in cfg.seeds:
        init = ParticleConfiguration.from_density(grid, initial_profile(cfg.initial, grid), cfg.n, SimSeed(s))
        run = simulate_trimmed(init, rt, cfg.T, SimSeed(s), snaps, removal=cfg.removal, backend=args.backend)
        p1 = out / f"snapshots_seed{s}.csv"
        p2 = out / f"ledger_seed{s}.csv"
        write_snapshots_csv(p1, run.times, run.snapshots)
        run.ledger.to_csv(p2)
        files += [p1, p2]
        mass = run.ledger.total_mass()
        gates.append(_gate(f"seed {s}: removal ledger partitions [0, T]", float(mass), cfg.T,
                           run.ledger.is_partition() and mass == cfg.T))
        gates.append(_gate(f"seed {s}: population conserved", run.final.n, cfg.n, run.final.n == cfg.n))
    return Outcome(gates, files)


def cmd_solve(cfg: RunConfig, args) -> Outcome:
    from .harness import initial_profile
    from .meanfield import SchemeConfig, ode_residuals, solve

    out = _outdir(cfg, "solve")
    rt = cfg.rates()
    u0 = initial_profile(cfg.initial, rt.grid)
    sc = SchemeConfig(dt=cfg.dt, scheme=cfg.scheme, tau_flat=cfg.tau_flat, stride=cfg.stride)
    sol = solve(u0, cfg.T, sc, rt)
    d = sol.diagnostics
    p1, p2, p3 = out / "path.csv", out / "path.bin", out / "diagnostics.csv"
    sol.to_csv(p1)
    sol.to_binary(p2)
    from .harness import write_rows_csv

    write_rows_csv(p3, [
        {"t": t, "mass": m, "lambda_sum": ls, "lambda_min": lm, "support_gap": g, "clip_mass": c,
         "linf_density": li, "growth_bound": gb}
        for t, m, ls, lm, g, c, li, gb in zip(d.times, d.mass, d.lam_sum, d.lam_min, d.support_gap,
                                              d.clip_mass, d.linf, d.growth_bound())
    ])
    res = ode_residuals(rt, sol.path, sol.removal)
    band = cfg.tau_flat + cfg.dt
    gates = [
        _gate("mass 1 at every step", d.max_mass_error, 1e-9, d.max_mass_error <= 1e-9),
        _gate("removal admissible at every step", max(d.max_lam_sum_error, float(d.support_gap.max(initial=0))),
              band, d.admissible(band)),
        _gate("sup-norm growth bound", float(np.max(d.linf / d.growth_bound(), initial=0)), 1 + 1e-6, d.growth_ok()),
        _gate("clipped mass", d.total_clip, sc.clip_budget, d.total_clip <= sc.clip_budget),
        _gate("support condition integral", res.support_integral, band * rt.grid.cell_volume * cfg.T,
              res.support_integral <= band * rt.grid.cell_volume * cfg.T),
    ]
    return Outcome(gates, [p1, p2, p3])


def cmd_stationary(cfg: RunConfig, args) -> Outcome:
    from . import stationary as st

    out = _outdir(cfg, "stationary")
    a = float(cfg.stationary.get("a", 3.0))
    w = float(cfg.stationary.get("w", 1.0))
    sols = []
    which = args.which
    if which in ("example1", "all"):
        sols.append(st.example1(args.beta_variant))
    if which in ("example2_flat", "all"):
        sols += [st.example2_flat(a, w)] + ([st.example2_flat(a, 0.0)] if which == "all" else [])
    if which in ("example2_sharp", "all"):
        if "v0" in cfg.stationary and which != "all":
            sols.append(st.example2_sharp(a, float(cfg.stationary["v0"])))
        else:
            sols += st.example2_family_members(a)
    if which in ("example2_critical", "all"):
        sols.append(st.example2_critical())
    gates, files, rows = [], [], []
    for sol in sols:
        mass = sol.mass()
        rate = sol.beta_rate()
        gates.append(_gate(f"{sol.name}: mass", mass, 1.0, abs(mass - 1) <= 1e-8))
        note = "" if abs(rate - 1) <= 1e-8 else f"removal total is {rate:.3f}, not 1"
        gates.append(_gate(f"{sol.name}: removal rate", rate, 1.0, abs(rate - 1) <= 1e-8, note))
        gates.append(_gate(f"{sol.name}: maximum on argmax set", 1.0, 1.0, sol.max_on_descriptor()))
        row = {"name": sol.name, "mass": mass, "removal_rate": rate, "weak_residual": float("nan"),
               "quadrature_error": float("nan")}
        if args.check == "weak-form":
            rep = st.weak_form_residual(sol)
            gates.append(_gate(f"{sol.name}: weak-form residual", rep.max_residual, 1e-6, rep.max_residual <= 1e-6))
            row["weak_residual"] = rep.max_residual
            row["quadrature_error"] = max(rep.error_estimates)
        rows.append(row)
        if cfg.dim == 1:
            p = out / (re.sub(r"[^A-Za-z0-9.]+", "_", sol.name).strip("_") + ".csv")
            sol.to_csv(p, cfg.grid())
            files.append(p)
    from .harness import write_rows_csv

    p = out / "report.csv"
    write_rows_csv(p, rows)
    files.append(p)
    return Outcome(gates, files)


def cmd_converge_n(cfg: RunConfig, args) -> Outcome:
    from .harness import experiment_converge_N

    res = experiment_converge_N(_experiment(cfg, args, epsilons=(cfg.epsilon,)))
    for row in res.summary:
        print(f"N={row['N']:>8d}  distance {row['mean_distance']:.5f} +/- {row['stderr_distance']:.5f}"
              f"  removal {row['mean_beta_distance']:.5f}")
    print(f"log-log slope {res.slope:.3f} (reported, not gated)")
    return Outcome(res.gates, [])


def cmd_converge_eps(cfg: RunConfig, args) -> Outcome:
    from .harness import experiment_converge_eps

    res = experiment_converge_eps(_experiment(cfg, args))
    for row in res.rows:
        print(f"epsilon={row['epsilon']:<7g} sup error {row['sup_error']:.6f}")
    return Outcome(res.gates, [])


def cmd_dominate(cfg: RunConfig, args) -> Outcome:
    from .harness import experiment_domination

    res = experiment_domination(_experiment(cfg, args, epsilons=(cfg.epsilon,)), n=cfg.n)
    print(f"{res.pass_count}/{res.n_runs} runs dominated; untrimmed mean {res.untrimmed_mean:.2f} "
          f"+/- {res.untrimmed_stderr:.2f} (N e^T = {res.expected_untrimmed:.2f})")
    return Outcome(res.gates, [])


def cmd_couple(cfg: RunConfig, args) -> Outcome:
    from .coupling import contraction_report, run_pairs
    from .harness import write_manifest, write_rows_csv

    validate_coupling(cfg)
    out = _outdir(cfg, "couple")
    paths = run_pairs(cfg.drift, cfg.epsilon, cfg.x0, cfg.y0, cfg.T, cfg.seeds, cfg.half_width, args.backend)
    stats = contraction_report(paths, cfg.C, cfg.delta, cfg.margin)
    p0 = out / f"path_seed{cfg.seeds[0]}.csv"
    paths[0].to_csv(p0)
    rows = []
    for e in cfg.coupling_epsilons:
        s = contraction_report(run_pairs(cfg.drift, e, 0.0, cfg.sweep_distance, cfg.T, cfg.seeds, cfg.half_width, args.backend),
                               cfg.C, cfg.delta, cfg.margin)
        rows.append({"epsilon": e, "initial_distance": s.initial_distance, "mean_sup": s.mean_sup,
                     "tail_probability": s.tail_probability, "tail_stderr": s.tail_stderr})
    p1 = out / "tail_sweep.csv"
    write_rows_csv(p1, rows)
    tails = np.array([r["tail_probability"] for r in rows])
    order = np.argsort([-r["epsilon"] for r in rows])
    gates = [
        _gate("mean sup distance within (1 + margin) e^{CT} |x0 - y0|", stats.mean_sup, stats.bound, stats.mean_ok),
        _gate("tail probability decreasing in epsilon", float(np.max(np.diff(tails[order]), initial=0)), 0.0,
              bool(np.all(np.diff(tails[order]) <= 0))),
    ]
    print(f"mean sup |X - Y| = {stats.mean_sup:.4f} +/- {stats.stderr_sup:.4f} (bound {stats.bound:.4f})")
    write_manifest(out / "manifest.json", cfg.raw, cfg.seeds, gates, [p0, p1])
    return Outcome(gates, [p0, p1])


def cmd_verify(cfg: RunConfig, args) -> Outcome:
    from .operators import DiscreteGenerator, verify_identities

    gen = DiscreteGenerator(cfg.rates())
    rep = verify_identities(gen, seed=cfg.seeds[0])
    g = rep.gates()
    values = {"duality": rep.duality, "mass conservation": rep.mass_conservation,
              "interior adjoint identity": rep.interior_h, "kernel row sums": rep.row_sum}
    thresholds = {"duality": rep.duality_bound, "mass conservation": 0.0,
                  "interior adjoint identity": 1e-12 * rep.scale, "kernel row sums": 1e-9}
    return Outcome([_gate(k, values[k], thresholds[k], ok) for k, ok in g.items()], [])


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "stationary": cmd_stationary,
    "converge-n": cmd_converge_n,
    "converge-eps": cmd_converge_eps,
    "dominate": cmd_dominate,
    "couple": cmd_couple,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trimbrw", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key), may be repeated")
    common.add_argument("-o", "--output-dir", help="artifact directory (overrides output_dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for experiments")
    common.add_argument("--backend", choices=("cython", "python"), default=None, help="event-engine backend")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "stationary":
            p.add_argument("--which", default="all",
                           choices=("all", "example1", "example2_flat", "example2_sharp", "example2_critical"))
            p.add_argument("--check", choices=("none", "weak-form"), default="none")
            p.add_argument("--beta-variant", choices=("derived", "printed"), default="derived")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f'output_dir="{args.output_dir}"')
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        outcome = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    from .harness import write_manifest

    man = Path(cfg.output_dir) / f"{args.command}_manifest.json"
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    write_manifest(man, cfg.raw, cfg.seeds, outcome.gates, outcome.artifacts)
    failed = [g for g in outcome.gates if not g.passed]
    for g in outcome.gates:
        status = "PASS" if g.passed else "FAIL"
        extra = f"  ({g.note})" if g.note else ""
        print(f"[{status}] {g.name}: {g.value:.6g} vs {g.threshold:.6g}{extra}")
    if failed:
        print(f"gate failed: {failed[0].name}" + (f" ({failed[0].note})" if failed[0].note else ""), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
