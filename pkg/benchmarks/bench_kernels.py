"""Time the compiled event kernels against the pure-Python engine.

    python benchmarks/bench_kernels.py --n 2000 --T 0.2 --repeat 3

Both engines consume the same counter-based random streams, so the script
also checks that they return identical trajectories.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from trimbrw import _backend
from trimbrw.coupling import simulate_coupled_walkers
from trimbrw.drift import DriftModel, build_q_from_b
from trimbrw.grid import GridSpec
from trimbrw.harness import initial_profile
from trimbrw.particle import ParticleConfiguration, simulate_coupled_pair, simulate_trimmed


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--n", type=int, default=2000, help="particles")
    ap.add_argument("--T", type=float, default=0.2)
    ap.add_argument("--walker-T", type=float, default=5.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    try:
        _backend.get("cython")
    except ImportError:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1

    rt = build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(args.epsilon, 1, 8.0))
    cfg = ParticleConfiguration.from_density(rt.grid, initial_profile("example1", rt.grid), args.n, seed=args.seed)
    cases = {
        "trimmed": lambda be: simulate_trimmed(cfg, rt, args.T, args.seed, backend=be),
        "coupled": lambda be: simulate_coupled_pair(cfg, rt, args.T, args.seed, backend=be),
        "walkers": lambda be: simulate_coupled_walkers((-1,), (1,), rt, args.walker_T, args.seed, backend=be),
    }
    print(f"{'kernel':<10}{'events':>10}{'cython s':>12}{'python s':>12}{'speedup':>10}  match")
    for name, run in cases.items():
        tc, oc = best_of(lambda: run("cython"), args.repeat)
        tp, op = best_of(lambda: run("python"), args.repeat)
        if name == "walkers":
            events = oc.times.size
            match = np.array_equal(oc.times, op.times) and np.array_equal(oc.x, op.x)
        elif name == "trimmed":
            events = oc.n_events
            match = oc.n_events == op.n_events and np.array_equal(oc.final.counts, op.final.counts)
        else:
            events = oc.n_events
            match = oc.n_events == op.n_events and np.array_equal(oc.final_untrimmed.counts, op.final_untrimmed.counts)
        print(f"{name:<10}{events:>10}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}  {match}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
