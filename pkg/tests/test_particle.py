from fractions import Fraction

import numpy as np
import pytest

from trimbrw.drift import DriftModel, build_q_from_b
from trimbrw.grid import GridSpec
from trimbrw.particle import (EmptyPopulation, ParticleConfiguration, SimSeed, empirical_measure,
                              simulate_coupled_pair, simulate_trimmed)
from trimbrw.stationary import example1

BACKENDS = ["python", "cython"]


@pytest.fixture(scope="module")
def rt():
    return build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.1, 1, 4.0))


@pytest.fixture(scope="module")
def rt_zero():
    return build_q_from_b(DriftModel.zero(), grid=GridSpec(0.1, 1, 4.0))


def ledger_site_at(ledger, t):
    k = min(int(np.searchsorted(ledger.interval_t1, t, side="right")), ledger.interval_site.size - 1)
    return int(ledger.interval_site[k])


def test_empirical_measure_examples():
    g = GridSpec(0.5, 1, 1.0)
    cfg = ParticleConfiguration(g, [0, 0, 3, 1, 0])
    w = empirical_measure(cfg)
    assert w[2] == 0.75 and w[3] == 0.25
    assert empirical_measure(ParticleConfiguration.point_mass(g, 7))[2] == 1.0
    counts = np.random.default_rng(0).integers(0, 50, g.n_sites)
    assert abs(empirical_measure(ParticleConfiguration(g, counts)).sum() - 1) < 1e-12
    with pytest.raises(EmptyPopulation):
        empirical_measure(ParticleConfiguration(g, np.zeros(5)))


def test_argmax_star_breaks_ties_lexicographically():
    g = GridSpec(0.5, 2, 1.0)
    counts = np.zeros(g.n_sites, dtype=int)
    counts[g.index((1, -2))] = 4
    counts[g.index((-1, 2))] = 4
    assert ParticleConfiguration(g, counts).argmax_star() == g.index((-1, 2))


def test_from_density_methods(rt):
    m = example1().sample(rt.grid)
    q = ParticleConfiguration.from_density(rt.grid, m, 1000, method="quantize")
    assert q.n == 1000 and np.all(np.abs(q.counts - 1000 * m) < 1)
    a = ParticleConfiguration.from_density(rt.grid, m, 1000, seed=3)
    b = ParticleConfiguration.from_density(rt.grid, m, 1000, seed=3)
    assert a.n == 1000 and np.array_equal(a.counts, b.counts)


@pytest.mark.parametrize("removal", ["pre_birth", "post_birth"])
def test_tracker_matches_brute_force(rt, removal):
    cfg = ParticleConfiguration.from_density(rt.grid, example1().sample(rt.grid), 1000, seed=1)
    times = np.sort(np.random.default_rng(7).uniform(0, 0.5, 100))
    run = simulate_trimmed(cfg, rt, 0.5, 11, snapshot_times=times, removal=removal)
    assert run.n_events >= 100_000
    for t, snap in zip(times, run.snapshots):
        assert snap.n == 1000
        assert ledger_site_at(run.ledger, t) == snap.argmax_star()


def test_ledger_partitions_horizon(rt):
    cfg = ParticleConfiguration.point_mass(rt.grid, 50)
    run = simulate_trimmed(cfg, rt, 0.7, 5)
    assert run.ledger.is_partition()
    assert run.ledger.total_mass() == Fraction(0.7)
    assert abs(run.ledger.time_average().sum() - 1) < 1e-12
    assert run.final.n == 50


def test_single_particle_is_never_trimmed_away(rt):
    cfg = ParticleConfiguration.point_mass(rt.grid, 1)
    times = np.linspace(0.05, 5.0, 20)
    run = simulate_trimmed(cfg, rt, 5.0, 2, snapshot_times=times, record_removals=True)
    assert run.n_branches > 0
    for t, snap in zip(times, run.snapshots):
        assert snap.n == 1 and ledger_site_at(run.ledger, t) == snap.argmax_star()
    # the removal always hits the site of the branch
    for s, t in zip(run.ledger.removal_site, run.ledger.removal_t):
        assert s == ledger_site_at(run.ledger, t - 1e-15)


def test_two_particles_on_one_site_branch(rt):
    g = rt.grid
    cfg = ParticleConfiguration.point_mass(g, 2)
    run = simulate_trimmed(cfg, rt, 1e-4, 0, record_removals=True)
    if run.n_jumps == 0:
        assert np.array_equal(run.final.counts, cfg.counts)
    assert run.ledger.interval_site[0] == g.index((0,))


def test_same_seed_same_trajectory(rt):
    cfg = ParticleConfiguration.point_mass(rt.grid, 200)
    a = simulate_trimmed(cfg, rt, 0.5, SimSeed(99), snapshot_times=[0.25, 0.5])
    b = simulate_trimmed(cfg, rt, 0.5, SimSeed(99), snapshot_times=[0.25, 0.5])
    assert a.n_events == b.n_events
    assert np.array_equal(a.final.counts, b.final.counts)
    assert np.array_equal(a.ledger.interval_t0, b.ledger.interval_t0)
    c = simulate_trimmed(cfg, rt, 0.5, SimSeed(100))
    assert not np.array_equal(a.final.counts, c.final.counts)


@pytest.mark.parametrize("removal", ["pre_birth", "post_birth"])
def test_backends_agree_bit_for_bit(rt, removal):
    cfg = ParticleConfiguration.point_mass(rt.grid, 40)
    runs = [simulate_trimmed(cfg, rt, 0.3, 4, snapshot_times=[0.1, 0.3], removal=removal, backend=be)
            for be in BACKENDS]
    assert runs[0].n_events == runs[1].n_events
    assert np.array_equal(runs[0].final.counts, runs[1].final.counts)
    assert np.array_equal(runs[0].ledger.occupation, runs[1].ledger.occupation)
    pairs = [simulate_coupled_pair(cfg, rt, 0.3, 4, removal=removal, backend=be) for be in BACKENDS]
    assert np.array_equal(pairs[0].final_untrimmed.counts, pairs[1].final_untrimmed.counts)
    assert pairs[0].n_events == pairs[1].n_events


def test_domination_zero_drift(rt_zero):
    cfg = ParticleConfiguration.point_mass(rt_zero.grid, 100)
    for seed in range(100):
        run = simulate_coupled_pair(cfg, rt_zero, 1.0, seed)
        assert run.domination_ok
        assert np.all(run.final_trimmed.counts <= run.final_untrimmed.counts)
        assert run.final_trimmed.n == 100


def test_domination_trivial_horizon(rt):
    cfg = ParticleConfiguration.point_mass(rt.grid, 10)
    run = simulate_coupled_pair(cfg, rt, 0.0, 1)
    assert run.domination_ok and run.n_events == 0


def test_untrimmed_mean_grows_like_exponential(rt_zero):
    cfg = ParticleConfiguration.point_mass(rt_zero.grid, 100)
    totals = np.array([simulate_coupled_pair(cfg, rt_zero, 1.0, s).final_untrimmed.n for s in range(200)])
    se = totals.std(ddof=1) / np.sqrt(totals.size)
    assert abs(totals.mean() - 100 * np.e) <= 3 * se


def test_snapshot_csv_uses_physical_coordinates(rt, tmp_path):
    cfg = ParticleConfiguration.point_mass(rt.grid, 3)
    run = simulate_trimmed(cfg, rt, 0.0, 1, snapshot_times=[0.0])
    run.snapshots_to_csv(tmp_path / "s.csv")
    run.ledger.to_csv(tmp_path / "l.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == ["t,x_1,count", "0,0,3"]
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "x_1,t_start,t_end"


def test_bad_inputs(rt):
    with pytest.raises(EmptyPopulation):
        simulate_trimmed(ParticleConfiguration(rt.grid, np.zeros(rt.grid.n_sites)), rt, 1.0, 0)
    cfg = ParticleConfiguration.point_mass(rt.grid, 3)
    with pytest.raises(ValueError):
        simulate_trimmed(cfg, rt, 1.0, 0, snapshot_times=[2.0])
    with pytest.raises(ValueError):
        simulate_trimmed(cfg, rt, 1.0, 0, removal="later")
    with pytest.raises(ValueError):
        SimSeed(-1)


def test_backend_selection():
    from trimbrw import BACKEND, _backend

    assert BACKEND in ("cython", "python")
    assert _backend.get("python").__name__.endswith("_kernels_py")
    with pytest.raises(ValueError):
        _backend.get("fortran")
