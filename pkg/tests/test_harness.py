import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimbrw.drift import DriftModel
from trimbrw.grid import GridSpec
from trimbrw.harness import (ExperimentConfig, Gate, MetricSpec, config_hash, experiment_converge_eps,
                             experiment_converge_N, experiment_domination, git_style_hash, metric,
                             parallel_map, site_sup, sup_density, wasserstein1_1d, write_manifest,
                             write_rows_csv)

G = GridSpec(0.1, 1, 1.0)


def delta(grid, k):
    a = np.zeros(grid.n_sites)
    a[grid.index((k,))] = 1.0
    return a


def test_w1_examples():
    assert wasserstein1_1d(delta(G, 0), delta(G, 0), G) == 0.0
    assert wasserstein1_1d(delta(G, 0), delta(G, 1), G) == pytest.approx(0.1, abs=1e-15)
    half = 0.5 * (delta(G, 0) + delta(G, 1))
    assert wasserstein1_1d(half, delta(G, 0), G) == pytest.approx(0.05, abs=1e-15)


def test_w1_matches_scipy():
    from scipy.stats import wasserstein_distance

    rng = np.random.default_rng(5)
    a, b = rng.random(G.n_sites), rng.random(G.n_sites)
    a, b = a / a.sum(), b / b.sum()
    ref = wasserstein_distance(G.axis, G.axis, a, b)
    assert wasserstein1_1d(a, b, G) == pytest.approx(ref, rel=1e-12)


def test_w1_needs_one_dimension():
    g2 = GridSpec(0.5, 2, 1.0)
    with pytest.raises(ValueError):
        wasserstein1_1d(np.ones(25) / 25, np.ones(25) / 25, g2)
    # the other metrics are dimension-free
    assert sup_density(np.ones(25) / 25, np.ones(25) / 25, g2) == 0.0


measures = st.lists(st.floats(0.0, 1.0), min_size=G.n_sites, max_size=G.n_sites).filter(lambda v: sum(v) > 1e-3)


def normed(v):
    a = np.array(v)
    return a / a.sum()


@settings(max_examples=100, deadline=None)
@given(measures, measures, measures)
def test_metric_axioms(x, y, z):
    a, b, c = normed(x), normed(y), normed(z)
    for spec in (MetricSpec("wasserstein1_1d"), MetricSpec("site_sup"), MetricSpec("sup_density", 0.2)):
        ab, ba = spec(a, b, G), spec(b, a, G)
        assert ab >= 0 and abs(ab - ba) <= 1e-12
        assert spec(a, a, G) == 0.0
        assert ab <= spec(a, c, G) + spec(c, b, G) + 1e-12


def test_metric_dispatch_and_validation():
    a, b = delta(G, 0), delta(G, 2)
    assert metric(a, b, G) == wasserstein1_1d(a, b, G)
    assert metric(a, b, G, MetricSpec("site_sup")) == site_sup(a, b, G) == 1.0
    with pytest.raises(ValueError):
        MetricSpec("levy")
    with pytest.raises(ValueError):
        site_sup(a, b[:-1], G)


def test_parallel_map_preserves_order():
    assert parallel_map(abs, [-3, 2, -1], jobs=2) == [3, 2, 1]


def test_csv_and_manifest(tmp_path):
    write_rows_csv(tmp_path / "r.csv", [{"a": 0.1, "b": 2, "c": True}])
    assert (tmp_path / "r.csv").read_text() == "a,b,c\n0.10000000000000001,2,true\n"
    man = write_manifest(tmp_path / "m.json", {"epsilon": 0.1}, [1, 2], [Gate("g", 0.5, 1.0, True)],
                         [tmp_path / "r.csv"])
    assert json.loads((tmp_path / "m.json").read_text()) == man
    assert set(man) == {"config", "seeds", "versions", "hashes", "gates"}
    assert man["gates"] == [{"name": "g", "value": 0.5, "threshold": 1.0, "pass": True}]
    assert "r.csv" in man["hashes"]["artifacts"]


def test_hashes():
    assert git_style_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"
    assert config_hash({"epsilon": 0.1}) == config_hash({"epsilon": 0.1})
    assert config_hash({"epsilon": 0.1}) != config_hash({"epsilon": 0.05})


def test_domination_single_particle_and_stacked_start(tmp_path):
    cfg = ExperimentConfig(epsilons=(0.1,), ns=(1,), seeds=range(10), initial="point", output_dir=str(tmp_path))
    assert experiment_domination(cfg).pass_count == 10
    stacked = ExperimentConfig(epsilons=(0.1,), ns=(200,), seeds=range(10), initial="point")
    assert experiment_domination(stacked).pass_count == 10
    assert (tmp_path / "dominate" / "runs.csv").exists()


def test_converge_n_disjoint_seed_sets_agree():
    means = []
    for seeds in (range(1, 11), range(11, 21)):
        res = experiment_converge_N(ExperimentConfig(epsilons=(0.1,), ns=(1000,), seeds=seeds))
        row = res.summary[0]
        means.append((row["mean_distance"], row["stderr_distance"]))
    (m1, s1), (m2, s2) = means
    assert abs(m1 - m2) <= 3 * np.hypot(s1, s2)


def test_converge_eps_small(tmp_path):
    cfg = ExperimentConfig(epsilons=(0.2, 0.1), T=0.2, output_dir=str(tmp_path))
    res = experiment_converge_eps(cfg, tol=0.1)
    assert [r["epsilon"] for r in res.rows] == [0.2, 0.1]
    assert res.omega[-1]["epsilon"] == 0.0
    assert (tmp_path / "converge_eps" / "profiles.svg").exists()
    assert res.gates[0].passed


def test_converge_eps_richardson_reference():
    cfg = ExperimentConfig(drift=DriftModel.zero(), epsilons=(0.2, 0.1), T=0.1, initial="gaussian",
                           half_width=4.0)
    res = experiment_converge_eps(cfg, tol=0.5, gate_omega=False)
    assert res.rows[-1]["sup_error"] < res.rows[0]["sup_error"]
