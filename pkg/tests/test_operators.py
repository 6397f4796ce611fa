import numpy as np
import pytest

from trimbrw.drift import DriftModel, build_q_from_b, compute_h
from trimbrw.grid import GridSpec
from trimbrw.meanfield import SchemeConfig, solve
from trimbrw.operators import (DiscreteGenerator, GridFunction, GridMismatch, HorizonExceeded, Semigroup,
                               duality_residual, duhamel_residual, verify_identities)
from trimbrw.stationary import example1


def indicator(grid, coords):
    f = np.zeros(grid.n_sites)
    f[grid.index(coords)] = 1.0
    return GridFunction(grid, f)


def test_gridfunction_norms():
    g = GridSpec(0.5, 1, 1.0)
    f = GridFunction(g, [1.0, -2.0, 0.0, 2.0, 0.0])
    assert f.l1 == 5.0 and f.linf == 2.0 and f.l2 == pytest.approx(3.0)
    assert np.allclose(f.density(), f.values / 0.5)


def test_indicator_at_origin_zero_drift(zero_rates_05):
    gen = DiscreteGenerator(zero_rates_05)
    g = zero_rates_05.grid
    f = indicator(g, (0,))
    for out in (gen.apply_L(f), gen.apply_Lstar(f)):
        v = out.values
        assert v[g.index((0,))] == -8.0
        assert v[g.index((1,))] == 4.0 and v[g.index((-1,))] == 4.0
        assert np.count_nonzero(v) == 3


def test_constants_are_annihilated(tanh_rates_01):
    gen = DiscreteGenerator(tanh_rates_01)
    one = np.ones(tanh_rates_01.grid.n_sites)
    assert np.all(gen.apply_L(one) == 0.0)
    assert np.all(gen.apply_barL(one)[tanh_rates_01.grid.interior] == 0.0)


def test_adjoint_conserves_mass_exactly(tanh_rates_01, rng):
    gen = DiscreteGenerator(tanh_rates_01)
    assert np.all(gen.matrix @ np.ones(tanh_rates_01.grid.n_sites) == 0.0)
    f = rng.random(tanh_rates_01.grid.n_sites)
    assert abs(np.sum(gen.apply_Lstar(f))) < 1e-11


def test_adjoint_formula_interior(tanh_rates_01, rng):
    gen = DiscreteGenerator(tanh_rates_01)
    f = rng.standard_normal(tanh_rates_01.grid.n_sites)
    inner = tanh_rates_01.grid.interior
    assert np.max(np.abs(gen.apply_Lstar(f) - gen.apply_Lstar_formula(f))[inner]) <= 1e-12 * 200
    h = compute_h(tanh_rates_01, max_pairs=0).h
    gap = np.abs(gen.apply_Lstar(f) - (gen.apply_barL(f) - h * f))[inner]
    assert np.max(gap) <= 1e-12 * tanh_rates_01.max_total_rate * np.max(np.abs(f))


def test_barL_equals_L_for_zero_drift(zero_rates_05, rng):
    gen = DiscreteGenerator(zero_rates_05)
    f = rng.standard_normal(zero_rates_05.grid.n_sites)
    inner = zero_rates_05.grid.interior
    assert np.allclose(gen.apply_barL(f)[inner], gen.apply_L(f)[inner], atol=1e-13)


def test_duality(rng):
    rt = build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.05, 1, 8.0))
    gen = DiscreteGenerator(rt)
    n = rt.grid.n_sites
    worst = 0.0
    for _ in range(100):
        f, g = rng.standard_normal(n), rng.standard_normal(n)
        worst = max(worst, duality_residual(gen, f, g) / (np.linalg.norm(f) * np.linalg.norm(g)))
    assert worst <= 1e-10
    e = indicator(rt.grid, (3,)).values
    assert duality_residual(gen, e, e) == 0.0


def test_grid_mismatch(tanh_rates_01):
    gen = DiscreteGenerator(tanh_rates_01)
    with pytest.raises(GridMismatch):
        gen.apply_L(GridFunction(GridSpec(0.05, 1, 8.0), np.zeros(321)))


def test_generator_consistency_first_order():
    b = DriftModel.tanh_well(2.0)
    errs = []
    for eps in (0.2, 0.1, 0.05):
        rt = build_q_from_b(b, grid=GridSpec(eps, 1, 6.0))
        x = rt.grid.axis
        phi = np.exp(-x * x)
        target = (4 * x * x - 2) * phi + b(x[:, None])[:, 0] * (-2 * x * phi)
        window = np.abs(x) <= 3
        errs.append(np.max(np.abs(DiscreteGenerator(rt).apply_L(phi) - target)[window]))
    assert errs[0] > errs[1] > errs[2]
    slope = np.polyfit(np.log([0.2, 0.1, 0.05]), np.log(errs), 1)[0]
    assert 0.8 <= slope <= 1.2


def test_kernel_row_sums(tanh_rates_01):
    sg = Semigroup(DiscreteGenerator(tanh_rates_01), 0.5)
    K = sg.kernel()
    assert np.max(np.abs(K.sum(axis=1) - 1.0)) < 1e-9
    assert np.max(np.abs(sg.growth_kernel().sum(axis=1) - np.exp(0.5))) < 1e-9 * np.exp(0.5)


def test_semigroup_actions_agree(tanh_rates_01):
    sg = Semigroup(DiscreteGenerator(tanh_rates_01), 0.2)
    u = indicator(tanh_rates_01.grid, (0,)).values
    dense = sg.act(u, "dense")
    assert np.max(np.abs(sg.act(u, "krylov") - dense)) < 1e-12
    assert np.max(np.abs(sg.act(u, "euler", courant=0.05) - dense)) < 1e-2


def test_identity_suite_passes(tanh_rates_01):
    rep = verify_identities(DiscreteGenerator(tanh_rates_01))
    assert all(rep.gates().values())
    assert rep.mass_conservation == 0.0


def test_identity_suite_two_dimensions():
    rt = build_q_from_b(DriftModel.tanh_well(2.0, dim=2), grid=GridSpec(0.25, 2, 2.0))
    rep = verify_identities(DiscreteGenerator(rt), pairs=20)
    assert all(rep.gates().values())


@pytest.fixture(scope="module")
def free_runs():
    """Point mass pushed forward with growth on and removal switched off."""
    rt = build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.1, 1, 3.0))
    gen = DiscreteGenerator(rt)
    u0 = indicator(rt.grid, (0,)).values
    out = {}
    for dt in (2e-4, 1e-4):
        out[dt] = solve(u0, 0.2, SchemeConfig(dt=dt, growth=True, removal=False), gen)
    return gen, out


def test_duhamel_zero_removal_is_first_order(free_runs):
    gen, runs = free_runs
    res = {dt: duhamel_residual(gen, s.path, s.removal, 0.0, 0.2) for dt, s in runs.items()}
    assert np.all(runs[1e-4].removal.rates == 0.0)
    assert 0 < res[1e-4] < 1e-2
    assert 1.6 < res[2e-4] / res[1e-4] < 2.4


def test_duhamel_same_time_is_zero(free_runs):
    gen, runs = free_runs
    s = runs[1e-4]
    assert duhamel_residual(gen, s.path, s.removal, 0.1, 0.1) == 0.0
    with pytest.raises(HorizonExceeded):
        duhamel_residual(gen, s.path, s.removal, 0.0, 0.5)


def test_duhamel_stationary_profile():
    rt = build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.1, 1, 6.0))
    gen = DiscreteGenerator(rt)
    u0 = example1().sample(rt.grid)
    res = {}
    for dt in (2e-4, 1e-4):
        s = solve(u0, 0.2, SchemeConfig(dt=dt), gen)
        res[dt] = duhamel_residual(gen, s.path, s.removal, 0.0, 0.2)
    assert res[1e-4] <= 1e-3
    assert 0.7 * 2 <= res[2e-4] / res[1e-4] <= 1.3 * 2
