import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimbrw.drift import DriftModel, build_q_from_b
from trimbrw.grid import GridSpec
from trimbrw.meanfield import (DensityPath, InfeasibleMass, RemovalRatePath, SchemeConfig, UnstableStep,
                               modulus_of_continuity, ode_residuals, read_path_binary, solve,
                               step_active_set, step_trim_splitting, water_level_cap)
from trimbrw.operators import DiscreteGenerator, GridFunction, Semigroup
from trimbrw.stationary import example1

W1 = float(np.arcsinh(1.0))


@pytest.fixture(scope="module")
def gen05():
    return DiscreteGenerator(build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.05, 1, 8.0)))


def test_cap_examples():
    out, c = water_level_cap([0.5, 0.3, 0.2], 0.1)
    assert c == pytest.approx(0.4) and np.allclose(out, [0.4, 0.3, 0.2])
    out, c = water_level_cap([0.5, 0.3, 0.2], 0.3)
    assert c == pytest.approx(0.25) and np.allclose(out, [0.25, 0.25, 0.2])
    f = np.array([0.5, 0.3, 0.2])
    out, c = water_level_cap(f, 0.0)
    assert c == 0.5 and np.array_equal(out, f)


def test_cap_infeasible_and_negative():
    with pytest.raises(InfeasibleMass):
        water_level_cap([0.5, 0.3, 0.2], 0.5)
    with pytest.raises(InfeasibleMass):
        water_level_cap([0.5, -0.1], 0.1)


def test_cap_keeps_grid_function():
    g = GridSpec(0.5, 1, 1.0)
    out, c = water_level_cap(GridFunction(g, [0.1, 0.4, 0.3, 0.1, 0.1]), 0.1)
    assert isinstance(out, GridFunction) and c == pytest.approx(0.3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=40), st.floats(0.0, 1.0))
def test_cap_removes_exactly_m(vals, frac):
    f = np.array(vals)
    m = frac * float(f.sum() - f.size * f.min())
    out, c = water_level_cap(f, m)
    assert np.all(out <= f) and np.all(out <= c + 1e-12)
    assert abs((f - out).sum() - m) <= 1e-9 * max(1.0, f.sum())
    assert abs(np.maximum(f - c, 0).sum() - m) <= 1e-9 * max(1.0, f.sum())


def test_splitting_step_restores_unit_mass():
    rt = build_q_from_b(DriftModel.zero(), grid=GridSpec(0.1, 1, 3.0))
    u = np.zeros(rt.grid.n_sites)
    plateau = np.abs(rt.grid.axis) <= 0.45
    u[plateau] = 1.0 / plateau.sum()
    nxt, lam = step_trim_splitting(DiscreteGenerator(rt), u, 1e-4)
    assert abs(nxt.sum() - 1.0) < 1e-14
    assert lam.min() >= 0 and abs(lam.sum() - 1.0) < 1e-3
    assert not np.allclose(nxt, u)


def test_active_set_singleton(gen05):
    x = gen05.grid.axis
    u = np.exp(-np.abs(x) / 0.2)
    u /= u.sum()
    top = int(np.argmax(u))
    nxt, lam, act, _ = step_active_set(gen05, u, [top], 1e-4, tau=0.0)
    assert act.tolist() == [top]
    assert lam[top] == pytest.approx(1.0) and lam.sum() == pytest.approx(1.0)


def test_active_set_on_stationary_plateau():
    gen = DiscreteGenerator(build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.02, 1, 8.0)))
    u = example1().sample(gen.grid)
    A = np.nonzero(np.abs(gen.grid.axis) <= W1)[0]
    nxt, lam, act, retries = step_active_set(gen, u, A, 1e-4)
    assert lam[A].min() >= 0 and abs(lam.sum() - 1) < 1e-12
    g = gen.adjoint_matrix @ u + u
    hdot = (g[A].sum() - 1) / A.size
    # the level moves by about 1% per unit time, a grid-size effect
    assert abs(hdot) < 0.05 * u.max()


def test_unstable_step_rejected(gen05):
    with pytest.raises(UnstableStep):
        solve(example1().sample(gen05.grid), 0.1, SchemeConfig(dt=0.01), gen05)


@pytest.fixture(scope="module")
def short_runs(gen05):
    u0 = example1().sample(gen05.grid)
    return {s: solve(u0, 0.2, SchemeConfig(dt=1e-4, scheme=s), gen05) for s in ("trim_splitting", "active_set")}


@pytest.mark.parametrize("scheme", ["trim_splitting", "active_set"])
def test_solver_invariants(short_runs, scheme):
    sol = short_runs[scheme]
    d = sol.diagnostics
    assert d.max_mass_error <= 1e-9
    assert d.admissible(band=sol.config.tau_flat + sol.config.dt)
    assert d.growth_ok()
    assert d.total_clip == 0.0
    assert np.all(sol.path.u >= 0)
    # support condition bounded by the band width
    assert d.support_integral <= (sol.config.tau_flat + sol.config.dt) * sol.path.grid.cell_volume * 0.2


def test_schemes_agree(short_runs):
    a, b = short_runs["trim_splitting"].path.u, short_runs["active_set"].path.u
    assert np.max(np.abs(a - b)) / 0.05 <= 1e-2


def test_lambda_free_run_matches_kernel():
    gen = DiscreteGenerator(build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.1, 1, 8.0)))
    u0 = np.zeros(gen.grid.n_sites)
    u0[gen.grid.index((0,))] = 1.0
    sol = solve(u0, 0.5, SchemeConfig(dt=1e-5, growth=False, removal=False, stride=50_000), gen)
    ref = Semigroup(gen, 0.5).kernel().T @ u0
    assert np.max(np.abs(sol.path.final.values - ref)) <= 1e-6


def test_point_mass_stays_probability(gen05):
    u0 = np.zeros(gen05.grid.n_sites)
    u0[gen05.grid.index((0,))] = 1.0
    for scheme in ("trim_splitting", "active_set"):
        sol = solve(u0, 0.05, SchemeConfig(dt=1e-4, scheme=scheme), gen05)
        assert sol.path.u.min() >= 0
        assert sol.diagnostics.max_mass_error <= 1e-9


def test_residuals_of_injected_stationary_pair():
    errs = []
    for eps in (0.1, 0.05):
        gen = DiscreteGenerator(build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(eps, 1, 8.0)))
        sol = example1()
        u = sol.sample(gen.grid)
        beta = sol.beta_density(gen.grid.axis) * eps
        beta /= beta.sum()
        t = np.linspace(0, 1, 11)
        path = DensityPath(gen.grid, t, np.tile(u, (11, 1)), 1)
        rem = RemovalRatePath(gen.grid, t[:-1], np.tile(beta, (10, 1)), 0.1, 1)
        rep = ode_residuals(gen, path, rem)
        assert rep.lam_sum_deviation < 1e-12 and rep.lam_min >= 0
        assert rep.max_integrated <= 2 * eps
        errs.append(rep.max_integrated)
    assert errs[1] < errs[0]


def test_residuals_of_free_run_are_integrator_error(gen05):
    u0 = example1().sample(gen05.grid)
    rep = {}
    for dt in (2e-4, 1e-4):
        sol = solve(u0, 0.1, SchemeConfig(dt=dt, growth=False, removal=False), gen05)
        rep[dt] = ode_residuals(gen05, sol.path, sol.removal, growth=False).max_integrated
    assert rep[1e-4] < rep[2e-4] < 1e-2


def test_path_outputs_round_trip(short_runs, tmp_path):
    sol = short_runs["trim_splitting"]
    sol.to_binary(tmp_path / "p.bin")
    dens, rem = read_path_binary(tmp_path / "p.bin")
    assert np.array_equal(dens.u, sol.path.u) and np.array_equal(dens.times, sol.path.times)
    assert np.array_equal(rem.rates, sol.removal.rates)
    sol.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,x_1,u,Lambda"
    assert lines[-1].endswith(",")
    assert len(lines) == 1 + len(sol.path.times) * sol.path.grid.n_sites


def test_modulus_of_continuity_linear_profile():
    g = GridSpec(0.1, 1, 1.0)
    u = GridFunction(g, 0.1 * (g.axis + 1.0) / 21.0)
    slope = 1.0 / 21.0
    assert modulus_of_continuity(u, 0.3) == pytest.approx(3 * 0.1 * slope)
    assert modulus_of_continuity(u, 0.05) == 0.0
    with pytest.raises(TypeError):
        modulus_of_continuity(u.values, 0.3)
