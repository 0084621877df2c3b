import math

import numpy as np
import pytest

from jumpfilter.acceptance import filter_vs_grid, kalman_errors, observe
from jumpfilter.errors import ContractViolation
from jumpfilter.filtering import (
    ObservationRecord,
    density_estimate,
    init_filter,
    lp_evolution_check,
    mollified_lp_norm,
    normalized_estimate,
    run_filter,
    unnormalized_estimate,
    zakai_residual,
)
from jumpfilter.gridsolver import l1_distance, reference_grid_solver
from jumpfilter.kalman import kalman_bucy, riccati_continuous
from jumpfilter.measure import constant_function, lp_norm_exact, smooth_bump
from jumpfilter.models import get_model
from jumpfilter.simulation import sample_bundle, simulate_system


def test_constant_observation_drift_keeps_unit_mass():
    m = get_model("trivial-constants")
    _, obs = observe(m, 0.2, 1e-3, 0)
    run = run_filter(m, obs, 200, 1)
    assert np.allclose(run.mass, 1.0, rtol=1e-12)


def test_normalized_one_is_exact():
    m = get_model("jump-shared-1d")
    _, obs = observe(m, 0.3, 1e-3, 2)
    one = constant_function(1.0, 1)
    seen = []
    run_filter(m, obs, 300, 3, callback=lambda st: seen.append(normalized_estimate(st, one)))
    assert seen and all(v == 1.0 for v in seen)


def test_unnormalized_estimate_is_weighted_mean():
    st = init_filter(lambda rng, n: rng.normal(size=(n, 1)), 100, seed=0)
    phi = smooth_bump([0.0], 1.5)
    assert unnormalized_estimate(st, phi) == pytest.approx(float(np.mean(phi.value(st.particles))), rel=1e-14)


def test_filter_is_deterministic():
    m = get_model("jump-shared-1d")
    _, obs = observe(m, 0.2, 1e-3, 4)
    a = run_filter(m, obs, 200, 9)
    b = run_filter(m, obs, 200, 9)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.mass, b.mass)


def test_init_filter_contracts():
    with pytest.raises(ContractViolation):
        init_filter(lambda rng, n: np.zeros((n, 1)), 0)
    with pytest.raises(ContractViolation):
        init_filter(lambda rng, n: np.zeros((n, 1)), 5, eps_out=-1.0)


def test_mollified_lp_norm_matches_exact_sum():
    st = init_filter(lambda rng, n: rng.normal(size=(n, 1)), 40, seed=1)
    grid = mollified_lp_norm(st, 0.2, 2, -8.0, 8.0, 0.02)
    assert grid == pytest.approx(lp_norm_exact(st.measure(), 0.2, 2), rel=1e-10)


def test_density_integrates_to_one():
    st = init_filter(lambda rng, n: rng.normal(size=(n, 1)), 500, seed=1)
    x = np.linspace(-8, 8, 1601)
    dens = density_estimate(st, x[:, None], normalized=True)
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-8)


def test_observation_coarsen():
    m = get_model("b-only-1d")
    _, obs = observe(m, 0.1, 1e-3, 0)
    c = obs.coarsen(4)
    assert np.array_equal(c.times, obs.times[::4])
    assert np.array_equal(c.Y, obs.Y[::4])


def test_grid_solver_conserves_mass_without_observation_drift():
    m = get_model("trivial-constants")
    _, obs = observe(m, 0.5, 1e-3, 0)
    lo, hi, h = m.grid
    x = np.arange(lo, hi + 0.5 * h, h)
    g = reference_grid_solver(m.coeffs, obs, x, m.pi0_density(x[:, None]), record_steps=[-1])
    assert np.trapezoid(g.u[-1], x) == pytest.approx(1.0, abs=1e-6)


def test_filter_matches_grid_oracle():
    d, _, _ = filter_vs_grid(get_model("jump-shared-1d"), 3, N=5000)
    assert d <= 0.1


def test_kalman_recursion_tends_to_riccati():
    m = get_model("clipped-linear-1d")
    prm = m.params
    _, obs = observe(m, 1.0, 1e-4, 0)
    _, P = kalman_bucy(obs, prm["a"], prm["c"], prm["sigma"], prm["m0"], prm["s0"] ** 2)
    Pc = riccati_continuous(prm["a"], prm["c"], prm["sigma"], prm["s0"] ** 2, obs.times)
    assert np.max(np.abs(P - Pc)) <= 1e-3


def test_particle_filter_tracks_kalman():
    em, ev = kalman_errors(get_model("clipped-linear-1d"), 5, 5000)
    assert math.sqrt(np.mean(em)) <= 0.05 and math.sqrt(np.mean(ev)) <= 0.05


def test_zakai_residual_small_run():
    m = get_model("jump-shared-1d")
    rep = zakai_residual(m, [smooth_bump([0.0], 2.0), constant_function(1.0, 1)], 20, 1, T=0.5, N=100)
    assert all(rep.within(3.0))
    assert np.allclose(rep.runs[:, 1], rep.mass_identity, atol=1e-10)


def test_lp_evolution_converges_at_half_order():
    # the per-step Ito remainder is C (dV^2 - dt): strong order 1/2, seen after seed averaging
    m = get_model("b-only-1d")
    base, facs = 6.25e-5, (4, 16, 64)
    res = {f: [] for f in facs}
    for s in range(4):
        b = sample_bundle(1.0, base, (None, None), (1, 1), s)
        obs = ObservationRecord.from_path(simulate_system(m.coeffs, m.initial_state(np.random.default_rng(s)), b))
        for f in facs:
            res[f].append(lp_evolution_check(m, obs.coarsen(f), 16, 2, 0.1, 100 + s).discrepancy)
    mean = np.array([np.mean(res[f]) for f in facs])
    order = np.polyfit(np.log(np.array(facs) * base), np.log(mean), 1)[0]
    assert 0.35 <= order <= 0.75


def test_l1_distance():
    x = np.linspace(0, 1, 11)
    assert l1_distance(x, np.ones(11), np.zeros(11)) == pytest.approx(1.0)
