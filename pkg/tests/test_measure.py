import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpfilter.errors import BudgetExceeded, ContractViolation, NumericalFailure
from jumpfilter.measure import (
    ParticleMeasure,
    constant_function,
    gaussian_bump,
    gaussian_density,
    kernel_convolve,
    lp_norm_exact,
    lp_norm_quadrature,
    mollify,
    rho_eps,
    rho_identities_check,
    smooth_bump,
)

# 30-digit values from mpmath quadrature of the defining integrals
RHO_1D = 0.0570491786305945489367190958219  # y = (0, 1, -0.5), eps = 0.7
RHO_2D = 0.0162124410019944793761595076136  # y = ((0,0), (1,.5), (-.3,.2)), eps = 0.3
# mu = delta_0 - 0.5 delta_1 in d = 1, eps = 0.5
NORM_P2 = 0.256707125982647497627102381982
NORM_P3 = 0.0956069519365719955898028046064
NORM_P4 = 0.0389167789820594409685866660596


@pytest.fixture
def two_atoms():
    return ParticleMeasure(np.array([[0.0], [1.0]]), np.array([1.0, -0.5]))


def test_rho_eps_matches_frozen_values():
    assert rho_eps([[0.0], [1.0], [-0.5]], 0.7) == pytest.approx(RHO_1D, abs=1e-15)
    assert rho_eps([[0.0, 0.0], [1.0, 0.5], [-0.3, 0.2]], 0.3) == pytest.approx(RHO_2D, abs=1e-15)


def test_rho_eps_two_points_is_kernel_at_double_variance():
    y = np.array([[0.3, -1.0], [1.1, 0.4]])
    assert rho_eps(y, 0.4) == pytest.approx(float(gaussian_density(y[0] - y[1], 0.8)), rel=1e-13)


def test_lp_norms_match_frozen_values(two_atoms):
    assert lp_norm_exact(two_atoms, 0.5, 2) == pytest.approx(NORM_P2, rel=1e-13)
    assert lp_norm_exact(two_atoms, 0.5, 4) == pytest.approx(NORM_P4, rel=1e-13)
    assert lp_norm_quadrature(two_atoms, 0.5, 3, tol=1e-13) == pytest.approx(NORM_P3, rel=1e-10)


def test_odd_p_rejected_by_exact_sum(two_atoms):
    with pytest.raises(ContractViolation):
        lp_norm_exact(two_atoms, 0.5, 3)


def test_budget_exceeded():
    mu = ParticleMeasure(np.zeros((50, 1)), np.ones(50))
    with pytest.raises(BudgetExceeded):
        lp_norm_exact(mu, 0.5, 4, budget=1000)


def test_mollify_is_weighted_kernel_sum(two_atoms):
    x = np.linspace(-2, 3, 7)[:, None]
    ref = gaussian_density(x, 0.5) - 0.5 * gaussian_density(x - 1.0, 0.5)
    assert np.allclose(mollify(two_atoms, 0.5, x), ref, rtol=1e-14, atol=0)


def test_kernel_semigroup():
    val = kernel_convolve(0.3, 0.9, [0.5, -1.2])
    assert val == pytest.approx(float(gaussian_density([0.5, -1.2], 1.2)), abs=1e-12)


def test_kernel_convolve_raises_on_impossible_tolerance(monkeypatch):
    import jumpfilter.measure as m

    monkeypatch.setattr(m, "gaussian_density", lambda u, e: np.array(1.0))
    with pytest.raises(NumericalFailure):
        m.kernel_convolve(0.3, 0.9, [0.5])


def test_rho_identities():
    rng = np.random.default_rng(3)
    rep = rho_identities_check(rng.normal(size=(4, 2)), 0.6)
    assert rep.fd_max_deviation < 1e-8
    assert rep.sum_partials_ok


def test_csv_round_trip(tmp_path, two_atoms):
    f = tmp_path / "mu.csv"
    two_atoms.to_csv(f)
    back = ParticleMeasure.from_csv(f)
    assert np.array_equal(back.locations, two_atoms.locations)
    assert np.array_equal(back.weights, two_atoms.weights)


def test_test_functions_derivatives():
    pts = np.random.default_rng(0).normal(size=(20, 2))
    for fn in (gaussian_bump([0.1, -0.2], 0.7), smooth_bump([0.0, 0.0], 2.0), constant_function(2.0, 2)):
        fn.check_derivatives(pts)


def test_bad_eps_rejected(two_atoms):
    with pytest.raises(ContractViolation):
        mollify(two_atoms, 0.0, np.zeros((1, 1)))


atoms = st.integers(1, 4).flatmap(
    lambda m: st.tuples(
        st.lists(st.floats(-2, 2), min_size=m, max_size=m),
        st.lists(st.floats(-1, 1).filter(lambda w: abs(w) > 1e-3), min_size=m, max_size=m),
    )
)


@settings(max_examples=40, deadline=None)
@given(atoms, st.floats(0.1, 2.0), st.floats(-3, 3), st.floats(-5, 5))
def test_norm_homogeneous_and_translation_invariant(a, eps, c, shift):
    x, w = a
    mu = ParticleMeasure(np.array(x)[:, None], np.array(w))
    base = lp_norm_exact(mu, eps, 4)
    scaled = lp_norm_exact(mu.scaled(c), eps, 4)
    moved = lp_norm_exact(ParticleMeasure(mu.locations + shift, mu.weights), eps, 4)
    assert scaled == pytest.approx(c**4 * base, rel=1e-10, abs=1e-300)
    assert moved == pytest.approx(base, rel=1e-10, abs=1e-14)
    assert base >= 0


@settings(max_examples=30, deadline=None)
@given(atoms, st.floats(0.2, 2.0))
def test_p2_norm_is_double_variance_kernel_form(a, eps):
    x, w = a
    x, w = np.array(x), np.array(w)
    ref = sum(w[i] * w[j] * math.exp(-((x[i] - x[j]) ** 2) / (4 * eps)) / math.sqrt(4 * math.pi * eps)
              for i in range(len(x)) for j in range(len(x)))
    mu = ParticleMeasure(x[:, None], w)
    assert lp_norm_exact(mu, eps, 2) == pytest.approx(ref, rel=1e-10, abs=1e-14)
