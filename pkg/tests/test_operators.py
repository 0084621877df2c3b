import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpfilter.errors import ContractViolation
from jumpfilter.jumps import gaussian_marks, symmetric_uniform_marks
from jumpfilter.measure import gaussian_bump
from jumpfilter.models import MODEL_REGISTRY, get_model
from jumpfilter.operators import (
    ShiftMap,
    adjoint_apply,
    analytic_half_shift,
    apply_I,
    apply_J,
    apply_T,
    check_assumptions,
    duality_check,
    duality_suite,
    frak_c,
    invert_shift,
    random_bump,
    random_shift,
    zeta_star,
)

# roots of x + a sin x = y from mpmath.findroot
ROOT_CONTRACTION = 0.684036656677829439432968694326  # a = 0.5, y = 1
ROOT_NEWTON = 0.861636301546712558105322367367  # a = 1.5, y = 2


def sine_shift(a):
    return ShiftMap(1, lambda x: a * np.sin(x), lambda x: (a * np.cos(x))[:, :, None], abs(a), max(0.0, 1 - abs(a)))


def test_invert_shift_frozen_roots():
    x, info = invert_shift(sine_shift(0.5), [1.0], return_info=True)
    assert x == pytest.approx(ROOT_CONTRACTION, abs=1e-12)
    assert info.residual <= 1e-12
    assert invert_shift(sine_shift(1.5), [2.0]) == pytest.approx(ROOT_NEWTON, abs=1e-12)


def test_generators_on_linear_shift():
    phi = gaussian_bump([0.2], 0.8)
    shift = ShiftMap.linear([[0.3]], [0.1])
    x = np.linspace(-2, 2, 9)[:, None]
    z = 0.3 * x + 0.1
    assert np.allclose(apply_T(shift, phi, x), phi.value(x + z))
    assert np.allclose(apply_I(shift, phi, x), phi.value(x + z) - phi.value(x))
    assert np.allclose(apply_J(shift, phi, x), phi.value(x + z) - phi.value(x) - z[:, 0] * phi.gradient(x)[:, 0])


def test_T_adjoint_closed_form_for_linear_map():
    A = np.array([[0.3, 0.1], [-0.2, 0.25]])
    shift = ShiftMap.linear(A)
    phi = gaussian_bump([0.3, -0.4], 0.9)
    x = np.random.default_rng(1).normal(size=(15, 2))
    M = np.eye(2) + A
    expected = phi.value(x @ np.linalg.inv(M).T) / abs(np.linalg.det(M))
    assert np.allclose(adjoint_apply(shift, "T*", phi, x), expected, rtol=1e-12, atol=0)


def test_zeta_star_and_constants_for_half_shift():
    x = np.linspace(-3, 3, 13)[:, None]
    shift = ShiftMap.linear([[0.5]])
    assert np.allclose(zeta_star(shift, x)[:, 0], -x[:, 0] / 3, atol=1e-12)
    c, cbar = frak_c(shift, x)
    assert np.allclose(c, -1 / 3, atol=1e-14)
    assert np.allclose(cbar, 0.0, atol=1e-14)
    assert all(v <= 1e-10 for v in analytic_half_shift().values())


def test_adjoint_rejects_unknown_operator():
    with pytest.raises(ContractViolation):
        adjoint_apply(ShiftMap.zero(1), "K*", gaussian_bump([0.0]), [[0.0]])


@pytest.mark.parametrize("which", ["T*", "I*", "J*"])
@pytest.mark.parametrize("d", [1, 2])
def test_duality_on_random_triples(which, d):
    rng = np.random.default_rng(100 + d)
    shift = random_shift(d, rng)
    phi, bphi = random_bump(d, rng)
    psi, bpsi = random_bump(d, rng)
    rec = duality_check(shift, which, phi, psi, bphi, bpsi)
    assert rec.rel_error <= 1e-7


def test_duality_suite_small():
    recs = duality_suite(4, seed=5)
    assert len(recs) == 12
    assert max(r.rel_error for r in recs) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_random_shift_inverse_round_trip(seed, d):
    rng = np.random.default_rng(seed)
    shift = random_shift(d, rng)
    y = rng.normal(scale=3, size=(10, d))
    x = invert_shift(shift, y)
    assert np.allclose(x + shift(x), y, atol=1e-10)


def test_mark_laws_moments():
    for act in (gaussian_marks(2.0, 0.7), symmetric_uniform_marks(1.5, 0.2, 1.0, dim=2)):
        assert act.integral(lambda z: 1.0) == pytest.approx(act.rate, rel=1e-12)
        rep = act.check_moments(n=50_000, seed=3)
        assert all(ok for *_, ok in rep.values())


def test_nonpositive_rate_rejected():
    with pytest.raises(ContractViolation):
        gaussian_marks(0.0)


@pytest.mark.parametrize("name", sorted(MODEL_REGISTRY))
def test_registry_models_satisfy_sampled_assumptions(name):
    rep = check_assumptions(get_model(name).coeffs, n_pairs=2000)
    failed = {k: v for k, v in rep.items() if not v[2]}
    assert not failed


def test_unknown_model_rejected():
    with pytest.raises(ContractViolation):
        get_model("no-such-model")
    with pytest.raises(ContractViolation):
        get_model("clipped-linear-1d", bogus=1.0)
