import numpy as np
import pytest

from jumpfilter.errors import ContractViolation
from jumpfilter.operators import ShiftMap, random_shift
from jumpfilter.truncation import (
    bilipschitz_constant,
    bilipschitz_truncate,
    bump_quadrature,
    chi,
    kappa_lipschitz_bound,
    kappa_R_eps,
    mollified_det_check,
    outer_radius,
    sample_pairs,
    truncate_chi,
)

# mpmath convolution of the log profile (R = 1, eps = 0.5) with the normalized bump, d = 1
KAPPA = {2.5: 0.8906485848963774, 5.0: 0.5434464916755839, 14.0: 0.02726116125458624}


def test_chi_values():
    assert chi(0.3) == 1.0 and chi(1.0) == 1.0
    assert chi(2.0) == 0.0 and chi(7.0) == 0.0
    assert chi(1.5) == 0.5  # symmetric midpoint
    r = np.linspace(1, 2, 101)
    assert np.all(np.diff(chi(r)) <= 0)


def test_truncate_chi_exact_regions():
    f = lambda z: np.column_stack([1 + np.sum(z * z, axis=1), z[:, 0]])
    g = truncate_chi(f, 2.0)
    z = np.random.default_rng(0).normal(scale=3, size=(500, 2))
    r = np.linalg.norm(z, axis=1)
    assert np.array_equal(g(z)[r <= 2], f(z)[r <= 2])
    assert np.all(g(z)[r >= 4] == 0.0)


def test_bump_quadrature_weights():
    for d in (1, 2):
        nodes, w = bump_quadrature(d)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(np.linalg.norm(nodes, axis=1) < 1)


@pytest.mark.parametrize("x", sorted(KAPPA))
def test_kappa_against_frozen_convolution(x):
    # the 32-point bump rule resolves the profile kink at |x| = R + 1 to about 1e-4
    assert float(kappa_R_eps([[x]], 1.0, 0.5)[0]) == pytest.approx(KAPPA[x], abs=1e-4)


def test_kappa_support():
    R, e = 1.0, 0.5
    assert np.all(kappa_R_eps(np.array([[0.0], [0.9], [-1.0]]), R, e) == 1.0)
    far = outer_radius(R, e) + 1.0
    assert np.all(kappa_R_eps(np.array([[far], [-far - 3]]), R, e) == 0.0)


@pytest.mark.parametrize("d", [1, 2])
def test_kappa_lipschitz_bound(d):
    x, y = sample_pairs(d, 5000, 100.0, seed=4)
    diff = np.abs(kappa_R_eps(x, 2.0, 0.3, d) - kappa_R_eps(y, 2.0, 0.3, d))
    assert np.all(diff <= kappa_lipschitz_bound(x, y, 2.0, 0.3) + 1e-12)


def test_kappa_rejects_bad_parameters():
    with pytest.raises(ContractViolation):
        kappa_R_eps([[0.0]], -1.0, 0.5)


def test_bilipschitz_constant_of_linear_map():
    x, y = sample_pairs(2, 2000, 10.0, seed=1)
    A = np.diag([2.0, 0.5])
    assert bilipschitz_constant(lambda v: v @ A.T, x, y) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("d", [1, 2])
def test_bilipschitz_truncate(d):
    shift = random_shift(d, np.random.default_rng(d))
    ts = bilipschitz_truncate(shift, 1.0, 2.0, n_pairs=4000, seed=2)
    assert ts.constant <= 2.0
    assert ts.base_constant <= ts.constant or ts.base_constant < 2.0
    x, y = sample_pairs(d, 4000, ts.R_bar + 5, seed=77)
    for th in (0.0, 0.5, 1.0):
        assert bilipschitz_constant(lambda v: v + th * ts.shift(v), x, y) <= 2.0
    inside = x[np.linalg.norm(x, axis=1) <= 1.0]
    assert np.allclose(ts.shift(inside), shift(inside), rtol=0, atol=0)
    outside = x[np.linalg.norm(x, axis=1) >= ts.R_bar]
    assert np.all(ts.shift(outside) == 0.0)


def test_bilipschitz_truncate_rejects_too_small_M():
    with pytest.raises(ContractViolation):
        bilipschitz_truncate(ShiftMap.linear([[0.9]]), 1.0, 1.5, n_pairs=500)


def test_mollified_det_positive_for_contraction():
    shift = random_shift(1, np.random.default_rng(0))
    grid = np.linspace(-4, 4, 41)[:, None]
    res = mollified_det_check(shift, [0.5, 0.1], grid)
    assert res["raw_min_det"] > 0
    assert not any(res["violated"])
    assert min(res["min_det"]) >= res["lambda"] / 2
