import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpfilter.errors import ContractViolation
from jumpfilter.measure import ParticleMeasure
from jumpfilter.models import get_model
from jumpfilter.operators import ShiftMap, random_shift
from jumpfilter.verifier import (
    lemma_suite,
    random_measure,
    safe_ratio,
    verify_J_and_76,
    verify_pe1,
    verify_pe3,
    verify_pe4,
)


def sig_1d(x):
    return (0.7 + 0.3 * np.sin(1.3 * x))[:, :, None]


def b_1d(x):
    return 0.2 + 0.5 * np.tanh(x)


def test_safe_ratio_conventions():
    assert safe_ratio(0.0, 0.0) == 0.0
    assert safe_ratio(1.0, 0.0) == math.inf
    assert safe_ratio(-2.0, 4.0) == 0.5


@pytest.mark.parametrize("p", [2, 4])
@pytest.mark.parametrize("d", [1, 2])
def test_pe1_exact_sums_agree_with_quadrature(d, p):
    rng = np.random.default_rng(10 * d + p)
    mu = random_measure(d, 3, rng)
    W = rng.normal(size=(d, d))
    sig = lambda x: np.stack([np.sin(x @ W.T), 0.5 * np.cos(x)], axis=2)
    b = lambda x: np.tanh(x @ W.T)
    rep = verify_pe1(sig, b, mu, 0.6, p)
    assert rep.ok, rep.verdicts
    assert rep.lhs["A"] == pytest.approx(rep.lhs["A_quad"], rel=1e-6, abs=1e-12)


def test_symmetric_form_exact_for_p2():
    mu = random_measure(2, 4, np.random.default_rng(0))
    sig = lambda x: np.stack([np.sin(x), np.cos(2 * x)], axis=2)
    rep = verify_pe1(sig, lambda x: x * 0, mu, 0.5, 2, quadrature=False)
    assert rep.lhs["A_sym"] == pytest.approx(rep.lhs["A"], rel=1e-12, abs=1e-15)


def test_pe4_sharp_bound_and_cross_checks():
    mu = random_measure(1, 4, np.random.default_rng(2))
    rep = verify_pe4(lambda x: 0.5 + 0.2 * np.sin(x), lambda x: np.cos(x[:, 0]), mu, 0.4, 2)
    assert rep.ok, rep.verdicts
    assert rep.verdicts["pe4_1_sharp"]
    assert rep.ratio["pe4_1"] <= 1.0 + 1e-12


def test_zero_cases():
    mu = random_measure(1, 4, np.random.default_rng(3))
    c1 = verify_pe1(lambda x: np.full((x.shape[0], 1, 1), 0.8), lambda x: np.full((x.shape[0], 1), -0.4), mu, 0.5, 4,
                    quadrature=False)
    assert abs(c1.lhs["A"]) <= 1e-12 and abs(c1.lhs["B"]) <= 1e-12
    zero = ShiftMap.zero(1)
    assert abs(verify_pe3(zero, mu, 0.5, 2, quadrature=False).lhs["C"]) <= 1e-12
    assert abs(verify_J_and_76(zero, mu, 0.5, 2, quadrature=False).lhs["D"]) <= 1e-12
    single = random_measure(1, 1, np.random.default_rng(4))
    assert abs(verify_pe1(sig_1d, b_1d, single, 0.5, 2, quadrature=False).lhs["A"]) <= 1e-12


@pytest.mark.parametrize("p", [2, 4])
def test_jump_terms_agree_with_quadrature(p):
    rng = np.random.default_rng(p)
    mu = random_measure(1, 3, rng)
    shift = random_shift(1, rng)
    r3 = verify_pe3(shift, mu, 0.5, p)
    r7 = verify_J_and_76(shift, mu, 0.5, p)
    assert r3.ok, r3.verdicts
    assert r7.ok, r7.verdicts
    assert r7.extras["min_convexity_gap"] >= -1e-12


def test_negative_lambda_rejected():
    mu = random_measure(1, 2, np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        verify_pe3(ShiftMap.linear([[-1.0]]), mu, 0.5, 2, quadrature=False)


def test_report_json_is_deterministic():
    mu = random_measure(1, 3, np.random.default_rng(7))
    a = verify_pe1(sig_1d, b_1d, mu, 0.5, 2).to_json()
    b = verify_pe1(sig_1d, b_1d, mu, 0.5, 2).to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["lemma"] == "pe1" and len(doc["inputs_hash"]) == 64


@pytest.mark.parametrize("name", ["trivial-constants", "jump-shared-1d", "clipped-linear-1d"])
def test_lemma_suite_passes_on_registry_models(name):
    reps = lemma_suite(get_model(name), seed=1)
    assert reps and all(r.ok for _, r in reps)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([0.25, 0.5, 1.0]))
def test_ratios_finite_and_pe4_sharp(seed, eps):
    rng = np.random.default_rng(seed)
    mu = random_measure(1, int(rng.integers(1, 5)), rng)
    r1 = verify_pe1(sig_1d, b_1d, mu, eps, 2, quadrature=False)
    r4 = verify_pe4(lambda x: 0.7 + 0.3 * np.sin(x), lambda x: np.cos(x[:, 0]), mu, eps, 2, quadrature=False)
    assert all(math.isfinite(v) for v in (*r1.ratio.values(), *r4.ratio.values()))
    assert r4.verdicts["pe4_1_sharp"]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.floats(-3, 3))
def test_lhs_quadratic_in_measure_scale(seed, c):
    rng = np.random.default_rng(seed)
    mu = random_measure(1, 3, rng)
    base = verify_pe1(sig_1d, b_1d, mu, 0.5, 2, quadrature=False).lhs["A"]
    scaled = verify_pe1(sig_1d, b_1d, ParticleMeasure(mu.locations, c * mu.weights), 0.5, 2, quadrature=False).lhs["A"]
    assert scaled == pytest.approx(c * c * base, rel=1e-9, abs=1e-13)
