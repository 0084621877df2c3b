import math

import numpy as np
import pytest

from jumpfilter.errors import ContractViolation
from jumpfilter.models import get_model
from jumpfilter.simulation import (
    girsanov_weight_path,
    innovation_path,
    sample_bundle,
    simulate_ensemble,
    simulate_system,
)


def _path(name, seed, T=1.0, dt=1e-3):
    m = get_model(name)
    c = m.coeffs
    b = sample_bundle(T, dt, (c.nu0, c.nu1), (c.d1, c.dprime), seed)
    return m, simulate_system(c, m.initial_state(np.random.default_rng(seed)), b)


def test_same_seed_same_path():
    _, p1 = _path("jump-shared-1d", 11)
    _, p2 = _path("jump-shared-1d", 11)
    assert np.array_equal(p1.X, p2.X) and np.array_equal(p1.Y, p2.Y)
    _, p3 = _path("jump-shared-1d", 12)
    assert not np.array_equal(p1.X, p3.X)


def test_grid_contains_event_times():
    _, p = _path("jump-shared-1d", 3)
    b = p.bundle
    events = np.concatenate([b.n0_times, b.n1_times])
    assert events.size > 0
    assert np.all(np.isin(events, p.times))
    assert np.all(np.diff(p.times) > 0)


def test_shared_jumps_move_observation_by_mark():
    m, p = _path("jump-shared-1d", 5)
    rows = p.bundle.event_rows(1)
    assert rows.size > 0
    # over one cell the continuous part is O(sqrt(dt)); the rest is the mark
    dY = p.Y[rows, 0] - p.Y[rows - 1, 0]
    assert np.all(np.abs(dY - p.bundle.n1_marks[:, 0]) < 0.2)


def test_ornstein_uhlenbeck_moments():
    m = get_model("clipped-linear-1d")
    prm = m.params
    n = 20_000
    z0 = np.column_stack([np.random.default_rng(1).normal(prm["m0"], prm["s0"], n), np.zeros(n)])
    _, X, _ = simulate_ensemble(m.coeffs, z0, 1.0, 1e-3, n, seed=2)
    a, s = prm["a"], prm["sigma"]
    var = prm["s0"] ** 2 * math.exp(2 * a) + s**2 * (1 - math.exp(2 * a)) / (2 * abs(a))
    xt = X[-1, :, 0]
    assert abs(xt.mean()) <= 4 * math.sqrt(var / n)
    assert xt.var() == pytest.approx(var, abs=4 * var * math.sqrt(2 / n) + 2e-3)


def test_poisson_counts():
    m = get_model("jump-shared-1d")
    c = m.coeffs
    counts = [sample_bundle(1.0, 1e-2, (c.nu0, c.nu1), (1, 1), s).n1_times.size for s in range(400)]
    lam = c.nu1.rate
    assert np.mean(counts) == pytest.approx(lam, abs=4 * math.sqrt(lam / 400))


def test_girsanov_weight_has_unit_mean():
    vals = []
    for s in range(300):
        m, p = _path("b-only-1d", s, dt=1e-2)
        vals.append(girsanov_weight_path(m.coeffs, p)[-1])
    vals = np.array(vals)
    assert vals.mean() == pytest.approx(1.0, abs=4 * vals.std() / math.sqrt(vals.size))


def test_innovation_matches_observation_without_jumps():
    m, p = _path("b-only-1d", 4)
    assert np.allclose(innovation_path(m.coeffs, p), p.Y - p.Y[0], atol=1e-12)


def test_csv_output(tmp_path):
    _, p = _path("jump-shared-1d", 9, T=0.1)
    f = tmp_path / "p.csv"
    p.to_csv(f, header_lines=["seed=9"])
    lines = f.read_text().splitlines()
    assert lines[0] == "# seed=9"
    assert lines[1] == "t,X_1,Y_1,n0_event,n1_event"
    assert len(lines) == 2 + p.times.size


def test_bad_mesh_rejected():
    with pytest.raises(ContractViolation):
        sample_bundle(1.0, 0.0, (None, None), (1, 1), 0)
