"""The acceptance suite: eleven checks with fixed seeds and stated tolerances.

Each ``criterion_k`` returns a :class:`CriterionResult` whose ``metrics`` are
deterministic functions of the seed; wall-clock time is kept separately so
that artifacts built from the metrics are reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import verifier as V
from .errors import NumericalFailure
from .filtering import (
    ObservationRecord,
    density_estimate,
    mollified_lp_norm,
    normalized_estimate,
    run_filter,
    zakai_residual,
)
from .gridsolver import l1_distance, reference_grid_solver
from .kalman import kalman_bucy
from .measure import (
    ParticleMeasure,
    constant_function,
    gaussian_density,
    kernel_convolve,
    lp_norm_exact,
    lp_norm_quadrature,
    rho_eps,
    smooth_bump,
)
from .models import get_model
from .operators import ShiftMap, analytic_half_shift, duality_suite, random_shift
from .simulation import sample_bundle, simulate_system
from .truncation import (
    bilipschitz_constant,
    bilipschitz_truncate,
    kappa_lipschitz_bound,
    kappa_R_eps,
    sample_pairs,
    truncate_chi,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {status}  {self.title}  ({self.runtime:.1f} s)"

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": bool(self.passed),
                "metrics": V._jsonable(self.metrics)}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.runtime = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --------------------------------------------------------------------------
# 1-3: kernel calculus, exact sums, zero cases
# --------------------------------------------------------------------------


def rho_quadrature(points, eps):
    """int prod_r k_eps(x - y_r) dx as a product of one-dimensional quad integrals."""
    Y = np.asarray(points, dtype=float)
    val = 1.0
    sd = math.sqrt(eps)
    for i in range(Y.shape[1]):
        col = Y[:, i]
        m = col.mean()
        f = lambda x: float(np.prod(np.exp(-((x - col) ** 2) / (2 * eps)) / math.sqrt(2 * math.pi * eps)))
        lo, hi = col.min() - 40 * sd, col.max() + 40 * sd
        v, _ = integrate.quad(f, lo, hi, points=sorted(set([m, *col])), epsabs=1e-15, epsrel=1e-13, limit=500)
        val *= v
    return val


@_timed
def criterion_1(seed=0, n_configs=50):
    """rho_eps closed form vs quadrature; semigroup identity."""
    rng = np.random.default_rng(seed)
    rho_err, sg_err = 0.0, 0.0
    for _ in range(n_configs):
        d = int(rng.integers(1, 3))
        p = int(rng.integers(2, 5))
        eps = float(rng.uniform(0.2, 2.0))
        Y = rng.normal(scale=1.0, size=(p, d))
        rho_err = max(rho_err, abs(rho_eps(Y, eps) - rho_quadrature(Y, eps)))
        er, es = rng.uniform(0.05, 2.0, 2)
        u = rng.normal(size=d)
        sg = kernel_convolve(er, es, u, rtol=1.0)
        sg_err = max(sg_err, abs(sg - float(gaussian_density(u, er + es))))
    res = CriterionResult(1, "kernel calculus: rho_eps vs quadrature, semigroup", False,
                          {"max_rho_error": rho_err, "max_semigroup_error": sg_err})
    res.passed = rho_err <= 1e-8 and sg_err <= 1e-10
    return res


@_timed
def criterion_2(seed=0, n_measures=20):
    """Exact L_p sums vs quadrature."""
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for d in (1, 2):
        for _ in range(n_measures):
            m = int(rng.integers(1, 6))
            mu = ParticleMeasure(rng.normal(scale=1.5, size=(m, d)), rng.uniform(-1, 1, m))
            eps = float(rng.uniform(0.2, 1.5))
            for p in (2, 4):
                e = lp_norm_exact(mu, eps, p)
                q = lp_norm_quadrature(mu, eps, p, tol=1e-11 * max(abs(e), 1e-300))
                worst = max(worst, abs(e - q) / abs(e))
    res = CriterionResult(2, "exact L_p sums vs quadrature", worst <= 1e-6, {"max_relative_error": worst})
    return res


def _const_fns(d, rng):
    s = rng.normal(size=(d, 2))
    b = rng.normal(size=d)
    return (lambda x: np.broadcast_to(s, (x.shape[0], d, 2)).copy(),
            lambda x: np.broadcast_to(b, (x.shape[0], d)).copy(),
            lambda x: np.broadcast_to(s[:, 0], (x.shape[0], d)).copy(),
            lambda x: np.full(x.shape[0], b[0]))


def _smooth_fns(d, rng):
    W = rng.normal(size=(d, d))
    c = rng.uniform(0, 2 * np.pi, d)
    return (lambda x: np.stack([np.sin(x @ W.T + c), np.cos(x)], axis=2),
            lambda x: np.tanh(x @ W.T),
            lambda x: np.sin(x + c),
            lambda x: np.cos(x @ W[0] + c[0]))


@_timed
def criterion_3(seed=0):
    """Zero cases of the estimates."""
    rng = np.random.default_rng(seed + 2)
    worst = {"pe1_A": 0.0, "pe2_B": 0.0, "pe4_2": 0.0, "pe3_C": 0.0, "D": 0.0}
    for d in (1, 2):
        for p in (2, 4):
            cases = [("constant", V.random_measure(d, 4, rng), _const_fns(d, rng)),
                     ("single_atom", V.random_measure(d, 1, rng), _smooth_fns(d, rng))]
            for _, mu, (sig, b, sig_col, b_sc) in cases:
                r1 = V.verify_pe1(sig, b, mu, 0.5, p, quadrature=False)
                r4 = V.verify_pe4(sig_col, b_sc, mu, 0.5, p, quadrature=False)
                worst["pe1_A"] = max(worst["pe1_A"], abs(r1.lhs["A"]))
                worst["pe2_B"] = max(worst["pe2_B"], abs(r1.lhs["B"]))
                worst["pe4_2"] = max(worst["pe4_2"], abs(r4.lhs["pe4_2"]))
            mu = V.random_measure(d, 4, rng)
            zero = ShiftMap.zero(d)
            worst["pe3_C"] = max(worst["pe3_C"], abs(V.verify_pe3(zero, mu, 0.5, p, quadrature=False).lhs["C"]))
            worst["D"] = max(worst["D"], abs(V.verify_J_and_76(zero, mu, 0.5, p, quadrature=False).lhs["D"]))
    return CriterionResult(3, "lemma zero cases", all(v <= 1e-12 for v in worst.values()), worst)


# maxima below this are treated as "bound holds with N ~ 0" in the halving test
RATIO_FLOOR = 0.05


def _random_instance(rng):
    m = int(rng.integers(1, 5))
    mu = V.random_measure(1, m, rng)
    s0, s1, w, ph = rng.normal(), rng.uniform(-1, 1), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
    b0, b1 = rng.normal(), rng.uniform(-1, 1)
    c0, c1 = rng.normal(), rng.uniform(-1, 1)
    sig = lambda x: (s0 + s1 * np.sin(w * x + ph))[:, :, None]
    b = lambda x: b0 + b1 * np.tanh(w * x)
    sig_col = lambda x: s0 + s1 * np.sin(w * x + ph)
    b_sc = lambda x: c0 + c1 * np.cos(x[:, 0])
    return mu, sig, b, sig_col, b_sc, random_shift(1, rng)


def instance_ratios(inst, eps):
    mu, sig, b, sig_col, b_sc, shift = inst
    reps = [
        V.verify_pe1(sig, b, mu, eps, 2, quadrature=False),
        V.verify_pe4(sig_col, b_sc, mu, eps, 2, quadrature=False),
        V.verify_pe3(shift, mu, eps, 2, quadrature=False),
        V.verify_J_and_76(shift, mu, eps, 2, quadrature=False),
    ]
    ratios = {}
    for r in reps:
        for k, v in r.ratio.items():
            if k != "max":
                ratios[f"{r.lemma}:{k}"] = v
    return ratios, reps


@_timed
def criterion_4(seed=0, n_instances=100, eps=0.5):
    """Ratios finite, sharp K^2 bound, stability under eps halving."""
    rng = np.random.default_rng(seed + 3)
    max_at = {eps: {}, eps / 2: {}}
    finite = True
    violations = 0
    verdict_failures = 0
    for _ in range(n_instances):
        inst = _random_instance(rng)
        for e in (eps, eps / 2):
            ratios, reps = instance_ratios(inst, e)
            finite &= all(math.isfinite(v) for v in ratios.values())
            violations += sum(not r.verdicts["pe4_1_sharp"] for r in reps if r.lemma == "pe4")
            verdict_failures += sum(not r.ok for r in reps)
            for k, v in ratios.items():
                max_at[e][k] = max(max_at[e].get(k, 0.0), v)
    factors = {}
    for k in max_at[eps]:
        a, b = max_at[eps][k], max_at[eps / 2][k]
        if max(a, b) < RATIO_FLOOR:
            factors[k] = 1.0  # the one-sided bound holds with a negligible constant at both scales
        else:
            factors[k] = max(a / b, b / a) if a > 0 and b > 0 else math.inf
    stable = all(f <= 4.0 for f in factors.values())
    metrics = {"finite": finite, "pe4_1_violations": violations, "verdict_failures": verdict_failures,
               "max_ratio": max_at[eps], "max_ratio_half_eps": max_at[eps / 2], "halving_factor": factors}
    return CriterionResult(4, "lemma inequality structure", finite and violations == 0 and stable
                           and verdict_failures == 0, metrics)


# --------------------------------------------------------------------------
# 5-6: adjoints and truncation
# --------------------------------------------------------------------------


@_timed
def criterion_5(seed=0, n_triples=50):
    """Adjoint duality on random triples; the analytic x/2 shift."""
    recs = duality_suite(n_triples, seed + 4)
    worst = {w: max(r.rel_error for r in recs if r.which == w) for w in ("T*", "I*", "J*")}
    analytic = analytic_half_shift()
    ok = all(v <= 1e-7 for v in worst.values()) and all(v <= 1e-10 for v in analytic.values())
    return CriterionResult(5, "adjoint duality", ok, {"max_relative_error": worst, "analytic_deviation": analytic})


@_timed
def criterion_6(seed=0, n_pairs=10_000):
    """chi_n cutoff, Lipschitz bound of kappa, biLipschitz truncation."""
    rng = np.random.default_rng(seed + 5)
    chi_ok = True
    for d in (1, 2):
        f = lambda z: np.stack([1.0 + np.sum(z * z, axis=1), np.sin(z[:, 0])], axis=1)
        for n in (0.5, 1.0, 3.0):
            g = truncate_chi(f, n)
            z = rng.normal(size=(2000, d)) * n * 1.5
            r = np.linalg.norm(z, axis=1)
            val, ref = g(z), f(z)
            chi_ok &= bool(np.all(val[r <= n] == ref[r <= n]) and np.all(val[r >= 2 * n] == 0.0))

    kappa_worst = -math.inf
    for d in (1, 2):
        for R, e in ((1.0, 0.5), (2.0, 0.1), (1.0, 1.0)):
            x, y = sample_pairs(d, n_pairs, 50.0, seed=seed + 7)
            diff = np.abs(kappa_R_eps(x, R, e, d) - kappa_R_eps(y, R, e, d))
            bound = kappa_lipschitz_bound(x, y, R, e)
            kappa_worst = max(kappa_worst, float(np.max(diff - bound)))
    kappa_ok = kappa_worst <= 1e-12

    M = 2.0
    trunc = []
    shifts = [("linear-1d", ShiftMap.linear([[0.4]])), ("linear-2d", ShiftMap.linear(np.diag([0.3, -0.2]))),
              ("random-1d", random_shift(1, rng)), ("random-2d", random_shift(2, rng))]
    bil_ok = True
    for name, shift in shifts:
        ts = bilipschitz_truncate(shift, 1.0, M, n_pairs=n_pairs, seed=seed)
        x, y = sample_pairs(shift.dim, n_pairs, ts.R_bar + 5.0, seed=seed + 1000)
        const = max(bilipschitz_constant(lambda v, t=t: v + t * ts.shift(v), x, y) for t in np.linspace(0, 1, 5))
        far = x[np.linalg.norm(x, axis=1) >= ts.R_bar]
        support_ok = bool(far.size == 0 or np.all(ts.shift(far) == 0.0))
        bil_ok &= const <= M and support_ok
        trunc.append({"shift": name, "eps_cut": ts.eps_cut, "R_bar": ts.R_bar, "sampled_constant": ts.constant,
                      "independent_constant": const, "support_ok": support_ok})
    return CriterionResult(6, "truncations", chi_ok and kappa_ok and bil_ok,
                           {"chi_exact": chi_ok, "kappa_max_excess": kappa_worst, "truncations": trunc})


# --------------------------------------------------------------------------
# 7-10: filtering
# --------------------------------------------------------------------------


def observe(model, T, dt, seed):
    c = model.coeffs
    bundle = sample_bundle(T, dt, (c.nu0, c.nu1), (c.d1, c.dprime), seed)
    path = simulate_system(c, model.initial_state(np.random.default_rng(seed)), bundle)
    return path, ObservationRecord.from_path(path)


def filter_vs_grid(model, seed, N=10_000, T=1.0, dt=1e-3):
    """L1 distance between the normalized particle density and the grid solution at T."""
    _, obs = observe(model, T, dt, seed)
    run = run_filter(model, obs, N, seed + 10_000)
    lo, hi, h = model.grid
    x = np.arange(lo, hi + 0.5 * h, h)
    grid = reference_grid_solver(model.coeffs, obs, x, model.pi0_density(x[:, None]), record_steps=[-1])
    dens = density_estimate(run.final, x[:, None], normalized=True)
    return l1_distance(x, dens, grid.normalized()), run, grid


@_timed
def criterion_7(seed=0, n_seeds=8, N=10_000):
    """Particle filter vs the grid solver on jump-shared-1d."""
    model = get_model("jump-shared-1d")
    dists = [filter_vs_grid(model, seed + s, N)[0] for s in range(n_seeds)]
    res = CriterionResult(7, "filter vs grid oracle (L1 <= 0.1 each seed)", max(dists) <= 0.1,
                          {"l1": dists, "max_l1": max(dists)})
    return res


def kalman_errors(model, seed, N, T=1.0, dt=1e-3):
    prm = model.params
    _, obs = observe(model, T, dt, seed)
    run = run_filter(model, obs, N, seed + 20_000)
    km, kP = kalman_bucy(obs, prm["a"], prm["c"], prm["sigma"], prm["m0"], prm["s0"] ** 2)
    return (run.mean[:, 0] - km) ** 2 / kP, (run.cov[:, 0, 0] - kP) ** 2 / kP**2


@_timed
def criterion_8(seed=0, n_seeds=32, N=10_000):
    """Posterior mean and variance vs the Kalman filter on clipped-linear-1d."""
    model = get_model("clipped-linear-1d")
    prm = model.params
    # largest marginal variance of X is max(P0, stationary) with stationary sigma^2 / (2|a|)
    var = max(prm["s0"] ** 2 + prm["m0"] ** 2, prm["sigma"] ** 2 / (2 * abs(prm["a"])))
    tail = math.erfc(prm["clip"] / math.sqrt(2 * var))
    em, ev = [], []
    for s in range(n_seeds):
        a, b = kalman_errors(model, seed + s, N)
        em.append(a)
        ev.append(b)
    rm, rv = float(np.sqrt(np.mean(em))), float(np.sqrt(np.mean(ev)))
    return CriterionResult(8, "Kalman sanity (relative RMSE <= 5%)", rm <= 0.05 and rv <= 0.05 and tail < 1e-6,
                           {"rmse_mean": rm, "rmse_variance": rv, "saturation_tail_bound": tail})


@_timed
def criterion_9(seed=0, n_runs=200, N=200):
    """Weak-form residual of the Zakai equation."""
    model = get_model("jump-shared-1d")
    phis = [smooth_bump([0.0], 2.0), constant_function(1.0, 1)]
    rep = zakai_residual(model, phis, n_runs, seed + 9, T=1.0, dt=1e-3, N=N)
    mass_gap = float(np.max(np.abs(rep.runs[:, 1] - rep.mass_identity)))
    mass_scale = float(np.max(np.abs(rep.mass_identity))) + 1.0
    ok = all(rep.within(3.0)) and mass_gap <= 1e-10 * mass_scale
    m = rep.to_dict()
    m["mass_identity_gap"] = mass_gap
    return CriterionResult(9, "Zakai weak residual", ok, m)


def lp_growth(model, seed, N, eps_list, ps, T=1.0, dt=1e-3, every=100, h=None):
    """sup_t |u_t^(eps)|_p^p / |u_0^(eps)|_p^p per (eps, p) plus step-wise mass checks."""
    _, obs = observe(model, T, dt, seed)
    d = model.coeffs.d
    lo, hi, gh = model.grid
    h = 2 * gh if h is None else h
    one = constant_function(1.0, d)
    flags = {"normalized_one": True, "positive_mass": True}

    def cb(state):
        flags["normalized_one"] &= normalized_estimate(state, one) == 1.0
        flags["positive_mass"] &= state.mass() > 0

    run = run_filter(model, obs, N, seed + 30_000, callback=cb,
                     snapshot_steps=range(0, obs.n_steps + 1, every))
    flags["positive_mass"] &= bool(np.all(run.mass > 0))
    snaps = [run.snapshots[k] for k in sorted(run.snapshots)]
    out = {}
    for e in eps_list:
        for p in ps:
            norms = [mollified_lp_norm(s, e, p, lo, hi, h) for s in snaps]
            out[(e, p)] = max(norms) / norms[0]
    return out, flags


@_timed
def criterion_10(seed=0, n_seeds=4):
    """No blow-up of the smoothed L_p norms; exact normalization; positive mass."""
    setups = [("jump-shared-1d", 2000, (0.1, 0.05)), ("clipped-linear-1d", 2000, (0.1, 0.05)),
              ("pure-jump-2d", 500, (0.2, 0.1))]
    ok = True
    metrics = {}
    for name, N, eps_pair in setups:
        model = get_model(name)
        per_seed = []
        for s in range(n_seeds):
            g, flags = lp_growth(model, seed + s, N, eps_pair, (2, 4))
            ok &= flags["normalized_one"] and flags["positive_mass"]
            ok &= all(math.isfinite(v) for v in g.values())
            per_seed.append(g)
        for p in (2, 4):
            a = max(g[(eps_pair[0], p)] for g in per_seed)
            b = max(g[(eps_pair[1], p)] for g in per_seed)
            change = max(a / b, b / a)
            ok &= change < 2.0
            metrics[f"{name}:p={p}"] = {"max_ratio_eps": a, "max_ratio_half_eps": b, "change": change}
    return CriterionResult(10, "no blow-up of smoothed L_p norms", ok, metrics)


# --------------------------------------------------------------------------
# 11: determinism (through the command line layer)
# --------------------------------------------------------------------------


@_timed
def criterion_11(seed=0, workdir=None):
    """Every subcommand writes byte-identical artifacts when run twice."""
    from .cli import determinism_check

    res = determinism_check(seed, workdir)
    return CriterionResult(11, "determinism of every subcommand", all(res.values()), res)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}

RUNTIME_LIMITS = {1: 10.0, 2: 30.0, 7: 600.0}


def run_suite(numbers=None, seed=0, report=print):
    """Run the selected criteria in order; ``report`` receives one line per criterion."""
    numbers = sorted(CRITERIA) if numbers is None else list(numbers)
    results = []
    for k in numbers:
        try:
            res = CRITERIA[k](seed=seed)
        except NumericalFailure as exc:
            res = CriterionResult(k, CRITERIA[k].__doc__.strip().splitlines()[0], False,
                                  {"error": str(exc), **getattr(exc, "payload", {})})
        if k in RUNTIME_LIMITS and res.runtime > RUNTIME_LIMITS[k]:
            res.passed = False
        if report is not None:
            report(res.line())
        results.append(res)
    return results
