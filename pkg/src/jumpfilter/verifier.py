"""Numerical checks of the a priori L_p estimates on discrete measures.

For an atomic measure every pairing of mollified densities is a finite sum
over p-tuples of atoms against rho_eps and its derivatives, so left-hand sides
are computed exactly.  Where possible the same quantity is also computed by
quadrature of the defining integral, giving an independent cross-check.

Each check returns a :class:`LemmaReport`.  Ratios divide the left-hand side
by the structural right-hand side (Lipschitz factors times
``|| |mu|^(eps) ||_p^p``); the lemmas only assert that these ratios are
bounded, so apart from the sharp K^2 bound they are reported, not asserted.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .measure import (
    EXACT_SUM_BUDGET,
    QUAD_BOX_HALFWIDTH,
    ParticleMeasure,
    _check_even_p,
    box_quadrature,
    lp_norm_exact,
    mollify,
    mollify_operator,
    rho_grad_tuples,
    rho_hessian_tuples,
    rho_tuples,
    tuple_sum,
)
from .operators import ShiftMap

ZERO_TOL = 1e-12
CROSS_TOL = 1e-6
QUAD_TOL = 1e-11  # absolute, relative to the rhs scale


@dataclass
class LemmaReport:
    lemma: str
    inputs_hash: str
    lhs: dict
    rhs: float
    ratio: dict
    verdicts: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.verdicts.values())

    def to_dict(self):
        return {
            "lemma": self.lemma,
            "inputs_hash": self.inputs_hash,
            "lhs": _jsonable(self.lhs),
            "rhs": _jsonable(self.rhs),
            "ratio": _jsonable(self.ratio),
            "verdicts": dict(self.verdicts),
            "extras": _jsonable(self.extras),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def inputs_hash(lemma, mu: ParticleMeasure, eps, p, *arrays):
    h = hashlib.sha256()
    h.update(f"{lemma}|{p}|{float(eps)!r}|{mu.dim}".encode())
    h.update(np.ascontiguousarray(mu.locations, dtype=float).tobytes())
    h.update(np.ascontiguousarray(mu.weights, dtype=float).tobytes())
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()


def safe_ratio(lhs, scale):
    """|lhs| / scale with 0/0 := 0 and x/0 := inf."""
    lhs = abs(float(lhs))
    if scale > 0:
        return lhs / scale
    return 0.0 if lhs <= ZERO_TOL else math.inf


def _is_zero(v, scale=1.0):
    return abs(v) <= ZERO_TOL * max(1.0, scale)


def _agree(exact, quad, scale):
    return abs(exact - quad) <= CROSS_TOL * max(abs(exact), scale)


# --------------------------------------------------------------------------
# sampled constants
# --------------------------------------------------------------------------


def _probe_points(mu: ParticleMeasure, n_extra, seed, pad=1.0):
    rng = np.random.default_rng(seed)
    lo = mu.locations.min(axis=0) - pad
    hi = mu.locations.max(axis=0) + pad
    extra = lo + (hi - lo) * rng.random((n_extra, mu.dim))
    return np.concatenate([mu.locations, extra])


def sampled_lipschitz(fn, mu: ParticleMeasure, n_extra=200, seed=0):
    """max |f(x) - f(y)| / |x - y| over atoms and random points near them."""
    pts = _probe_points(mu, n_extra, seed)
    vals = np.asarray(fn(pts), dtype=float).reshape(pts.shape[0], -1)
    i, j = np.triu_indices(pts.shape[0], 1)
    dx = np.linalg.norm(pts[i] - pts[j], axis=1)
    keep = dx > 1e-12
    if not np.any(keep):
        return 0.0
    dv = np.linalg.norm(vals[i[keep]] - vals[j[keep]], axis=1)
    return float(np.max(dv / dx[keep]))


def sampled_sup(fn, mu: ParticleMeasure, n_extra=200, seed=0):
    pts = _probe_points(mu, n_extra, seed)
    vals = np.asarray(fn(pts), dtype=float).reshape(pts.shape[0], -1)
    return float(np.max(np.linalg.norm(vals, axis=1)))


def sampled_lambda(shift, mu: ParticleMeasure, n_extra=200, seed=0, thetas=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """min over sampled pairs and theta of |x - y + theta(zeta(x) - zeta(y))| / |x - y|."""
    pts = _probe_points(mu, n_extra, seed)
    z = np.asarray(shift(pts), dtype=float)
    i, j = np.triu_indices(pts.shape[0], 1)
    dx = pts[i] - pts[j]
    nx = np.linalg.norm(dx, axis=1)
    keep = nx > 1e-12
    dz = (z[i] - z[j])[keep]
    dx, nx = dx[keep], nx[keep]
    if nx.size == 0:
        return 1.0
    return float(min(np.min(np.linalg.norm(dx + t * dz, axis=1) / nx) for t in thetas))


# --------------------------------------------------------------------------
# quadrature support
# --------------------------------------------------------------------------


def _quad(f, measures, eps, scale):
    """Integrate a vectorized integrand over a box covering every atom."""
    locs = np.concatenate([m.locations for m in measures if m.size])
    pad = QUAD_BOX_HALFWIDTH * math.sqrt(eps)
    return box_quadrature(f, locs.min(axis=0) - pad, locs.max(axis=0) + pad, math.sqrt(eps), QUAD_TOL * max(scale, 1e-300))


def _weighted(mu: ParticleMeasure, values):
    return ParticleMeasure(mu.locations, mu.weights * np.asarray(values, dtype=float))


def _check_inputs(mu, eps, p):
    if not isinstance(mu, ParticleMeasure):
        raise ContractViolation("mu must be a ParticleMeasure")
    if mu.size == 0:
        raise ContractViolation("mu must have at least one atom")
    if not eps > 0:
        raise ContractViolation(f"eps must be positive, got {eps}")
    return _check_even_p(p)


# --------------------------------------------------------------------------
# second and first order terms
# --------------------------------------------------------------------------


def verify_pe1(sigma_fn, b_fn, mu: ParticleMeasure, eps, p, L=None, quadrature=True, budget=EXACT_SUM_BUDGET, seed=0):
    """Second-order (A) and drift (B) pairings against ``L^2 || |mu|^(eps) ||_p^p``.

    ``sigma_fn`` maps (m, d) -> (m, d, d1) and ``b_fn`` (m, d) -> (m, d).
    A is evaluated as ``-1/2 sum_{r,s} k^{ij}(y_r, y_s) d_{y_r^i} d_{y_s^j} rho_eps``
    with ``k(x, z) = a(x) + a(z) - sigma(x) sigma(z)^T``, which vanishes
    identically for constant sigma and single atoms.  The direct
    (unsymmetrized) tuple form and quadrature are computed as cross-checks.
    ``A_sym`` uses the symmetric kernel (sigma(x) - sigma(z))(...)^T / 2
    instead; it equals A when d = 1 or p = 2 but can differ otherwise.
    """
    p = _check_inputs(mu, eps, p)
    d = mu.dim
    S = np.asarray(sigma_fn(mu.locations), dtype=float)
    if S.ndim != 3 or S.shape[:2] != (mu.size, d):
        raise ContractViolation(f"sigma_fn must return (m, {d}, d1), got {S.shape}")
    Bv = np.asarray(b_fn(mu.locations), dtype=float).reshape(mu.size, d)

    def term_A(Y, idx):
        H = rho_hessian_tuples(Y, eps)
        St = S[idx]  # (n, p, d, k)
        a = 0.5 * np.einsum("nrik,nrjk->nrij", St, St)
        cross = np.einsum("nrik,nsjk->nrsij", St, St)
        kern = a[:, :, None] + a[:, None, :] - cross
        return -0.5 * np.einsum("nrsij,nrisj->n", kern, H)

    def term_A_sym(Y, idx):
        H = rho_hessian_tuples(Y, eps)
        St = S[idx]
        D = St[:, :, None] - St[:, None, :]  # (n, r, s, d, k)
        a2 = 0.5 * np.einsum("nrsik,nrsjk->nrsij", D, D)
        return -0.5 * np.einsum("nrsij,nrisj->n", a2, H)

    def term_A_direct(Y, idx):
        H = rho_hessian_tuples(Y, eps)
        St = S[idx]
        a_last = 0.5 * np.einsum("nik,njk->nij", St[:, -1], St[:, -1])
        first = p * np.einsum("nij,nij->n", a_last, H[:, -1, :, -1, :])
        if p < 2:
            return first
        cross = np.einsum("nik,njk->nij", St[:, -2], St[:, -1])
        return first + 0.5 * p * (p - 1) * np.einsum("nij,nij->n", cross, H[:, -2, :, -1, :])

    def term_B(Y, idx):
        return np.einsum("ni,ni->n", Bv[idx[:, -1]], rho_grad_tuples(Y, eps)[:, -1])

    def term_B_pb(Y, idx):
        # (1/(eps p^2)) sum_r sum_s (b_r - b_s) . sum_l (y_l - y_r) rho, which equals p * B
        Bt = Bv[idx]
        pull = np.sum(Y[:, None, :, :] - Y[:, :, None, :], axis=2)
        diff = Bt[:, :, None, :] - Bt[:, None, :, :]
        return np.einsum("nrsi,nri->n", diff, pull) * rho_tuples(Y, eps) / (eps * p * p)

    A = tuple_sum(mu, p, term_A, budget)
    A_sym = tuple_sum(mu, p, term_A_sym, budget)
    A_direct = tuple_sum(mu, p, term_A_direct, budget)
    B = tuple_sum(mu, p, term_B_pb, budget) / p
    B_direct = tuple_sum(mu, p, term_B, budget)
    rhs = lp_norm_exact(mu.abs(), eps, p, budget)

    if L is None:
        L_sigma = sampled_lipschitz(sigma_fn, mu, seed=seed)
        L_b = sampled_lipschitz(b_fn, mu, seed=seed)
        L = max(L_sigma, L_b)
    scale = L * L * rhs
    ratio = {"A": safe_ratio(A, scale), "B": safe_ratio(B, scale)}
    lhs = {"A": A, "B": B, "A_direct": A_direct, "A_sym": A_sym, "B_direct": B_direct}
    verdicts = {
        "finite": all(math.isfinite(v) for v in list(lhs.values()) + list(ratio.values())),
        "A_direct_agrees": _agree(A, A_direct, rhs),
        "B_direct_agrees": _agree(B, B_direct, rhs),
    }
    if mu.size == 1:
        verdicts["single_atom_zero"] = _is_zero(A, rhs) and _is_zero(B, rhs)
    if quadrature and d <= 3:
        lhs["A_quad"], lhs["B_quad"] = _pe1_quadrature(sigma_fn, b_fn, mu, eps, p, rhs)
        verdicts["A_quad_agrees"] = _agree(A, lhs["A_quad"], rhs)
        verdicts["B_quad_agrees"] = _agree(B, lhs["B_quad"], rhs)
    ratio["max"] = max(ratio["A"], ratio["B"])
    return LemmaReport("pe1", inputs_hash("pe1", mu, eps, p, S, Bv), lhs, rhs, ratio, verdicts, {"L": L, "eps": eps, "p": p})


def _pe1_quadrature(sigma_fn, b_fn, mu, eps, p, rhs):
    a_fn = lambda y: 0.5 * np.einsum("mik,mjk->mij", sigma_fn(y), sigma_fn(y))
    k1 = np.asarray(sigma_fn(mu.locations)).shape[2]

    def fA(x):
        v = mollify(mu, eps, x)
        out = p * v ** (p - 1) * mollify_operator(mu, eps, x, a_fn, 2)
        g2 = 0.0
        for k in range(k1):
            g = mollify_operator(mu, eps, x, lambda y, k=k: np.asarray(sigma_fn(y))[:, :, k], 1)
            g2 = g2 + g * g
        return out + 0.5 * p * (p - 1) * v ** (p - 2) * g2

    def fB(x):
        return mollify(mu, eps, x) ** (p - 1) * mollify_operator(mu, eps, x, b_fn, 1)

    return _quad(fA, [mu], eps, rhs), _quad(fB, [mu], eps, rhs)


def verify_pe4(sigma_fn, b_scalar_fn, mu: ParticleMeasure, eps, p, K=None, L=None, quadrature=True,
               budget=EXACT_SUM_BUDGET, seed=0):
    """Zero-order pairing (pe4_1) and mixed pairing (pe4_2).

    ``sigma_fn`` maps (m, d) -> (m, d) (one column of the diffusion) and
    ``b_scalar_fn`` maps (m, d) -> (m,).  The first bound has the sharp
    constant K^2 with K = sup |b| and is asserted; the second is reported as
    ``|R| / (K L || |mu|^(eps) ||_p^p)`` with L the larger of the Lipschitz
    constants of sigma and b sigma.
    """
    p = _check_inputs(mu, eps, p)
    d = mu.dim
    S = np.asarray(sigma_fn(mu.locations), dtype=float).reshape(mu.size, d)
    bv = np.asarray(b_scalar_fn(mu.locations), dtype=float).reshape(mu.size)

    def term_1(Y, idx):
        return bv[idx[:, -2]] * bv[idx[:, -1]] * rho_tuples(Y, eps)

    def term_R(Y, idx):
        G = rho_grad_tuples(Y, eps)
        return bv[idx[:, -1]] * np.einsum("ni,ni->n", S[idx[:, -2]], G[:, -2])

    def term_fg(Y, idx):
        # sum_s sum_{r != s} [sum_k f(y_k, y_s, y_r) + g(y_r, y_s)] . d_{y_s} rho
        G = rho_grad_tuples(Y, eps)
        St, bt = S[idx], bv[idx]
        dS = St[:, :, None, :] - St[:, None, :, :]  # [s, r] = sigma(y_s) - sigma(y_r)
        f = np.sum(bt, axis=1)[:, None, None, None] * dS
        bs = bt[:, :, None] * St  # b sigma at each slot
        g = bs[:, None, :, :] - bs[:, :, None, :]  # [s, r] = (b sigma)(y_r) - (b sigma)(y_s)
        return np.einsum("nsri,nsi->n", f + g, G)

    lhs1 = tuple_sum(mu, p, term_1, budget)
    R = tuple_sum(mu, p, term_R, budget)
    R_fg = tuple_sum(mu, p, term_fg, budget) / (p * p * (p - 1))
    rhs = lp_norm_exact(mu.abs(), eps, p, budget)

    if K is None:
        K = sampled_sup(b_scalar_fn, mu, seed=seed)
    if L is None:
        bs_fn = lambda y: np.asarray(b_scalar_fn(y)).reshape(-1, 1) * np.asarray(sigma_fn(y)).reshape(-1, d)
        L = max(sampled_lipschitz(sigma_fn, mu, seed=seed), sampled_lipschitz(bs_fn, mu, seed=seed))
    bound1 = K * K * rhs
    lhs = {"pe4_1": lhs1, "pe4_2": R, "pe4_2_fg": R_fg}
    ratio = {"pe4_1": safe_ratio(lhs1, bound1), "pe4_2": safe_ratio(R, K * L * rhs)}
    verdicts = {
        "finite": all(math.isfinite(v) for v in list(lhs.values()) + list(ratio.values())),
        "pe4_1_sharp": lhs1 <= bound1 * (1 + 1e-12) + ZERO_TOL,
        "pe4_2_fg_agrees": _agree(R, R_fg, rhs),
    }
    if mu.size == 1:
        verdicts["single_atom_zero"] = _is_zero(R, rhs)
    if quadrature and d <= 3:
        bmu = _weighted(mu, bv)

        def f1(x):
            return mollify(mu, eps, x) ** (p - 2) * mollify(bmu, eps, x) ** 2

        def fR(x):
            return mollify(mu, eps, x) ** (p - 2) * mollify_operator(mu, eps, x, sigma_fn, 1) * mollify(bmu, eps, x)

        lhs["pe4_1_quad"] = _quad(f1, [mu], eps, rhs)
        lhs["pe4_2_quad"] = _quad(fR, [mu], eps, rhs)
        verdicts["pe4_1_quad_agrees"] = _agree(lhs1, lhs["pe4_1_quad"], rhs)
        verdicts["pe4_2_quad_agrees"] = _agree(R, lhs["pe4_2_quad"], rhs)
    ratio["max"] = max(ratio["pe4_1"], ratio["pe4_2"])
    return LemmaReport("pe4", inputs_hash("pe4", mu, eps, p, S, bv), lhs, rhs, ratio, verdicts,
                       {"K": K, "L": L, "eps": eps, "p": p, "slack_pe4_1": bound1 - lhs1})


# --------------------------------------------------------------------------
# jump terms
# --------------------------------------------------------------------------


def _shift_lip(shift, mu, seed):
    lip = getattr(shift, "lip", math.inf)
    if math.isfinite(lip):
        return float(lip)
    return sampled_lipschitz(shift, mu, seed=seed)


def _shift_setup(shift, mu, seed):
    Z = np.asarray(shift(mu.locations), dtype=float).reshape(mu.size, mu.dim)
    lam = sampled_lambda(shift, mu, seed=seed)
    if not lam > 0:
        raise ContractViolation(f"shift is not biLipschitz on the sampled pairs (lambda = {lam})")
    return Z, lam, _shift_lip(shift, mu, seed)


def _jump_densities(shift, mu, eps):
    """Mollified T*mu, I*mu and J*mu as functions of x."""
    moved = mu.pushforward(shift)

    def dens(x):
        v = mollify(mu, eps, x)
        t = mollify(moved, eps, x)
        i = t - v
        j = i - mollify_operator(mu, eps, x, shift, 1)
        return v, t, i, j

    return moved, dens


def verify_pe3(shift, mu: ParticleMeasure, eps, p, L=None, quadrature=True, budget=EXACT_SUM_BUDGET, seed=0):
    """The jump combination C against ``(1 + L^2) L^2 || |mu|^(eps) ||_p^p``.

    Exact: C = sum over tuples of rho(y + zeta(y)) - rho(y) - sum_r zeta(y_r) . d_r rho(y).
    For p = 2 the two-pairing form 2 (mu^(eps), (J*mu)^(eps)) + |(I*mu)^(eps)|^2
    is evaluated separately as an identity check.
    """
    p = _check_inputs(mu, eps, p)
    Z, lam, lip = _shift_setup(shift, mu, seed)
    if L is not None:
        lip = L

    def term_C(Y, idx):
        Zt = Z[idx]
        rho = rho_tuples(Y, eps)
        G = rho_grad_tuples(Y, eps, rho)
        return rho_tuples(Y + Zt, eps) - rho - np.einsum("nri,nri->n", Zt, G)

    C = tuple_sum(mu, p, term_C, budget)
    rhs = lp_norm_exact(mu.abs(), eps, p, budget)
    lhs = {"C": C}
    ratio = {"C": safe_ratio(C, (1 + lip**2) * lip**2 * rhs)}
    verdicts = {}
    if p == 2:
        lhs["C_pairings"] = _p2_pairings(Z, mu, eps, budget)
        verdicts["p2_form_agrees"] = _agree(C, lhs["C_pairings"], rhs)
    if not np.any(Z):
        verdicts["zero_shift_zero"] = _is_zero(C, rhs)
    if quadrature and mu.dim <= 3:
        moved, dens = _jump_densities(shift, mu, eps)

        def f(x):
            v, t, i, j = dens(x)
            return p * v ** (p - 1) * j + t**p - v**p - p * v ** (p - 1) * i

        lhs["C_quad"] = _quad(f, [mu, moved], eps, rhs)
        verdicts["quad_agrees"] = _agree(C, lhs["C_quad"], rhs)
    verdicts["finite"] = all(math.isfinite(v) for v in list(lhs.values()) + list(ratio.values()))
    return LemmaReport("pe3", inputs_hash("pe3", mu, eps, p, Z), lhs, rhs, ratio, verdicts,
                       {"L": lip, "lambda_sampled": lam, "eps": eps, "p": p})


def _p2_pairings(Z, mu, eps, budget):
    """2 (v, J*mu^(eps)) + (I*mu^(eps), I*mu^(eps)) for p = 2 as atom-pair sums."""

    def term(Y, idx):
        Zt = Z[idx]
        y1, y2 = Y[:, :1], Y[:, 1:]
        z1, z2 = Zt[:, :1], Zt[:, 1:]
        rho = rho_tuples(Y, eps)
        G = rho_grad_tuples(Y, eps, rho)
        pair_J = rho_tuples(np.concatenate([y1, y2 + z2], axis=1), eps) - rho - np.einsum("ni,ni->n", Zt[:, 1], G[:, 1])
        pair_I = (
            rho_tuples(Y + Zt, eps)
            - rho_tuples(np.concatenate([y1 + z1, y2], axis=1), eps)
            - rho_tuples(np.concatenate([y1, y2 + z2], axis=1), eps)
            + rho
        )
        return 2.0 * pair_J + pair_I

    return tuple_sum(mu, 2, term, budget)


def verify_J_and_76(shift, mu: ParticleMeasure, eps, p, L=None, quadrature=True, grid_points=2001,
                    budget=EXACT_SUM_BUDGET, seed=0):
    """The J pairing ``int (mu^(eps))^{p-1} (J*mu)^(eps)`` and the norm change D.

    D = || (T*mu)^(eps) ||_p^p - || mu^(eps) ||_p^p is reported against
    ``(1 + L) L || |mu|^(eps) ||_p^p``.  The convexity inequality
    ``|a + b|^p - |a|^p - p |a|^{p-2} a b >= 0`` with a = mu^(eps),
    b = (I*mu)^(eps) is checked pointwise on a grid.
    """
    p = _check_inputs(mu, eps, p)
    Z, lam, lip = _shift_setup(shift, mu, seed)
    if L is not None:
        lip = L

    def term_J(Y, idx):
        zl = Z[idx[:, -1]]
        rho = rho_tuples(Y, eps)
        G = rho_grad_tuples(Y, eps, rho)
        Ys = Y.copy()
        Ys[:, -1] += zl
        return rho_tuples(Ys, eps) - rho - np.einsum("ni,ni->n", zl, G[:, -1])

    def term_D(Y, idx):
        return rho_tuples(Y + Z[idx], eps) - rho_tuples(Y, eps)

    Jp = tuple_sum(mu, p, term_J, budget)
    D = tuple_sum(mu, p, term_D, budget)
    moved = mu.pushforward(shift)
    rhs = lp_norm_exact(mu.abs(), eps, p, budget)
    D_norms = lp_norm_exact(moved, eps, p, budget) - lp_norm_exact(mu, eps, p, budget)
    lhs = {"J": Jp, "D": D, "D_norms": D_norms}
    # the J bound is one-sided: only the positive part is controlled
    ratio = {
        "D": safe_ratio(D, (1 + lip) * lip * rhs),
        "J": safe_ratio(max(Jp, 0.0), (1 + lip**2) * lip**2 * rhs),
    }
    verdicts = {"D_norms_agrees": _agree(D, D_norms, rhs)}
    if not np.any(Z):
        verdicts["zero_shift_zero"] = _is_zero(D, rhs) and _is_zero(Jp, rhs)

    _, dens = _jump_densities(shift, mu, eps)
    locs = np.concatenate([mu.locations, moved.locations])
    pad = QUAD_BOX_HALFWIDTH * math.sqrt(eps)
    lo, hi = locs.min(axis=0) - pad, locs.max(axis=0) + pad
    n_ax = max(3, int(round(grid_points ** (1.0 / mu.dim))))
    axes = [np.linspace(lo[i], hi[i], n_ax) for i in range(mu.dim)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    v, t, i, _ = dens(pts)
    gap = t**p - v**p - p * v ** (p - 1) * i
    scale = np.max(np.abs(t) ** p + np.abs(v) ** p)
    min_gap = float(np.min(gap))
    verdicts["convexity"] = bool(min_gap >= -1e-12 * max(scale, 1e-300))

    if quadrature and mu.dim <= 3:
        lhs["J_quad"] = _quad(lambda x: dens(x)[0] ** (p - 1) * dens(x)[3], [mu, moved], eps, rhs)
        lhs["D_quad"] = _quad(lambda x: dens(x)[1] ** p - dens(x)[0] ** p, [mu, moved], eps, rhs)
        verdicts["J_quad_agrees"] = _agree(Jp, lhs["J_quad"], rhs)
        verdicts["D_quad_agrees"] = _agree(D, lhs["D_quad"], rhs)
    verdicts["finite"] = all(math.isfinite(x) for x in list(lhs.values()) + list(ratio.values()))
    return LemmaReport("J_76", inputs_hash("J_76", mu, eps, p, Z), lhs, rhs, ratio, verdicts,
                       {"L": lip, "lambda_sampled": lam, "min_convexity_gap": min_gap, "eps": eps, "p": p,
                        "J_abs_ratio": safe_ratio(Jp, (1 + lip**2) * lip**2 * rhs)})


# --------------------------------------------------------------------------
# suite over a model's coefficients
# --------------------------------------------------------------------------


def random_measure(d, m, rng, spread=1.5, signed=True):
    locs = spread * rng.standard_normal((m, d))
    w = rng.uniform(0.2, 1.0, m)
    if signed:
        w *= rng.choice([-1.0, 1.0], m)
    return ParticleMeasure(locs, w)


def _model_shifts(coeffs, t, y):
    """Shift maps at the largest quadrature mark of each jump law, plus zeta = 0."""
    out = [("zero", ShiftMap.zero(coeffs.d))]
    for name, act, make in (("xi", coeffs.nu1, coeffs.xi_shift), ("eta", coeffs.nu0, coeffs.eta_shift)):
        if act is None:
            continue
        nodes = np.asarray(act.nodes, dtype=float).reshape(len(act.nodes), -1)
        z = nodes[int(np.argmax(np.linalg.norm(nodes, axis=1)))]
        out.append((name, make(t, y, z)))
    return out


def lemma_suite(model, seed, eps=0.5, p=2, n_atoms=4, t=0.0):
    """Run every verifier on a random measure and on a single atom.

    Coefficients are the model's sigma, b (for the second-order and drift
    terms), the columns of rho with B^k (for the mixed term), and the jump
    shifts at a fixed mark.
    """
    c = model.coeffs
    rng = np.random.default_rng(seed)
    y = np.zeros(c.dprime) if model.y0 is None else np.asarray(model.y0, dtype=float)
    sig = lambda x: c.sigma(t, x, y)
    drift = lambda x: c.b(t, x, y)
    measures = [("random", random_measure(c.d, n_atoms, rng)), ("single", random_measure(c.d, 1, rng))]
    reports = []
    for label, mu in measures:
        reports.append((label, verify_pe1(sig, drift, mu, eps, p)))
        for k in range(c.dprime):
            col = lambda x, k=k: c.rho(t, x, y)[:, :, k]
            Bk = lambda x, k=k: c.B(t, x, y)[:, k]
            reports.append((f"{label}/k={k}", verify_pe4(col, Bk, mu, eps, p)))
        for name, shift in _model_shifts(c, t, y):
            reports.append((f"{label}/{name}", verify_pe3(shift, mu, eps, p)))
            reports.append((f"{label}/{name}", verify_J_and_76(shift, mu, eps, p)))
    return reports
