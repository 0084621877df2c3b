"""Coefficient sets, generators, jump operators and the adjoint shift calculus.

Conventions: every coefficient callable is vectorized over a leading batch
axis.  With ``x`` of shape (n, d) and ``y`` of shape (d',) or (n, d'):

    b(t, x, y)      -> (n, d)
    B(t, x, y)      -> (n, d')
    sigma(t, x, y)  -> (n, d, d1)
    rho(t, x, y)    -> (n, d, d')
    eta(t, x, y, z) -> (n, d)     z of shape (m0,) or (n, m0)
    xi(t, x, y, z)  -> (n, d)     z of shape (m1,) or (n, m1)

A :class:`ShiftMap` is a single slice ``x -> zeta(x)`` of xi or eta, used by
the operators T, I, J and their adjoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .jumps import JumpActivity
from .measure import TestFunction, _as_points, box_quadrature, gaussian_bump

FD_REL_STEP = 1e-6
MAX_INVERT_ITER = 200


def _zero_vec(n, d):
    return np.zeros((n, d))


@dataclass(frozen=True)
class CoefficientSet:
    d: int
    d1: int
    dprime: int
    b: Callable
    B: Callable
    sigma: Callable
    rho: Callable
    eta: Optional[Callable] = None
    xi: Optional[Callable] = None
    xi_jacobian_x: Optional[Callable] = None
    eta_jacobian_x: Optional[Callable] = None
    nu0: Optional[JumpActivity] = None
    nu1: Optional[JumpActivity] = None
    K0: float = 0.0
    K1: float = 0.0
    K: float = 0.0
    L: float = 0.0
    lam: float = 1.0
    xi_bar: Optional[Callable] = None  # mark -> envelope
    eta_bar: Optional[Callable] = None
    K_xi: float = 0.0
    K_eta: float = 0.0
    name: str = field(default="coefficients", compare=False)

    def __post_init__(self):
        for k in ("d", "d1", "dprime"):
            if int(getattr(self, k)) < 1:
                raise ContractViolation(f"{k} must be a positive integer")
        if (self.xi is None) != (self.nu1 is None):
            raise ContractViolation("xi and nu1 must be given together")
        if (self.eta is None) != (self.nu0 is None):
            raise ContractViolation("eta and nu0 must be given together")
        if self.nu1 is not None and self.nu1.mark_dim != self.dprime:
            raise ContractViolation("shared marks must live in R^{d'} (Y jumps by the mark)")

    # compensator drifts  int f(t, x, y, z) nu(dz)
    def eta_compensator(self, t, x, y):
        if self.eta is None:
            return _zero_vec(x.shape[0], self.d)
        return node_integral(self.eta, self.nu0, t, x, y)

    def xi_compensator(self, t, x, y):
        if self.xi is None:
            return _zero_vec(x.shape[0], self.d)
        return node_integral(self.xi, self.nu1, t, x, y)

    def y_compensator(self):
        """int z nu1(dz): drift removed from Y by the compensated shared jumps."""
        if self.nu1 is None:
            return np.zeros(self.dprime)
        return self.nu1.rate * self.nu1.mean_mark()

    def xi_shift(self, t, y, z):
        return _slice_shift(self.xi, self.xi_jacobian_x, t, y, z, self.d, self.xi_bar, self.lam)

    def eta_shift(self, t, y, z):
        return _slice_shift(self.eta, self.eta_jacobian_x, t, y, z, self.d, self.eta_bar, self.lam)

    def with_(self, **kw):
        return replace(self, **kw)


def node_integral(fn, act: JumpActivity, t, x, y):
    """int fn(t, x, y, z) nu(dz) by the mark-law quadrature, all nodes batched."""
    n, Q = x.shape[0], act.nodes.shape[0]
    xr = np.repeat(x, Q, axis=0)
    yr = np.repeat(y, Q, axis=0) if np.ndim(y) == 2 else y
    vals = fn(t, xr, yr, np.tile(act.nodes, (n, 1)))
    return act.rate * np.einsum("nqi,q->ni", vals.reshape(n, Q, -1), act.node_weights)


def _slice_shift(fn, jac, t, y, z, d, envelope, lam):
    if fn is None:
        raise ContractViolation("coefficient set has no jump coefficient for this measure")
    z = np.asarray(z, dtype=float)
    lip = float(envelope(z)) if envelope is not None else math.inf
    jfun = None if jac is None else (lambda x: jac(t, x, y, z))
    return ShiftMap(d, lambda x: fn(t, x, y, z), jfun, lip, lam)


# --------------------------------------------------------------------------
# sampled assumption checks
# --------------------------------------------------------------------------


def _lip_ratio(f, x1, x2):
    num = np.linalg.norm((f(x1) - f(x2)).reshape(x1.shape[0], -1), axis=1)
    den = np.linalg.norm(x1 - x2, axis=1)
    return float(np.max(num / den))


def check_assumptions(coeffs: CoefficientSet, n_pairs=10_000, seed=0, radius=5.0, t=0.0, slack=1e-9):
    """Sampled check of the growth, boundedness, Lipschitz and (pc2) conditions.

    Returns a dict ``name -> (measured, bound, ok)``.
    """
    rng = np.random.default_rng(seed)
    d, dp = coeffs.d, coeffs.dprime
    x1 = rng.uniform(-radius, radius, (n_pairs, d))
    x2 = x1 + rng.normal(scale=rng.uniform(1e-3, 1.0, (n_pairs, 1)), size=(n_pairs, d))
    y = rng.uniform(-radius, radius, dp)
    rep = {}

    def add(name, measured, bound):
        rep[name] = (float(measured), float(bound), bool(measured <= bound * (1 + slack) + slack))

    Bx = coeffs.B(t, x1, y)
    add("B_bounded", np.max(np.linalg.norm(Bx, axis=1)), coeffs.K)
    z = np.linalg.norm(np.column_stack([x1, np.broadcast_to(y, (n_pairs, dp))]), axis=1)
    growth = (
        np.linalg.norm(coeffs.b(t, x1, y), axis=1)
        + np.linalg.norm(coeffs.sigma(t, x1, y).reshape(n_pairs, -1), axis=1)
        + np.linalg.norm(coeffs.rho(t, x1, y).reshape(n_pairs, -1), axis=1)
    )
    add("linear_growth", np.max(growth / (coeffs.K0 + coeffs.K1 * z)) if coeffs.K0 + coeffs.K1 > 0 else np.max(growth), 1.0 if coeffs.K0 + coeffs.K1 > 0 else 0.0)
    for nm in ("b", "B", "sigma", "rho"):
        f = getattr(coeffs, nm)
        add(f"lipschitz_{nm}", _lip_ratio(lambda x: f(t, x, y), x1, x2), coeffs.L)

    def rhoB(x):
        return np.einsum("nik,nk->ni", coeffs.rho(t, x, y), coeffs.B(t, x, y))

    add("lipschitz_rhoB", _lip_ratio(rhoB, x1, x2), coeffs.L)

    for tag, fn, nu, env, Kc in (
        ("xi", coeffs.xi, coeffs.nu1, coeffs.xi_bar, coeffs.K_xi),
        ("eta", coeffs.eta, coeffs.nu0, coeffs.eta_bar, coeffs.K_eta),
    ):
        if fn is None:
            continue
        marks = nu.sample(rng, 64)
        worst_lip = worst_growth = worst_env = 0.0
        worst_lam = math.inf
        for zz in marks:
            e = float(env(zz))
            worst_env = max(worst_env, e)
            f = lambda x: fn(t, x, y, zz)
            if e > 0:
                worst_lip = max(worst_lip, _lip_ratio(f, x1, x2) / e)
                g = np.linalg.norm(f(x1), axis=1) / (e * (coeffs.K0 + coeffs.K1 * z))
                worst_growth = max(worst_growth, float(np.max(g)))
            elif np.any(f(x1) != 0):
                worst_lip = worst_growth = math.inf
            for th in (0.25, 0.5, 0.75, 1.0):
                num = np.linalg.norm(x1 - x2 + th * (f(x1) - f(x2)), axis=1)
                worst_lam = min(worst_lam, float(np.min(num / np.linalg.norm(x1 - x2, axis=1))))
        add(f"lipschitz_{tag}_over_envelope", worst_lip, 1.0)
        add(f"growth_{tag}_over_envelope", worst_growth, 1.0)
        add(f"envelope_{tag}", worst_env, Kc)
        rep[f"pc2_{tag}"] = (worst_lam, coeffs.lam, bool(worst_lam >= coeffs.lam * (1 - 1e-9)))
    return rep


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def _prep(x, d):
    pts, single = _as_points(x, d)
    return pts, single


def _out(v, single):
    return float(v[0]) if single else v


def apply_L(coeffs: CoefficientSet, t, y_obs, phi: TestFunction, x):
    """(a^{ij} D_ij + b^i D_i) phi with a = (sigma sigma^T + rho rho^T) / 2."""
    pts, single = _prep(x, coeffs.d)
    s = coeffs.sigma(t, pts, y_obs)
    r = coeffs.rho(t, pts, y_obs)
    a = 0.5 * (np.einsum("nik,njk->nij", s, s) + np.einsum("nik,njk->nij", r, r))
    val = np.einsum("nij,nij->n", a, phi.hessian(pts)) + np.einsum("ni,ni->n", coeffs.b(t, pts, y_obs), phi.gradient(pts))
    return _out(val, single)


def apply_M(coeffs: CoefficientSet, t, y_obs, k, phi: TestFunction, x):
    """rho^{ik} D_i phi + B^k phi, with ``k`` counted from 1."""
    if not 1 <= k <= coeffs.dprime:
        raise ContractViolation(f"k must be in 1..{coeffs.dprime}, got {k}")
    pts, single = _prep(x, coeffs.d)
    r = coeffs.rho(t, pts, y_obs)[:, :, k - 1]
    val = np.einsum("ni,ni->n", r, phi.gradient(pts)) + coeffs.B(t, pts, y_obs)[:, k - 1] * phi.value(pts)
    return _out(val, single)


def apply_M_all(coeffs: CoefficientSet, t, y_obs, phi: TestFunction, pts):
    """All M^k phi at once: array (n, d')."""
    r = coeffs.rho(t, pts, y_obs)
    return np.einsum("nik,ni->nk", r, phi.gradient(pts)) + coeffs.B(t, pts, y_obs) * phi.value(pts)[:, None]


def apply_tilde_L(coeffs: CoefficientSet, t, x_sig, y_obs, phi: TestFunction, x):
    """L phi + sum_k beta^k M^k phi with beta = B(t, x_sig, y_obs)."""
    pts, single = _prep(x, coeffs.d)
    beta = coeffs.B(t, np.asarray(x_sig, dtype=float).reshape(1, coeffs.d), y_obs)[0]
    val = apply_L(coeffs, t, y_obs, phi, pts) + apply_M_all(coeffs, t, y_obs, phi, pts) @ beta
    return _out(val, single)


# --------------------------------------------------------------------------
# shift maps and the operators T, I, J
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftMap:
    """x -> zeta(x) on R^d with optional analytic Jacobian.

    ``lip`` is a Lipschitz bound for zeta (``inf`` if unknown) and ``lam`` the
    lower biLipschitz constant of x + theta zeta(x).
    """

    dim: int
    zeta: Callable
    jacobian: Optional[Callable] = None
    lip: float = math.inf
    lam: float = 1.0

    def __call__(self, x):
        return np.asarray(self.zeta(x), dtype=float)

    def jac(self, x):
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return fd_jacobian(self.zeta, x)

    def tau(self, x):
        return x + self(x)

    @classmethod
    def constant(cls, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        d = c.size
        return cls(d, lambda x: np.broadcast_to(c, (np.shape(x)[0], d)).copy(), lambda x: np.zeros((np.shape(x)[0], d, d)), 0.0, 1.0)

    @classmethod
    def linear(cls, A, c=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[0]
        c = np.zeros(d) if c is None else np.asarray(c, dtype=float)
        lip = float(np.linalg.norm(A, 2))
        return cls(d, lambda x: x @ A.T + c, lambda x: np.broadcast_to(A, (np.shape(x)[0], d, d)).copy(), lip, max(0.0, 1.0 - lip))

    @classmethod
    def zero(cls, d):
        return cls.constant(np.zeros(d))


def fd_jacobian(f, x, rel_step=FD_REL_STEP):
    """Central-difference Jacobian, step ``rel_step * (1 + |x|)``: (n, d, d)."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    h = rel_step * (1.0 + np.linalg.norm(x, axis=1))
    J = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros((n, d))
        e[:, j] = h
        J[:, :, j] = (f(x + e) - f(x - e)) / (2.0 * h[:, None])
    return J


def _shift_fn(shift):
    return shift if isinstance(shift, ShiftMap) else (lambda x: np.asarray(shift(x), dtype=float))


def apply_T(shift, phi: TestFunction, x):
    pts, single = _prep(x, phi.dim)
    return _out(phi.value(pts + _shift_fn(shift)(pts)), single)


def apply_I(shift, phi: TestFunction, x):
    pts, single = _prep(x, phi.dim)
    return _out(phi.value(pts + _shift_fn(shift)(pts)) - phi.value(pts), single)


def apply_J(shift, phi: TestFunction, x):
    pts, single = _prep(x, phi.dim)
    z = _shift_fn(shift)(pts)
    val = phi.value(pts + z) - phi.value(pts) - np.einsum("ni,ni->n", z, phi.gradient(pts))
    return _out(val, single)


# --------------------------------------------------------------------------
# inversion of tau = id + zeta
# --------------------------------------------------------------------------


@dataclass
class InvertInfo:
    iterations: int
    residual: float
    method: str
    rates: list


def invert_shift(shift: ShiftMap, y, tol=1e-12, max_iter=MAX_INVERT_ITER, return_info=False):
    """Solve x + zeta(x) = y.

    With ``shift.lip < 1`` the contraction x <- y - zeta(x) is iterated; if its
    observed rate predicts more iterations than remain, the iterate is handed
    to damped Newton.  Otherwise damped Newton is used from the start.
    """
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    pts, single = _prep(y, shift.dim)
    x = pts.copy()
    res = np.linalg.norm(x + shift(x) - pts, axis=1)
    it = 0
    rates = []
    method = "fixed-point" if shift.lip < 1 else "newton"
    if method == "fixed-point":
        prev_step = None
        while it < max_iter and np.max(res, initial=0.0) > tol:
            x_new = pts - shift(x)
            step = float(np.max(np.linalg.norm(x_new - x, axis=1)))
            x = x_new
            it += 1
            res = np.linalg.norm(x + shift(x) - pts, axis=1)
            if prev_step:
                rates.append(step / prev_step)
            prev_step = step
            if len(rates) >= 3 and rates[-1] > 0 and np.max(res) > tol:
                r = min(rates[-1], 1 - 1e-12)
                need = math.log(tol / np.max(res)) / math.log(r) if r > 0 else 0
                if need > max_iter - it:
                    method = "fixed-point+newton"
                    break
    if method != "fixed-point":
        while it < max_iter and np.max(res, initial=0.0) > tol:
            act = res > tol
            xa, ya = x[act], pts[act]
            F = xa + shift(xa) - ya
            Jm = np.eye(shift.dim)[None] + shift.jac(xa)
            try:
                dx = np.linalg.solve(Jm, F[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("singular Jacobian in Newton inversion", residual=float(np.max(res))) from exc
            old = res[act]
            t = np.ones(xa.shape[0])
            cand = xa - dx
            cres = np.linalg.norm(cand + shift(cand) - ya, axis=1)
            for _ in range(30):
                bad = cres > old * (1 - 1e-4 * t)
                bad &= cres > tol
                if not np.any(bad):
                    break
                t[bad] *= 0.5
                cand[bad] = xa[bad] - t[bad, None] * dx[bad]
                cres[bad] = np.linalg.norm(cand[bad] + shift(cand[bad]) - ya[bad], axis=1)
            x[act] = cand
            res[act] = cres
            it += 1
    final = float(np.max(res, initial=0.0))
    if not final <= tol:
        raise NumericalFailure(
            f"invert_shift did not converge in {max_iter} iterations", residual=final, iterations=it
        )
    out = x[0] if single else x
    if return_info:
        return out, InvertInfo(it, final, method, rates)
    return out


def zeta_star(shift: ShiftMap, x, tol=1e-12):
    """zeta*(x) = -zeta(tau^{-1}(x)), cross-checked against -x + tau^{-1}(x)."""
    pts, single = _prep(x, shift.dim)
    xinv = invert_shift(shift, pts, tol)
    a = -shift(xinv)
    b = xinv - pts
    gap = float(np.max(np.abs(a - b), initial=0.0))
    if gap > tol + 1e-15 * (1.0 + float(np.max(np.abs(pts), initial=0.0))):
        raise NumericalFailure("zeta* formulas disagree", gap=gap)
    return a[0] if single else a


def _inverse_data(shift, pts, tol):
    xinv = invert_shift(shift, pts, tol)
    Dtau = np.eye(shift.dim)[None] + shift.jac(xinv)
    det = np.linalg.det(Dtau)
    if np.any(np.abs(det) < 1e-12):
        raise NumericalFailure("singular Jacobian of tau", min_abs_det=float(np.min(np.abs(det))))
    if np.any(det <= 0):
        raise NumericalFailure("tau reverses orientation", min_det=float(np.min(det)))
    Dinv = np.linalg.inv(Dtau)
    c = 1.0 / det - 1.0
    dzs = Dinv - np.eye(shift.dim)[None]  # D zeta*
    cbar = c - np.trace(dzs, axis1=1, axis2=2)
    return xinv, c, cbar, dzs


def frak_c(shift: ShiftMap, x, tol=1e-12):
    """(c, c_bar) with c = |det D tau^{-1}| - 1 and c_bar = c - div zeta*."""
    pts, single = _prep(x, shift.dim)
    _, c, cbar, _ = _inverse_data(shift, pts, tol)
    if single:
        return float(c[0]), float(cbar[0])
    return c, cbar


def adjoint_apply(shift: ShiftMap, which, phi: TestFunction, x, tol=1e-12):
    """Formal L2 adjoint of T, I or J (``which`` in {"T*", "I*", "J*"})."""
    if which not in ("T*", "I*", "J*"):
        raise ContractViolation(f"which must be T*, I* or J*, got {which!r}")
    pts, single = _prep(x, phi.dim)
    xinv, c, cbar, dzs = _inverse_data(shift, pts, tol)
    zs = -shift(xinv)
    shifted = phi.value(pts + zs)
    base = phi.value(pts)
    if which == "T*":
        val = (1.0 + c) * shifted
    elif which == "I*":
        val = shifted - base + c * shifted
    else:
        grad = phi.gradient(pts)
        s = zs + shift(pts)
        div = np.trace(dzs, axis1=1, axis2=2) + np.trace(shift.jac(pts), axis1=1, axis2=2)
        j_star = shifted - base - np.einsum("ni,ni->n", zs, grad)
        val = j_star + c * (shifted - base) + np.einsum("ni,ni->n", s, grad) + (cbar + div) * base
    return _out(val, single)


# --------------------------------------------------------------------------
# duality checks
# --------------------------------------------------------------------------

_FORWARD = {"T*": apply_T, "I*": apply_I, "J*": apply_J}


@dataclass
class DualityRecord:
    which: str
    dim: int
    lhs: float  # int phi (A psi) dx
    rhs: float  # int (A* phi) psi dx
    rel_error: float
    label: str = ""

    def to_dict(self):
        return {"which": self.which, "dim": self.dim, "lhs": self.lhs, "rhs": self.rhs,
                "rel_error": self.rel_error, "label": self.label}


def duality_check(shift: ShiftMap, which, phi: TestFunction, psi: TestFunction, box_phi, box_psi,
                  tol=1e-11, label=""):
    """Compare int phi (A psi) dx with int (A* phi) psi dx, A in {T, I, J}.

    ``box_phi`` and ``box_psi`` are (lo, hi) boxes containing the supports of
    phi and psi; each side is integrated over the support of its
    untransformed factor.  The relative error uses the floor
    ``1e-3 |phi|_2 |psi|_2`` so that near-zero pairings are not inflated.
    """
    fwd = _FORWARD[which]
    scale = max(float(np.max(np.abs(np.subtract(*box_phi[::-1])))), 1.0)
    lhs = box_quadrature(lambda x: phi.value(x) * fwd(shift, psi, x), *box_phi, scale / 8, tol)
    rhs = box_quadrature(lambda x: adjoint_apply(shift, which, phi, x) * psi.value(x), *box_psi, scale / 8, tol)
    n_phi = math.sqrt(box_quadrature(lambda x: phi.value(x) ** 2, *box_phi, scale / 8, tol))
    n_psi = math.sqrt(box_quadrature(lambda x: psi.value(x) ** 2, *box_psi, scale / 8, tol))
    denom = max(abs(lhs), abs(rhs), 1e-3 * n_phi * n_psi)
    return DualityRecord(which, shift.dim, lhs, rhs, abs(lhs - rhs) / denom, label)


def random_shift(d, rng, max_lip=0.6):
    """zeta(x) = a + A sin(W x + c) with Lipschitz constant at most ``max_lip``."""
    a = rng.uniform(-0.5, 0.5, d)
    W = rng.uniform(-1.5, 1.5, (d, d))
    A = rng.uniform(-1.0, 1.0, (d, d))
    c = rng.uniform(0, 2 * np.pi, d)
    lip_raw = np.linalg.norm(A, 2) * np.linalg.norm(W, 2)
    A *= rng.uniform(0.2, 1.0) * max_lip / max(lip_raw, 1e-12)
    lip = float(np.linalg.norm(A, 2) * np.linalg.norm(W, 2))

    def zeta(x):
        return a + np.sin(x @ W.T + c) @ A.T

    def jac(x):
        return np.einsum("ik,nk,kj->nij", A, np.cos(x @ W.T + c), W)

    return ShiftMap(d, zeta, jac, lip, 1.0 - lip)


def random_bump(d, rng, cut=12.0):
    """Gaussian bump and the box center +- cut * scale outside which it is below e^{-cut^2/2}."""
    center = rng.uniform(-1.0, 1.0, d)
    scale = rng.uniform(0.3, 0.8)
    return gaussian_bump(center, scale, rng.uniform(0.5, 2.0)), (center - cut * scale, center + cut * scale)


def duality_suite(n_triples=50, seed=0, dims=(1, 2), ops=("T*", "I*", "J*")):
    """Random (zeta, phi, psi) triples, cycling through ``dims``."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_triples):
        d = dims[k % len(dims)]
        shift = random_shift(d, rng)
        phi, box_phi = random_bump(d, rng)
        psi, box_psi = random_bump(d, rng)
        for which in ops:
            out.append(duality_check(shift, which, phi, psi, box_phi, box_psi, label=f"triple{k}"))
    return out


def analytic_half_shift(points=None):
    """zeta(x) = x / 2 in d = 1: zeta* = -x/3, c = -1/3, c_bar = 0.  Returns max deviations."""
    x = np.linspace(-5.0, 5.0, 41)[:, None] if points is None else np.asarray(points, dtype=float).reshape(-1, 1)
    shift = ShiftMap.linear([[0.5]])
    zs = zeta_star(shift, x)[:, 0]
    c, cbar = frak_c(shift, x)
    return {
        "zeta_star": float(np.max(np.abs(zs + x[:, 0] / 3.0))),
        "c": float(np.max(np.abs(c + 1.0 / 3.0))),
        "c_bar": float(np.max(np.abs(cbar))),
    }
