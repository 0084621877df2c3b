"""Finite-difference reference solver for the unnormalized filter density in
one dimension (d = d' = 1, rho = 0).

Each observation step applies, in order:

1. a backward-Euler step of the forward (Fokker-Planck) operator with drift
   b - int eta nu0 - int xi nu1 and diffusion sigma^2 / 2, using
   exponentially fitted (Scharfetter-Gummel) fluxes and absorbing ends;
2. the multiplicative factor exp(B dV~ - B^2 dt / 2);
3. the private-jump term dt * rate0 * (sum_q w_q push_q(u) - u);
4. at a shared jump, the push-forward u(tau^{-1} x) / |tau'(tau^{-1} x)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from .errors import ContractViolation, NumericalFailure
from .operators import CoefficientSet, ShiftMap, invert_shift

_RHO_CHECK = np.linspace(-5.0, 5.0, 11)[:, None]


@dataclass
class GridSolution:
    x: np.ndarray
    times: np.ndarray  # recorded times
    u: np.ndarray  # (n_records, nx)
    mass: np.ndarray  # int u dx at every observation time

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    def normalized(self, i=-1):
        ui = self.u[i]
        return ui / (ui.sum() * self.h)


def _bernoulli_flux(a_f, c):
    """Return (a B(-c/a), a B(c/a)) with B(s) = s / (e^s - 1), stable as a -> 0."""
    left = np.empty_like(c)
    right = np.empty_like(c)
    pos = a_f > 1e-14 * np.maximum(1.0, np.abs(c))
    s = np.where(pos, c / np.where(pos, a_f, 1.0), 0.0)
    small = np.abs(s) < 1e-8
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        lb = np.where(small, a_f * (1 + 0.5 * s), c / -np.expm1(-s))
        rb = np.where(small, a_f * (1 - 0.5 * s), c / np.expm1(s))
    lb = np.where(np.isfinite(lb), lb, np.maximum(c, 0.0))
    rb = np.where(np.isfinite(rb), rb, np.maximum(-c, 0.0))
    left[:] = np.where(pos, lb, np.maximum(c, 0.0))
    right[:] = np.where(pos, rb, np.maximum(-c, 0.0))
    return left, right


def _fp_matrix(x, h, drift, a):
    """Banded (3, nx) matrix of dt-free operator A with du/dt = A u.

    Flux F_{i+1/2} = (1/h)[l_i u_i - r_i u_{i+1}], du_i/dt = -(F_{i+1/2} - F_{i-1/2}) / h,
    with u = 0 outside the grid.
    """
    nx = x.size
    # face values at i+1/2 for i = -1..nx-1 (nx + 1 faces, ghost nodes outside)
    ae = np.concatenate([[a[0]], a, [a[-1]]])
    de = np.concatenate([[drift[0]], drift, [drift[-1]]])
    da = np.gradient(ae, h)
    bt = de - da
    bf = 0.5 * (bt[:-1] + bt[1:])
    af = 0.5 * (ae[:-1] + ae[1:])
    lf, rf = _bernoulli_flux(af, bf * h)
    lf /= h
    rf /= h
    # face j sits between extended nodes j and j+1, i.e. grid nodes j-1 and j
    ab = np.zeros((3, nx))
    # du_i/dt = (l_{i-1/2} u_{i-1} - r_{i-1/2} u_i - l_{i+1/2} u_i + r_{i+1/2} u_{i+1}) / h
    L_in, R_in = lf[:-1], rf[:-1]  # face i-1/2
    L_out, R_out = lf[1:], rf[1:]  # face i+1/2
    ab[1] = -(R_in + L_out) / h
    ab[0, 1:] = R_out[:-1] / h  # coefficient of u_{i+1} in row i
    ab[2, :-1] = L_in[1:] / h  # coefficient of u_{i-1} in row i
    return ab


def _push_forward(u, x, shift: ShiftMap, tol=1e-11):
    """Density of the image of u dx under x -> x + zeta(x), linearly interpolated."""
    h = x[1] - x[0]
    xinv = invert_shift(shift, x[:, None], tol)
    Dt = 1.0 + shift.jac(xinv)[:, 0, 0]
    if np.any(Dt <= 0):
        raise NumericalFailure("shift reverses orientation on the grid")
    new = np.interp(xinv[:, 0], x, u, left=0.0, right=0.0) / Dt
    # mass that should stay on the grid
    dest = x + shift(x[:, None])[:, 0]
    inside = (dest >= x[0]) & (dest <= x[-1])
    target = float(np.sum(u[inside])) * h
    have = float(np.sum(new)) * h
    if have > 0 and target > 0:
        new *= target / have
    return new


def reference_grid_solver(coeffs: CoefficientSet, obs, x_grid, pi0_grid, record_steps=None, substeps=1):
    """Unnormalized filter density on a uniform grid along an observation record."""
    if coeffs.d != 1 or coeffs.dprime != 1:
        raise ContractViolation("the grid solver handles d = d' = 1 only")
    if np.any(coeffs.rho(0.0, _RHO_CHECK, obs.Y[0]) != 0):
        raise ContractViolation("the grid solver requires rho = 0")
    x = np.asarray(x_grid, dtype=float).ravel()
    h = x[1] - x[0]
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=0):
        raise ContractViolation("x_grid must be uniform")
    u = np.asarray(pi0_grid, dtype=float).ravel().copy()
    if u.shape != x.shape:
        raise ContractViolation("pi0_grid must match x_grid")
    X = x[:, None]
    dV = obs.innovation_increments(coeffs)[:, 0]
    n = obs.n_steps
    rec = set(range(n + 1)) if record_steps is None else set(int(s) % (n + 1) for s in record_steps)
    out_t, out_u = [], []
    mass = np.empty(n + 1)
    mass[0] = u.sum() * h
    if 0 in rec:
        out_t.append(obs.times[0])
        out_u.append(u.copy())
    for k in range(n):
        t = obs.times[k]
        dt = obs.times[k + 1] - t
        y = obs.Y[k]
        if coeffs.nu0 is not None and coeffs.nu0.rate * dt > 0.5:
            raise NumericalFailure("explicit private-jump step too large", rate_dt=coeffs.nu0.rate * dt)
        drift = (coeffs.b(t, X, y) - coeffs.eta_compensator(t, X, y) - coeffs.xi_compensator(t, X, y))[:, 0]
        a = 0.5 * coeffs.sigma(t, X, y)[:, 0, 0] ** 2
        ab = _fp_matrix(x, h, drift, a)
        sub = dt / substeps
        ab_sys = -sub * ab
        ab_sys[1] += 1.0
        for _ in range(substeps):
            u = solve_banded((1, 1), ab_sys, u)
        if coeffs.nu0 is not None:
            jump = np.zeros_like(u)
            ym = obs.y_minus(k + 1)
            for z, q in zip(coeffs.nu0.nodes, coeffs.nu0.node_weights):
                jump += q * _push_forward(u, x, coeffs.eta_shift(t, ym, z))
            u = u + dt * coeffs.nu0.rate * (jump - u)
        B = coeffs.B(t, X, y)[:, 0]
        u = u * np.exp(B * dV[k] - 0.5 * B * B * dt)
        z = obs.jump_at(k + 1)
        if z is not None:
            u = _push_forward(u, x, coeffs.xi_shift(obs.times[k + 1], obs.y_minus(k + 1), z))
        if not np.all(np.isfinite(u)) or np.any(u < -1e-12 * np.max(np.abs(u))):
            raise NumericalFailure("grid solution lost positivity or finiteness", step=k)
        mass[k + 1] = u.sum() * h
        if k + 1 in rec:
            out_t.append(obs.times[k + 1])
            out_u.append(u.copy())
    return GridSolution(x, np.array(out_t), np.array(out_u), mass)


def l1_distance(x, f, g):
    """Trapezoid L1 distance of two densities on a uniform grid."""
    return float(trapezoid(np.abs(f - g), x))
