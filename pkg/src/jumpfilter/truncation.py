"""Smooth cutoffs: chi_n truncation, the logarithmic cutoff kappa^R_eps, and
biLipschitz-preserving truncation of shift maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .operators import ShiftMap
from .measure import _as_points

_BUMP_ORDER = 32
_MAX_LOG = 700.0  # beyond this exp(1/eps) overflows


def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi(r):
    """C^infinity cutoff: 1 on |r| <= 1, 0 on |r| >= 2, |chi'| <= 2."""
    a = np.abs(np.asarray(r, dtype=float))
    u = _h(2.0 - a)
    v = _h(a - 1.0)
    out = u / (u + v)
    out = np.where(a <= 1.0, 1.0, np.where(a >= 2.0, 0.0, out))
    return float(out) if out.ndim == 0 else out


def truncate_chi(f, n):
    """z -> chi(|z|/n) f(z), exact on |z| <= n and exactly 0 on |z| >= 2n."""
    if not n > 0:
        raise ContractViolation("n must be positive")

    def fn(z):
        z = np.asarray(z, dtype=float)
        zz = z.reshape(1, -1) if z.ndim == 1 else z
        val = np.asarray(f(zz), dtype=float)
        r = np.linalg.norm(zz, axis=1) / n
        c = np.asarray(chi(r)).reshape(-1, *([1] * (val.ndim - 1)))
        out = np.where(r.reshape(c.shape) <= 1.0, val, np.where(r.reshape(c.shape) >= 2.0, 0.0, c * val))
        return out[0] if z.ndim == 1 else out

    return fn


# --------------------------------------------------------------------------
# compact bump and the logarithmic cutoff
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def bump_quadrature(d):
    """Nodes u_q in the unit ball and weights summing to 1 for the normalized
    bump exp(-1/(1-|u|^2)), from a 32-point Gauss-Legendre rule per axis."""
    x, w = np.polynomial.legendre.leggauss(_BUMP_ORDER)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wts = w
    for _ in range(d - 1):
        wts = np.multiply.outer(wts, w)
    r2 = np.sum(nodes**2, axis=1)
    inside = r2 < 1.0
    vals = np.zeros_like(r2)
    vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    wq = wts.ravel() * vals
    keep = wq > 0
    nodes, wq = nodes[keep], wq[keep] / wq[keep].sum()
    nodes.setflags(write=False)
    wq.setflags(write=False)
    return nodes, wq


def outer_radius(R, eps_cut):
    """(R + 1) e^{1/eps}: where the uncut profile reaches 0."""
    if 1.0 / eps_cut > _MAX_LOG:
        return math.inf
    return (R + 1.0) * math.exp(1.0 / eps_cut)


def _phi_profile(r, R, eps_cut):
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    mid = r > R + 1.0
    with np.errstate(divide="ignore"):
        out[mid] = np.maximum(0.0, 1.0 + eps_cut * np.log((R + 1.0) / r[mid]))
    return out


def _phi_grad(y, R, eps_cut):
    r = np.linalg.norm(y, axis=-1)
    g = np.zeros_like(y)
    act = (r > R + 1.0) & (r < outer_radius(R, eps_cut))
    g[act] = -eps_cut * y[act] / (r[act] ** 2)[:, None]
    return g


def _kappa_and_grad(pts, R, eps_cut, want_grad=False):
    n, d = pts.shape
    nodes, wq = bump_quadrature(d)
    r = np.linalg.norm(pts, axis=1)
    val = np.zeros(n)
    grad = np.zeros((n, d))
    inner = r <= R
    outer = r >= outer_radius(R, eps_cut) + 1.0
    val[inner] = 1.0
    mid = ~(inner | outer)
    rows = max(1, (1 << 20) // nodes.shape[0])
    idx = np.flatnonzero(mid)
    for s in range(0, idx.size, rows):
        sel = idx[s : s + rows]
        y = pts[sel, None, :] - nodes[None, :, :]
        val[sel] = _phi_profile(np.linalg.norm(y, axis=2), R, eps_cut) @ wq
        if want_grad:
            grad[sel] = np.einsum("nqi,q->ni", _phi_grad(y, R, eps_cut), wq)
    return val, grad


def kappa_R_eps(x, R, eps_cut, dim=None):
    """Mollified logarithmic cutoff kappa^R_eps = phi^R_eps * bump.

    ``phi`` is 1 on |x| <= R + 1, 1 + eps log((R+1)/|x|) further out and 0
    beyond (R+1) e^{1/eps}; the bump has support in the unit ball.
    """
    if not (R > 0 and eps_cut > 0):
        raise ContractViolation("R and eps_cut must be positive")
    arr = np.asarray(x, dtype=float)
    if dim is None:
        dim = 1 if arr.ndim == 0 else arr.shape[-1]
    pts, single = _as_points(arr, dim)
    val, _ = _kappa_and_grad(pts, R, eps_cut)
    return float(val[0]) if single else val


def kappa_lipschitz_bound(x, y, R, eps_cut):
    """eps |x - y| / max(R, min(|x|, |y|) - 1), the bound of the cutoff."""
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    return eps_cut * np.linalg.norm(x - y, axis=-1) / np.maximum(R, np.minimum(nx, ny) - 1.0)


# --------------------------------------------------------------------------
# biLipschitz truncation
# --------------------------------------------------------------------------


def sample_pairs(d, n_pairs, r_max, seed=0):
    """Point pairs spread over radii up to ``r_max`` (log-uniform) with
    separations from 1e-4 to 10 times (1 + |x|)."""
    rng = np.random.default_rng(seed)
    hi = math.log(min(max(r_max, 2.0), 1e150))
    rad = np.exp(rng.uniform(math.log(1e-2), hi, n_pairs))
    dirs = rng.standard_normal((n_pairs, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    x = rad[:, None] * dirs
    sep = np.exp(rng.uniform(math.log(1e-4), math.log(10.0), n_pairs)) * (1.0 + rad)
    u = rng.standard_normal((n_pairs, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = x + sep[:, None] * u
    return x, y


def bilipschitz_constant(f, x, y):
    """max(sup ratio, 1 / inf ratio) of |f(x) - f(y)| / |x - y| over pairs."""
    ratio = np.linalg.norm(f(x) - f(y), axis=1) / np.linalg.norm(x - y, axis=1)
    lo = float(np.min(ratio))
    return max(float(np.max(ratio)), math.inf if lo == 0 else 1.0 / lo)


THETAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def _family_constant(zx, zy, x, y):
    dist = np.linalg.norm(x - y, axis=1)
    worst = 1.0
    for th in THETAS:
        ratio = np.linalg.norm(x - y + th * (zx - zy), axis=1) / dist
        lo = float(np.min(ratio))
        worst = max(worst, float(np.max(ratio)), math.inf if lo == 0 else 1.0 / lo)
    return worst


@dataclass(frozen=True)
class TruncatedShift:
    shift: ShiftMap
    eps_cut: float
    R: float
    R_bar: float
    constant: float  # sampled biLipschitz constant of x + theta zeta^R
    base_constant: float


def _truncated_map(shift, R, eps_cut):
    def zeta(x):
        k, _ = _kappa_and_grad(x, R, eps_cut)
        return k[:, None] * shift(x)

    def jac(x):
        k, g = _kappa_and_grad(x, R, eps_cut, want_grad=True)
        return k[:, None, None] * shift.jac(x) + np.einsum("ni,nj->nij", shift(x), g)

    return ShiftMap(shift.dim, zeta, jac, shift.lip, shift.lam)


def bilipschitz_truncate(shift: ShiftMap, R, M, n_pairs=10_000, seed=0, max_steps=60):
    """Return zeta^R = kappa^R_eps zeta with x + theta zeta^R M-biLipschitz.

    The cut parameter eps is chosen by bisection in log scale: the largest
    eps (smallest support) whose sampled constant stays within ``M``.
    """
    if not (R > 0 and M > 1):
        raise ContractViolation("need R > 0 and M > 1")
    d = shift.dim
    x0, y0 = sample_pairs(d, n_pairs, 4.0 * (R + 2.0), seed)
    base = _family_constant(shift(x0), shift(y0), x0, y0)
    if not base < M:
        raise ContractViolation(f"x + theta zeta is only {base:.4g}-biLipschitz, need < M = {M}")

    def constant(eps_cut):
        x, y = sample_pairs(d, n_pairs, outer_radius(R, eps_cut) + 2.0, seed)
        tr = _truncated_map(shift, R, eps_cut)
        return _family_constant(tr(x), tr(y), x, y)

    lo, hi = 1.0 / _MAX_LOG, 1.0
    c_hi = constant(hi)
    if c_hi <= M:
        best, best_c = hi, c_hi
    else:
        c_lo = constant(lo)
        if c_lo > M:
            raise NumericalFailure("no admissible cut parameter", constant=c_lo, M=M)
        best, best_c = lo, c_lo
        for _ in range(max_steps):
            if hi / lo < 1.0 + 1e-3:
                break
            mid = math.sqrt(lo * hi)
            c_mid = constant(mid)
            if c_mid <= M:
                lo, best, best_c = mid, mid, c_mid
            else:
                hi = mid
        else:
            if hi / lo >= 1.0 + 1e-3:
                raise NumericalFailure("bisection did not converge", lo=lo, hi=hi)
    tr = _truncated_map(shift, R, best)
    return TruncatedShift(tr, best, R, outer_radius(R, best) + 1.0, best_c, base)


def mollified_det_check(shift: ShiftMap, eps_list, grid, lam=None):
    """min over ``grid`` of |det (D tau)^(eps)| for each eps, with D tau
    averaged against the compact bump scaled to radius eps."""
    pts, _ = _as_points(grid, shift.dim)
    d = shift.dim
    eye = np.eye(d)[None]
    raw = float(np.min(np.abs(np.linalg.det(eye + shift.jac(pts)))))
    lam = raw if lam is None else lam
    nodes, wq = bump_quadrature(d)
    out = {"lambda": lam, "raw_min_det": raw, "eps": [], "min_det": [], "violated": []}
    for eps in eps_list:
        acc = np.zeros((pts.shape[0], d, d))
        for u, w in zip(nodes, wq):
            acc += w * shift.jac(pts - eps * u)
        m = float(np.min(np.abs(np.linalg.det(eye + acc))))
        out["eps"].append(float(eps))
        out["min_det"].append(m)
        out["violated"].append(bool(m < lam / 2))
    return out
