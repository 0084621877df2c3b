"""Finite signed measures as weighted atoms, Gaussian mollification and the
closed-form calculus of products of Gaussian kernels.

Every quantity here is exact on atoms: the mollified density is a finite sum
of Gaussians, and integrals of products of ``p`` mollified densities reduce
to sums over ``p``-tuples of atoms weighted by :func:`rho_eps`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import BudgetExceeded, ContractViolation, NumericalFailure, UnsupportedDimension

EXACT_SUM_BUDGET = 10**7
QUAD_BOX_HALFWIDTH = 10.0  # in units of sqrt(eps)
_CHUNK = 1 << 15


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticleMeasure:
    """Finite signed measure ``sum_i w_i delta_{y_i}`` on R^d.

    ``locations`` has shape (m, d) and ``weights`` shape (m,).  Both arrays
    are copied and frozen on construction.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float, copy=True)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if loc.ndim == 1:
            loc = loc.reshape(-1, 1) if w.size != 1 else loc.reshape(1, -1)
        if loc.ndim != 2 or loc.shape[1] < 1:
            raise ContractViolation(f"locations must have shape (m, d), got {loc.shape}")
        if loc.shape[0] != w.shape[0]:
            raise ContractViolation(
                f"{loc.shape[0]} locations but {w.shape[0]} weights"
            )
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(w))):
            raise ContractViolation("atom locations and weights must be finite")
        loc.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_atoms(cls, atoms, dim=None):
        """Build from an iterable of ``(location, weight)`` pairs."""
        atoms = list(atoms)
        if not atoms:
            if dim is None:
                raise ContractViolation("dimension required for an empty atom list")
            return cls.empty(dim)
        loc = np.array([np.atleast_1d(np.asarray(a[0], dtype=float)) for a in atoms])
        w = np.array([float(a[1]) for a in atoms])
        if dim is not None and loc.shape[1] != dim:
            raise ContractViolation(f"atoms have dimension {loc.shape[1]}, expected {dim}")
        return cls(loc, w)

    @property
    def dim(self):
        return self.locations.shape[1]

    @property
    def size(self):
        return self.weights.shape[0]

    def __len__(self):
        return self.size

    def total_variation(self):
        return float(np.sum(np.abs(self.weights)))

    def mass(self):
        """mu(1)."""
        return float(np.sum(self.weights))

    def abs(self):
        """The total variation measure |mu|."""
        return ParticleMeasure(self.locations, np.abs(self.weights))

    def scaled(self, c):
        return ParticleMeasure(self.locations, c * self.weights)

    def integrate(self, phi):
        """mu(phi) for a vectorized ``phi`` mapping (m, d) -> (m,)."""
        if self.size == 0:
            return 0.0
        return float(np.dot(self.weights, np.asarray(phi(self.locations), dtype=float)))

    def pushforward(self, shift):
        """Image under ``y -> y + shift(y)``; atoms move, weights are kept."""
        if self.size == 0:
            return self
        return ParticleMeasure(self.locations + shift(self.locations), self.weights)

    def second_moment(self):
        """int |x|^2 |mu|(dx)."""
        return float(np.dot(np.abs(self.weights), np.sum(self.locations**2, axis=1)))

    def to_csv(self, path):
        header = ",".join([f"x_{i + 1}" for i in range(self.dim)] + ["w"])
        data = np.column_stack([self.locations, self.weights])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if not header or header[-1] != "w":
            raise ContractViolation(f"{path}: last column must be 'w'")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        dim = len(header) - 1
        if data.size == 0:
            return cls.empty(dim)
        return cls(data[:, :dim], data[:, dim])


def _as_points(x, dim):
    """Return ``(points (n, d), was_single)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            if dim == 1:
                return arr.reshape(-1, 1), False
            raise ContractViolation(f"point has dimension {arr.shape[0]}, expected {dim}")
        return arr.reshape(1, dim), True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ContractViolation(f"points must have shape (n, {dim}), got {arr.shape}")
    return arr, False


# --------------------------------------------------------------------------
# Gaussian kernel
# --------------------------------------------------------------------------


def gaussian_density(x, eps):
    """k_eps(x) for points of shape (..., d): density of N(0, eps I)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    return (2.0 * math.pi * eps) ** (-0.5 * d) * np.exp(-np.sum(x * x, axis=-1) / (2.0 * eps))


@dataclass(frozen=True)
class GaussianKernel:
    """The centred Gaussian density with covariance ``epsilon * I`` on R^dim."""

    epsilon: float
    dim: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractViolation(f"epsilon must be positive, got {self.epsilon}")
        if self.dim < 1:
            raise ContractViolation("dim must be a positive integer")

    def __call__(self, x):
        return gaussian_density(x, self.epsilon)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return -(x / self.epsilon) * gaussian_density(x, self.epsilon)[..., None]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        k = gaussian_density(x, self.epsilon)[..., None, None]
        outer = x[..., :, None] * x[..., None, :] / self.epsilon**2
        return (outer - np.eye(self.dim) / self.epsilon) * k


# --------------------------------------------------------------------------
# test functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """A C^2 function with analytic gradient and Hessian.

    All three callables are vectorized: points of shape (n, d) map to
    shapes (n,), (n, d) and (n, d, d).
    """

    __test__ = False  # keep pytest from collecting this class

    value: Callable
    gradient: Callable
    hessian: Callable
    dim: int
    support_radius: float = math.inf
    name: str = field(default="phi", compare=False)

    def __add__(self, other):
        return TestFunction(
            lambda x: self.value(x) + other.value(x),
            lambda x: self.gradient(x) + other.gradient(x),
            lambda x: self.hessian(x) + other.hessian(x),
            self.dim,
            max(self.support_radius, other.support_radius),
            f"({self.name}+{other.name})",
        )

    def check_derivatives(self, points, rtol=1e-5):
        """Largest relative deviation of gradient/Hessian from central differences."""
        pts, _ = _as_points(points, self.dim)
        worst = 0.0
        for x in pts:
            h = 1e-5 * (1.0 + np.linalg.norm(x))
            g = self.gradient(x[None])[0]
            hs = self.hessian(x[None])[0]
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = h
                fd_g = (self.value((x + e)[None])[0] - self.value((x - e)[None])[0]) / (2 * h)
                fd_h = (self.gradient((x + e)[None])[0] - self.gradient((x - e)[None])[0]) / (2 * h)
                scale_g = max(1.0, abs(g[i]))
                scale_h = max(1.0, np.max(np.abs(hs[i])))
                worst = max(worst, abs(fd_g - g[i]) / scale_g, np.max(np.abs(fd_h - hs[i])) / scale_h)
        return worst


def constant_function(c, dim):
    return TestFunction(
        lambda x: np.full(np.shape(x)[0], float(c)),
        lambda x: np.zeros((np.shape(x)[0], dim)),
        lambda x: np.zeros((np.shape(x)[0], dim, dim)),
        dim,
        math.inf,
        f"const({c})",
    )


def linear_function(a, c=0.0):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    dim = a.shape[0]
    return TestFunction(
        lambda x: np.asarray(x) @ a + c,
        lambda x: np.broadcast_to(a, (np.shape(x)[0], dim)).copy(),
        lambda x: np.zeros((np.shape(x)[0], dim, dim)),
        dim,
        math.inf,
        "linear",
    )


def quadratic_function(Q, a=None, c=0.0):
    """x -> x.Qx + a.x + c with symmetric Q."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    dim = Q.shape[0]
    a = np.zeros(dim) if a is None else np.atleast_1d(np.asarray(a, dtype=float))
    return TestFunction(
        lambda x: np.einsum("ni,ij,nj->n", x, Q, x) + x @ a + c,
        lambda x: 2.0 * x @ Q + a,
        lambda x: np.broadcast_to(2.0 * Q, (np.shape(x)[0], dim, dim)).copy(),
        dim,
        math.inf,
        "quadratic",
    )


def gaussian_bump(center, scale=1.0, height=1.0):
    """height * exp(-|x - center|^2 / (2 scale^2))."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    dim = c.shape[0]
    s2 = float(scale) ** 2

    def value(x):
        u = np.asarray(x) - c
        return height * np.exp(-np.sum(u * u, axis=-1) / (2 * s2))

    def gradient(x):
        u = np.asarray(x) - c
        return -(u / s2) * value(x)[:, None]

    def hessian(x):
        u = np.asarray(x) - c
        outer = u[:, :, None] * u[:, None, :] / s2**2
        return (outer - np.eye(dim) / s2) * value(x)[:, None, None]

    return TestFunction(value, gradient, hessian, dim, math.inf, "gaussian_bump")


def smooth_bump(center, radius=1.0, height=1.0):
    """Compactly supported C-infinity bump ``height*exp(-1/(1-|x-c|^2/R^2))``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    dim = c.shape[0]
    R2 = float(radius) ** 2

    def _parts(x):
        u = np.asarray(x, dtype=float) - c
        s = np.sum(u * u, axis=-1) / R2
        inside = s < 1.0
        one_minus = np.where(inside, 1.0 - s, 1.0)
        f = np.where(inside, height * np.exp(-1.0 / one_minus), 0.0)
        f_s = np.where(inside, -f / one_minus**2, 0.0)
        f_ss = np.where(inside, f * (2.0 * s - 1.0) / one_minus**4, 0.0)
        return u, f, f_s, f_ss

    def value(x):
        u = np.asarray(x, dtype=float) - c
        s = np.sum(u * u, axis=-1) / R2
        out = np.zeros(s.shape)
        inside = s < 1.0
        out[inside] = height * np.exp(-1.0 / (1.0 - s[inside]))
        return out

    def gradient(x):
        u, _, f_s, _ = _parts(x)
        return f_s[:, None] * 2.0 * u / R2

    def hessian(x):
        u, _, f_s, f_ss = _parts(x)
        ds = 2.0 * u / R2
        return f_ss[:, None, None] * ds[:, :, None] * ds[:, None, :] + f_s[:, None, None] * (
            2.0 / R2
        ) * np.eye(dim)

    return TestFunction(value, gradient, hessian, dim, float(radius), "smooth_bump")


# --------------------------------------------------------------------------
# mollification
# --------------------------------------------------------------------------


def _check_eps(eps):
    if not eps > 0:
        raise ContractViolation(f"eps must be positive, got {eps}")


def mollify(mu: ParticleMeasure, eps: float, x):
    """mu^(eps)(x) = sum_i w_i k_eps(x - y_i).

    ``x`` may be a single point (returns a float) or an (n, d) array.
    """
    _check_eps(eps)
    pts, single = _as_points(x, mu.dim)
    out = np.zeros(pts.shape[0])
    if mu.size:
        rows = max(1, (1 << 21) // mu.size)
        for start in range(0, pts.shape[0], rows):
            block = pts[start : start + rows]
            diff = block[:, None, :] - mu.locations[None, :, :]
            out[start : start + block.shape[0]] = gaussian_density(diff, eps) @ mu.weights
    return float(out[0]) if single else out


def mollify_operator(mu, eps, x, coeff, order):
    """Mollified image of mu under the formal adjoint of a first/second order
    operator acting in the atom variable.

    ``order == 1``: sum_i w_i c(y_i) . grad_y k_eps(x - y_i), with ``coeff``
    mapping (m, d) -> (m, d).
    ``order == 2``: sum_i w_i c(y_i) : hess_y k_eps(x - y_i), with ``coeff``
    mapping (m, d) -> (m, d, d).
    """
    pts, single = _as_points(x, mu.dim)
    if mu.size == 0:
        return 0.0 if single else np.zeros(pts.shape[0])
    c = np.asarray(coeff(mu.locations), dtype=float)
    diff = pts[:, None, :] - mu.locations[None, :, :]  # x - y
    k = gaussian_density(diff, eps)
    if order == 1:
        # grad_y k(x - y) = (x - y)/eps k
        vals = np.einsum("nmi,mi->nm", diff, c) / eps * k
    elif order == 2:
        # hess_y k(x - y) = ((x-y)(x-y)^T/eps^2 - I/eps) k
        quad = np.einsum("nmi,mij,nmj->nm", diff, c, diff) / eps**2
        trace = np.trace(c, axis1=1, axis2=2) / eps
        vals = (quad - trace[None, :]) * k
    else:
        raise ContractViolation("order must be 1 or 2")
    out = vals @ mu.weights
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# product-kernel calculus
# --------------------------------------------------------------------------


def rho_constant(p, eps, d):
    """c_{p,eps} = p^{-d/2} (2 pi eps)^{(1-p) d / 2}."""
    return p ** (-0.5 * d) * (2.0 * math.pi * eps) ** (0.5 * (1 - p) * d)


def _pair_sq_sum(Y):
    """sum_{r<s} |y_r - y_s|^2 for Y of shape (n, p, d)."""
    diff = Y[:, :, None, :] - Y[:, None, :, :]
    return 0.5 * np.sum(diff * diff, axis=(1, 2, 3))


def rho_tuples(Y, eps):
    """rho_eps evaluated on a batch of tuples ``Y`` of shape (n, p, d)."""
    Y = np.asarray(Y, dtype=float)
    _, p, d = Y.shape
    return rho_constant(p, eps, d) * np.exp(-_pair_sq_sum(Y) / (2.0 * eps * p))


def rho_grad_tuples(Y, eps, rho=None):
    """Gradient of rho_eps: array (n, p, d) of d rho / d y_r^i."""
    Y = np.asarray(Y, dtype=float)
    p = Y.shape[1]
    if rho is None:
        rho = rho_tuples(Y, eps)
    # sum_s (y_s - y_r) computed pairwise so coincident points give exact zeros
    pull = np.sum(Y[:, None, :, :] - Y[:, :, None, :], axis=2)
    return pull / (eps * p) * rho[:, None, None]


def rho_hessian_tuples(Y, eps, rho=None):
    """Second derivatives d^2 rho / d y_r^i d y_s^j as array (n, p, d, p, d)."""
    Y = np.asarray(Y, dtype=float)
    n, p, d = Y.shape
    if rho is None:
        rho = rho_tuples(Y, eps)
    pull = np.sum(Y[:, None, :, :] - Y[:, :, None, :], axis=2) / (eps * p)  # (n, p, d)
    outer = pull[:, :, :, None, None] * pull[:, None, None, :, :]
    delta = np.einsum("ij,rs->risj", np.eye(d), np.ones((p, p)) / (eps * p) - np.eye(p) / eps)
    return (outer + delta[None]) * rho[:, None, None, None, None]


def _as_tuple(points):
    Y = np.asarray(points, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise ContractViolation("points must be a list of p locations in R^d")
    return Y


def rho_eps(points, eps):
    """rho_eps(y_1..y_p) = int prod_r k_eps(x - y_r) dx, in closed form."""
    _check_eps(eps)
    Y = _as_tuple(points)
    if Y.shape[0] < 2:
        raise ContractViolation(f"rho_eps needs p >= 2 points, got {Y.shape[0]}")
    return float(rho_tuples(Y[None], eps)[0])


def kernel_convolve(eps_r, eps_s, u, rtol=1e-10):
    """int k_r(u - x) k_s(x) dx by quadrature, checked against k_{r+s}(u).

    The Gaussian factorizes over coordinates, so each axis is a 1-D integral.
    Raises :class:`NumericalFailure` if the semigroup identity is violated by
    more than ``rtol`` relative.
    """
    _check_eps(eps_r)
    _check_eps(eps_s)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    total = eps_r + eps_s
    value = 1.0
    for ui in u:
        # substitute x = u - sqrt(eps_r) z; the integrand is then a Gaussian in
        # z with mean m and standard deviation sd, integrated over +-40 sd
        m = math.sqrt(eps_r) * ui / total
        sd = math.sqrt(eps_s / total)
        f = lambda z: (
            math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            * math.exp(-((ui - math.sqrt(eps_r) * z) ** 2) / (2 * eps_s))
            / math.sqrt(2 * math.pi * eps_s)
        )
        val, _ = integrate.quad(f, m - 40 * sd, m + 40 * sd, points=[m], epsabs=0, epsrel=1e-13, limit=200)
        value *= val
    expected = float(gaussian_density(u, total))
    if abs(value - expected) > rtol * abs(expected):
        raise NumericalFailure(
            "semigroup identity violated", quadrature=value, closed_form=expected
        )
    return value


# --------------------------------------------------------------------------
# exact L_p sums over atom tuples
# --------------------------------------------------------------------------


def iter_tuples(m, p, chunk=_CHUNK):
    """Yield index arrays of shape (n, p) enumerating [0, m)^p lexicographically."""
    total = m**p
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        yield np.stack(np.unravel_index(flat, (m,) * p), axis=1)


def check_budget(m, p, budget=EXACT_SUM_BUDGET):
    work = m**p
    if work > budget:
        raise BudgetExceeded(work, budget)
    return work


def tuple_sum(mu: ParticleMeasure, p, term, budget=EXACT_SUM_BUDGET, chunk=_CHUNK):
    """sum over p-tuples of atoms of w_{i1}...w_{ip} * term(Y, idx).

    ``term`` receives tuples ``Y`` of shape (n, p, d) and the index array
    (n, p) and returns an (n,) array.  Chunks are visited in a fixed order and
    reduced with numpy's pairwise summation, so results are reproducible.
    """
    m = mu.size
    check_budget(m, p, budget)
    if m == 0:
        return 0.0
    partials = []
    for idx in iter_tuples(m, p, chunk):
        Y = mu.locations[idx]
        W = np.prod(mu.weights[idx], axis=1)
        partials.append(np.sum(W * term(Y, idx)))
    return float(np.sum(np.array(partials)))


def _check_even_p(p):
    if int(p) != p or p < 2 or p % 2:
        raise ContractViolation(f"p must be an even integer >= 2, got {p}")
    return int(p)


def lp_norm_exact(mu: ParticleMeasure, eps: float, p: int, budget=EXACT_SUM_BUDGET):
    """|mu^(eps)|_{L_p}^p as the exact sum over p-tuples of atoms against rho_eps."""
    _check_eps(eps)
    p = _check_even_p(p)
    return tuple_sum(mu, p, lambda Y, idx: rho_tuples(Y, eps), budget)


def _gl_panels(a, b, panels, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def lp_norm_quadrature(mu: ParticleMeasure, eps: float, p: float, tol: float = 1e-10):
    """int |mu^(eps)(x)|^p dx by adaptive quadrature over the atoms' box +- 10 sqrt(eps).

    d = 1 uses scipy's adaptive Gauss-Kronrod with breakpoints at the atoms;
    d = 2, 3 use tensor Gauss-Legendre panels refined by doubling until two
    successive estimates agree to ``tol``.
    """
    _check_eps(eps)
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    if p < 1:
        raise ContractViolation(f"p must be >= 1, got {p}")
    d = mu.dim
    if d > 3:
        raise UnsupportedDimension(f"lp_norm_quadrature supports d <= 3, got {d}")
    if mu.size == 0 or not np.any(mu.weights):
        return 0.0
    pad = QUAD_BOX_HALFWIDTH * math.sqrt(eps)
    lo = mu.locations.min(axis=0) - pad
    hi = mu.locations.max(axis=0) + pad

    if d == 1:
        f = lambda t: abs(mollify(mu, eps, np.array([t]))) ** p
        brk = np.unique(mu.locations[:, 0])
        if brk.size > 90:
            brk = np.linspace(lo[0], hi[0], 90)
        val, err = integrate.quad(
            f, lo[0], hi[0], points=brk, epsabs=tol, epsrel=0.0, limit=2000
        )
        if err > tol * 10:
            raise NumericalFailure("quadrature did not converge", estimate=val, error=err)
        return float(val)

    return box_quadrature(lambda pts: np.abs(mollify(mu, eps, pts)) ** p, lo, hi, math.sqrt(eps), tol)


def box_quadrature(f, lo, hi, scale, tol, max_nodes=4_000_000):
    """Tensor Gauss-Legendre integral of a vectorized ``f`` over a box.

    Panels start at width about ``2 * scale`` per axis and are doubled until
    two successive estimates agree to ``tol`` (absolute).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    panels = [max(2, int(math.ceil((hi[i] - lo[i]) / (2.0 * scale)))) for i in range(d)]
    prev = None
    while True:
        axes = [_gl_panels(lo[i], hi[i], panels[i]) for i in range(d)]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wts = axes[0][1]
        for a in axes[1:]:
            wts = np.multiply.outer(wts, a[1])
        pts = np.stack([g.ravel() for g in grids], axis=1)
        est = float(np.dot(wts.ravel(), np.asarray(f(pts), dtype=float)))
        if prev is not None and abs(est - prev) <= tol:
            return est
        prev = est
        panels = [2 * n for n in panels]
        if np.prod([16 * n for n in panels]) > max_nodes:
            break
    raise NumericalFailure("tensor quadrature did not reach tolerance", estimate=prev)


# --------------------------------------------------------------------------
# identity checks for rho
# --------------------------------------------------------------------------


@dataclass
class RhoIdentityReport:
    fd_max_deviation: float
    sum_partials_max: float
    rho: float
    qrho_ratios: dict

    @property
    def sum_partials_ok(self):
        return self.sum_partials_max <= 1e-9 * abs(self.rho)


def rho_identities_check(points, eps, p=None, qs=(1, 2)):
    """Check the derivative identities of rho_eps at one configuration.

    Returns the largest deviation of the closed-form gradient from central
    differences (step ``1e-5 (1 + |y|)``), ``max_j |sum_r d rho / d y_r^j|``,
    and for each ``q`` the ratio
    ``eps^-q max_r sum_{s != r} |y_s - y_r|^{2q} rho_eps(y) / rho_{2 eps}(y)``.
    """
    _check_eps(eps)
    Y = _as_tuple(points)
    if p is not None and Y.shape[0] != p:
        raise ContractViolation(f"expected {p} points, got {Y.shape[0]}")
    p, d = Y.shape
    if p < 2:
        raise ContractViolation("p must be >= 2")
    rho = rho_eps(Y, eps)
    grad = rho_grad_tuples(Y[None], eps)[0]

    fd_dev = 0.0
    for r in range(p):
        for i in range(d):
            h = 1e-5 * (1.0 + abs(Y[r, i]))
            Yp, Ym = Y.copy(), Y.copy()
            Yp[r, i] += h
            Ym[r, i] -= h
            fd = (rho_eps(Yp, eps) - rho_eps(Ym, eps)) / (2 * h)
            fd_dev = max(fd_dev, abs(fd - grad[r, i]))

    sum_partials = float(np.max(np.abs(grad.sum(axis=0))))

    S = float(_pair_sq_sum(Y[None])[0])
    # rho_eps / rho_{2 eps} in closed form, to avoid 0/0 for far-apart points
    log_ratio = 0.5 * (p - 1) * d * math.log(2.0) - S / (4.0 * eps * p)
    ratios = {}
    for q in qs:
        dist = np.sum((Y[None, :, :] - Y[:, None, :]) ** 2, axis=2) ** q  # |y_s - y_r|^{2q}
        worst_r = float(np.max(dist.sum(axis=1)))
        ratios[q] = eps ** (-q) * worst_r * math.exp(log_ratio)
    return RhoIdentityReport(fd_dev, sum_partials, rho, ratios)
