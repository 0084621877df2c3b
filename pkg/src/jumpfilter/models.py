"""Registry of built-in models, selected by name plus numeric parameters."""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation
from .jumps import symmetric_uniform_marks
from .operators import CoefficientSet


@dataclass(frozen=True)
class Model:
    name: str
    coeffs: CoefficientSet
    pi0_sampler: Callable  # (rng, n) -> (n, d)
    pi0_density: Optional[Callable] = None  # (n, d) -> (n,)
    y0: Optional[np.ndarray] = None
    grid: tuple = (-8.0, 8.0, 0.01)  # reference grid (lo, hi, h), 1-D models only
    params: dict = field(default_factory=dict)

    def initial_state(self, rng):
        x0 = self.pi0_sampler(rng, 1)[0]
        y0 = np.zeros(self.coeffs.dprime) if self.y0 is None else self.y0
        return np.concatenate([x0, y0])


def _gaussian_pi0(mean, std, d):
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (d,)).copy()

    def sampler(rng, n):
        return mean + std * rng.standard_normal((n, d))

    def density(x):
        x = np.asarray(x, dtype=float).reshape(-1, d)
        q = np.sum((x - mean) ** 2, axis=1) / std**2
        return np.exp(-0.5 * q) / (2 * np.pi * std**2) ** (d / 2)

    return sampler, density


def _const(value, shape):
    value = np.asarray(value, dtype=float)

    def f(t, x, y, *rest):
        return np.broadcast_to(value, (x.shape[0],) + shape).copy()

    return f


def _zeros(shape):
    return _const(0.0, shape)


def _marks(z, n):
    z = np.asarray(z, dtype=float)
    return z.reshape(1, -1) if z.ndim == 1 else z


# --------------------------------------------------------------------------


def jump_shared_1d(sigma=0.5, rate=2.0, b_coef=1.0, B_scale=2.0, rate0=1.0, eta_scale=0.3,
                   mark_low=0.5, mark_high=1.0, xi_base=0.5, xi_wave=0.2):
    """dX = -x dt + sigma dW + eta dN0 + xi dN1,  dY = 2 tanh(X) dt + dV + z dN1."""
    nu1 = symmetric_uniform_marks(rate, mark_low, mark_high)
    nu0 = symmetric_uniform_marks(rate0, 0.0, 1.0)

    def xi(t, x, y, z):
        return _marks(z, x.shape[0]) * (xi_base + xi_wave * np.sin(x))

    def xi_jac(t, x, y, z):
        return (_marks(z, x.shape[0]) * xi_wave * np.cos(x))[:, :, None]

    def eta(t, x, y, z):
        return np.broadcast_to(eta_scale * _marks(z, x.shape[0]), x.shape).copy()

    coeffs = CoefficientSet(
        1, 1, 1,
        b=lambda t, x, y: -b_coef * x,
        B=lambda t, x, y: B_scale * np.tanh(x),
        sigma=_const(sigma, (1, 1)),
        rho=_zeros((1, 1)),
        eta=eta, xi=xi, xi_jacobian_x=xi_jac,
        eta_jacobian_x=lambda t, x, y, z: np.zeros((x.shape[0], 1, 1)),
        nu0=nu0, nu1=nu1,
        K0=1.5, K1=max(1.0, b_coef), K=B_scale, L=max(b_coef, B_scale),
        lam=1.0 - xi_wave * mark_high,
        xi_bar=lambda z: (xi_base + xi_wave) * float(np.max(np.abs(z))),
        eta_bar=lambda z: eta_scale * float(np.max(np.abs(z))),
        K_xi=(xi_base + xi_wave) * mark_high, K_eta=eta_scale,
        name="jump-shared-1d",
    )
    sampler, density = _gaussian_pi0(0.0, 1.0, 1)
    return Model("jump-shared-1d", coeffs, sampler, density, grid=(-8.0, 8.0, 0.01),
                 params=dict(sigma=sigma, rate=rate, b_coef=b_coef, B_scale=B_scale, rate0=rate0,
                             eta_scale=eta_scale, mark_low=mark_low, mark_high=mark_high,
                             xi_base=xi_base, xi_wave=xi_wave))


def clipped_linear_1d(a=-1.0, c=1.0, sigma=1.0, clip=10.0, m0=0.0, s0=1.0):
    """dX = a X dt + sigma dW,  dY = c clip(X) dt + dV: linear-Gaussian unless X saturates."""
    coeffs = CoefficientSet(
        1, 1, 1,
        b=lambda t, x, y: a * x,
        B=lambda t, x, y: c * np.clip(x, -clip, clip),
        sigma=_const(sigma, (1, 1)),
        rho=_zeros((1, 1)),
        K0=abs(sigma) + 1.0, K1=max(1.0, abs(a)), K=abs(c) * clip, L=max(abs(a), abs(c)),
        name="clipped-linear-1d",
    )
    sampler, density = _gaussian_pi0(m0, s0, 1)
    return Model("clipped-linear-1d", coeffs, sampler, density, grid=(-8.0, 8.0, 0.01),
                 params=dict(a=a, c=c, sigma=sigma, clip=clip, m0=m0, s0=s0))


def trivial_constants(b=0.3, sigma=0.7, B=0.0):
    """Constant coefficients: every Lipschitz-difference term vanishes."""
    coeffs = CoefficientSet(
        1, 1, 1,
        b=_const(b, (1,)), B=_const(B, (1,)),
        sigma=_const(sigma, (1, 1)), rho=_zeros((1, 1)),
        K0=abs(b) + abs(sigma) + 1.0, K1=0.0, K=abs(B), L=0.0,
        name="trivial-constants",
    )
    sampler, density = _gaussian_pi0(0.0, 1.0, 1)
    return Model("trivial-constants", coeffs, sampler, density, params=dict(b=b, sigma=sigma, B=B))


def b_only_1d(B_scale=2.0, shift=0.5):
    """No signal dynamics; only the observation drift B(x) = B_scale tanh(x - shift)."""
    coeffs = CoefficientSet(
        1, 1, 1,
        b=_zeros((1,)), B=lambda t, x, y: B_scale * np.tanh(x - shift),
        sigma=_zeros((1, 1)), rho=_zeros((1, 1)),
        K0=1.0, K1=0.0, K=B_scale, L=B_scale,
        name="b-only-1d",
    )
    sampler, density = _gaussian_pi0(0.0, 1.0, 1)
    return Model("b-only-1d", coeffs, sampler, density, params=dict(B_scale=B_scale, shift=shift))


def pure_jump_2d(rate=2.0, b_coef=0.5, B_scale=1.5, rate0=1.0, eta_scale=0.2,
                 mark_low=0.5, mark_high=1.0, xi_base=0.5, xi_wave=0.1):
    """Two-dimensional signal without Brownian noise, moved by drift and jumps."""
    nu1 = symmetric_uniform_marks(rate, mark_low, mark_high, dim=2, order=8)
    nu0 = symmetric_uniform_marks(rate0, 0.0, 1.0, dim=2, order=8)

    def znorm(z, n):
        z = _marks(z, n)
        return z, np.linalg.norm(z, axis=1, keepdims=True)

    def xi(t, x, y, z):
        z, nz = znorm(z, x.shape[0])
        return xi_base * z + xi_wave * nz * np.sin(x)

    def xi_jac(t, x, y, z):
        z, nz = znorm(z, x.shape[0])
        diag = xi_wave * nz * np.cos(x)
        return diag[:, :, None] * np.eye(2)[None]

    zmax = mark_high * np.sqrt(2.0)
    coeffs = CoefficientSet(
        2, 2, 2,
        b=lambda t, x, y: -b_coef * x,
        B=lambda t, x, y: B_scale * np.tanh(x),
        sigma=_zeros((2, 2)), rho=_zeros((2, 2)),
        eta=lambda t, x, y, z: np.broadcast_to(eta_scale * _marks(z, x.shape[0]), x.shape).copy(),
        xi=xi, xi_jacobian_x=xi_jac,
        eta_jacobian_x=lambda t, x, y, z: np.zeros((x.shape[0], 2, 2)),
        nu0=nu0, nu1=nu1,
        K0=2.0, K1=1.0, K=B_scale * np.sqrt(2.0), L=max(b_coef, B_scale),
        lam=1.0 - xi_wave * zmax,
        xi_bar=lambda z: (xi_base + xi_wave) * float(np.linalg.norm(z)),
        eta_bar=lambda z: eta_scale * float(np.linalg.norm(z)),
        K_xi=(xi_base + xi_wave) * zmax, K_eta=eta_scale * np.sqrt(2.0),
        name="pure-jump-2d",
    )
    sampler, density = _gaussian_pi0(0.0, 1.0, 2)
    return Model("pure-jump-2d", coeffs, sampler, density, grid=(-6.0, 6.0, 0.05),
                 params=dict(rate=rate, b_coef=b_coef, B_scale=B_scale, rate0=rate0, eta_scale=eta_scale,
                             mark_low=mark_low, mark_high=mark_high, xi_base=xi_base, xi_wave=xi_wave))


MODEL_REGISTRY = {
    "jump-shared-1d": jump_shared_1d,
    "clipped-linear-1d": clipped_linear_1d,
    "trivial-constants": trivial_constants,
    "b-only-1d": b_only_1d,
    "pure-jump-2d": pure_jump_2d,
}


def get_model(name, **params) -> Model:
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise ContractViolation(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ContractViolation(f"bad parameters for model {name!r}: {exc}") from None


def model_parameters(name):
    """Names and defaults of a registry entry's numeric parameters."""
    sig = inspect.signature(MODEL_REGISTRY[name])
    return {k: v.default for k, v in sig.parameters.items()}
