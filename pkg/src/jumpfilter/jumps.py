"""Finite-activity Poisson jump laws.

A :class:`JumpActivity` is a finite measure ``nu = rate * law`` on a mark
space R^m.  Integrals against ``nu`` are evaluated with a fixed quadrature of
the normalized mark law; when no quadrature is known, a cached Monte Carlo
sample of 10^5 marks is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation

_FALLBACK_SAMPLES = 100_000
_FALLBACK_SEED = 20211027


@dataclass(frozen=True)
class JumpActivity:
    rate: float
    mark_sampler: Callable  # (rng, n) -> (n, mark_dim)
    mark_dim: int = 1
    second_moment: Optional[float] = None  # int |z|^2 nu(dz), rate included
    r_moment: Optional[tuple] = None  # (r, int |z|^r nu(dz))
    nodes: Optional[np.ndarray] = None
    node_weights: Optional[np.ndarray] = None
    name: str = field(default="marks", compare=False)

    def __post_init__(self):
        if not self.rate > 0:
            raise ContractViolation(f"jump rate must be positive, got {self.rate}")
        if (self.nodes is None) != (self.node_weights is None):
            raise ContractViolation("nodes and node_weights must be given together")
        if self.nodes is None:
            rng = np.random.default_rng(_FALLBACK_SEED)
            nodes = np.asarray(self.mark_sampler(rng, _FALLBACK_SAMPLES), dtype=float)
            weights = np.full(nodes.shape[0], 1.0 / nodes.shape[0])
        else:
            nodes = np.asarray(self.nodes, dtype=float)
            weights = np.asarray(self.node_weights, dtype=float)
        nodes = nodes.reshape(nodes.shape[0], -1)
        if nodes.shape[1] != self.mark_dim:
            raise ContractViolation("quadrature nodes do not match mark_dim")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "node_weights", weights)

    def sample(self, rng, n):
        return np.asarray(self.mark_sampler(rng, n), dtype=float).reshape(n, self.mark_dim)

    def expectation(self, f):
        """E[f(z)] under the normalized mark law; ``f`` takes one mark (mark_dim,)."""
        total = None
        for z, w in zip(self.nodes, self.node_weights):
            term = w * np.asarray(f(z), dtype=float)
            total = term if total is None else total + term
        return total

    def integral(self, f):
        """int f(z) nu(dz)."""
        return self.rate * self.expectation(f)

    def mean_mark(self):
        return self.node_weights @ self.nodes

    def check_moments(self, n=100_000, seed=0, rtol=0.05):
        """Compare empirical moments of ``n`` sampled marks with the declared ones."""
        marks = self.sample(np.random.default_rng(seed), n)
        norms = np.linalg.norm(marks, axis=1)
        report = {}
        if self.second_moment is not None:
            emp = self.rate * float(np.mean(norms**2))
            report["second_moment"] = (emp, self.second_moment, abs(emp - self.second_moment) <= rtol * self.second_moment)
        if self.r_moment is not None:
            r, kr = self.r_moment
            emp = self.rate * float(np.mean(norms**r))
            report["r_moment"] = (emp, kr, abs(emp - kr) <= rtol * kr)
        return report


def gaussian_marks(rate, std=1.0, dim=1, mean=0.0, order=20):
    """Marks N(mean, std^2 I) with a tensor Gauss-Hermite quadrature."""
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = mean + std * np.stack([g.ravel() for g in grids], axis=1)
    wts = w
    for _ in range(dim - 1):
        wts = np.multiply.outer(wts, w)
    second = rate * (dim * std**2 + float(mean @ mean))

    def sampler(rng, n):
        return mean + std * rng.standard_normal((n, dim))

    return JumpActivity(rate, sampler, dim, second, None, nodes, wts.ravel(), "gaussian")


def symmetric_uniform_marks(rate, low, high, dim=1, order=16):
    """Each coordinate is s*u with a fair random sign s and u ~ U[low, high].

    The mark law avoids a neighbourhood of 0 when ``low > 0``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (high - low) * x + 0.5 * (high + low)
    axis_nodes = np.concatenate([-u[::-1], u])
    axis_w = np.concatenate([w[::-1], w]) / (2.0 * w.sum())
    grids = np.meshgrid(*([axis_nodes] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wts = axis_w
    for _ in range(dim - 1):
        wts = np.multiply.outer(wts, axis_w)
    per_axis = (high**3 - low**3) / (3.0 * (high - low))
    second = rate * dim * per_axis

    def sampler(rng, n):
        mag = rng.uniform(low, high, size=(n, dim))
        sign = np.where(rng.random((n, dim)) < 0.5, -1.0, 1.0)
        return sign * mag

    return JumpActivity(rate, sampler, dim, second, None, nodes, wts.ravel(), "symmetric-uniform")
