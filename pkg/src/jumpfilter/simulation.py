"""Euler-Maruyama simulation of the signal/observation pair driven by Brownian
motions W, V, a signal-only Poisson measure N0 and a shared Poisson measure N1.

    dX = (b - int eta nu0 - int xi nu1) dt + sigma dW + rho dV + eta dN0 + xi dN1
    dY = (B - int z nu1) dt + dV + z dN1

Both jump measures enter compensated, so their compensators appear as drifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .operators import CoefficientSet

_STREAMS = ("W", "V", "N0", "N1")


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {k: np.random.default_rng(s) for k, s in zip(_STREAMS, children)}


def uniform_mesh(T, dt):
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, n + 1)


@dataclass(frozen=True)
class PathBundle:
    grid: np.ndarray
    dW: np.ndarray  # (n_cells, d1)
    dV: np.ndarray  # (n_cells, d')
    n0_times: np.ndarray
    n0_marks: np.ndarray
    n1_times: np.ndarray
    n1_marks: np.ndarray
    seed: Optional[int] = None

    @property
    def T(self):
        return float(self.grid[-1])

    @property
    def n0_events(self):
        return list(zip(self.n0_times.tolist(), self.n0_marks))

    @property
    def n1_events(self):
        return list(zip(self.n1_times.tolist(), self.n1_marks))

    def event_rows(self, which):
        """Grid indices at which the events of N0 (0) or N1 (1) occur."""
        times = self.n0_times if which == 0 else self.n1_times
        return np.searchsorted(self.grid, times)


def _poisson_events(rng, act, T):
    if act is None:
        return np.zeros(0), np.zeros((0, 1))
    n = rng.poisson(act.rate * T)
    times = np.sort(rng.uniform(0.0, T, n))
    # an event landing exactly on t = 0 has nothing to jump from
    times = times[times > 0.0]
    marks = act.sample(rng, times.size) if times.size else np.zeros((0, act.mark_dim))
    return times, marks


def sample_bundle(T, dt, activities, dims, seed):
    """Brownian increments on the jump-adapted grid and the Poisson events.

    ``activities = (nu0, nu1)`` (either may be None), ``dims = (d1, d')``.
    W, V, N0 and N1 use independent child streams of ``seed``.
    """
    if not (T > 0 and dt > 0):
        raise ContractViolation("T and dt must be positive")
    nu0, nu1 = activities
    d1, dp = dims
    rng = _streams(seed)
    t0, m0 = _poisson_events(rng["N0"], nu0, T)
    t1, m1 = _poisson_events(rng["N1"], nu1, T)
    grid = np.union1d(uniform_mesh(T, dt), np.concatenate([t0, t1]))
    dt_cells = np.diff(grid)
    sq = np.sqrt(dt_cells)[:, None]
    dW = rng["W"].standard_normal((dt_cells.size, d1)) * sq
    dV = rng["V"].standard_normal((dt_cells.size, dp)) * sq
    for a in (grid, dW, dV, t0, m0, t1, m1):
        a.setflags(write=False)
    return PathBundle(grid, dW, dV, t0, m0, t1, m1, seed)


@dataclass(frozen=True)
class SystemPath:
    times: np.ndarray
    X: np.ndarray  # (n+1, d)
    Y: np.ndarray  # (n+1, d')
    bundle: PathBundle

    def to_csv(self, path, header_lines=()):
        n0 = np.zeros(self.times.size, dtype=int)
        n1 = np.zeros(self.times.size, dtype=int)
        n0[self.bundle.event_rows(0)] = 1
        n1[self.bundle.event_rows(1)] = 1
        cols = ["t"] + [f"X_{i + 1}" for i in range(self.X.shape[1])] + [f"Y_{i + 1}" for i in range(self.Y.shape[1])]
        cols += ["n0_event", "n1_event"]
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(cols) + "\n")
            for k in range(self.times.size):
                vals = [repr(float(self.times[k]))] + [repr(float(v)) for v in self.X[k]] + [repr(float(v)) for v in self.Y[k]]
                fh.write(",".join(vals + [str(n0[k]), str(n1[k])]) + "\n")


def simulate_system(coeffs: CoefficientSet, z0, bundle: PathBundle) -> SystemPath:
    """Euler-Maruyama on the bundle's grid; jumps are applied at the end of the
    cell whose right end point is the event time, using the pre-jump state."""
    d, dp = coeffs.d, coeffs.dprime
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.size != d + dp:
        raise ContractViolation(f"z0 must have length d + d' = {d + dp}")
    grid = bundle.grid
    n = grid.size - 1
    X = np.empty((n + 1, d))
    Y = np.empty((n + 1, dp))
    X[0], Y[0] = z0[:d], z0[d:]
    ev0 = dict(zip(bundle.event_rows(0).tolist(), bundle.n0_marks))
    ev1 = dict(zip(bundle.event_rows(1).tolist(), bundle.n1_marks))
    ycomp = coeffs.y_compensator()
    for k in range(n):
        t = grid[k]
        h = grid[k + 1] - t
        x = X[k][None]
        y = Y[k]
        drift = coeffs.b(t, x, y) - coeffs.eta_compensator(t, x, y) - coeffs.xi_compensator(t, x, y)
        xn = x + drift * h + coeffs.sigma(t, x, y)[0] @ bundle.dW[k] + coeffs.rho(t, x, y)[0] @ bundle.dV[k]
        yn = y + (coeffs.B(t, x, y)[0] - ycomp) * h + bundle.dV[k]
        t1 = grid[k + 1]
        if k + 1 in ev0:
            xn = xn + coeffs.eta(t1, xn, yn, ev0[k + 1])
        if k + 1 in ev1:
            z = ev1[k + 1]
            xn = xn + coeffs.xi(t1, xn, yn, z)
            yn = yn + z
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(yn))):
            raise NumericalFailure("non-finite state in simulate_system", step=k)
        X[k + 1], Y[k + 1] = xn[0], yn
    return SystemPath(grid, X, Y, bundle)


def simulate_ensemble(coeffs: CoefficientSet, z0, T, dt, n_paths, seed):
    """Vectorized Euler scheme for many independent paths on a uniform mesh.

    Jumps occurring inside a cell are applied at its right end point (no
    jump-adapted refinement), which is adequate for moment statistics.
    ``z0`` is an (n_paths, d + d') array or a single initial vector.
    Returns ``(times, X (n+1, n_paths, d), Y (n+1, n_paths, d'))``.
    """
    d, dp, d1 = coeffs.d, coeffs.dprime, coeffs.d1
    times = uniform_mesh(T, dt)
    n = times.size - 1
    rng = _streams(seed)
    z0 = np.broadcast_to(np.asarray(z0, dtype=float), (n_paths, d + dp))
    X = np.empty((n + 1, n_paths, d))
    Y = np.empty((n + 1, n_paths, dp))
    X[0], Y[0] = z0[:, :d], z0[:, d:]
    ycomp = coeffs.y_compensator()
    for k in range(n):
        t, h = times[k], times[k + 1] - times[k]
        x, y = X[k], Y[k]
        dW = rng["W"].standard_normal((n_paths, d1)) * math.sqrt(h)
        dV = rng["V"].standard_normal((n_paths, dp)) * math.sqrt(h)
        drift = coeffs.b(t, x, y) - coeffs.eta_compensator(t, x, y) - coeffs.xi_compensator(t, x, y)
        xn = x + drift * h + np.einsum("nij,nj->ni", coeffs.sigma(t, x, y), dW) + np.einsum("nij,nj->ni", coeffs.rho(t, x, y), dV)
        yn = y + (coeffs.B(t, x, y) - ycomp) * h + dV
        t1 = times[k + 1]
        for tag, act, fn in (("N0", coeffs.nu0, coeffs.eta), ("N1", coeffs.nu1, coeffs.xi)):
            if act is None:
                continue
            counts = rng[tag].poisson(act.rate * h, n_paths)
            for j in range(int(counts.max(initial=0))):
                idx = np.flatnonzero(counts > j)
                z = act.sample(rng[tag], idx.size)
                xn[idx] = xn[idx] + fn(t1, xn[idx], yn[idx], z)
                if tag == "N1":
                    yn[idx] = yn[idx] + z
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(yn))):
            raise NumericalFailure("non-finite state in simulate_ensemble", step=k)
        X[k + 1], Y[k + 1] = xn, yn
    return times, X, Y


def girsanov_weight_path(coeffs: CoefficientSet, path: SystemPath):
    """gamma_t = exp(-int B dV - 1/2 int |B|^2 ds), accumulated in log space."""
    logg = np.zeros(path.times.size)
    dts = np.diff(path.times)
    B = _B_along(coeffs, path)
    incr = -np.sum(B * path.bundle.dV, axis=1) - 0.5 * np.sum(B * B, axis=1) * dts
    logg[1:] = np.cumsum(incr)
    return np.exp(logg)


def _B_along(coeffs, path):
    """B(t_k, X_k, Y_k) for every cell k: (n, d')."""
    out = np.empty((path.times.size - 1, coeffs.dprime))
    for k in range(out.shape[0]):
        out[k] = coeffs.B(path.times[k], path.X[k][None], path.Y[k])[0]
    return out


def innovation_path(coeffs: CoefficientSet, path: SystemPath):
    """V~_t = int B(s, Z_s) ds + V_t on the path grid: (n+1, d')."""
    B = _B_along(coeffs, path)
    incr = B * np.diff(path.times)[:, None] + path.bundle.dV
    out = np.zeros((path.times.size, coeffs.dprime))
    out[1:] = np.cumsum(incr, axis=0)
    return out
