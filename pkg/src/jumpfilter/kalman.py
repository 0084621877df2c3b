"""Kalman-Bucy reference for the scalar linear-Gaussian model

    dX = a X dt + sigma dW,   dY = c X dt + dV,   X_0 ~ N(m0, P0),

discretized on the observation grid.  The recursion is exact for the Euler
discretization used by the particle filter: the observation increment of cell
k is informative about the cell's left end point, then the state is advanced.
As dt -> 0 it converges to the continuous Kalman-Bucy filter.
"""

import numpy as np


def kalman_bucy(obs, a, c, sigma, m0, P0):
    """Posterior means and variances at every observation time."""
    t = obs.times
    dY = np.diff(obs.Y[:, 0])
    n = t.size - 1
    m = np.empty(n + 1)
    P = np.empty(n + 1)
    m[0], P[0] = m0, P0
    for k in range(n):
        h = t[k + 1] - t[k]
        H = c * h
        S = H * H * P[k] + h
        K = P[k] * H / S
        mu = m[k] + K * (dY[k] - H * m[k])
        Pu = (1.0 - K * H) * P[k]
        F = 1.0 + a * h
        m[k + 1] = F * mu
        P[k + 1] = F * F * Pu + sigma**2 * h
    return m, P


def riccati_continuous(a, c, sigma, P0, times):
    """Variance of the continuous-time filter, dP/dt = 2aP + sigma^2 - c^2 P^2, in closed form."""
    times = np.asarray(times, dtype=float)
    disc = np.sqrt(a * a + c * c * sigma**2)
    p_plus = (a + disc) / c**2
    p_minus = (a - disc) / c**2
    r = (P0 - p_plus) / (P0 - p_minus)
    e = r * np.exp(-2.0 * disc * times)
    return (p_plus - p_minus * e) / (1.0 - e)
