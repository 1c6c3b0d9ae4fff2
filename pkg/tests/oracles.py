"""Independent reference computations used by the test suite.

These deliberately avoid the package's own numerics: the exit-time oracle
integrates in the swapped order with a plain trapezoid rule on a very fine
grid, and the small-chain oracle solves a truncated generator directly.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid


def exit_time_oracle(V, kappa_p, lambda_p, delta_p, n, points=1_000_001):
    """E_0[tau_n] = int_0^n w(y) I(y) int_y^n 1/I(x) dx dy on a uniform trapezoid grid."""
    x = np.linspace(0.0, n, points)
    A = 2.0 * kappa_p * x * (n - x) + lambda_p + delta_p * x
    phi = 2.0 * V * (lambda_p - delta_p * x) / A
    w = 2.0 * V / A
    log_i = cumulative_trapezoid(phi, x, initial=0.0)
    # tail(y) = int_y^n exp(-log_i), accumulated from the right in log space
    h = x[1] - x[0]
    a = -log_i
    seg = np.logaddexp(a[:-1], a[1:]) + np.log(h / 2.0)
    log_tail = np.empty(points)
    log_tail[-1] = -np.inf
    log_tail[:-1] = np.logaddexp.accumulate(seg[::-1])[::-1]
    integrand = w * np.exp(log_i + log_tail)
    return float(np.trapezoid(integrand, x))


def truncated_chain_2d(kappa, lam, delta, n_max):
    """Generator of the d = 2 jump chain on {n1 + n2 <= n_max}; moves leaving the box are dropped.

    Returns (states, Q) with states a list of (n1, n2) and Q a dense rate matrix.
    """
    states = [(a, b) for a in range(n_max + 1) for b in range(n_max + 1 - a)]
    index = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for (a, b), i in index.items():
        moves = [
            ((a - 1, b + 1), kappa * a * b),  # A1 + A2 -> 2 A2
            ((a + 1, b - 1), kappa * a * b),  # A2 + A1 -> 2 A1
            ((a + 1, b), lam),
            ((a, b + 1), lam),
            ((a - 1, b), delta * a),
            ((a, b - 1), delta * b),
        ]
        for target, rate in moves:
            j = index.get(target)
            if j is not None and rate > 0:
                Q[i, j] += rate
                Q[i, i] -= rate
    return states, Q


def truncated_stationary_2d(kappa, lam, delta, n_max):
    states, Q = truncated_chain_2d(kappa, lam, delta, n_max)
    A = np.vstack([Q.T, np.ones(len(states))])
    rhs = np.zeros(len(states) + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return states, pi


def truncated_extinction_time_2d(kappa, lam, delta, n_max, start):
    """Mean first time n2 = 0 from ``start`` on the truncated chain."""
    states, Q = truncated_chain_2d(kappa, lam, delta, n_max)
    live = [i for i, s in enumerate(states) if s[1] > 0]
    h = np.linalg.solve(Q[np.ix_(live, live)], -np.ones(len(live)))
    return float(h[live.index(states.index(tuple(start)))])


def exit_time_direct_ode(V, kappa_p, lambda_p, delta_p, n):
    """Same exit time without logs: integrate (I, G, f) with I' = phi I, G' = w I, f' = G / I.

    Only usable for small V, where I stays representable.
    """
    from scipy.integrate import solve_ivp

    def rhs(x, y):
        A = 2.0 * kappa_p * x * (n - x) + lambda_p + delta_p * x
        phi = 2.0 * V * (lambda_p - delta_p * x) / A
        w = 2.0 * V / A
        I, G, _ = y
        return [phi * I, w * I, G / I]

    sol = solve_ivp(rhs, (0.0, n), [1.0, 0.0, 0.0], method="DOP853", rtol=1e-13, atol=1e-15)
    return float(sol.y[2, -1])
