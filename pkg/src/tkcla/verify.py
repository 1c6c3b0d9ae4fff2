"""Numerical checks of the model's identities and stationary behaviour.

Each check returns a :class:`CheckReport`. ``passed`` is always
``worst_violation <= tolerance`` so reports can be compared and serialized
without re-deriving the verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .cla import simulate_cla
from .model import (
    ModelParams,
    TestFunction,
    covariance,
    covariance_batch,
    drift,
    drift_batch,
    generator_apply,
    generator_values,
    lyapunov_drift_identities,
    lyapunov_function,
    noise_matrix,
)
from .ssa import simulate_ctmc
from .stats import OccupationObserver, TimeAverageObserver, integer_edges


class SupportViolationError(ValueError):
    pass


class InsufficientOccupancyError(RuntimeError):
    pass


@dataclass
class CheckReport:
    name: str
    samples: int
    worst_violation: float
    tolerance: float
    passed: bool = field(init=False)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.worst_violation <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "details": self.details,
        }


def _random_states(rng, n, d, box_hi):
    return rng.uniform(0.0, box_hi, size=(n, d))


# ---------------------------------------------------------------------------
# algebraic identities


def check_ellipticity(params: ModelParams, n_samples: int = 10_000, box_hi: float = 100.0, seed=0) -> CheckReport:
    """<theta, Gamma(x) theta> >= lambda' for random states and unit directions."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = make_rng(seed)
    d = params.d
    X = _random_states(rng, n_samples, d, box_hi)
    theta = rng.standard_normal((n_samples, d))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    G = covariance_batch(params, X)
    q = np.einsum("ni,nij,nj->n", theta, G, theta)
    slack = q - params.lambda_p
    # the smallest eigenvalue is the sharpest version of the same bound
    eig_slack = np.linalg.eigvalsh(G)[:, 0] - params.lambda_p
    worst = float(max(-slack.min(), -eig_slack.min(), 0.0))
    return CheckReport(
        "ellipticity",
        n_samples,
        worst,
        1e-12,
        details={"min_slack": float(slack.min()), "min_eigen_slack": float(eig_slack.min()), "d": d},
    )


def _rel(err, scale):
    return abs(err) / scale if scale > 0 else abs(err)


def _identity_violations(params: ModelParams, x: np.ndarray) -> dict:
    d, kp, lp, dp = params.d, params.kappa_p, params.lambda_p, params.delta_p
    s = float(np.sum(x))
    xm, xp = np.roll(x, 1), np.roll(x, -1)
    # magnitude of each drift term, used as the floating-point scale
    b_terms = np.abs(kp * xm * x) + np.abs(kp * xp * x) + lp + dp * x
    G = covariance(params, x)
    b = drift(params, x)
    out = {}
    out["trace_sum"] = _rel(np.sum(G) - (d * lp + dp * s), np.sum(np.abs(G)))
    out["drift_sum"] = _rel(np.sum(b) - (d * lp - dp * s), np.sum(b_terms))
    S = noise_matrix(params, x)
    out["factorization"] = _rel(np.max(np.abs(S @ S.T - G)), np.max(np.abs(G)))
    m = s - params.mass_fixed_point
    worst_dot = worst_gen = 0.0
    for p in (1, 2, 3):
        U = lyapunov_function(params, p)
        dot_closed, gen_closed = lyapunov_drift_identities(params, x, p)
        g = U.gradient(x)
        dot_num = float(g @ b)
        scale = 2 * p * abs(m) ** (2 * p - 1) * np.sum(b_terms)
        worst_dot = max(worst_dot, _rel(dot_num - dot_closed, max(scale, abs(dot_closed))))
        gen_num = generator_apply(params, U, x)
        H = U.hessian(x)
        gscale = np.sum(np.abs(G * H)) / (2 * params.V) + np.abs(g) @ b_terms
        worst_gen = max(worst_gen, _rel(gen_num - gen_closed, max(gscale, abs(gen_closed))))
    out["lyapunov_drift"] = worst_dot
    out["lyapunov_generator"] = worst_gen
    return out


def check_coefficient_identities(params: ModelParams, n_samples: int = 10_000, box_hi: float = 100.0, seed=0) -> CheckReport:
    """Trace, drift-sum, factorization and Lyapunov closed forms at random states.

    The origin and the symmetric equilibrium are always included. Violations
    are relative to the magnitude of the summed terms.
    """
    rng = make_rng(seed)
    d = params.d
    X = _random_states(rng, max(n_samples - 2, 0), d, box_hi)
    X = np.vstack([np.zeros(d), np.full(d, params.lambda_p / params.delta_p), X])
    worst = {}
    for x in X:
        for k, v in _identity_violations(params, x).items():
            worst[k] = max(worst.get(k, 0.0), float(v))
    return CheckReport("coefficient_identities", len(X), max(worst.values()), 1e-10, details=worst)


# ---------------------------------------------------------------------------
# total mass


class _GridSampler:
    """Records ``func(state)`` on a regular time grid (state in force at each grid time)."""

    is_detector = False

    def __init__(self, func, h, t_end):
        self.func, self.h = func, float(h)
        self.grid = np.arange(0.0, t_end, h)
        self.values = np.empty(len(self.grid))
        self._k = 0

    def start(self, t0, x0):
        self._x = np.asarray(x0)

    def update(self, times, states):
        if not len(times):
            return
        times = np.asarray(times)
        idx = np.searchsorted(times, self.grid[self._k:], side="right") - 1
        vals = self.func(np.asarray(states))
        prev = self.func(np.asarray(self._x)[None, :])[0]
        inside = self.grid[self._k:] < times[-1]
        chunk = np.where(idx >= 0, vals[np.maximum(idx, 0)], prev)
        n = int(inside.sum())
        self.values[self._k:self._k + n] = chunk[:n]
        self._k += n
        self._x = np.asarray(states)[-1]

    def finish(self, t_final):
        self.values[self._k:] = self.func(np.asarray(self._x)[None, :])[0]
        self._k = len(self.grid)


def _decay_rate(series: np.ndarray, h: float, lag_time: float) -> float:
    lag = max(1, int(round(lag_time / h)))
    y = series - series.mean()
    if len(y) <= lag or not np.any(y):
        return float("nan")
    c0 = float(y @ y) / len(y)
    c = float(y[:-lag] @ y[lag:]) / (len(y) - lag)
    r = c / c0
    return -math.log(r) / (lag * h) if r > 0 else float("nan")


def check_total_mass_poisson(params: ModelParams, T: float, seed=0, n_batches: int = 10, x0=None) -> CheckReport:
    """Time-averaged mean and variance of |X|_1 against the Poisson value d lambda / delta.

    Both are required to lie within three batch-means standard errors. The
    decay rate of the total-mass autocorrelation is reported next to delta but
    not asserted; a second estimate with doubled burn-in is reported too.
    """
    if T * params.delta < 50:
        raise ValueError("need T * delta >= 50")
    target = params.d * params.lambda_ / params.delta
    x0 = np.full(params.d, int(round(target / params.d))) if x0 is None else x0
    total = lambda s: np.sum(s, axis=1)
    moments = lambda s: np.stack([np.sum(s, axis=1), np.sum(s, axis=1) ** 2], axis=1)
    avg = TimeAverageObserver(moments, T, burn_in=T / 10, n_batches=n_batches)
    avg2 = TimeAverageObserver(moments, T, burn_in=T / 5, n_batches=n_batches)
    h = 0.1 / params.delta
    grid = _GridSampler(total, h, T)
    simulate_ctmc(params, x0, T, seed=seed, observers=[avg, avg2, grid], record=False)

    def estimates(obs):
        per = obs.batch_averages()
        means = per[:, 0]
        variances = per[:, 1] - per[:, 0] ** 2
        k = len(per)
        w = obs.time[obs.time > 0]
        mean = float(np.sum(means * w) / w.sum())
        m2 = float(np.sum(per[:, 1] * w) / w.sum())
        var = m2 - mean * mean
        se_m = float(np.std(means, ddof=1) / math.sqrt(k))
        se_v = float(np.std(variances, ddof=1) / math.sqrt(k))
        return mean, var, se_m, se_v

    mean, var, se_m, se_v = estimates(avg)
    mean2, var2, _, _ = estimates(avg2)
    z_mean = abs(mean - target) / se_m
    z_var = abs(var - target) / se_v
    return CheckReport(
        "total_mass_poisson",
        len(grid.values),
        float(max(z_mean, z_var)),
        3.0,
        details={
            "target": target,
            "mean": mean,
            "variance": var,
            "se_mean": se_m,
            "se_variance": se_v,
            "mean_double_burn_in": mean2,
            "variance_double_burn_in": var2,
            "autocorrelation_decay_rate": _decay_rate(grid.values[len(grid.values) // 10:], h, 1.0 / params.delta),
            "delta": params.delta,
        },
    )


# ---------------------------------------------------------------------------
# stationarity residual


def _require_interior(f: TestFunction):
    if f.constant:
        return
    if f.support_radius is None or f.center is None:
        raise SupportViolationError("test function must be compactly supported")
    if np.any(np.asarray(f.center) - f.support_radius <= 0.0):
        raise SupportViolationError("support of the test function reaches the boundary of the orthant")


def bar_residual(
    params: ModelParams,
    f: TestFunction,
    path=None,
    *,
    T: float = 1e5,
    dt: float = 2e-3,
    x0=None,
    seed=0,
    burn_in: float | None = None,
    n_batches: int = 10,
    drift_sign: float = 1.0,
) -> CheckReport:
    """Time average of the generator applied to an interior test function.

    Works on a recorded ``path`` or, when ``path`` is None, streams a CLA run
    of length T. ``drift_sign=-1`` evaluates the operator with a reversed
    drift against the same path (a falsification control).
    """
    _require_interior(f)
    func = lambda s: generator_values(params, f, s, drift_sign=drift_sign)
    if path is None:
        x0 = np.full(params.d, params.lambda_p / params.delta_p) if x0 is None else x0
        burn = T / 10 if burn_in is None else burn_in
        obs = TimeAverageObserver(func, T, burn_in=burn, n_batches=n_batches)
        simulate_cla(params, x0, T, dt=dt, seed=seed, observers=[obs], record=False)
        samples = int(round(T / dt))
    else:
        t_end = float(path.t_end)
        burn = 0.0 if burn_in is None else burn_in
        obs = TimeAverageObserver(func, t_end, burn_in=burn, n_batches=n_batches)
        obs.start(path.times[0], path.states[0])
        obs.update(path.times[1:], path.states[1:])
        obs.finish(t_end)
        samples = len(path)
    mean = float(obs.mean()[0])
    se = float(obs.standard_error()[0])
    if f.constant:
        return CheckReport("bar_residual", samples, abs(mean), 0.0, details={"mean": mean, "std_error": se})
    ratio = abs(mean) / se if se > 0 else (0.0 if mean == 0 else float("inf"))
    return CheckReport(
        "bar_residual",
        samples,
        ratio,
        3.0,
        details={"mean": mean, "std_error": se, "drift_sign": drift_sign},
    )


# ---------------------------------------------------------------------------
# level sets


def check_level_set_uniformity(
    params: ModelParams,
    T: float = 1e6,
    seed=0,
    min_occupancy: float = 0.01,
    window: float = 0.2,
    tolerance: float = 0.1,
    require_uniform_regime: bool = True,
) -> CheckReport:
    """TV distance between the law of X^1 on {X^1 + X^2 = n} and uniform on {0..n}.

    Only level sets holding at least ``min_occupancy`` of the run and lying
    within ``window`` of d V count. ``require_uniform_regime=False`` lets the
    same measurement run at other rates (negative controls).
    """
    if params.d != 2:
        raise ValueError("level-set check is defined for d = 2")
    if require_uniform_regime and not (
        math.isclose(params.lambda_p, params.delta_p) and math.isclose(params.delta_p, 2.0 / params.V)
    ):
        raise ValueError("uniform regime needs lambda' = delta' = 2 / V")
    center = params.d * params.lambda_ / params.delta
    top = int(math.ceil(3 * center)) + 10
    edges = integer_edges(0, top)
    obs = OccupationObserver([edges, edges], feature=lambda s: np.stack([s[:, 0], s.sum(axis=1)], axis=1))
    x0 = np.full(2, int(round(center / 2)))
    simulate_ctmc(params, x0, T, seed=seed, observers=[obs], record=False)
    mass = obs.hist.mass
    level_time = mass.sum(axis=0)
    tv = {}
    for n in range(top + 1):
        if level_time[n] < min_occupancy * T or abs(n - params.d * params.V) > window * params.d * params.V:
            continue
        p = mass[: n + 1, n] / level_time[n]
        tv[n] = 0.5 * float(np.sum(np.abs(p - 1.0 / (n + 1))))
    if not tv:
        raise InsufficientOccupancyError("no level set met the occupancy cutoff")
    worst_n = max(tv, key=tv.get)
    return CheckReport(
        "level_set_uniformity",
        len(tv),
        tv[worst_n],
        tolerance,
        details={"worst_level": worst_n, "tv": {str(k): v for k, v in sorted(tv.items())}},
    )


def run_all(quick: bool = True, seed=0) -> list[CheckReport]:
    """The identity checks for d in {2, 3, 6}, plus short stochastic checks."""
    from .model import bump_function, derive_params

    reports = []
    for d in (2, 3, 6):
        p = derive_params(d, 64, 1.0, 1 / 64, 1 / 64)
        reports.append(check_ellipticity(p, 1000 if quick else 10_000, seed=seed))
        reports.append(check_coefficient_identities(p, 1000 if quick else 10_000, seed=seed))
    p2 = derive_params(2, 64, 1.0, 1 / 64, 1 / 64)
    reports.append(check_total_mass_poisson(p2, 2e4 if quick else 1e5, seed=seed))
    p_bar = derive_params(2, 64, 1.0, 1 / 16, 1 / 16)
    reports.append(bar_residual(p_bar, bump_function([1.0, 1.0], 0.5), T=2e4 if quick else 1e5, seed=seed))
    return reports


__all__ = [
    "CheckReport",
    "InsufficientOccupancyError",
    "SupportViolationError",
    "bar_residual",
    "check_coefficient_identities",
    "check_ellipticity",
    "check_level_set_uniformity",
    "check_total_mass_poisson",
    "run_all",
]
