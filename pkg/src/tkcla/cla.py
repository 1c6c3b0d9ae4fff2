"""Euler-Maruyama integration of the constrained Langevin approximation.

The d-dimensional scheme takes an unconstrained Euler step driven by the
reaction-channel noise matrix and, when the proposal leaves the orthant,
pushes it back along the oblique direction gamma = b / |b| evaluated at the
clamped proposal. The 1-D reduced model uses symmetrized reflection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import make_rng
from .model import ModelParams
from .path import BudgetExceededError, SampledPath, _Recorder
from .ssa import _run_chunks

# Rounding slack when testing whether a pushed coordinate is still negative.
_ROUND = 1e-12
DEFAULT_DT = 1e-3


class ReflectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClaStepConfig:
    dt: float = DEFAULT_DT
    clamp_floor: float = 0.0
    max_reflection_iters: int = 8

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.clamp_floor < 0:
            raise ValueError("clamp_floor must be >= 0")
        if self.max_reflection_iters < 1:
            raise ValueError("max_reflection_iters must be >= 1")


@njit(cache=True, nogil=True)
def _drift_into(x, kp, lp, dp, out):
    d = x.shape[0]
    for k in range(d):
        out[k] = kp * (x[(k - 1) % d] - x[(k + 1) % d]) * x[k] + lp - dp * x[k]


@njit(cache=True, nogil=True)
def _noise_into(x, g, kp, lp, dp, out):
    """out = noise_matrix(x) @ g without forming the matrix."""
    d = x.shape[0]
    if d == 2:
        a = math.sqrt(max(2.0 * kp * x[0] * x[1], 0.0)) * g[0]
        out[0] = a + math.sqrt(lp + dp * x[0]) * g[1]
        out[1] = -a + math.sqrt(lp + dp * x[1]) * g[2]
        return
    for k in range(d):
        out[k] = math.sqrt(lp + dp * x[k]) * g[d + k]
    for k in range(d):
        k1 = (k + 1) % d
        a = math.sqrt(max(kp * x[k] * x[k1], 0.0)) * g[k]
        out[k1] += a
        out[k] -= a


@njit(cache=True, nogil=True)
def _push_back(y, kp, lp, dp, floor, max_iter, b, c):
    """Oblique pushback of y into the orthant, in place.

    Returns the summed push length (>= 0), or -1.0 if max_iter is exhausted.
    """
    d = y.shape[0]
    total = 0.0
    for _ in range(max_iter):
        worst = -1
        ell = 0.0
        for i in range(d):
            c[i] = y[i] if y[i] > 0.0 else 0.0
        _drift_into(c, kp, lp, dp, b)
        norm = 0.0
        for i in range(d):
            norm += b[i] * b[i]
        norm = math.sqrt(norm)
        for i in range(d):
            if y[i] < -(floor + _ROUND):
                # gamma_i = lambda' / |b| > 0 on the face c_i = 0
                need = (-floor - y[i]) * norm / b[i]
                if need > ell:
                    ell = need
                    worst = i
        if worst < 0:
            for i in range(d):
                if y[i] < 0.0:
                    y[i] = 0.0
            return total
        total += ell
        if not math.isfinite(total) or not norm < math.inf:
            return -1.0  # diverging pushback: gamma nearly tangent to the face
        for i in range(d):
            y[i] += ell * b[i] / norm
        y[worst] = -floor
    for i in range(d):
        if y[i] < -(floor + _ROUND):
            return -1.0
        if y[i] < 0.0:
            y[i] = 0.0
    return total


@njit(cache=True, nogil=True)
def _cla_chunk(x, L, dt, coarsen, inv_sqrt_v, kp, lp, dp, floor, max_iter, drift_sign, gauss, out_x, out_l):
    """Advance len(out_x) steps. ``gauss`` holds ``coarsen`` fine increments per step.

    Returns the number of completed steps; a value below len(out_x) means the
    reflection failed on the following step.
    """
    d = x.shape[0]
    m = gauss.shape[1]
    b = np.empty(d)
    nz = np.empty(d)
    cb = np.empty(d)
    cc = np.empty(d)
    g = np.empty(m)
    scale = inv_sqrt_v * math.sqrt(dt)
    root_c = math.sqrt(coarsen)
    for s in range(out_x.shape[0]):
        for j in range(m):
            acc = 0.0
            for r in range(coarsen):
                acc += gauss[s * coarsen + r, j]
            g[j] = acc / root_c
        _drift_into(x, kp, lp, dp, b)
        _noise_into(x, g, kp, lp, dp, nz)
        inside = True
        for i in range(d):
            x[i] = x[i] + drift_sign * b[i] * dt + scale * nz[i]
            if x[i] < 0.0:
                inside = False
        if not inside:
            ell = _push_back(x, kp, lp, dp, floor, max_iter, cb, cc)
            if ell < 0.0:
                return s
            L += ell / inv_sqrt_v
        out_x[s, :] = x
        out_l[s] = L
    return out_x.shape[0]


def _conc(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError(f"concentration state must be {params.d} finite nonnegative reals, got {x}")
    return x


def _step_impl(params, x, dt, gauss, config):
    x = _conc(params, x)
    g = np.asarray(gauss, dtype=float)
    if g.shape != (params.n_noise,):
        raise ValueError(f"gauss must have length {params.n_noise}")
    y = x.copy()
    out_x = np.empty((1, params.d))
    out_l = np.empty(1)
    done = _cla_chunk(
        y, 0.0, dt, 1, 1.0 / math.sqrt(params.V), params.kappa_p, params.lambda_p, params.delta_p,
        config.clamp_floor, config.max_reflection_iters, 1.0, g[None, :], out_x, out_l,
    )
    if done == 0:
        raise ReflectionError(f"pushback did not converge in {config.max_reflection_iters} iterations")
    return out_x[0], float(out_l[0])


def cla_step(params: ModelParams, x, dt: float, gauss, config: ClaStepConfig | None = None):
    """One step from x; returns ``(x_new, dL)`` with dL the local-time increment."""
    config = config or ClaStepConfig(dt=dt)
    return _step_impl(params, x, dt, gauss, config)


def unconstrained_proposal(params: ModelParams, x, dt: float, gauss) -> np.ndarray:
    from .model import drift, noise_matrix

    x = _conc(params, x)
    return x + drift(params, x) * dt + noise_matrix(params, x) @ np.asarray(gauss) * math.sqrt(dt / params.V)


def simulate_cla(
    params: ModelParams,
    x0,
    t_end: float,
    dt: float = DEFAULT_DT,
    seed=0,
    observers=(),
    record: bool = True,
    config: ClaStepConfig | None = None,
    coarsen: int = 1,
    drift_sign: float = 1.0,
    max_steps: int = 10**11,
) -> SampledPath:
    """Fixed-step CLA path with ceil(t_end / dt) steps.

    ``coarsen`` > 1 drives each step with the normalized sum of that many
    standard normals drawn at the finer step ``dt / coarsen``; a run at
    ``(dt, coarsen=2)`` therefore shares its Brownian path with ``(dt / 2,
    coarsen=1)`` under the same seed. ``drift_sign=-1`` flips the interior
    drift and exists only for falsification controls.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    config = config or ClaStepConfig(dt=dt)
    x = _conc(params, x0).copy()
    rng = make_rng(seed)
    m, d = params.n_noise, params.d
    n_total = int(math.ceil(t_end / dt - 1e-9))
    st = {"k": 0, "L": 0.0}
    inv = 1.0 / math.sqrt(params.V)

    def step(size):
        size = min(size, n_total - st["k"])
        gauss = rng.standard_normal((size * coarsen, m))
        out_x = np.empty((size, d))
        out_l = np.empty(size)
        done = _cla_chunk(
            x, st["L"], dt, coarsen, inv, params.kappa_p, params.lambda_p, params.delta_p,
            config.clamp_floor, config.max_reflection_iters, drift_sign, gauss, out_x, out_l,
        )
        if done < size:
            raise ReflectionError(f"reflection failed at step {st['k'] + done} (t={(st['k'] + done + 1) * dt:g})")
        times = (st["k"] + 1 + np.arange(size)) * dt
        st["k"] += size
        st["L"] = float(out_l[-1]) if size else st["L"]
        return times, out_x, out_l, st["k"] >= n_total

    rec, t_final, event_time, n_steps = _run_chunks(step, 0.0, _conc(params, x0), t_end, list(observers), record, max_steps)
    if rec is None:
        rec = _Recorder(0.0, _conc(params, x0))
    path = rec.build(t_final, event_time=event_time, n_events=n_steps, meta={"kind": "cla", "dt": dt})
    path.meta["local_time"] = st["L"]
    return path


# ---------------------------------------------------------------------------
# 1-D reduced model


def raw_rates(params) -> tuple[float, float, float, float]:
    """(V, kappa', lambda', delta') from a ModelParams or a 4-tuple.

    Tuples bypass ModelParams validation so that degenerate rates
    (kappa' = delta' = 0) can be used in closed-form checks.
    """
    if isinstance(params, ModelParams):
        return params.V, params.kappa_p, params.lambda_p, params.delta_p
    V, kp, lp, dp = (float(v) for v in params)
    if V <= 0 or lp <= 0 or kp < 0 or dp < 0:
        raise ValueError("need V > 0, lambda' > 0, kappa' >= 0, delta' >= 0")
    return V, kp, lp, dp


@njit(cache=True, nogil=True)
def _cla1d_chunk(s, L, t, n, dt, inv_sqrt_v, kp, lp, dp, stop_at_n, gauss, out_s, out_l):
    """Returns (steps, s, L, hit_time); hit_time < 0 means no hit."""
    sq = math.sqrt(dt) * inv_sqrt_v
    for k in range(gauss.shape[0]):
        a = 2.0 * kp * s * (n - s) + lp + dp * s
        y = s + (lp - dp * s) * dt + math.sqrt(max(a, 0.0)) * sq * gauss[k]
        if stop_at_n and y >= n:
            hit = t + dt * (n - s) / (y - s)
            out_s[k] = n
            out_l[k] = L
            return k + 1, n, L, hit
        for _ in range(64):
            if y < 0.0:
                L += -2.0 * y
                y = -y
            elif (not stop_at_n) and y > n:
                L += 2.0 * (y - n)
                y = 2.0 * n - y
            else:
                break
        s = y
        t += dt
        out_s[k] = s
        out_l[k] = L
    return gauss.shape[0], s, L, -1.0


def simulate_cla1d(
    params,
    n: float,
    s0: float,
    t_end: float,
    dt: float = DEFAULT_DT,
    seed=0,
    stop_at_n: bool = False,
    record: bool = True,
    chunk: int = 8192,
) -> SampledPath:
    """Reduced 1-D model on [0, n], reflecting at 0 and at n unless ``stop_at_n``.

    With ``stop_at_n`` the run ends at the first crossing of n and
    ``path.event_time`` holds the linearly interpolated hitting time (None if
    the horizon is reached first).
    """
    V, kp, lp, dp = raw_rates(params)
    if not (n > 0 and 0 <= s0 <= n):
        raise ValueError("need n > 0 and 0 <= s0 <= n")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    rng = make_rng(seed)
    n_total = int(math.ceil(t_end / dt - 1e-9))
    rec = _Recorder(0.0, np.array([s0], dtype=float)) if record else None
    s, L, k_done, hit = float(s0), 0.0, 0, -1.0
    inv = 1.0 / math.sqrt(V)
    while k_done < n_total:
        size = min(chunk, n_total - k_done)
        gauss = rng.standard_normal(size)
        out_s = np.empty(size)
        out_l = np.empty(size)
        k, s, L, hit = _cla1d_chunk(s, L, k_done * dt, float(n), dt, inv, kp, lp, dp, stop_at_n, gauss, out_s, out_l)
        if rec is not None:
            rec.add((k_done + 1 + np.arange(k)) * dt, out_s[:k, None], out_l[:k])
        k_done += k
        if hit >= 0:
            break
    t_final = k_done * dt
    if rec is None:
        rec = _Recorder(0.0, np.array([s0], dtype=float))
    path = rec.build(t_final, event_time=hit if hit >= 0 else None, n_events=k_done, meta={"kind": "cla1d", "dt": dt})
    path.meta["local_time"] = L
    return path


def cla1d_hitting_times(params, n: float, n_paths: int, dt: float, seed: int = 0, t_max: float = 1e4) -> np.ndarray:
    """Hitting times of n from 0 for ``n_paths`` independent paths (NaN if t_max is reached)."""
    from ._rng import trajectory_seed

    out = np.empty(n_paths)
    for i in range(n_paths):
        p = simulate_cla1d(params, n, 0.0, t_max, dt, seed=trajectory_seed(seed, i), stop_at_n=True, record=False)
        out[i] = p.event_time if p.event_time is not None else np.nan
    return out


__all__ = [
    "BudgetExceededError",
    "ClaStepConfig",
    "ReflectionError",
    "cla_step",
    "simulate_cla",
    "simulate_cla1d",
    "cla1d_hitting_times",
    "raw_rates",
]
