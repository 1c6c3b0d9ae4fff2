"""Direct-method Gillespie simulation of the TK continuous-time Markov chain.

Channels are ordered autocatalytic ``0..d-1`` (``A_k + A_{k+1} -> 2 A_{k+1}``),
inflow ``d..2d-1`` and outflow ``2d..3d-1``. The jump chain is generated in
chunks by a compiled kernel; observers see each chunk as a pair of arrays
(jump times, post-jump states).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._rng import make_rng
from .model import ModelParams
from .path import BudgetExceededError, SampledPath, _Recorder

DEFAULT_MAX_EVENTS = 10**10
_FIRST_CHUNK = 1024
_MAX_CHUNK = 1 << 18


@njit(cache=True, nogil=True)
def _fill_propensities(n, kappa, lam, delta, a):
    d = n.shape[0]
    for k in range(d):
        a[k] = kappa * n[k] * n[(k + 1) % d]
        a[d + k] = lam
        a[2 * d + k] = delta * n[k]


@njit(cache=True, nogil=True)
def _select_channel(a, target):
    """First channel whose cumulative propensity reaches ``target``.

    Zero-rate channels are never selected; if rounding leaves the scan short,
    the last channel with positive rate is returned.
    """
    acc = 0.0
    last = -1
    for j in range(a.shape[0]):
        if a[j] > 0.0:
            acc += a[j]
            last = j
            if acc >= target:
                return j
    return last


@njit(cache=True, nogil=True)
def _apply(n, j, kappa, lam, delta, a):
    d = n.shape[0]
    if j < d:
        k1 = (j + 1) % d
        n[j] -= 1
        n[k1] += 1
        touched0, touched1 = j, k1
    elif j < 2 * d:
        n[j - d] += 1
        touched0, touched1 = j - d, -1
    else:
        n[j - 2 * d] -= 1
        touched0, touched1 = j - 2 * d, -1
    for s in (touched0, touched1):
        if s < 0:
            continue
        # species s enters autocatalytic channels s-1 and s, and outflow s
        km = (s - 1) % d
        a[km] = kappa * n[km] * n[s]
        a[s] = kappa * n[s] * n[(s + 1) % d]
        a[2 * d + s] = delta * n[s]


@njit(cache=True, nogil=True)
def _ssa_chunk(n, t, t_end, kappa, lam, delta, u, out_t, out_n):
    """Advance up to ``len(out_t)`` jumps; returns (jumps taken, t, reached_end)."""
    a = np.empty(3 * n.shape[0])
    _fill_propensities(n, kappa, lam, delta, a)
    kmax = out_t.shape[0]
    for k in range(kmax):
        a0 = 0.0
        for j in range(a.shape[0]):
            a0 += a[j]
        tau = -math.log(1.0 - u[2 * k]) / a0
        if t + tau > t_end:
            return k, t, True
        t += tau
        j = _select_channel(a, u[2 * k + 1] * a0)
        _apply(n, j, kappa, lam, delta, a)
        out_t[k] = t
        out_n[k, :] = n
    return kmax, t, False


def _counts(params: ModelParams, n) -> np.ndarray:
    arr = np.asarray(n)
    if arr.shape != (params.d,) or np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise ValueError(f"count state must be {params.d} nonnegative integers, got {n}")
    return arr.astype(np.int64)


def propensities(params: ModelParams, n) -> np.ndarray:
    n = _counts(params, n)
    a = np.empty(3 * params.d)
    _fill_propensities(n, params.kappa, params.lambda_, params.delta, a)
    return a


def stoichiometry(d: int) -> np.ndarray:
    """(3d, d) matrix of reaction vectors in channel order."""
    eye = np.eye(d, dtype=np.int64)
    auto = np.roll(eye, 1, axis=1) - eye
    return np.vstack([auto, eye, -eye])


def ssa_step(params: ModelParams, n, t: float, u1: float, u2: float):
    """One direct-method step driven by explicit uniforms ``u1, u2`` in (0, 1)."""
    n = _counts(params, n).copy()
    a = propensities(params, n)
    a0 = a.sum()
    t_new = t - math.log(u1) / a0
    j = _select_channel(a, u2 * a0)
    _apply(n, j, params.kappa, params.lambda_, params.delta, a)
    return n, t_new


def _run_chunks(step, t0, x0, t_end, observers, record, max_events, L0=0.0):
    """Shared chunk loop for both simulators.

    ``step(size)`` returns (times, states, L, reached_end); observers flagged
    ``is_detector`` may stop the run by returning a sample index from update().
    """
    for obs in observers:
        obs.start(t0, x0)
    rec = _Recorder(t0, x0, L0) if record else None
    size = _FIRST_CHUNK
    n_events = 0
    event_time = None
    last_t = t0
    while True:
        times, states, L, reached_end = step(size)
        n_events += len(times)
        if n_events > max_events:
            raise BudgetExceededError(f"event budget {max_events} exceeded at t={last_t}")
        stop = None
        for obs in observers:
            if getattr(obs, "is_detector", False) and not obs.done:
                idx = obs.update(times, states)
                if idx is not None and (stop is None or idx < stop):
                    stop = idx
        if stop is not None:
            times, states = times[: stop + 1], states[: stop + 1]
            L = L[: stop + 1] if L is not None else None
            event_time = min(o.event_time for o in observers if getattr(o, "is_detector", False) and o.done)
        for obs in observers:
            if not getattr(obs, "is_detector", False):
                obs.update(times, states)
        if rec is not None and len(times):
            rec.add(times, states, L)
        if len(times):
            last_t = float(times[-1])
        if stop is not None:
            t_final = last_t
            break
        if reached_end:
            t_final = t_end
            break
        size = min(2 * size, _MAX_CHUNK)
    for obs in observers:
        obs.finish(t_final)
    return rec, t_final, event_time, n_events


def simulate_ctmc(
    params: ModelParams,
    n0,
    t_end: float,
    seed=0,
    observers=(),
    record: bool = True,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> SampledPath:
    """Exact jump chain on [0, t_end].

    Observers are updated in place; detectors (see :mod:`tkcla.stats`) end the
    run at their event. With ``record=False`` only the initial state is kept in
    the returned path, which is how long stationary runs stay memory-bounded.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    n = _counts(params, n0).copy()
    rng = make_rng(seed)
    state = {"t": 0.0}
    kappa, lam, delta = params.kappa, params.lambda_, params.delta

    def step(size):
        u = rng.random(2 * size)
        out_t = np.empty(size)
        out_n = np.empty((size, params.d), dtype=np.int64)
        k, t, done = _ssa_chunk(n, state["t"], t_end, kappa, lam, delta, u, out_t, out_n)
        state["t"] = t
        return out_t[:k], out_n[:k], None, done

    rec, t_final, event_time, n_events = _run_chunks(
        step, 0.0, _counts(params, n0), t_end, list(observers), record, max_events
    )
    if rec is None:
        rec = _Recorder(0.0, _counts(params, n0))
    return rec.build(t_final, event_time=event_time, n_events=n_events, meta={"kind": "ctmc"})
