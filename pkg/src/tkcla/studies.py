"""Streaming stationary estimates and parameter sweeps shared by the CLI and figure protocols."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cla import DEFAULT_DT, simulate_cla
from .ensemble import EnsembleConfig, run_ensemble
from .model import ModelParams
from .ssa import simulate_ctmc
from .stats import (
    OccupationObserver,
    WeightedHistogram,
    disparity,
    disparity_condition,
    odd_fraction_values,
)

OBSERVABLES = ("state", "level", "disparity", "odd-fractions")


class BurnIn:
    """Forwards only the part of a run after ``t0`` to ``inner``."""

    is_detector = False

    def __init__(self, inner, t0: float):
        self.inner = inner
        self.t0 = float(t0)
        self.started = False
        self.last = None

    def start(self, t, x):
        if t >= self.t0:
            self.inner.start(t, x)
            self.started = True
        else:
            self.last = np.array(x)

    def update(self, times, states):
        if self.started:
            self.inner.update(times, states)
            return
        if len(times) == 0:
            return
        idx = int(np.searchsorted(times, self.t0, side="right"))
        if idx == len(times):
            self.last = np.array(states[-1])
            return
        x0 = states[idx - 1] if idx > 0 else self.last
        self.inner.start(self.t0, x0)
        self.started = True
        self.inner.update(times[idx:], states[idx:])

    def finish(self, t_final):
        if not self.started:
            if t_final <= self.t0:
                return
            self.inner.start(self.t0, self.last)
            self.started = True
        self.inner.finish(t_final)


def stationary_start(params: ModelParams, backend: str) -> np.ndarray:
    """Every species at its deterministic mean lambda'/delta'."""
    x = np.full(params.d, params.lambda_p / params.delta_p)
    if backend == "ctmc":
        return np.rint(x * params.V).astype(np.int64)
    return x


def run_streaming(params: ModelParams, backend: str, t_end: float, observers, *, seed=0, dt=DEFAULT_DT, x0=None):
    """Run a simulator without recording so observers see the whole path in bounded memory."""
    x0 = stationary_start(params, backend) if x0 is None else x0
    if backend == "ctmc":
        return simulate_ctmc(params, x0, t_end, seed=seed, observers=observers, record=False)
    if backend == "cla":
        return simulate_cla(params, x0, t_end, dt=dt, seed=seed, observers=observers, record=False)
    raise ValueError(f"stationary runs need backend 'ctmc' or 'cla', got {backend!r}")


@dataclass(frozen=True)
class StationarySpec:
    """Which occupation histogram to build.

    ``state``: joint (x1, x2) concentrations (d = 2) or (x1, x2) on the level
    set of total mass d (d >= 3). ``level``: x1 on that level set (1-D).
    ``disparity`` and ``odd-fractions`` are the even-d observables.
    Concentration-scale slabs of half-width ``slab`` stand in for exact level
    sets on the CLA.
    """

    observable: str = "state"
    bins: int = 64
    slab: float = 1.0 / 128
    threshold: float = 0.95
    hi: float | None = None

    def __post_init__(self):
        if self.observable not in OBSERVABLES:
            raise ValueError(f"observable must be one of {OBSERVABLES}")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")


def _level_condition(params, backend, slab):
    level = params.d * params.lambda_p / params.delta_p
    if backend == "ctmc":
        target = int(round(level * params.V))
        return lambda s: np.sum(s, axis=1) == target
    return lambda s: np.abs(np.sum(s, axis=1) - level) <= slab


def stationary_observer(params: ModelParams, backend: str, spec: StationarySpec) -> OccupationObserver:
    scale = params.V if backend == "ctmc" else 1.0
    level = params.d * params.lambda_p / params.delta_p
    if spec.hi is not None:
        hi = spec.hi
    elif params.d == 2 and spec.observable == "state":
        hi = 2.0 * level
    else:
        hi = level + (spec.slab if backend != "ctmc" else 0.0)
    edges = np.linspace(0.0, hi, spec.bins + 1)
    if spec.observable == "state":
        cond = None if params.d == 2 else _level_condition(params, backend, spec.slab)
        return OccupationObserver([edges, edges], feature=lambda s: s[:, :2] / scale, condition=cond, labels=("x1", "x2"))
    if spec.observable == "level":
        return OccupationObserver(edges, feature=lambda s: s[:, 0] / scale, condition=_level_condition(params, backend, spec.slab), labels=("x1",))
    if params.d % 2:
        raise ValueError(f"{spec.observable} needs an even number of species")
    if spec.observable == "disparity":
        return OccupationObserver(np.linspace(-1.0, 1.0, spec.bins + 1), feature=lambda s: disparity(s, scale), labels=("B",))
    if params.d != 6:
        raise ValueError("odd fractions are defined for d = 6")
    unit = np.linspace(0.0, 1.0, spec.bins + 1)
    return OccupationObserver(
        [unit, unit], feature=odd_fraction_values, condition=disparity_condition(scale, spec.threshold), labels=("rho1", "rho3")
    )


def stationary_histogram(
    params: ModelParams,
    backend: str,
    t_end: float,
    spec: StationarySpec = StationarySpec(),
    *,
    seed=0,
    dt: float = DEFAULT_DT,
    burn_in: float | None = None,
    x0=None,
) -> WeightedHistogram:
    """Time-averaged occupation histogram of one long run, discarding ``burn_in`` (default t_end / 10)."""
    obs = stationary_observer(params, backend, spec)
    burn = t_end / 10.0 if burn_in is None else float(burn_in)
    run_streaming(params, backend, t_end, [BurnIn(obs, burn)], seed=seed, dt=dt, x0=x0)
    return obs.hist


def sweep(base: EnsembleConfig, field_name: str, values) -> list:
    """Ensemble summaries while one ModelParams field takes each value in turn."""
    out = []
    for v in values:
        params = replace(base.params, **{field_name: v})
        res = run_ensemble(replace(base, params=params))
        out.append((v, res))
    return out


__all__ = [
    "BurnIn",
    "OBSERVABLES",
    "StationarySpec",
    "run_streaming",
    "stationary_histogram",
    "stationary_observer",
    "stationary_start",
    "sweep",
]
