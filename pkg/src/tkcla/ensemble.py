"""Seeded ensembles of event times (switching or cycling) over a thread pool.

Trajectory ``i`` always uses ``trajectory_seed(master_seed, i)``, so any single
trajectory can be replayed in isolation and the merged output does not depend
on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import trajectory_seed
from .cla import DEFAULT_DT, simulate_cla, simulate_cla1d
from .model import ModelParams
from .ssa import DEFAULT_MAX_EVENTS, simulate_ctmc
from .stats import DetectorSpec, HorizonExceededError, SummaryStats, make_detector, summarize

BACKENDS = ("ctmc", "cla", "cla1d")
TIME_UNITS = ("model", "volume")


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything that determines an ensemble's output.

    ``x0`` is in counts for the CTMC and in concentrations otherwise; when
    omitted the study's standard start is used ((0, 2V) for switching, all mass
    in the last species for cycling). ``time_unit="volume"`` reports event
    times divided by V.
    """

    params: ModelParams
    backend: str = "ctmc"
    detector: DetectorSpec = DetectorSpec()
    n_traj: int = 1000
    master_seed: int = 0
    threads: int = 1
    t_end: float = 1e6
    dt: float = DEFAULT_DT
    x0: tuple | None = None
    time_unit: str = "model"
    coarsen: int = 1
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.time_unit not in TIME_UNITS:
            raise ValueError(f"time_unit must be one of {TIME_UNITS}")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not self.t_end > 0 or not self.dt > 0:
            raise ValueError("t_end and dt must be positive")
        if self.backend == "cla1d" and (self.detector.kind != "switching" or self.params.d != 2):
            raise ValueError("the reduced 1-D model only supports d = 2 switching")

    @property
    def time_scale(self) -> float:
        return self.params.V if self.time_unit == "volume" else 1.0

    def start_state(self) -> np.ndarray:
        p = self.params
        if self.x0 is not None:
            return np.asarray(self.x0, dtype=np.int64 if self.backend == "ctmc" else float)
        unit = p.V if self.backend == "ctmc" else 1.0
        x = np.zeros(p.d)
        if self.detector.kind == "switching":
            x[1] = 2.0 * unit
        else:
            x[-1] = p.d * unit
        return np.rint(x).astype(np.int64) if self.backend == "ctmc" else x

    def as_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("params", "detector")}
        out["x0"] = self.start_state().tolist()
        out["params"] = self.params.as_dict()
        out["detector"] = asdict(self.detector)
        return out


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    raw_times: np.ndarray  # model time units, NaN where a trajectory failed
    errors: list = field(default_factory=list)  # (index, error type, message)

    @property
    def times(self) -> np.ndarray:
        """Event times in the configured reporting unit."""
        return self.raw_times / self.config.time_scale

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> SummaryStats:
        t = self.times[np.isfinite(self.times)]
        return summarize(t)

    def as_dict(self) -> dict:
        ok = np.isfinite(self.raw_times)
        out = {
            "config": self.config.as_dict(),
            "time_unit": self.config.time_unit,
            "n_failed": int((~ok).sum()),
            "errors": [{"index": i, "type": k, "message": m} for i, k, m in self.errors],
        }
        if ok.any():
            out["summary"] = self.summary().as_dict()
        return out


def run_trajectory(config: EnsembleConfig, index: int) -> float:
    """Event time (model units) of trajectory ``index``; raises HorizonExceededError."""
    p = config.params
    seed = trajectory_seed(config.master_seed, index)
    x0 = config.start_state()
    if config.backend == "cla1d":
        n = float(np.sum(x0))
        s0 = float(x0[0])
        path = simulate_cla1d(p, n, s0, config.t_end, config.dt, seed=seed, stop_at_n=True, record=False)
        if path.event_time is None:
            raise HorizonExceededError(path.t_end)
        return float(path.event_time)
    det = make_detector(config.detector, p.d, config.backend, p.V)
    if config.backend == "ctmc":
        path = simulate_ctmc(p, x0, config.t_end, seed=seed, observers=[det], record=False, max_events=config.max_events)
    else:
        path = simulate_cla(
            p, x0, config.t_end, dt=config.dt, seed=seed, observers=[det], record=False, coarsen=config.coarsen
        )
    if not det.done:
        raise HorizonExceededError(path.t_end)
    return float(det.event_time)


def _safe(config, i):
    try:
        return i, run_trajectory(config, i), None
    except Exception as exc:  # reported per trajectory, never swallowed silently
        return i, math.nan, (i, type(exc).__name__, str(exc))


def run_ensemble(config: EnsembleConfig) -> EnsembleResult:
    """Run all trajectories and merge them by index."""
    raw = np.full(config.n_traj, np.nan)
    errors = []
    if config.threads == 1:
        results = [_safe(config, i) for i in range(config.n_traj)]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda i: _safe(config, i), range(config.n_traj)))
    for i, t, err in results:
        raw[i] = t
        if err is not None:
            errors.append(err)
    errors.sort()
    return EnsembleResult(config, raw, errors)


__all__ = ["EnsembleConfig", "EnsembleResult", "run_ensemble", "run_trajectory"]
