from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BudgetExceededError(RuntimeError):
    pass


@dataclass
class SampledPath:
    """Time grid, state snapshots and cumulative local time.

    ``states[i]`` is the state in force from ``times[i]`` until ``times[i + 1]``
    (or ``t_end`` for the last row). ``L`` is the cumulative local time at each
    sample; it stays at zero for CTMC paths.
    """

    times: np.ndarray
    states: np.ndarray
    L: np.ndarray = None
    t_end: float = None
    event_time: float | None = None
    n_events: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if self.L is None:
            self.L = np.zeros(len(self.times))
        if self.t_end is None:
            self.t_end = float(self.times[-1]) if len(self.times) else 0.0
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")

    @property
    def local_time(self) -> float:
        return float(self.L[-1]) if len(self.L) else 0.0

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return len(self.times)

    def holding_times(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.t_end))


class _Recorder:
    """Accumulates chunks into a SampledPath."""

    def __init__(self, t0, x0, L0=0.0):
        self.times = [np.array([t0], dtype=float)]
        self.states = [np.asarray(x0)[None, :].copy()]
        self.L = [np.array([L0], dtype=float)]

    def add(self, times, states, L=None):
        self.times.append(np.array(times, dtype=float))
        self.states.append(np.array(states))
        self.L.append(np.zeros(len(times)) if L is None else np.array(L, dtype=float))

    def build(self, t_end, **kw) -> SampledPath:
        return SampledPath(
            times=np.concatenate(self.times),
            states=np.concatenate(self.states),
            L=np.concatenate(self.L),
            t_end=t_end,
            **kw,
        )
