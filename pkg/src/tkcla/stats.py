"""Observables, streaming observers, event detectors and ensemble summaries.

Every observer follows the same protocol used by both simulators::

    obs.start(t0, x0)
    obs.update(times, states)   # one chunk; states[i] is in force from times[i]
    obs.finish(t_final)

Detectors additionally carry ``is_detector = True``, return the index of the
sample that triggered them from ``update`` and expose ``event_time``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .path import SampledPath


class EmptyPathError(ValueError):
    pass


class EmptyConditionError(ValueError):
    pass


class HorizonExceededError(RuntimeError):
    def __init__(self, elapsed: float, message: str = ""):
        self.elapsed = elapsed
        super().__init__(message or f"no event before t={elapsed:g}")


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    variance: float
    std_error: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "variance": self.variance, "std_error": self.std_error}


def summarize(samples) -> SummaryStats:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    if x.size == 1:
        return SummaryStats(1, float(x[0]), 0.0, 0.0, degenerate=True)
    var = float(np.var(x, ddof=1))
    return SummaryStats(int(x.size), float(np.mean(x)), var, math.sqrt(var / x.size))


def pool(stats: Sequence[SummaryStats]) -> SummaryStats:
    """Combine summaries of disjoint samples (order independent)."""
    n = sum(s.n for s in stats)
    if n == 0:
        raise ValueError("nothing to pool")
    mean = sum(s.n * s.mean for s in stats) / n
    ss = sum((s.n - 1) * s.variance + s.n * (s.mean - mean) ** 2 for s in stats)
    var = ss / (n - 1) if n > 1 else 0.0
    return SummaryStats(n, mean, var, math.sqrt(var / n) if n > 1 else 0.0, degenerate=n == 1)


def batch_means(values: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Weighted grand mean and batch-means standard error from per-batch averages."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mean = float(np.sum(values * weights) / np.sum(weights))
    k = len(values)
    se = float(np.std(values, ddof=1) / math.sqrt(k)) if k > 1 else float("nan")
    return mean, se


# ---------------------------------------------------------------------------
# histograms


@dataclass
class WeightedHistogram:
    """Time-weighted occupation mass on a 1-D or 2-D grid of bins.

    ``total_time`` equals ``mass.sum()``; time spent outside the bins is kept in
    ``outside`` and is not part of the normalized density.
    """

    edges: list
    mass: np.ndarray
    outside: float = 0.0
    labels: tuple = ()

    @property
    def dims(self) -> int:
        return len(self.edges)

    @property
    def total_time(self) -> float:
        return float(self.mass.sum())

    def normalized(self) -> np.ndarray:
        total = self.total_time
        if total <= 0:
            raise EmptyConditionError("histogram holds no mass")
        return self.mass / total

    def density(self) -> np.ndarray:
        p = self.normalized()
        widths = [np.diff(e) for e in self.edges]
        if self.dims == 1:
            return p / widths[0]
        return p / np.outer(widths[0], widths[1])

    def centers(self, axis: int = 0) -> np.ndarray:
        e = self.edges[axis]
        return 0.5 * (e[1:] + e[:-1])

    def merge(self, other: "WeightedHistogram") -> "WeightedHistogram":
        if len(self.edges) != len(other.edges) or not all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges)):
            raise ValueError("histograms have different bins")
        return WeightedHistogram(self.edges, self.mass + other.mass, self.outside + other.outside, self.labels)

    __add__ = merge

    @classmethod
    def empty(cls, edges, labels=()) -> "WeightedHistogram":
        edges = [np.asarray(e, dtype=float) for e in edges]
        return cls(edges, np.zeros(tuple(len(e) - 1 for e in edges)), 0.0, tuple(labels))

    def add(self, values: np.ndarray, weights: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        idx = []
        ok = np.ones(len(weights), dtype=bool)
        for a, e in enumerate(self.edges):
            i = np.searchsorted(e, values[:, a], side="right") - 1
            # the last edge is inclusive
            i[values[:, a] == e[-1]] = len(e) - 2
            ok &= (i >= 0) & (i < len(e) - 1)
            idx.append(i)
        w = np.asarray(weights, dtype=float)
        self.outside += float(w[~ok].sum())
        flat = np.ravel_multi_index(tuple(i[ok] for i in idx), self.mass.shape)
        self.mass += np.bincount(flat, weights=w[ok], minlength=self.mass.size).reshape(self.mass.shape)


def integer_edges(lo: int, hi: int) -> np.ndarray:
    """Unit bins centred on the integers lo..hi."""
    return np.arange(lo, hi + 2) - 0.5


class _Segments:
    """Turns chunk updates into (value, holding time) pairs."""

    def __init__(self):
        self.t = None
        self.x = None

    def start(self, t0, x0):
        self.t = float(t0)
        self.x = np.asarray(x0)[None, :]

    def take(self, times, states):
        """States and durations that are now closed; the last row stays pending."""
        if len(times) == 0:
            return self.x[:0], np.zeros(0), np.zeros(0)
        closed = np.concatenate([self.x, np.asarray(states)[:-1]])
        starts = np.concatenate([[self.t], times[:-1]])
        dur = np.diff(np.concatenate([[self.t], times]))
        self.t = float(times[-1])
        self.x = np.asarray(states)[-1:]
        return closed, dur, starts

    def close(self, t_final):
        dur = max(float(t_final) - self.t, 0.0)
        return self.x, np.array([dur]), np.array([self.t])


class OccupationObserver:
    """Streams a (conditional) occupation histogram of ``feature(states)``."""

    is_detector = False

    def __init__(self, edges, feature: Optional[Callable] = None, condition: Optional[Callable] = None, labels=()):
        if not isinstance(edges, (list, tuple)):
            edges = [edges]
        self.hist = WeightedHistogram.empty(edges, labels)
        self.feature = feature
        self.condition = condition
        self._seg = _Segments()

    def start(self, t0, x0):
        self._seg.start(t0, x0)

    def _accumulate(self, states, dur):
        if len(dur) == 0:
            return
        states = np.asarray(states, dtype=float)
        w = dur
        if self.condition is not None:
            mask = np.asarray(self.condition(states), dtype=bool)
            states, w = states[mask], w[mask]
            if len(w) == 0:
                return
        vals = self.feature(states) if self.feature is not None else states
        self.hist.add(vals, w)

    def update(self, times, states):
        if len(times):
            closed, dur, _ = self._seg.take(times, states)
            self._accumulate(closed, dur)

    def finish(self, t_final):
        x, dur, _ = self._seg.close(t_final)
        self._accumulate(x, dur)


class TimeAverageObserver:
    """Time integrals of vector-valued ``func(states)`` in equal-length batches.

    Only time in ``[burn_in, t_end]`` counts and, with a ``condition``, only
    time where the condition holds. Segments that straddle a batch boundary
    are split exactly.
    """

    is_detector = False

    def __init__(self, func: Callable, t_end: float, burn_in: float = 0.0, n_batches: int = 10, condition=None):
        self.func = func
        self.condition = condition
        self.t0 = float(burn_in)
        self.t_end = float(t_end)
        self.n_batches = int(n_batches)
        self.width = (self.t_end - self.t0) / self.n_batches
        self.integral = None
        self.time = np.zeros(self.n_batches)
        self._seg = _Segments()

    def start(self, t0, x0):
        self._seg.start(t0, x0)

    def _accumulate(self, states, dur, starts):
        if len(dur) == 0:
            return
        states = np.asarray(states, dtype=float)
        vals = np.atleast_2d(np.asarray(self.func(states), dtype=float).T).T
        if vals.ndim == 1:
            vals = vals[:, None]
        if self.integral is None:
            self.integral = np.zeros((self.n_batches, vals.shape[1]))
        if self.condition is not None:
            keep = np.asarray(self.condition(states), dtype=bool)
        else:
            keep = np.ones(len(dur), dtype=bool)
        a = np.clip(starts, self.t0, self.t_end)
        b = np.clip(starts + dur, self.t0, self.t_end)
        live = keep & (b > a)
        if not np.any(live):
            return
        a, b, vals = a[live], b[live], vals[live]
        ia = np.minimum(((a - self.t0) / self.width).astype(np.int64), self.n_batches - 1)
        ib = np.minimum(((b - self.t0) / self.width).astype(np.int64), self.n_batches - 1)
        same = ia == ib
        w = b[same] - a[same]
        np.add.at(self.time, ia[same], w)
        np.add.at(self.integral, ia[same], vals[same] * w[:, None])
        for j in np.nonzero(~same)[0]:
            lo = a[j]
            for batch in range(ia[j], ib[j] + 1):
                hi = min(b[j], self.t0 + (batch + 1) * self.width) if batch < ib[j] else b[j]
                self.time[batch] += hi - lo
                self.integral[batch] += vals[j] * (hi - lo)
                lo = hi

    def update(self, times, states):
        if len(times):
            self._accumulate(*self._seg.take(times, states))

    def finish(self, t_final):
        self._accumulate(*self._seg.close(t_final))

    def batch_averages(self) -> np.ndarray:
        ok = self.time > 0
        return self.integral[ok] / self.time[ok, None]

    def mean(self) -> np.ndarray:
        if self.integral is None or self.time.sum() <= 0:
            raise EmptyConditionError("no qualifying time accumulated")
        return self.integral.sum(axis=0) / self.time.sum()

    def standard_error(self) -> np.ndarray:
        avg = self.batch_averages()
        if len(avg) < 2:
            return np.full(avg.shape[1] if avg.ndim == 2 else 1, np.nan)
        return np.std(avg, axis=0, ddof=1) / math.sqrt(len(avg))


def occupation_histogram(path: SampledPath, bins, feature: Optional[Callable] = None, condition=None) -> WeightedHistogram:
    """Holding-time-weighted histogram of a recorded path."""
    if path is None or len(path) == 0:
        raise EmptyPathError("path is empty")
    obs = OccupationObserver(bins, feature=feature, condition=condition)
    obs.start(path.times[0], path.states[0])
    obs.update(path.times[1:], path.states[1:])
    obs.finish(path.t_end)
    return obs.hist


def level_set_condition(c: float) -> Callable:
    """Exact level set {sum(n) == c} for count states."""
    return lambda s: np.sum(s, axis=1) == c


def slab_condition(c: float, eps: float = 1.0 / 128) -> Callable:
    """Slab {|sum(x) - c| <= eps} for concentration states."""
    return lambda s: np.abs(np.sum(s, axis=1) - c) <= eps


def conditional_histogram(path: SampledPath, condition: Callable, bins, feature: Optional[Callable] = None) -> WeightedHistogram:
    hist = occupation_histogram(path, bins, feature=feature, condition=condition)
    if hist.total_time + hist.outside <= 0:
        raise EmptyConditionError("no sample satisfies the condition")
    return hist


# ---------------------------------------------------------------------------
# disparity and odd-species observables


def disparity(states: np.ndarray, V: float) -> np.ndarray:
    """B = (1 / (d V)) * sum_i (X^{2i-1} - X^{2i}); pass V=1 for concentrations."""
    s = np.atleast_2d(np.asarray(states, dtype=float))
    d = s.shape[1]
    if d % 2:
        raise ValueError("disparity needs an even number of species")
    return (s[:, 0::2].sum(axis=1) - s[:, 1::2].sum(axis=1)) / (d * V)


def odd_even_disparity(path: SampledPath, V: float) -> np.ndarray:
    return disparity(path.states, V)


def odd_fraction_values(states: np.ndarray) -> np.ndarray:
    """(rho_1, rho_3) = (X^1, X^3) / (X^1 + X^3 + X^5); rows with zero odd mass give NaN."""
    s = np.atleast_2d(np.asarray(states, dtype=float))
    if s.shape[1] != 6:
        raise ValueError("odd fractions are defined for d = 6")
    tot = s[:, 0] + s[:, 2] + s[:, 4]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.stack([s[:, 0] / tot, s[:, 2] / tot], axis=1)


def disparity_condition(V: float, threshold: float = 0.95) -> Callable:
    def cond(states):
        odd = states[:, 0] + states[:, 2] + states[:, 4]
        return (disparity(states, V) >= threshold) & (odd > 0)

    return cond


def odd_fractions(path: SampledPath, V: float, threshold: float = 0.95, bins: int = 50) -> WeightedHistogram:
    edges = np.linspace(0.0, 1.0, bins + 1)
    return conditional_histogram(path, disparity_condition(V, threshold), [edges, edges], feature=odd_fraction_values)


def edge_mass_fraction(hist: WeightedHistogram, width: float = 0.1) -> float:
    """Share of a (rho_1, rho_3) histogram within ``width`` of a simplex edge."""
    r1 = hist.centers(0)[:, None]
    r3 = hist.centers(1)[None, :]
    r5 = 1.0 - r1 - r3
    near = (r1 <= width) | (r3 <= width) | (np.abs(r5) <= width)
    return float(hist.mass[near].sum() / hist.mass.sum())


def bimodal_peaks(hist: WeightedHistogram) -> tuple[float, float]:
    """Locations of the heaviest bin on each side of zero of a 1-D histogram."""
    c = hist.centers()
    neg, pos = c < 0, c > 0
    return float(c[neg][np.argmax(hist.mass[neg])]), float(c[pos][np.argmax(hist.mass[pos])])


# ---------------------------------------------------------------------------
# detectors


@dataclass(frozen=True)
class DetectorSpec:
    """Event definition shared by the CLI, the ensemble runner and the replay helpers.

    ``cycle_mode="peak"`` times the maximum of each excursion of the target
    fraction above ``peak_level``; ``"threshold"`` times rising edges through
    ``theta``. Both arm only after the fraction has dropped below half of the
    respective level.
    """

    kind: str = "switching"
    extinction_eps: Optional[float] = None
    theta: float = 0.9
    target_species: Optional[int] = None
    cycle_mode: str = "peak"
    peak_level: float = 0.5

    def __post_init__(self):
        if self.kind not in ("switching", "cycling"):
            raise ValueError("kind must be 'switching' or 'cycling'")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not 0 < self.peak_level < 1:
            raise ValueError("peak_level must lie in (0, 1)")
        if self.cycle_mode not in ("peak", "threshold"):
            raise ValueError("cycle_mode must be 'peak' or 'threshold'")
        if self.extinction_eps is not None and self.extinction_eps < 0:
            raise ValueError("extinction_eps must be >= 0")


class SwitchingDetector:
    """First time ``species`` drops to ``eps`` or below.

    With ``interpolate`` the crossing is placed by linear interpolation between
    the last sample above eps and the first at or below it (CLA paths); for
    CTMC paths the jump time itself is the event.
    """

    is_detector = True

    def __init__(self, species: int = 1, eps: float = 0.0, interpolate: bool = False):
        self.species = species
        self.eps = float(eps)
        self.interpolate = interpolate
        self.event_time = None
        self.done = False

    def start(self, t0, x0):
        self._t, self._v = float(t0), float(np.asarray(x0)[self.species])
        self.event_time, self.done = None, False
        if self._v <= self.eps:
            self.event_time, self.done = float(t0), True

    def update(self, times, states):
        v = np.asarray(states)[:, self.species]
        hits = np.nonzero(v <= self.eps)[0]
        if len(hits) == 0:
            if len(times):
                self._t, self._v = float(times[-1]), float(v[-1])
            return None
        i = int(hits[0])
        t_hit = float(times[i])
        if self.interpolate:
            t_prev, v_prev = (self._t, self._v) if i == 0 else (float(times[i - 1]), float(v[i - 1]))
            if v_prev > v[i]:
                t_hit = t_prev + (t_hit - t_prev) * (v_prev - self.eps) / (v_prev - v[i])
        self.event_time, self.done = t_hit, True
        return i

    def finish(self, t_final):
        pass


def _fractions(states, species):
    s = np.atleast_2d(np.asarray(states, dtype=float))
    tot = s.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, s[:, species] / tot, 0.0)


@njit(cache=True)
def _cycling_scan(frac, theta, armed, count, target):
    """Returns (index of target-th rising edge or -1, armed, count)."""
    low = 0.5 * theta
    for i in range(frac.shape[0]):
        f = frac[i]
        if armed:
            if f >= theta:
                count += 1
                armed = False
                if count >= target:
                    return i, armed, count
        elif f < low:
            armed = True
    return -1, armed, count


@njit(cache=True)
def _peak_scan(frac, times, level, phase, count, target, best_f, best_t):
    """Excursion-maximum scan.

    phase 0: waiting to fall below level / 2; 1: armed; 2: inside an excursion.
    Returns (stop index or -1, phase, count, best_f, best_t).
    """
    low = 0.5 * level
    for i in range(frac.shape[0]):
        f = frac[i]
        if phase == 2:
            if f >= level:
                if f > best_f:
                    best_f = f
                    best_t = times[i]
            else:
                count += 1
                if count >= target:
                    return i, phase, count, best_f, best_t
                phase = 1 if f < low else 0
        elif phase == 1:
            if f >= level:
                phase = 2
                best_f = f
                best_t = times[i]
        elif f < low:
            phase = 1
    return -1, phase, count, best_f, best_t


class CyclingDetector:
    """Time of the second rising edge of ``x[species] >= theta * |x|_1``.

    An edge is only counted after the fraction has fallen below ``theta / 2``
    since the previous edge. A starting state already above theta counts as
    the first edge.
    """

    is_detector = True

    def __init__(self, species: int = -1, theta: float = 0.9, interpolate: bool = False, edges: int = 2):
        self.species = species
        self.theta = float(theta)
        self.interpolate = interpolate
        self.target = edges
        self.event_time = None
        self.done = False

    def start(self, t0, x0):
        f0 = float(_fractions(x0, self.species)[0])
        self.event_time, self.done = None, False
        self.count = 1 if f0 >= self.theta else 0
        self.armed = f0 < 0.5 * self.theta
        self._t, self._f = float(t0), f0

    def update(self, times, states):
        if len(times) == 0:
            return None
        f = _fractions(states, self.species)
        i, self.armed, self.count = _cycling_scan(f, self.theta, self.armed, self.count, self.target)
        if i < 0:
            self._t, self._f = float(times[-1]), float(f[-1])
            return None
        t_hit = float(times[i])
        if self.interpolate:
            t_prev, f_prev = (self._t, self._f) if i == 0 else (float(times[i - 1]), float(f[i - 1]))
            if f[i] > f_prev:
                t_hit = t_prev + (t_hit - t_prev) * (self.theta - f_prev) / (f[i] - f_prev)
        self.event_time, self.done = t_hit, True
        return int(i)

    def finish(self, t_final):
        pass


class PeakCyclingDetector:
    """Time at which ``x[species] / |x|_1`` peaks during its second excursion above ``level``.

    The initial state counts as the first peak when it already sits above the
    level. An excursion only counts after the fraction has dropped below
    ``level / 2``; the run is stopped when the excursion ends, but
    ``event_time`` is the time of the maximum inside it.
    """

    is_detector = True

    def __init__(self, species: int = -1, level: float = 0.5, peaks: int = 2):
        self.species = species
        self.level = float(level)
        self.target = peaks
        self.event_time = None
        self.done = False

    def start(self, t0, x0):
        f0 = float(_fractions(x0, self.species)[0])
        self.event_time, self.done = None, False
        self.count = 0
        self.best_f, self.best_t = f0, float(t0)
        if f0 >= self.level:
            self.phase = 2
        else:
            self.phase = 1 if f0 < 0.5 * self.level else 0

    def update(self, times, states):
        if len(times) == 0:
            return None
        f = _fractions(states, self.species)
        t = np.asarray(times, dtype=float)
        i, self.phase, self.count, self.best_f, self.best_t = _peak_scan(
            f, t, self.level, self.phase, self.count, self.target, self.best_f, self.best_t
        )
        if i < 0:
            return None
        self.event_time, self.done = float(self.best_t), True
        return int(i)

    def finish(self, t_final):
        pass


def make_detector(spec: DetectorSpec, d: int, backend: str, V: float = 1.0):
    """Detector for ``spec`` on a ``backend`` path ("ctmc", "cla" or "cla1d").

    ``V`` is accepted for symmetry with the CLI; thresholds are stated in the
    path's own units (extinction defaults to exactly zero on either backend).
    """
    continuous = backend in ("cla", "cla1d")
    if spec.kind == "switching":
        species = 1 if spec.target_species is None else spec.target_species
        eps = 0.0 if spec.extinction_eps is None else spec.extinction_eps
        return SwitchingDetector(species, eps, interpolate=continuous)
    species = d - 1 if spec.target_species is None else spec.target_species
    if spec.cycle_mode == "peak":
        return PeakCyclingDetector(species, spec.peak_level)
    return CyclingDetector(species, spec.theta, interpolate=continuous)


def _replay(path: SampledPath, det):
    det.start(path.times[0], path.states[0])
    det.update(path.times[1:], path.states[1:])
    if not det.done:
        raise HorizonExceededError(float(path.t_end))
    return det.event_time


def switching_time(path: SampledPath, spec: DetectorSpec = DetectorSpec(), V: float = 1.0) -> float:
    backend = path.meta.get("kind", "ctmc")
    return _replay(path, make_detector(spec, path.d, backend, V))


def cycling_time(path: SampledPath, spec: DetectorSpec = DetectorSpec(kind="cycling"), V: float = 1.0) -> float:
    backend = path.meta.get("kind", "ctmc")
    return _replay(path, make_detector(spec, path.d, backend, V))
