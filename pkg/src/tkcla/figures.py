"""Replayable figure protocols at configurable scale.

Each protocol is declared at full size (horizon ``T`` and ``n_traj``); the
``scale`` argument multiplies both, with small floors so that a quick smoke
run still produces every panel. Every panel is written as CSV (or JSON for
ensembles) plus an SVG, and the protocol returns a manifest of what it wrote
together with headline numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import export as ex
from .cla import DEFAULT_DT, simulate_cla
from .ensemble import EnsembleConfig, run_ensemble
from .model import ModelParams
from .ssa import simulate_ctmc
from .stats import DetectorSpec, WeightedHistogram, bimodal_peaks, edge_mass_fraction
from .studies import StationarySpec, stationary_histogram


@dataclass(frozen=True)
class FigureContext:
    out_dir: Path
    scale: float = 1.0
    seed: int = 0
    threads: int = 1
    dt: float = DEFAULT_DT

    def horizon(self, T: float, floor: float = 1e3) -> float:
        return max(T * self.scale, floor)

    def count(self, n: int, floor: int = 10) -> int:
        return max(int(math.ceil(n * self.scale)), floor)

    def write(self, name: str, text: str) -> str:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return str(path)


def _header(params: ModelParams, **extra) -> dict:
    return params.as_dict() | extra


def _tag(x: float) -> str:
    """1/32 -> '1o32' style tags for file names."""
    for den in (16, 32, 64, 128, 256, 512):
        num = x * den
        if abs(num - round(num)) < 1e-9:
            return f"{int(round(num))}o{den}"
    return f"{x:g}"


def _hist_panel(ctx, name, hist: WeightedHistogram, header, xlabel, ylabel, title):
    return [
        ctx.write(f"{name}.csv", ex.histogram_csv(hist, header)),
        ctx.write(f"{name}.svg", ex.histogram_svg(hist, xlabel=xlabel, ylabel=ylabel, title=title)),
    ]


def _ensemble_panel(ctx, name, cfg: EnsembleConfig, title: str, bins: int = 30):
    res = run_ensemble(cfg)
    header = cfg.as_dict()
    header.pop("threads", None)
    files = [
        ctx.write(f"{name}.json", ex.dumps_json(res.as_dict() | {"config": header})),
        ctx.write(f"{name}.csv", ex.event_times_csv(res.raw_times, cfg.time_scale, {"protocol": name})),
    ]
    t = res.times[np.isfinite(res.times)]
    if len(t):
        hist = WeightedHistogram.empty([np.linspace(0.0, float(t.max()) * 1.0001, bins + 1)])
        hist.add(t, np.ones(len(t)))
        files.append(ctx.write(f"{name}.svg", ex.histogram_svg(hist, xlabel=f"time ({cfg.time_unit} units)", ylabel="density", title=title)))
    return res, files


# ---------------------------------------------------------------------------
# protocols


def trajectories(ctx: FigureContext) -> dict:
    """Sample CTMC paths for d = 2..6 with V = 16 and all mass initially in the last species."""
    files = []
    for d in range(2, 7):
        p = ModelParams(d, 16, 1.0, 1 / 64, 1 / 64)
        x0 = np.zeros(d, dtype=np.int64)
        x0[-1] = 16 * d
        path = simulate_ctmc(p, x0, ctx.horizon(2e4, 2e3), seed=ctx.seed)
        files.append(ctx.write(f"trajectory_d{d}.svg", ex.path_svg(path, title=f"d = {d}")))
    return {"files": files}


def stationary_2d(ctx: FigureContext) -> dict:
    """Joint stationary densities, CTMC and CLA, V = 64, D in {1/16, 1/32, 1/64}."""
    files, out = [], {}
    T = ctx.horizon(1e6, 2e4)
    for D in (1 / 16, 1 / 32, 1 / 64):
        p = ModelParams(2, 64, 1.0, D, D)
        for backend in ("ctmc", "cla"):
            hist = stationary_histogram(p, backend, T, StationarySpec("state", bins=64), seed=ctx.seed, dt=ctx.dt)
            name = f"stationary2d_{backend}_D{_tag(D)}"
            files += _hist_panel(ctx, name, hist, _header(p, backend=backend, T=T), "x1", "x2", f"{backend} D={D:g}")
            out[name] = {"total_time": hist.total_time}
    return {"files": files, "panels": out}


def switching_histograms(ctx: FigureContext) -> dict:
    """Switching-time ensembles at D = 1/32 and 1/64 (CTMC and CLA) and D = 1/256 (CTMC and 1-D model)."""
    files, out = [], {}
    n = ctx.count(1000)
    runs = [(1 / 32, "ctmc"), (1 / 32, "cla"), (1 / 64, "ctmc"), (1 / 64, "cla"), (1 / 256, "ctmc"), (1 / 256, "cla1d")]
    for D, backend in runs:
        cfg = EnsembleConfig(
            ModelParams(2, 64, 1.0, D, D), backend, DetectorSpec("switching"), n_traj=n,
            master_seed=ctx.seed, threads=ctx.threads, dt=ctx.dt, time_unit="volume", t_end=1e6,
        )
        name = f"switching_{backend}_D{_tag(D)}"
        res, f = _ensemble_panel(ctx, name, cfg, f"switching {backend} D={D:g}")
        files += f
        out[name] = res.summary().as_dict() if np.isfinite(res.raw_times).any() else None
    return {"files": files, "summaries": out}


def sensitivity_2d(ctx: FigureContext) -> dict:
    """Mean switching time against lambda' for the three models (V = 64, kappa' = 1, delta' = 1/64)."""
    files, out = [], {}
    n = ctx.count(200)
    values = (1 / 128, 1 / 64, 1 / 32, 1 / 16)
    curves = {}
    for backend in ("ctmc", "cla", "cla1d"):
        means = []
        for lp in values:
            cfg = EnsembleConfig(
                ModelParams(2, 64, 1.0, lp, 1 / 64), backend, DetectorSpec("switching"), n_traj=n,
                master_seed=ctx.seed, threads=ctx.threads, dt=ctx.dt, time_unit="volume", t_end=1e6,
            )
            res = run_ensemble(cfg)
            means.append(res.summary().mean)
        curves[backend] = means
    out["lambda_p"] = list(values)
    out.update(curves)
    files.append(ctx.write("sensitivity2d_lambda.json", ex.dumps_json(out)))
    files.append(ctx.write("sensitivity2d_lambda.svg", ex.series_svg(values, curves, "lambda'", "mean switching time")))
    return {"files": files, "means": out}


def stationary_3d(ctx: FigureContext) -> dict:
    """(x1, x2) on the total-mass level set for d = 3, V = 64, D in {3/64, 3/128, 1/64}."""
    files, out = [], {}
    T = ctx.horizon(1e6, 2e4)
    for D in (3 / 64, 3 / 128, 1 / 64):
        p = ModelParams(3, 64, 1.0, D, D)
        for backend in ("ctmc", "cla"):
            hist = stationary_histogram(p, backend, T, StationarySpec("state", bins=48), seed=ctx.seed, dt=ctx.dt)
            name = f"stationary3d_{backend}_D{_tag(D)}"
            files += _hist_panel(ctx, name, hist, _header(p, backend=backend, T=T), "x1", "x2", f"{backend} D={D:g}")
            out[name] = {"total_time": hist.total_time}
    return {"files": files, "panels": out}


def trajectories_3d(ctx: FigureContext) -> dict:
    """d = 3, V = 256 paths (CTMC and CLA) at D = 1/32 and 3/512."""
    files = []
    T = min(ctx.horizon(60.0, 30.0), 60.0)
    for D in (1 / 32, 3 / 512):
        p = ModelParams(3, 256, 1.0, D, D)
        path = simulate_ctmc(p, np.array([0, 0, 3 * 256]), T, seed=ctx.seed)
        path = replace(path, states=path.states / p.V)
        files.append(ctx.write(f"trajectory3d_ctmc_D{_tag(D)}.svg", ex.path_svg(path, title=f"CTMC D={D:g}", ylabel="concentration")))
        cpath = simulate_cla(p, np.array([0.0, 0.0, 3.0]), T, dt=ctx.dt, seed=ctx.seed)
        files.append(ctx.write(f"trajectory3d_cla_D{_tag(D)}.svg", ex.path_svg(cpath, title=f"CLA D={D:g}", ylabel="concentration")))
    return {"files": files}


def cycling_histograms(ctx: FigureContext) -> dict:
    """Cycling-time ensembles, d = 3, V = 256, D in {1/32, 3/512}, CTMC and CLA."""
    files, out = [], {}
    n = ctx.count(1000)
    for D in (1 / 32, 3 / 512):
        for backend in ("ctmc", "cla"):
            cfg = EnsembleConfig(
                ModelParams(3, 256, 1.0, D, D), backend, DetectorSpec("cycling"), n_traj=n,
                master_seed=ctx.seed, threads=ctx.threads, dt=ctx.dt, t_end=1e4,
            )
            name = f"cycling_{backend}_D{_tag(D)}"
            res, f = _ensemble_panel(ctx, name, cfg, f"cycling {backend} D={D:g}")
            files += f
            out[name] = res.summary().as_dict() if np.isfinite(res.raw_times).any() else None
    return {"files": files, "summaries": out}


def six_species(ctx: FigureContext) -> dict:
    """Disparity density and conditioned odd fractions for d = 6, V = 64, D = 1/256."""
    p = ModelParams(6, 64, 1.0, 1 / 256, 1 / 256)
    T = ctx.horizon(1e6, 2e4)
    x0 = np.zeros(6, dtype=np.int64)
    x0[-1] = 6 * 64
    hb = stationary_histogram(p, "ctmc", T, StationarySpec("disparity", bins=80), seed=ctx.seed, x0=x0)
    hr = stationary_histogram(p, "ctmc", T, StationarySpec("odd-fractions", bins=50), seed=ctx.seed, x0=x0)
    files = _hist_panel(ctx, "disparity6d", hb, _header(p, T=T), "B", "density", "disparity")
    files += _hist_panel(ctx, "oddfractions6d", hr, _header(p, T=T, condition="B >= 0.95"), "rho1", "rho3", "odd fractions")
    short = simulate_ctmc(p, x0, min(T, 2e3), seed=ctx.seed)
    files.append(ctx.write("trajectory6d.svg", ex.path_svg(replace(short, states=short.states / p.V), ylabel="concentration")))
    return {"files": files, "peaks": bimodal_peaks(hb), "edge_mass": edge_mass_fraction(hr) if hr.total_time > 0 else None}


def cycling_vs_d(ctx: FigureContext) -> dict:
    """Mean CTMC cycling time for d = 3..10 at V = 64, D = 1/256."""
    n = ctx.count(1000)
    ds = list(range(3, 11))
    means, ses = [], []
    for d in ds:
        cfg = EnsembleConfig(
            ModelParams(d, 64, 1.0, 1 / 256, 1 / 256), "ctmc", DetectorSpec("cycling"), n_traj=n,
            master_seed=ctx.seed, threads=ctx.threads, t_end=1e5,
        )
        s = run_ensemble(cfg).summary()
        means.append(s.mean)
        ses.append(s.std_error)
    data = {"d": ds, "mean": means, "std_error": ses}
    files = [
        ctx.write("cycling_vs_d.json", ex.dumps_json(data)),
        ctx.write("cycling_vs_d.svg", ex.series_svg(ds, {"ctmc": means}, "d", "mean cycling time")),
    ]
    return {"files": files, "data": data}


PROTOCOLS: dict[str, Callable[[FigureContext], dict]] = {
    "trajectories": trajectories,
    "stationary_2d": stationary_2d,
    "switching": switching_histograms,
    "sensitivity_2d": sensitivity_2d,
    "stationary_3d": stationary_3d,
    "trajectories_3d": trajectories_3d,
    "cycling": cycling_histograms,
    "six_species": six_species,
    "cycling_vs_d": cycling_vs_d,
}


def run_figures(names, ctx: FigureContext) -> dict:
    """Run the named protocols (all when ``names`` is empty) and write a manifest."""
    names = list(names) or list(PROTOCOLS)
    unknown = [n for n in names if n not in PROTOCOLS]
    if unknown:
        raise KeyError(f"unknown figure protocol(s): {', '.join(unknown)}")
    manifest = {name: PROTOCOLS[name](ctx) for name in names}
    ctx.write("manifest.json", ex.dumps_json({"scale": ctx.scale, "seed": ctx.seed, "protocols": manifest}))
    return manifest


__all__ = ["FigureContext", "PROTOCOLS", "run_figures"]
