"""Acceptance criteria 1-10 at their stated tolerances.

Each test records one part of a criterion; the terminal summary prints a
PASS/FAIL line per criterion. Parts that the model cannot reach are marked
``xfail(strict=True)``: they still run, still print FAIL with the measured
value, and would turn the suite red if they ever started passing unnoticed.
"""
import json
import math
import time

import numpy as np
import pytest

from conftest import record
from oracles import exit_time_oracle
from tkcla.cla import cla1d_hitting_times
from tkcla.cli import main as cli_main
from tkcla.ensemble import EnsembleConfig, run_ensemble
from tkcla.hitting import closed_form_no_reaction, expected_exit_time
from tkcla.model import ModelParams, bump_function
from tkcla.stats import DetectorSpec, bimodal_peaks, edge_mass_fraction, summarize
from tkcla.studies import BurnIn, StationarySpec, run_streaming, stationary_observer
from tkcla.verify import (
    bar_residual,
    check_coefficient_identities,
    check_ellipticity,
    check_level_set_uniformity,
    check_total_mass_poisson,
)

pytestmark = pytest.mark.slow

N_TRAJ = 1000
SWITCH_SEED = 2024
_cache = {}


def _within(value, target, rel):
    return abs(value - target) <= rel * target


def _fmt(s):
    return f"mean {s.mean:.3f} (se {s.std_error:.3f}, var {s.variance:.2f}, n {s.n})"


def switching(D, backend, dt=2e-3, coarsen=1):
    """Fig.-4 style switching study (times in units of V), cached per configuration."""
    key = ("sw", D, backend, dt, coarsen)
    if key not in _cache:
        p = ModelParams(2, 64, 1.0, D, D)
        cfg = EnsembleConfig(
            p, backend, DetectorSpec("switching"), n_traj=N_TRAJ, master_seed=SWITCH_SEED,
            t_end=1e6, dt=dt, coarsen=coarsen if backend != "ctmc" else 1, time_unit="volume",
        )
        t0 = time.perf_counter()
        res = run_ensemble(cfg)
        assert res.ok, res.errors[:3]
        _cache[key] = (res, time.perf_counter() - t0)
    return _cache[key]


def cycling(D, backend):
    key = ("cy", D, backend)
    if key not in _cache:
        p = ModelParams(3, 256, 1.0, D, D)
        cfg = EnsembleConfig(p, backend, DetectorSpec("cycling"), n_traj=N_TRAJ, master_seed=7, t_end=1e4, dt=2e-3, coarsen=2)
        t0 = time.perf_counter()
        res = run_ensemble(cfg)
        assert res.ok, res.errors[:3]
        _cache[key] = (res, time.perf_counter() - t0)
    return _cache[key]


# ---------------------------------------------------------------------------
# 1. 2-D switching times


@pytest.mark.parametrize(
    "D, backend, target",
    [(1 / 32, "ctmc", 5.42), (1 / 32, "cla", 5.62), (1 / 64, "ctmc", 4.63), (1 / 64, "cla", 4.37)],
    ids=["D1_32-ctmc", "D1_32-cla", "D1_64-ctmc", "D1_64-cla"],
)
def test_c1_switching_means(D, backend, target):
    res, secs = switching(D, backend)
    s = res.summary()
    ok = _within(s.mean, target, 0.10) and secs < 60
    record(1, f"D={D:g} {backend}", ok, f"{_fmt(s)} vs {target} +-10%; {secs:.0f} s")
    assert _within(s.mean, target, 0.10)
    assert secs < 60


# ---------------------------------------------------------------------------
# 2. extreme regime


def test_c2_ctmc_mean():
    res, _ = switching(1 / 256, "ctmc")
    s = res.summary()
    ok = _within(s.mean, 10.05, 0.10)
    record(2, "ctmc", ok, f"{_fmt(s)} vs 10.05 +-10%")
    assert ok


@pytest.mark.xfail(strict=True, reason="the reduced 1-D model gives ~6.2, well below 8.52 (see ledger)")
def test_c2_reduced_mean():
    res, _ = switching(1 / 256, "cla1d", dt=1e-3, coarsen=1)
    s = res.summary()
    ok = _within(s.mean, 8.52, 0.10)
    record(2, "1-D CLA", ok, f"{_fmt(s)} vs 8.52 +-10%")
    assert ok


def test_c2_ordering():
    ctmc = switching(1 / 256, "ctmc")[0].summary()
    red = switching(1 / 256, "cla1d", dt=1e-3, coarsen=1)[0].summary()
    ok = red.mean < ctmc.mean
    record(2, "1-D < CTMC", ok, f"{red.mean:.3f} < {ctmc.mean:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# 3. 3-D cycling times


@pytest.mark.parametrize(
    "D, backend, target",
    [(1 / 32, "ctmc", 6.54), (1 / 32, "cla", 6.4), (3 / 512, "ctmc", 9.34)],
    ids=["D1_32-ctmc", "D1_32-cla", "D3_512-ctmc"],
)
def test_c3_cycling_means(D, backend, target):
    s = cycling(D, backend)[0].summary()
    ok = _within(s.mean, target, 0.15)
    record(3, f"D={D:g} {backend}", ok, f"{_fmt(s)} vs {target} +-15%")
    assert ok


def test_c3_cla_underestimates():
    c = cycling(3 / 512, "ctmc")[0].summary()
    l = cycling(3 / 512, "cla")[0].summary()
    ok = l.mean < c.mean
    record(3, "D=3/512 cla < ctmc", ok, f"cla {l.mean:.3f} < ctmc {c.mean:.3f} (reported 7.51 vs 9.34)")
    assert ok


def test_c3_threshold_sensitivity():
    """Reported only: the threshold-edge convention at three values of theta."""
    p = ModelParams(3, 256, 1.0, 1 / 32, 1 / 32)
    parts = []
    for theta in (0.8, 0.9, 0.95):
        spec = DetectorSpec("cycling", theta=theta, cycle_mode="threshold")
        res = run_ensemble(EnsembleConfig(p, "ctmc", spec, n_traj=100, master_seed=7, t_end=1e3))
        t = res.times[np.isfinite(res.times)]
        mean = f"{t.mean():.2f}" if len(t) else "n/a"
        parts.append(f"theta={theta}: {len(t)}/100 fired by t=1e3, mean {mean}")
    record(3, "theta sensitivity (reported)", True, "; ".join(parts))


# ---------------------------------------------------------------------------
# 4. hitting-time quadrature


def test_c4_closed_form():
    got = expected_exit_time((64.0, 0.0, 1 / 64, 0.0), 2.0).value
    exact = closed_form_no_reaction(64.0, 1 / 64, 2.0)
    ok = abs(got - exact) <= 5e-7 * exact
    record(4, "closed form", ok, f"{got:.9g} vs {exact:.9g}")
    assert ok


def test_c4_independent_oracle():
    got = expected_exit_time((64.0, 1.0, 1 / 256, 1 / 256), 2.0).value
    ref = exit_time_oracle(64.0, 1.0, 1 / 256, 1 / 256, 2.0)
    ok = abs(got - ref) <= 5e-6 * ref
    record(4, "oracle (10^6 points)", ok, f"{got:.8g} vs {ref:.8g}")
    assert ok


@pytest.mark.parametrize("params", [(8.0, 1.0, 0.5, 0.5), (16.0, 2.0, 0.5, 0.25)], ids=["V8", "V16"])
def test_c4_monte_carlo(params):
    exact = expected_exit_time(params, 1.0).value
    s = summarize(cla1d_hitting_times(params, 1.0, 10_000, 1e-4, seed=3))
    ok = _within(s.mean, exact, 0.05)
    record(4, f"1-D MC {params}", ok, f"{_fmt(s)} vs {exact:.5f} +-5%")
    assert ok


# ---------------------------------------------------------------------------
# 5. total mass


@pytest.mark.parametrize(
    "d, D, T", [(2, 1 / 64, 1e5), (3, 1 / 64, 1e5), (6, 1 / 256, 2e5)], ids=["d2", "d3", "d6"]
)
def test_c5_total_mass(d, D, T):
    r = check_total_mass_poisson(ModelParams(d, 64, 1.0, D, D), T, seed=0)
    x = r.details
    record(
        5, f"d={d}", r.passed,
        f"mean {x['mean']:.2f} (se {x['se_mean']:.2f}), var {x['variance']:.1f} (se {x['se_variance']:.1f}), "
        f"target {x['target']:.0f}; worst z {r.worst_violation:.2f}",
    )
    assert r.passed


# ---------------------------------------------------------------------------
# 6. level-set uniformity


def test_c6_uniform_level_sets():
    r = check_level_set_uniformity(ModelParams(2, 64, 1.0, 1 / 32, 1 / 32), T=1e6, seed=5)
    record(6, "D=2/V", r.passed, f"max TV {r.worst_violation:.4f} over {r.samples} level sets (< 0.1)")
    assert r.passed


def test_c6_negative_control():
    r = check_level_set_uniformity(
        ModelParams(2, 64, 1.0, 1 / 16, 1 / 16), T=1e6, seed=5, require_uniform_regime=False
    )
    record(6, "D=1/16 control fails", not r.passed, f"max TV {r.worst_violation:.4f}")
    assert not r.passed


# ---------------------------------------------------------------------------
# 7. algebraic identities


@pytest.mark.parametrize("d", [2, 3, 6])
def test_c7_identities(d):
    p = ModelParams(d, 64, 1.0, 1 / 64, 1 / 64)
    e = check_ellipticity(p, 10_000, seed=d)
    c = check_coefficient_identities(p, 10_000, seed=d)
    ok = e.passed and c.passed
    record(7, f"d={d}", ok, f"min ellipticity slack {e.details['min_slack']:.3g}; worst identity error {c.worst_violation:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 8. stationarity residual


def test_c8_bar_residual():
    p = ModelParams(2, 64, 1.0, 1 / 16, 1 / 16)
    f = bump_function([1.0, 1.0], 0.5)
    good = bar_residual(p, f, T=1e5, seed=9)
    bad = bar_residual(p, f, T=1e5, seed=9, drift_sign=-1.0)
    g, b = good.details, bad.details
    record(8, "interior bump", good.passed, f"mean {g['mean']:.3e}, se {g['std_error']:.3e}, |z| {good.worst_violation:.2f}")
    record(8, "reversed drift fails", not bad.passed, f"|z| {bad.worst_violation:.1f}")
    assert good.passed and not bad.passed


# ---------------------------------------------------------------------------
# 9. six species


def six_species_histograms():
    if "6d" not in _cache:
        p = ModelParams(6, 64, 1.0, 1 / 256, 1 / 256)
        T = 1e6
        hb = stationary_observer(p, "ctmc", StationarySpec("disparity", bins=80))
        hr = stationary_observer(p, "ctmc", StationarySpec("odd-fractions", bins=50))
        x0 = np.zeros(6, dtype=np.int64)
        x0[-1] = 6 * 64
        run_streaming(p, "ctmc", T, [BurnIn(hb, T / 10), BurnIn(hr, T / 10)], seed=13, x0=x0)
        _cache["6d"] = (hb.hist, hr.hist)
    return _cache["6d"]


def test_c9_bimodal_disparity():
    hb, _ = six_species_histograms()
    lo, hi = bimodal_peaks(hb)
    ok = abs(lo + 1) <= 0.1 and abs(hi - 1) <= 0.1
    record(9, "B peaks", ok, f"peaks at {lo:.3f}, {hi:.3f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="measured edge mass ~0.63 at T = 1e6 (see ledger)")
def test_c9_edge_mass():
    _, hr = six_species_histograms()
    m = edge_mass_fraction(hr, 0.1)
    record(9, "edge mass", m >= 0.8, f"{m:.3f} within 0.1 of an edge (>= 0.8)")
    assert m >= 0.8


@pytest.mark.xfail(strict=True, reason="conditioned mean ~(0.45, 0.53) (see ledger)")
def test_c9_conditioned_mean():
    _, hr = six_species_histograms()
    r1 = hr.centers(0)[:, None] + 0 * hr.centers(1)[None, :]
    r3 = 0 * hr.centers(0)[:, None] + hr.centers(1)[None, :]
    sel = (1 - r1 - r3 < 0.05) & (1 - r1 - r3 > -0.05)
    w = hr.mass * sel
    m1, m3 = float((w * r1).sum() / w.sum()), float((w * r3).sum() / w.sum())
    ok = abs(m1 - 0.4) <= 0.05 and abs(m3 - 0.6) <= 0.05
    record(9, "mean given rho5 < 0.05", ok, f"({m1:.3f}, {m3:.3f}) vs (0.4, 0.6) +-0.05")
    assert ok


def test_c9_dimension_sweep():
    ds = list(range(3, 11))
    stats = []
    for d in ds:
        cfg = EnsembleConfig(ModelParams(d, 64, 1.0, 1 / 256, 1 / 256), "ctmc", DetectorSpec("cycling"), n_traj=200, master_seed=17, t_end=1e5)
        stats.append(run_ensemble(cfg).summary())
    means = np.array([s.mean for s in stats])
    ses = np.array([s.std_error for s in stats])
    k = int(np.argmin(means))
    dip = 0 < k < len(ds) - 1 and means[0] - means[k] > 2 * math.hypot(ses[0], ses[k])
    grows = means[-1] - means[k] > 2 * math.hypot(ses[-1], ses[k])
    detail = ", ".join(f"d={d}: {m:.2f}" for d, m in zip(ds, means))
    record(9, "d-sweep dip then growth", dip and grows, f"{detail}; minimum at d={ds[k]}")
    assert dip and grows


# ---------------------------------------------------------------------------
# 10. scheme self-consistency


@pytest.mark.parametrize("D", [1 / 32, 1 / 64], ids=["D1_32", "D1_64"])
def test_c10_halving_dt(D):
    coarse = switching(D, "cla", dt=2e-3, coarsen=2)[0]
    fine = switching(D, "cla", dt=1e-3, coarsen=1)[0]
    sc, sf = coarse.summary(), fine.summary()
    gap = abs(sc.mean - sf.mean)
    se = max(sc.std_error, sf.std_error)
    ok = gap < se
    record(10, f"dt halving D={D:g}", ok, f"dt 2e-3: {sc.mean:.3f}, dt 1e-3: {sf.mean:.3f}; gap {gap:.3f} < se {se:.3f}")
    assert ok


def test_c10_thread_invariance(tmp_path):
    outs = []
    for backend in ("ctmc", "cla"):
        base = f"switching --V 64 --kappa 1 --lambda 1/32 --delta 1/32 --n-traj 40 --seed 5 --backend {backend} --dt 2e-3".split()
        for threads in (1, 8):
            out = tmp_path / f"{backend}-{threads}.json"
            assert cli_main(base + ["--threads", str(threads), "--output", str(out)]) == 0
            outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and outs[2] == outs[3]
    n = json.loads(outs[0])["summary"]["n"]
    record(10, "threads 1 vs 8 bytes", ok, f"identical JSON for ctmc and cla ({n} trajectories each)")
    assert ok
