import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tkcla.export import (
    UnsupportedFormatError,
    dumps_json,
    event_times_csv,
    export,
    histogram_csv,
    histogram_svg,
    path_csv,
    path_svg,
    read_histogram_csv,
    read_path_csv,
    series_svg,
)
from tkcla.model import ModelParams
from tkcla.path import SampledPath
from tkcla.ssa import simulate_ctmc
from tkcla.stats import WeightedHistogram

DATA = Path(__file__).parent / "data"


def _hist1d():
    h = WeightedHistogram.empty([np.array([0.0, 1.0, 2.0])])
    h.mass[:] = [0.25, 0.75]
    return h


def test_1d_csv_rows():
    text = histogram_csv(_hist1d(), {"V": 64})
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    assert lines[0] == "bin_lo,bin_hi,mass,density"
    rows = [list(map(float, l.split(","))) for l in lines[1:]]
    assert sum(r[3] * (r[1] - r[0]) for r in rows) == pytest.approx(1.0)
    assert "# V = 64" in text


def test_2d_csv_matrix():
    e = np.linspace(0, 1, 4)
    h = WeightedHistogram([e, e], np.arange(9.0).reshape(3, 3), 0.5)
    body = [l for l in histogram_csv(h).splitlines() if not l.startswith("#")]
    assert len(body) == 3 and all(len(l.split(",")) == 3 for l in body)
    back = read_histogram_csv(histogram_csv(h))
    assert np.array_equal(back.mass, h.mass) and back.outside == 0.5


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30), st.floats(0, 10))
def test_1d_round_trip(masses, outside):
    e = np.cumsum(np.r_[0.0, np.full(len(masses), 0.37)])
    h = WeightedHistogram([e], np.array(masses), outside)
    back = read_histogram_csv(histogram_csv(h))
    assert np.array_equal(back.mass, h.mass)
    assert np.array_equal(back.edges[0], h.edges[0])
    assert back.outside == h.outside


def test_path_csv_round_trip():
    p = SampledPath(np.array([0.0, 0.1, 0.25]), np.array([[1.5, 0.0], [1.25, 0.5], [1.0, 1e-9]]), L=np.array([0, 0.1, 0.3]), meta={"kind": "cla"})
    text = path_csv(p, {"seed": 3})
    assert text.splitlines()[1] == "t,x1,x2,L"
    back = read_path_csv(text)
    assert np.array_equal(back.states, p.states) and np.array_equal(back.L, p.L)


def test_ctmc_path_csv_integers():
    p = SampledPath(np.array([0.0, 1.0]), np.array([[0, 128], [1, 127]]), meta={"kind": "ctmc"})
    assert path_csv(p).splitlines() == ["t,x1,x2", "0.0,0,128", "1.0,1,127"]


def test_event_times_csv():
    text = event_times_csv([64.0, math.nan], scale=64.0)
    assert text.splitlines() == ["index,time,scaled_time", "0,64.0,1.0", "1,,"]


def test_json_stable_and_nan():
    a = dumps_json({"b": np.float64(math.nan), "a": np.arange(2)})
    assert a == dumps_json({"a": [0, 1], "b": None})
    assert json.loads(a) == {"a": [0, 1], "b": None}


def test_histogram_svg():
    svg = histogram_svg(_hist1d(), xlabel="x", ylabel="density")
    assert 'width="800" height="600"' in svg and svg.count("<rect") >= 4
    e = np.linspace(0, 1, 3)
    svg2 = histogram_svg(WeightedHistogram([e, e], np.array([[0.0, 1.0], [2.0, 4.0]])))
    fills = re.findall(r"rgb\((\d+),\1,\1\)", svg2)
    assert len(fills) == 4 and min(map(int, fills)) == 0 and max(map(int, fills)) == 255


def test_series_svg():
    svg = series_svg([3, 4, 5], {"ctmc": [1, 2, 3]}, xlabel="d")
    assert svg.count("<circle") == 3


def test_golden_d3_path_svg():
    p = ModelParams(3, 16, 1.0, 1 / 32, 1 / 32)
    path = simulate_ctmc(p, [0, 0, 48], 20.0, seed=6)
    svg = path_svg(path, title="d = 3")
    golden = (DATA / "path_d3.svg").read_text()
    assert svg == golden
    assert svg.count("<polyline") == 3
    assert all(f"<title>x{i}</title>" in svg for i in (1, 2, 3))


def test_export_dispatch(tmp_path):
    h = _hist1d()
    assert export(h, "csv", tmp_path / "a" / "h.csv").read_text() == histogram_csv(h)
    assert export(h, "svg", tmp_path / "h.svg").read_text().startswith("<svg")
    out = export({"x": 1}, "json", tmp_path / "r.json", header={"seed": 1})
    assert json.loads(out.read_text()) == {"config": {"seed": 1}, "data": {"x": 1}}
    with pytest.raises(UnsupportedFormatError):
        export({"x": 1}, "csv", tmp_path / "x.csv")
    with pytest.raises(UnsupportedFormatError):
        export(h, "png", tmp_path / "x.png")
