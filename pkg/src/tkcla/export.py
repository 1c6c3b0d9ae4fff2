"""CSV, JSON and SVG writers for paths, histograms, event times and reports.

Every CSV may start with ``# key = value`` header lines (the resolved run
configuration). Floats are written with ``repr`` so that reading a file back
reproduces the stored arrays exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .path import SampledPath
from .stats import WeightedHistogram

CANVAS_W, CANVAS_H = 800, 600
_MARGIN = 70
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


class UnsupportedFormatError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def dumps_json(obj) -> str:
    """Stable JSON: sorted keys, NaN/inf mapped to null, trailing newline."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def header_lines(header: dict | None) -> list[str]:
    if not header:
        return []
    return [f"# {k} = {_fmt_header(v)}" for k, v in sorted(header.items())]


def _fmt_header(v):
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(_jsonable(v), sort_keys=True)
    return str(v)


def _r(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# CSV


def path_csv(path: SampledPath, header: dict | None = None, with_local_time: bool | None = None) -> str:
    """``t,x1,...,xd[,L]``; L is included for CLA paths by default."""
    if with_local_time is None:
        with_local_time = path.meta.get("kind", "ctmc") != "ctmc"
    d = path.states.shape[1]
    buf = io.StringIO()
    for line in header_lines(header):
        buf.write(line + "\n")
    cols = ["t"] + [f"x{i + 1}" for i in range(d)] + (["L"] if with_local_time else [])
    buf.write(",".join(cols) + "\n")
    integer = np.issubdtype(path.states.dtype, np.integer)
    for i in range(len(path)):
        row = [_r(path.times[i])]
        row += [str(int(v)) for v in path.states[i]] if integer else [_r(v) for v in path.states[i]]
        if with_local_time:
            row.append(_r(path.L[i]))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def histogram_csv(hist: WeightedHistogram, header: dict | None = None) -> str:
    """1-D: ``bin_lo,bin_hi,mass,density`` rows. 2-D: a mass matrix with edges in the header."""
    buf = io.StringIO()
    h = dict(header or {})
    if hist.dims == 1:
        h["outside"] = _r(hist.outside)
        for line in header_lines(h):
            buf.write(line + "\n")
        buf.write("bin_lo,bin_hi,mass,density\n")
        e = hist.edges[0]
        dens = hist.density() if hist.total_time > 0 else np.zeros_like(hist.mass)
        for i in range(len(hist.mass)):
            buf.write(f"{_r(e[i])},{_r(e[i + 1])},{_r(hist.mass[i])},{_r(dens[i])}\n")
        return buf.getvalue()
    if hist.dims != 2:
        raise UnsupportedFormatError("only 1-D and 2-D histograms can be exported")
    h["edges0"] = " ".join(_r(v) for v in hist.edges[0])
    h["edges1"] = " ".join(_r(v) for v in hist.edges[1])
    h["outside"] = _r(hist.outside)
    for line in header_lines(h):
        buf.write(line + "\n")
    for row in hist.mass:
        buf.write(",".join(_r(v) for v in row) + "\n")
    return buf.getvalue()


def _split_header(text: str):
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    return header, body


def read_histogram_csv(text: str) -> WeightedHistogram:
    """Inverse of :func:`histogram_csv`."""
    header, body = _split_header(text)
    outside = float(header.get("outside", 0.0))
    if "edges0" in header:
        e0 = np.array([float(v) for v in header["edges0"].split()])
        e1 = np.array([float(v) for v in header["edges1"].split()])
        mass = np.array([[float(v) for v in line.split(",")] for line in body])
        return WeightedHistogram([e0, e1], mass, outside)
    rows = list(csv.reader(body[1:]))
    lo = np.array([float(r[0]) for r in rows])
    hi = np.array([float(r[1]) for r in rows])
    mass = np.array([float(r[2]) for r in rows])
    return WeightedHistogram([np.append(lo, hi[-1])], mass, outside)


def read_path_csv(text: str) -> SampledPath:
    header, body = _split_header(text)
    cols = body[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in body[1:]])
    has_l = cols[-1] == "L"
    d = len(cols) - 1 - int(has_l)
    return SampledPath(data[:, 0], data[:, 1 : 1 + d], L=data[:, -1] if has_l else None)


def event_times_csv(raw_times, scale: float = 1.0, header: dict | None = None) -> str:
    """``index,time,scaled_time`` with empty cells for failed trajectories."""
    buf = io.StringIO()
    for line in header_lines(header):
        buf.write(line + "\n")
    buf.write("index,time,scaled_time\n")
    for i, t in enumerate(np.asarray(raw_times, dtype=float)):
        if math.isfinite(t):
            buf.write(f"{i},{_r(t)},{_r(t / scale)}\n")
        else:
            buf.write(f"{i},,\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# SVG


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _num(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, xlim, ylim, xlabel="", ylabel="", title=""):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W}" height="{CANVAS_H}" '
            f'viewBox="0 0 {CANVAS_W} {CANVAS_H}">',
            f'<rect x="0" y="0" width="{CANVAS_W}" height="{CANVAS_H}" fill="white"/>',
        ]
        self.pw = CANVAS_W - 2 * _MARGIN
        self.ph = CANVAS_H - 2 * _MARGIN
        self._axes(xlabel, ylabel, title)

    def px(self, x):
        return _MARGIN + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return CANVAS_H - _MARGIN - (y - self.y0) / (self.y1 - self.y0) * self.ph

    def _axes(self, xlabel, ylabel, title):
        b = CANVAS_H - _MARGIN
        self.parts.append(
            f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{self.pw}" height="{self.ph}" fill="none" stroke="black"/>'
        )
        for k in range(5):
            fx = self.x0 + (self.x1 - self.x0) * k / 4
            fy = self.y0 + (self.y1 - self.y0) * k / 4
            self.parts.append(
                f'<text x="{_num(self.px(fx))}" y="{b + 18}" font-size="12" text-anchor="middle">{fx:.4g}</text>'
            )
            self.parts.append(
                f'<text x="{_MARGIN - 6}" y="{_num(self.py(fy) + 4)}" font-size="12" text-anchor="end">{fy:.4g}</text>'
            )
        self.parts.append(
            f'<text x="{CANVAS_W / 2}" y="{CANVAS_H - 20}" font-size="14" text-anchor="middle">{_esc(xlabel)}</text>'
        )
        self.parts.append(
            f'<text x="18" y="{CANVAS_H / 2}" font-size="14" text-anchor="middle" '
            f'transform="rotate(-90 18 {CANVAS_H / 2})">{_esc(ylabel)}</text>'
        )
        if title:
            self.parts.append(f'<text x="{CANVAS_W / 2}" y="30" font-size="16" text-anchor="middle">{_esc(title)}</text>')

    def add(self, s):
        self.parts.append(s)

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def histogram_svg(hist: WeightedHistogram, xlabel: str = "", ylabel: str = "", title: str = "") -> str:
    """Bar chart of a 1-D density or grayscale heatmap of a 2-D one (darker = more mass)."""
    dens = hist.density() if hist.total_time > 0 else np.zeros_like(hist.mass)
    if hist.dims == 1:
        e = hist.edges[0]
        top = float(dens.max()) if dens.size and dens.max() > 0 else 1.0
        c = _Canvas((e[0], e[-1]), (0.0, top), xlabel, ylabel or "density", title)
        for i, v in enumerate(dens):
            x, w = c.px(e[i]), c.px(e[i + 1]) - c.px(e[i])
            y = c.py(v)
            c.add(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(c.py(0) - y)}" fill="#4c72b0" stroke="none"/>')
        return c.render()
    if hist.dims != 2:
        raise UnsupportedFormatError("only 1-D and 2-D histograms can be drawn")
    e0, e1 = hist.edges
    c = _Canvas((e0[0], e0[-1]), (e1[0], e1[-1]), xlabel, ylabel, title)
    top = float(dens.max()) if dens.max() > 0 else 1.0
    for i in range(dens.shape[0]):
        for j in range(dens.shape[1]):
            g = int(round(255 * (1.0 - dens[i, j] / top)))
            x, y = c.px(e0[i]), c.py(e1[j + 1])
            w, h = c.px(e0[i + 1]) - x, c.py(e1[j]) - y
            c.add(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(h)}" fill="rgb({g},{g},{g})"/>')
    return c.render()


def path_svg(path: SampledPath, labels=None, xlabel: str = "t", ylabel: str = "abundance", title: str = "", max_points: int = 4000) -> str:
    """One labelled polyline per species; long paths are thinned evenly."""
    t = np.append(path.times, path.t_end)
    s = np.vstack([path.states, path.states[-1:]]).astype(float)
    if len(t) > max_points:
        idx = np.unique(np.linspace(0, len(t) - 1, max_points).astype(int))
        t, s = t[idx], s[idx]
    d = s.shape[1]
    labels = labels or [f"x{i + 1}" for i in range(d)]
    c = _Canvas((float(t[0]), float(t[-1])), (0.0, float(s.max()) if s.size else 1.0), xlabel, ylabel, title)
    for k in range(d):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{_num(c.px(a))},{_num(c.py(b))}" for a, b in zip(t, s[:, k]))
        c.add(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"><title>{_esc(labels[k])}</title></polyline>')
        c.add(
            f'<text x="{CANVAS_W - _MARGIN + 8}" y="{_MARGIN + 16 * (k + 1)}" font-size="12" fill="{color}">{_esc(labels[k])}</text>'
        )
    return c.render()


def series_svg(x, ys: dict, xlabel: str = "", ylabel: str = "", title: str = "") -> str:
    """Markers joined by lines for each named series (e.g. mean time against d)."""
    x = np.asarray(x, dtype=float)
    vals = np.concatenate([np.asarray(v, dtype=float) for v in ys.values()])
    c = _Canvas((float(x.min()), float(x.max())), (0.0, float(np.nanmax(vals)) * 1.05), xlabel, ylabel, title)
    for k, (name, y) in enumerate(ys.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{_num(c.px(a))},{_num(c.py(b))}" for a, b in zip(x, y))
        c.add(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        for a, b in zip(x, y):
            c.add(f'<circle cx="{_num(c.px(a))}" cy="{_num(c.py(b))}" r="3" fill="{color}"/>')
        c.add(f'<text x="{CANVAS_W - _MARGIN + 8}" y="{_MARGIN + 16 * (k + 1)}" font-size="12" fill="{color}">{_esc(name)}</text>')
    return c.render()


# ---------------------------------------------------------------------------
# dispatch


def export(dataset, fmt: str, path, header: dict | None = None, **labels) -> Path:
    """Write ``dataset`` (histogram, path, report list or mapping) as csv, json or svg."""
    path = Path(path)
    fmt = fmt.lower()
    if fmt == "json":
        payload = dataset if not header else {"config": header, "data": dataset}
        text = dumps_json(payload)
    elif fmt == "csv":
        if isinstance(dataset, WeightedHistogram):
            text = histogram_csv(dataset, header)
        elif isinstance(dataset, SampledPath):
            text = path_csv(dataset, header)
        else:
            raise UnsupportedFormatError(f"no CSV layout for {type(dataset).__name__}")
    elif fmt == "svg":
        if isinstance(dataset, WeightedHistogram):
            text = histogram_svg(dataset, **labels)
        elif isinstance(dataset, SampledPath):
            text = path_svg(dataset, **labels)
        else:
            raise UnsupportedFormatError(f"no SVG rendering for {type(dataset).__name__}")
    else:
        raise UnsupportedFormatError(f"unknown format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


__all__ = [
    "UnsupportedFormatError",
    "dumps_json",
    "event_times_csv",
    "export",
    "histogram_csv",
    "histogram_svg",
    "path_csv",
    "path_svg",
    "read_histogram_csv",
    "read_path_csv",
    "series_svg",
]
