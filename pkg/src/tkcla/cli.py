"""``tk`` command-line front end.

Options come from an optional ``key = value`` config file (``--config``) and
from flags; flags win. Rates are given in primed (concentration) units and the
derived raw rates are echoed, with the rest of the resolved configuration, at
the top of every output. Exit codes: 0 success, 1 runtime error, 2 config
error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import export as ex
from .cla import DEFAULT_DT, simulate_cla, simulate_cla1d
from .ensemble import EnsembleConfig, run_ensemble
from .hitting import QuadratureConfig, expected_exit_time
from .model import InvalidModelError, ModelParams
from .ssa import simulate_ctmc
from .stats import DetectorSpec, WeightedHistogram
from .studies import OBSERVABLES, StationarySpec, stationary_histogram

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3

SUBCOMMANDS = ("ctmc", "cla", "cla1d", "switching", "cycling", "stationary", "hitting", "verify", "figures")
FORMATS = ("csv", "json", "svg")
# execution-only settings: they never change results, so they stay out of output headers
_NOT_ECHOED = ("threads", "output", "config")


class ConfigError(ValueError):
    """Bad configuration; ``where`` names the flag or file line responsible."""

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


# ---------------------------------------------------------------------------
# option table


def _number(text: str) -> float:
    """Floats, also written as fractions such as 1/32."""
    try:
        return float(Fraction(text.strip())) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"expected a number, got {text!r}") from None


def _integer(text: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _boolean(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _vector(text: str) -> tuple:
    try:
        return tuple(_number(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple:
    return tuple(v for v in text.replace(" ", "").split(",") if v)


def _choice(*allowed):
    def parse(text):
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {text!r}")
        return text

    return parse


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


@dataclass(frozen=True)
class Option:
    key: str
    parse: Callable[[str], Any]
    help: str
    check: Callable[[Any], bool] | None = None
    check_msg: str = ""

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")


_OPTIONS = [
    Option("d", _integer, "number of species", lambda v: v >= 2, "must be >= 2"),
    Option("V", _number, "volume", _positive, "must be positive"),
    Option("kappa", _number, "autocatalytic rate kappa'", _positive, "must be positive"),
    Option("lambda", _number, "inflow rate lambda'", _positive, "must be positive"),
    Option("delta", _number, "outflow rate delta'", _positive, "must be positive"),
    Option("t_end", _number, "time horizon", _positive, "must be positive"),
    Option("dt", _number, "CLA time step", _positive, "must be positive"),
    Option("seed", _integer, "master seed", _non_negative, "must be >= 0"),
    Option("threads", _integer, "worker threads", lambda v: v >= 1, "must be >= 1"),
    Option("n_traj", _integer, "number of trajectories", lambda v: v >= 1, "must be >= 1"),
    Option("output", str, "output file (or directory for figures); '-' for stdout"),
    Option("format", _choice(*FORMATS), "csv, json or svg"),
    Option("backend", _choice("ctmc", "cla", "cla1d"), "simulator for ensembles and stationary runs"),
    Option("x0", _vector, "initial state, comma separated (counts for the CTMC)"),
    Option("s0", _number, "initial value of the 1-D model", _non_negative, "must be >= 0"),
    Option("n", _number, "upper level of the 1-D model", _positive, "must be positive"),
    Option("time_unit", _choice("model", "volume"), "report event times as t or t/V"),
    Option("extinction_eps", _number, "CLA extinction threshold", _non_negative, "must be >= 0"),
    Option("cycle_mode", _choice("peak", "threshold"), "cycling event definition"),
    Option("theta", _number, "dominance threshold", lambda v: 0 < v < 1, "must be in (0, 1)"),
    Option("peak_level", _number, "excursion level for peak mode", lambda v: 0 < v < 1, "must be in (0, 1)"),
    Option("coarsen", _integer, "fine noise sub-steps per CLA step", lambda v: v >= 1, "must be >= 1"),
    Option("observable", _choice(*OBSERVABLES), "stationary observable"),
    Option("bins", _integer, "histogram bins per axis", lambda v: v >= 1, "must be >= 1"),
    Option("burn_in", _number, "discarded initial time", _non_negative, "must be >= 0"),
    Option("slab", _number, "CLA level-set half width", _positive, "must be positive"),
    Option("grid_points", _integer, "initial quadrature grid", lambda v: v >= 64 and v % 2 == 0, "must be even and >= 64"),
    Option("quick", _boolean, "short verification runs"),
    Option("scale", _number, "figure protocol scale factor", _positive, "must be positive"),
    Option("figures", _names, "comma-separated figure protocols (default: all)"),
]
OPTIONS = {o.key: o for o in _OPTIONS}
_ALIASES = {"lambda_p": "lambda", "kappa_p": "kappa", "delta_p": "delta", "master_seed": "seed"}

_MODEL = ("d", "V", "kappa", "lambda", "delta")
_ENSEMBLE = ("n_traj", "backend", "x0", "time_unit", "extinction_eps", "cycle_mode", "theta", "peak_level", "dt", "coarsen")
_COMMON = ("seed", "threads", "output", "format")

ALLOWED = {
    "ctmc": _MODEL + ("t_end", "x0") + _COMMON,
    "cla": _MODEL + ("t_end", "x0", "dt", "coarsen") + _COMMON,
    "cla1d": ("d", "V", "kappa", "lambda", "delta", "t_end", "dt", "s0", "n") + _COMMON,
    "switching": _MODEL + ("t_end",) + _ENSEMBLE + _COMMON,
    "cycling": _MODEL + ("t_end",) + _ENSEMBLE + _COMMON,
    "stationary": _MODEL + ("t_end", "backend", "x0", "dt", "observable", "bins", "burn_in", "slab") + _COMMON,
    "hitting": ("d", "V", "kappa", "lambda", "delta", "n", "grid_points", "output", "format"),
    "verify": ("quick", "seed", "output", "format"),
    "figures": ("scale", "seed", "threads", "dt", "output", "figures"),
}

REQUIRED = {
    "ctmc": _MODEL + ("t_end",),
    "cla": _MODEL + ("t_end",),
    "cla1d": ("V", "kappa", "lambda", "delta", "t_end"),
    "switching": ("V", "kappa", "lambda", "delta"),
    "cycling": ("V", "kappa", "lambda", "delta"),
    "stationary": _MODEL + ("t_end",),
    "hitting": ("V", "kappa", "lambda", "delta"),
    "verify": (),
    "figures": (),
}

_BASE_DEFAULTS = {"seed": 0, "threads": 1, "output": "-", "dt": DEFAULT_DT}
DEFAULTS = {
    "ctmc": {"format": "csv"},
    "cla": {"format": "csv", "coarsen": 1},
    "cla1d": {"format": "csv", "d": 2, "s0": 0.0, "n": 2.0},
    "switching": {"format": "json", "d": 2, "t_end": 1e6, "n_traj": 1000, "backend": "ctmc", "time_unit": "volume",
                  "cycle_mode": "peak", "theta": 0.9, "peak_level": 0.5, "coarsen": 1},
    "cycling": {"format": "json", "d": 3, "t_end": 1e5, "n_traj": 1000, "backend": "ctmc", "time_unit": "model",
                "cycle_mode": "peak", "theta": 0.9, "peak_level": 0.5, "coarsen": 1},
    "stationary": {"format": "csv", "backend": "ctmc", "observable": "state", "bins": 64, "slab": 1.0 / 128},
    "hitting": {"format": "json", "d": 2, "n": 2.0, "grid_points": 256},
    "verify": {"format": "json", "quick": True},
    "figures": {"scale": 0.01, "output": "figures", "figures": ()},
}


@dataclass
class RunConfig:
    """Resolved options for one subcommand plus where each value came from."""

    subcommand: str
    values: dict
    sources: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def params(self) -> ModelParams:
        v = self.values
        try:
            return ModelParams(d=v["d"], V=v["V"], kappa_p=v["kappa"], lambda_p=v["lambda"], delta_p=v["delta"])
        except InvalidModelError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        """Resolved configuration for output headers, with the implied raw rates."""
        out = {"subcommand": self.subcommand, "version": __version__}
        out.update({k: _plain(v) for k, v in self.values.items() if k not in _NOT_ECHOED})
        if all(k in self.values for k in ("V", "kappa", "lambda", "delta")):
            V = self.values["V"]
            out["raw_kappa"] = self.values["kappa"] / V
            out["raw_lambda"] = self.values["lambda"] * V
            out["raw_delta"] = self.values["delta"]
        return out


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


# ---------------------------------------------------------------------------
# parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tk", description="Simulate and verify the TK reaction network and its constrained Langevin approximation.")
    parser.add_argument("--version", action="version", version=f"tk {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"{name} run", allow_abbrev=False)
        sp.add_argument("--config", default=argparse.SUPPRESS, help="key = value configuration file")
        for key in ALLOWED[name]:
            opt = OPTIONS[key]
            sp.add_argument(opt.flag, dest=key, default=argparse.SUPPRESS, metavar=key.upper(), help=opt.help)
    return parser


def _convert(key: str, text: str, where: str):
    opt = OPTIONS[key]
    try:
        value = opt.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc), where) from None
    if opt.check is not None and not opt.check(value):
        raise ConfigError(f"{key} {opt.check_msg} (got {text})", where)
    return value


def read_config_file(path, subcommand: str) -> tuple[dict, dict]:
    """Parse ``key = value`` lines; returns (values, sources)."""
    values, sources = {}, {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", str(path)) from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        if "=" not in line:
            raise ConfigError("expected 'key = value'", where)
        key, _, value = (s.strip() for s in line.partition("="))
        key = key.replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in OPTIONS:
            raise ConfigError(f"unknown key {key!r}", where)
        if key not in ALLOWED[subcommand]:
            raise ConfigError(f"key {key!r} does not apply to '{subcommand}'", where)
        values[key] = _convert(key, value, where)
        sources[key] = where
    return values, sources


def parse_config(argv) -> RunConfig:
    """Resolve defaults, then the config file, then flags."""
    ns = vars(build_parser().parse_args(list(argv)))
    sub = ns.pop("subcommand")
    values = dict(_BASE_DEFAULTS)
    values = {k: v for k, v in values.items() if k in ALLOWED[sub]}
    values.update(DEFAULTS[sub])
    sources = {k: "default" for k in values}
    if "config" in ns:
        fv, fs = read_config_file(ns.pop("config"), sub)
        values.update(fv)
        sources.update(fs)
    for key, text in ns.items():
        opt = OPTIONS[key]
        values[key] = _convert(key, text, opt.flag)
        sources[key] = opt.flag
    missing = [k for k in REQUIRED[sub] if k not in values]
    if missing:
        raise ConfigError("missing required value(s): " + ", ".join(OPTIONS[k].flag for k in missing))
    cfg = RunConfig(sub, values, sources)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    sub, v = cfg.subcommand, cfg.values
    if sub in ("cla1d", "hitting") and v.get("d", 2) != 2:
        raise ConfigError("the 1-D model is defined for d = 2 only", cfg.sources.get("d"))
    if sub in ("switching", "cycling", "stationary", "ctmc", "cla", "cla1d", "hitting"):
        cfg.params()
    if "x0" in v and "d" in v and len(v["x0"]) != v["d"]:
        raise ConfigError(f"x0 has {len(v['x0'])} entries but d = {v['d']}", cfg.sources.get("x0"))
    if v.get("backend") == "cla1d" and sub != "switching":
        raise ConfigError("backend cla1d is only available for switching", cfg.sources.get("backend"))
    if sub == "switching" and v.get("backend") == "cla1d" and v["d"] != 2:
        raise ConfigError("backend cla1d needs d = 2", cfg.sources.get("d"))
    if sub == "cycling" and v["d"] < 3:
        raise ConfigError("cycling needs d >= 3", cfg.sources.get("d"))
    if sub in ("hitting", "verify") and v["format"] != "json":
        raise ConfigError(f"'{sub}' writes JSON only", cfg.sources.get("format"))
    if sub == "cla1d" and v["s0"] > v["n"]:
        raise ConfigError("s0 must not exceed n", cfg.sources.get("s0"))
    if sub == "figures":
        from .figures import PROTOCOLS

        unknown = [n for n in v["figures"] if n not in PROTOCOLS]
        if unknown:
            raise ConfigError(f"unknown figure protocol(s): {', '.join(unknown)}", cfg.sources.get("figures"))


# ---------------------------------------------------------------------------
# output


def _svg_with_header(svg: str, header: dict) -> str:
    first, _, rest = svg.partition("\n")
    comment = "\n".join(f"<!-- {line[2:].replace('--', '- -')} -->" for line in ex.header_lines(header))
    return f"{first}\n{comment}\n{rest}"


def _emit(cfg: RunConfig, text: str):
    out = cfg["output"]
    if out == "-":
        sys.stdout.write(text)
    else:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _json(cfg: RunConfig, data: dict) -> str:
    return ex.dumps_json({"config": cfg.echo(), **data})


# ---------------------------------------------------------------------------
# subcommands


def _cmd_path(cfg: RunConfig) -> int:
    p = cfg.params()
    sub = cfg.subcommand
    if sub == "cla1d":
        path = simulate_cla1d(p, cfg["n"], cfg["s0"], cfg["t_end"], cfg["dt"], seed=cfg["seed"])
    elif sub == "ctmc":
        x0 = np.rint(cfg["x0"]).astype(np.int64) if "x0" in cfg.values else _default_x0(p, "ctmc")
        path = simulate_ctmc(p, x0, cfg["t_end"], seed=cfg["seed"])
    else:
        x0 = np.asarray(cfg["x0"], dtype=float) if "x0" in cfg.values else _default_x0(p, "cla")
        path = simulate_cla(p, x0, cfg["t_end"], dt=cfg["dt"], seed=cfg["seed"], coarsen=cfg["coarsen"])
    fmt = cfg["format"]
    if fmt == "csv":
        text = ex.path_csv(path, cfg.echo())
    elif fmt == "svg":
        text = _svg_with_header(ex.path_svg(path), cfg.echo())
    else:
        text = _json(cfg, {
            "n_events": path.n_events,
            "t_final": path.t_end,
            "final_state": path.states[-1].tolist(),
            "local_time": path.local_time,
            "samples": len(path),
        })
    _emit(cfg, text)
    return EXIT_OK


def _default_x0(p: ModelParams, backend: str) -> np.ndarray:
    x = np.full(p.d, p.lambda_p / p.delta_p)
    return np.rint(x * p.V).astype(np.int64) if backend == "ctmc" else x


def ensemble_config(cfg: RunConfig) -> EnsembleConfig:
    v = cfg.values
    spec = DetectorSpec(
        kind="switching" if cfg.subcommand == "switching" else "cycling",
        extinction_eps=v.get("extinction_eps"),
        theta=v["theta"],
        cycle_mode=v["cycle_mode"],
        peak_level=v["peak_level"],
    )
    return EnsembleConfig(
        params=cfg.params(),
        backend=v["backend"],
        detector=spec,
        n_traj=v["n_traj"],
        master_seed=v["seed"],
        threads=v["threads"],
        t_end=v["t_end"],
        dt=v["dt"],
        x0=v.get("x0"),
        time_unit=v["time_unit"],
        coarsen=v["coarsen"],
    )


def _cmd_ensemble(cfg: RunConfig) -> int:
    ecfg = ensemble_config(cfg)
    res = run_ensemble(ecfg)
    fmt = cfg["format"]
    if fmt == "csv":
        text = ex.event_times_csv(res.raw_times, ecfg.time_scale, cfg.echo())
    elif fmt == "json":
        body = res.as_dict()
        body.pop("config")
        text = _json(cfg, body)
    else:
        t = res.times[np.isfinite(res.times)]
        hi = float(t.max()) * 1.0001 if len(t) else 1.0
        hist = WeightedHistogram.empty([np.linspace(0.0, hi, 31)])
        hist.add(t, np.ones(len(t)))
        svg = ex.histogram_svg(hist, xlabel=f"{cfg.subcommand} time ({ecfg.time_unit} units)", ylabel="density")
        text = _svg_with_header(svg, cfg.echo())
    _emit(cfg, text)
    for i, kind, msg in res.errors:
        print(f"trajectory {i}: {kind}: {msg}", file=sys.stderr)
    if res.errors:
        print(f"{len(res.errors)} of {ecfg.n_traj} trajectories failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_stationary(cfg: RunConfig) -> int:
    p = cfg.params()
    spec = StationarySpec(observable=cfg["observable"], bins=cfg["bins"], slab=cfg["slab"])
    x0 = cfg.get("x0")
    if x0 is not None:
        x0 = np.rint(x0).astype(np.int64) if cfg["backend"] == "ctmc" else np.asarray(x0, dtype=float)
    hist = stationary_histogram(
        p, cfg["backend"], cfg["t_end"], spec, seed=cfg["seed"], dt=cfg["dt"], burn_in=cfg.get("burn_in"), x0=x0
    )
    fmt = cfg["format"]
    if fmt == "csv":
        text = ex.histogram_csv(hist, cfg.echo())
    elif fmt == "svg":
        labels = list(hist.labels) + ["", ""]
        text = _svg_with_header(ex.histogram_svg(hist, xlabel=labels[0], ylabel=labels[1] or "density"), cfg.echo())
    else:
        text = _json(cfg, {
            "edges": [e.tolist() for e in hist.edges],
            "mass": hist.mass.tolist(),
            "outside": hist.outside,
            "labels": list(hist.labels),
        })
    _emit(cfg, text)
    return EXIT_OK


def _cmd_hitting(cfg: RunConfig) -> int:
    p = cfg.params()
    res = expected_exit_time(p, cfg["n"], QuadratureConfig(grid_points=cfg["grid_points"]))
    _emit(cfg, _json(cfg, res.as_dict()))
    return EXIT_OK


def _cmd_verify(cfg: RunConfig) -> int:
    from .verify import run_all

    reports = run_all(quick=cfg["quick"], seed=cfg["seed"])
    failed = [r.name for r in reports if not r.passed]
    _emit(cfg, _json(cfg, {"checks": [r.as_dict() for r in reports], "failed": failed}))
    return EXIT_VERIFY if failed else EXIT_OK


def _cmd_figures(cfg: RunConfig) -> int:
    from .figures import FigureContext, run_figures

    out = cfg["output"]
    if out == "-":
        raise ConfigError("figures need an output directory", cfg.sources.get("output"))
    ctx = FigureContext(Path(out), scale=cfg["scale"], seed=cfg["seed"], threads=cfg["threads"], dt=cfg["dt"])
    run_figures(cfg["figures"], ctx)
    print(f"wrote figure data to {out}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "ctmc": _cmd_path,
    "cla": _cmd_path,
    "cla1d": _cmd_path,
    "switching": _cmd_ensemble,
    "cycling": _cmd_ensemble,
    "stationary": _cmd_stationary,
    "hitting": _cmd_hitting,
    "verify": _cmd_verify,
    "figures": _cmd_figures,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        return _COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"tk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything raised while running is a runtime failure
        print(f"tk: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry():  # console script
    sys.exit(main())


__all__ = ["ConfigError", "RunConfig", "build_parser", "ensemble_config", "main", "parse_config", "read_config_file"]


if __name__ == "__main__":
    entry()
