"""``carate`` command line: analyze, simulate, sweep, vif.

Settings are resolved in increasing precedence: built-in defaults, the
``CARATE_SEED`` environment variable (seed only), a ``--config`` file of
``key = value`` lines, explicit flags.  The resolved settings are printed
before any result.

Exit codes: 0 success, 2 data or validation error, 64 usage error,
70 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from fractions import Fraction

from . import __version__, rmt
from .analysis import METHODS, analyze
from .covariance import VARIANTS
from .data import DataError, build_index, drop_strata, load_dataset, validate
from .dgp import ModelSpec
from .estimate import DegenerateCombination
from .mc import (SimConfig, SimulationError, dump_csv, report_csv, run_simulation, sweep_csv,
                 sweep_kappa, trailer)
from .olskernel import NotEstimable
from .randomize import SCHEMES, Scheme

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 64, 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _methods(text) -> tuple[str, ...]:
    if isinstance(text, tuple):
        return text
    items = tuple(t.strip() for t in str(text).split(",") if t.strip())
    bad = [m for m in items if m not in METHODS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"methods must be a comma list from {METHODS}")
    return items


def _number(text: str) -> Fraction:
    return Fraction(text.strip())


def parse_grid(text: str) -> list[Fraction]:
    """``start:stop:step`` (stop inclusive) or a comma list; entries may be fractions like ``1/3``."""
    text = text.strip()
    if text == "":
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("grid must be start:stop:step")
        start, stop, step = (_number(p) for p in parts)
        if step <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        if stop < start:
            return []
        count = math.floor((stop - start) / step) + 1
        return [start + i * step for i in range(count)]
    return [_number(p) for p in text.split(",") if p.strip()]


def _k_grid(text) -> list[int]:
    if isinstance(text, list):
        return text
    vals = parse_grid(text)
    if any(v.denominator != 1 or v < 0 for v in vals):
        raise argparse.ArgumentTypeError("k grid entries must be non-negative integers")
    return [int(v) for v in vals]


def _kappa_grid(text) -> list[float]:
    if isinstance(text, list):
        return text
    vals = parse_grid(text)
    if any(not 0 <= v < 1 for v in vals):
        raise argparse.ArgumentTypeError("kappa grid entries must lie in [0, 1)")
    return [float(v) for v in vals]


# (flag, type, default, help) per subcommand
_SIM_OPTIONS = [
    ("model", int, 1, "design 1..6"),
    ("n", int, 400, "sample size"),
    ("strata", int, 2, "number of strata"),
    ("k", int, 40, "regressors used"),
    ("effect", float, 0.0, "mu_1 - mu_0"),
    ("scheme", str, "sbr", "assignment rule: " + ",".join(SCHEMES)),
    ("pi", float, 0.5, "target propensity (srs, sbr)"),
    ("lam", float, 0.75, "biased-coin probability (bcd)"),
    ("reps", int, 1000, "replications"),
    ("seed", int, 0, "base seed"),
    ("workers", int, 1, "worker processes"),
    ("alpha", float, 0.05, "test level"),
    ("tau0", float, 0.0, "null value"),
    ("variance", str, "crossfit", "variance variant: " + ",".join(VARIANTS)),
    ("ridge", float, 0.0, "ridge added to the combination denominator"),
    ("methods", _methods, METHODS, "comma list of methods"),
    ("out", str, None, "CSV path (default: stdout)"),
]

_OPTIONS = {
    "analyze": [
        ("data", str, None, "input CSV"),
        ("y", str, "Y", "outcome column"),
        ("a", str, "A", "treatment column"),
        ("s", str, "S", "stratum column"),
        ("x", str, "", "covariate columns: comma list or glob such as X*"),
        ("alpha", float, 0.05, "test level"),
        ("tau0", float, 0.0, "null value"),
        ("variance", str, "crossfit", "variance variant: " + ",".join(VARIANTS)),
        ("ridge", float, 0.0, "ridge added to the combination denominator"),
        ("methods", _methods, METHODS, "comma list of methods"),
        ("drop_small_strata", _bool, False, "drop strata that cannot support the adjusted fit"),
        ("min_arm_size", int, None, "minimum units per arm and stratum"),
        ("seed", int, 0, "recorded in the CSV trailer"),
        ("verbose", _bool, False, "print the covariance breakdown"),
        ("out", str, None, "CSV path (default: stdout)"),
    ],
    "simulate": _SIM_OPTIONS + [("dump_reps", str, None, "per-replication CSV path")],
    "sweep": [o for o in _SIM_OPTIONS if o[0] != "k"] + [("k_grid", _k_grid, [0, 10, 20, 30, 40], "k values")],
    "vif": [
        ("kappa_grid", _kappa_grid, [0.2, 1 / 3, 0.5, 2 / 3], "kappa values"),
        ("seed", int, 0, "recorded in the CSV trailer"),
        ("out", str, None, "CSV path (default: stdout)"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carate", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"carate {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in _OPTIONS.items():
        sp = subs.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value settings file")
        for dest, typ, _, text in opts:
            flag = "--" + dest.replace("_", "-")
            if typ is _bool:
                sp.add_argument(flag, dest=dest, nargs="?", const=True, type=_bool, default=None, help=text)
            else:
                sp.add_argument(flag, dest=dest, type=typ, default=None, help=text)
    return parser


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, ns: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    opts = _OPTIONS[command]
    types = {d: t for d, t, _, _ in opts}
    cfg = {d: default for d, _, default, _ in opts}
    if "seed" in cfg and environ.get("CARATE_SEED", "").strip():
        try:
            cfg["seed"] = int(environ["CARATE_SEED"])
        except ValueError:
            raise UsageError("CARATE_SEED must be an integer") from None
    if ns.config:
        for key, value in read_config_file(ns.config).items():
            if key not in types:
                raise UsageError(f"unknown config key {key!r} for {command}")
            try:
                cfg[key] = types[key](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
    for key in types:
        val = getattr(ns, key)
        if val is not None:
            cfg[key] = val
    if "scheme" in cfg and cfg["scheme"] not in SCHEMES:
        raise UsageError(f"unknown scheme {cfg['scheme']!r}; expected one of {SCHEMES}")
    if "variance" in cfg and cfg["variance"] not in VARIANTS:
        raise UsageError(f"unknown variance variant {cfg['variance']!r}; expected one of {VARIANTS}")
    return cfg


def format_config(command: str, cfg: dict) -> str:
    lines = [f"# carate {__version__} {command}"]
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, (list, tuple)):
            val = ",".join(str(v) for v in val)
        lines.append(f"# {key} = {val}")
    return "\n".join(lines) + "\n"


def _emit(text: str, path: str | None, stdout) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def _sim_config(cfg: dict, k: int) -> SimConfig:
    try:
        spec = ModelSpec(cfg["model"], cfg["n"], cfg["strata"], k, cfg["effect"])
        scheme = Scheme(cfg["scheme"], cfg["pi"], cfg["lam"])
        return SimConfig(spec, scheme, tuple(cfg["methods"]), cfg["variance"], cfg["reps"],
                         cfg["seed"], cfg["alpha"], cfg["tau0"], cfg["ridge"], cfg["workers"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _summary_table(report) -> str:
    lines = [f"{'method':<7} {'reject':>8} {'wilson95':>17} {'bias':>10} {'sd':>9} {'mean_se':>9} {'sd/se':>7} {'fail':>5}"]
    for name in report.config.methods:
        s = report.summaries[name]
        lines.append(f"{name:<7} {s.reject_rate:8.4f} [{s.wilson_lo:6.4f},{s.wilson_hi:6.4f}] "
                     f"{s.bias:10.5f} {s.sd:9.5f} {s.mean_se:9.5f} {s.sd_se_ratio:7.3f} {s.failures:5d}")
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: dict, stdout, stderr) -> int:
    sim = _sim_config(cfg, cfg["k"])
    report = run_simulation(sim, keep_records=bool(cfg.get("dump_reps")))
    text = report_csv(report)
    _emit(text, cfg["out"], stdout)
    if cfg.get("dump_reps"):
        _emit(dump_csv(report), cfg["dump_reps"], stdout)
    (stderr if not cfg["out"] else stdout).write(_summary_table(report))
    return EXIT_OK


def cmd_sweep(cfg: dict, stdout, stderr) -> int:
    grid = cfg["k_grid"]
    base = _sim_config(cfg, 0)
    for k in grid:
        _sim_config(cfg, k)
    reports = sweep_kappa(base, grid)
    _emit(sweep_csv(reports, base), cfg["out"], stdout)
    return EXIT_OK


def cmd_vif(cfg: dict, stdout, stderr) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa", "vif"])
    for kappa, value in rmt.vif_curve(cfg["kappa_grid"]):
        w.writerow([repr(kappa), repr(value)])
    blob = json.dumps([repr(k) for k in cfg["kappa_grid"]]).encode()
    buf.write(trailer(cfg["seed"], hashlib.sha256(blob).hexdigest()[:16]))
    _emit(buf.getvalue(), cfg["out"], stdout)
    return EXIT_OK


ANALYZE_COLUMNS = ("method", "estimate", "se", "variance", "statistic", "p_value", "reject",
                   "ci_low", "ci_high", "error")


def cmd_analyze(cfg: dict, stdout, stderr) -> int:
    if not cfg["data"]:
        raise UsageError("analyze requires --data")
    d = load_dataset(cfg["data"], cfg["y"], cfg["a"], cfg["s"], cfg["x"] or None)
    report = validate(d, build_index(d), cfg["min_arm_size"], cfg["drop_small_strata"])
    if report.failing:
        for line in report.lines():
            stderr.write(line + "\n")
        reasons = sorted({c.reason for c in report.cells if not c.estimable})
        raise DataError("validation failed: " + "; ".join(reasons))
    if report.dropped:
        stdout.write(f"# notice: dropping strata {', '.join(report.dropped)} (too small for the adjusted fit)\n")
        d = drop_strata(d, report.dropped)
    results, ate = analyze(d, cfg["methods"], cfg["variance"], cfg["ridge"], cfg["tau0"], cfg["alpha"])
    if all(not r.ok for r in results.values()):
        raise ArithmeticError("; ".join(sorted({r.error for r in results.values()})))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANALYZE_COLUMNS)
    for name in cfg["methods"]:
        r = results[name]
        w.writerow([name, repr(r.estimate), repr(r.se), repr(r.variance), repr(r.statistic),
                    repr(r.p_value), int(r.reject), repr(r.ci_low), repr(r.ci_high), r.error])
        if r.error:
            stderr.write(f"{name}: {r.error}\n")
    blob = json.dumps({k: str(v) for k, v in sorted(cfg.items()) if k not in ("out", "verbose")}).encode()
    buf.write(trailer(cfg["seed"], hashlib.sha256(blob).hexdigest()[:16]))
    _emit(buf.getvalue(), cfg["out"], stdout)
    if cfg["verbose"] and ate is not None:
        for line in ate.sigma.lines():
            stdout.write("# " + line + "\n")
        if ate.weight is not None:
            stdout.write(f"# weight={ate.weight!r}\n")
    return EXIT_OK


_COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "vif": cmd_vif}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve(ns.command, ns)
        stdout.write(format_config(ns.command, cfg))
        return _COMMANDS[ns.command](cfg, stdout, stderr)
    except UsageError as exc:
        stderr.write(f"carate: usage error: {exc}\n")
        return EXIT_USAGE
    except DataError as exc:
        stderr.write(f"carate: data error: {exc}\n")
        return EXIT_DATA
    except (NotEstimable, DegenerateCombination, SimulationError, ArithmeticError, FloatingPointError) as exc:
        stderr.write(f"carate: numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
