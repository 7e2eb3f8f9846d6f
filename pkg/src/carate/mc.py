"""Replicated simulation: generate, estimate, test, aggregate.

Replication ``r`` draws from streams keyed by ``(seed, r, purpose)`` and its
record lands in slot ``r``; aggregation runs over slots in index order with
correctly rounded sums, so reports do not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from . import __version__, rngstat
from .analysis import METHODS, MethodResult, analyze
from .dgp import ModelSpec, generate_replication
from .randomize import Scheme

REPORT_COLUMNS = (
    "model", "scheme", "n", "strata", "k", "kappa", "effect", "variant", "reps", "method",
    "reject_rate", "wilson_lo", "wilson_hi", "mc_err", "bias", "sd", "mean_se", "sd_se_ratio", "failures",
)
SWEEP_COLUMNS = ("k", "kappa", "method", "reject_rate", "mc_err", "bias", "sd", "mean_se",
                 "sd_se_ratio", "failures")
DUMP_COLUMNS = ("rep", "method", "estimate", "variance", "se", "statistic", "p_value", "reject", "error")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    model: ModelSpec
    scheme: Scheme = field(default_factory=Scheme)
    methods: tuple[str, ...] = METHODS
    variant: str = "crossfit"
    reps: int = 1000
    seed: int = 0
    alpha: float = 0.05
    tau0: float = 0.0
    ridge: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}")
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def kappa(self) -> float:
        """``k / (n / (2 |S|))``: regressors per expected arm size."""
        return self.model.k / (self.model.n / (2.0 * self.model.num_strata))

    def canonical(self) -> dict:
        """Every field that affects results; ``workers`` is deliberately absent."""
        m = self.model
        pi = self.scheme.pi
        return {
            "model": {"id": m.model_id, "n": m.n, "strata": m.num_strata, "k": m.k,
                      "effect": m.effect, "rho": m.rho},
            "scheme": {"kind": self.scheme.kind, "lam": self.scheme.lam,
                       "pi": dict(sorted(pi.items())) if isinstance(pi, dict) else pi},
            "methods": list(self.methods), "variant": self.variant, "reps": self.reps,
            "seed": self.seed, "alpha": self.alpha, "tau0": self.tau0, "ridge": self.ridge,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RepRecord:
    rep: int
    true_tau: float
    results: dict[str, MethodResult]


@dataclass(frozen=True)
class MethodSummary:
    method: str
    successes: int
    failures: int
    reject_rate: float
    wilson_lo: float
    wilson_hi: float
    mc_err: float
    bias: float
    sd: float
    mean_se: float
    sd_se_ratio: float


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    summaries: dict[str, MethodSummary]
    records: tuple[RepRecord, ...] = ()
    wall_time: float = 0.0

    def rows(self) -> list[dict]:
        cfg = self.config
        m = cfg.model
        out = []
        for name in cfg.methods:
            s = self.summaries[name]
            out.append({
                "model": m.model_id, "scheme": cfg.scheme.kind, "n": m.n, "strata": m.num_strata,
                "k": m.k, "kappa": cfg.kappa, "effect": m.effect, "variant": cfg.variant,
                "reps": cfg.reps, "method": name, "reject_rate": s.reject_rate,
                "wilson_lo": s.wilson_lo, "wilson_hi": s.wilson_hi, "mc_err": s.mc_err,
                "bias": s.bias, "sd": s.sd, "mean_se": s.mean_se, "sd_se_ratio": s.sd_se_ratio,
                "failures": s.failures,
            })
        return out


def replicate(cfg: SimConfig, rep: int) -> RepRecord:
    """One replication; pure in ``(cfg, rep)``."""
    trial = generate_replication(cfg.model, cfg.scheme, cfg.seed, rep)
    res, _ = analyze(trial.data, cfg.methods, cfg.variant, cfg.ridge, cfg.tau0, cfg.alpha)
    return RepRecord(rep, trial.true_tau, res)


def _replicate_packed(args: tuple[SimConfig, int]) -> RepRecord:
    return replicate(*args)


def wilson_interval(successes: int, total: int, level: float = 0.95) -> tuple[float, float]:
    if total < 1:
        return math.nan, math.nan
    z = rngstat.normal_inverse_cdf(0.5 + level / 2.0)
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    centre = (p + z2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def summarize(method: str, records: Sequence[RepRecord], n: int) -> MethodSummary:
    ok = [r for r in records if r.results[method].ok]
    m = len(ok)
    fails = len(records) - m
    if m == 0:
        nan = math.nan
        return MethodSummary(method, 0, fails, nan, nan, nan, nan, nan, nan, nan, nan)
    est = [r.results[method].estimate for r in ok]
    rej = sum(1 for r in ok if r.results[method].reject)
    rate = rej / m
    lo, hi = wilson_interval(rej, m)
    mean = rngstat.fmean(est)
    bias = rngstat.fmean(e - r.true_tau for e, r in zip(est, ok))
    sd = math.sqrt(rngstat.fsum((e - mean) ** 2 for e in est) / (m - 1)) if m > 1 else math.nan
    mean_se = rngstat.fmean(math.sqrt(r.results[method].variance / n) for r in ok)
    ratio = sd / mean_se if mean_se > 0 else math.nan
    return MethodSummary(method, m, fails, rate, lo, hi, math.sqrt(rate * (1 - rate) / m),
                         bias, sd, mean_se, ratio)


def aggregate(records: Sequence[RepRecord], cfg: SimConfig) -> dict[str, MethodSummary]:
    if not records:
        raise SimulationError("no replication records to aggregate")
    records = sorted(records, key=lambda r: r.rep)
    return {m: summarize(m, records, cfg.model.n) for m in cfg.methods}


def run_simulation(cfg: SimConfig, keep_records: bool = False) -> SimReport:
    start = time.perf_counter()
    # calibrate once in the parent so workers never repeat it
    cfg = replace(cfg, model=cfg.model.resolved())
    jobs = [(cfg, r) for r in range(cfg.reps)]
    if cfg.workers <= 1:
        records = [replicate(cfg, r) for r in range(cfg.reps)]
    else:
        chunk = max(1, cfg.reps // (cfg.workers * 8))
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_replicate_packed, jobs, chunksize=chunk))
    summaries = aggregate(records, cfg)
    if all(s.successes == 0 for s in summaries.values()):
        raise SimulationError("all replications failed for every method")
    return SimReport(cfg, summaries, tuple(records) if keep_records else (),
                     time.perf_counter() - start)


def sweep_kappa(cfg: SimConfig, k_grid: Sequence[int], keep_records: bool = False) -> list[SimReport]:
    """One report per ``k``; covariate, noise and assignment draws are shared across ``k``."""
    return [run_simulation(replace(cfg, model=replace(cfg.model, k=int(k))), keep_records)
            for k in k_grid]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trailer(seed: int, config_hash: str) -> str:
    return f"# carate {__version__} seed={seed} config-hash={config_hash}\n"


def _csv(header: Sequence[str], rows: Sequence[dict], seed: int, config_hash: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in header])
    buf.write(trailer(seed, config_hash))
    return buf.getvalue()


def report_csv(report: SimReport) -> str:
    return _csv(REPORT_COLUMNS, report.rows(), report.config.seed, report.config.config_hash())


def sweep_csv(reports: Sequence[SimReport], base: SimConfig) -> str:
    rows = []
    for rep in reports:
        for r in rep.rows():
            rows.append({c: r[c] for c in SWEEP_COLUMNS})
    h = hashlib.sha256("".join(r.config.config_hash() for r in reports).encode()).hexdigest()[:16]
    return _csv(SWEEP_COLUMNS, rows, base.seed, h)


def dump_csv(report: SimReport) -> str:
    rows = []
    for rec in report.records:
        for m in report.config.methods:
            r = rec.results[m]
            d = asdict(r)
            d["rep"] = rec.rep
            rows.append(d)
    return _csv(DUMP_COLUMNS, rows, report.config.seed, report.config.config_hash())
