"""Per-method estimate + test bundle shared by the simulation harness and the CLI.

Methods:

``adj``    adjusted estimate, (1,1) entry of the chosen covariance variant
``star``   combined estimate, its quadratic-form variance
``unadj``  unadjusted estimate, (2,2) entry (needs no regression)
``naive``  adjusted estimate, (1,1) entry of the fixed-dimension plug-in
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .covariance import sigma22, sigma_matrix
from .data import Dataset, build_index
from .estimate import AteResult, estimate_ate, tau_unadj
from .inference import confidence_interval, wald
from .olskernel import NotEstimable

METHODS = ("adj", "star", "unadj", "naive")


@dataclass(frozen=True)
class MethodResult:
    method: str
    estimate: float
    variance: float
    se: float
    statistic: float
    p_value: float
    reject: bool
    ci_low: float
    ci_high: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def _failed(method: str, reason: str) -> MethodResult:
    nan = math.nan
    return MethodResult(method, nan, nan, nan, nan, nan, False, nan, nan, reason)


def _tested(method: str, est: float, var: float, n: int, tau0: float, alpha: float) -> MethodResult:
    try:
        t = wald(est, var, n, tau0, alpha, method)
    except ValueError as exc:
        r = _failed(method, str(exc))
        return MethodResult(method, est, var, r.se, r.statistic, r.p_value, False, r.ci_low, r.ci_high, r.error)
    lo, hi = confidence_interval(est, var, n, alpha)
    return MethodResult(method, est, var, math.sqrt(var / n), t.statistic, t.p_value, t.reject, lo, hi)


def analyze(
    d: Dataset,
    methods=METHODS,
    variant: str = "crossfit",
    ridge: float = 0.0,
    tau0: float = 0.0,
    alpha: float = 0.05,
) -> tuple[dict[str, MethodResult], AteResult | None]:
    """Run every requested method; failures are recorded, not raised.

    A non-estimable arm regression fails the adjusted-based methods while the
    unadjusted method is still computed.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; expected a subset of {METHODS}")
    idx = build_index(d)
    out: dict[str, MethodResult] = {}
    try:
        res = estimate_ate(d, variant, ridge, idx)
    except (NotEstimable, FloatingPointError) as exc:
        res = None
        reason = str(exc)

    if res is None:
        for m in methods:
            if m != "unadj":
                out[m] = _failed(m, reason)
        if "unadj" in methods:
            t, _ = tau_unadj(d, idx)
            out["unadj"] = _tested("unadj", t, sigma22(d, idx, t), d.n, tau0, alpha)
        return {m: out[m] for m in methods}, None

    n = d.n
    for m in methods:
        if m == "adj":
            out[m] = _tested(m, res.tau_adj, res.sigma.s11, n, tau0, alpha)
        elif m == "unadj":
            out[m] = _tested(m, res.tau_unadj, res.sigma.s22, n, tau0, alpha)
        elif m == "star":
            if res.tau_star is None:
                out[m] = _failed(m, res.star_error)
            else:
                out[m] = _tested(m, res.tau_star, res.var_star, n, tau0, alpha)
        elif m == "naive":
            naive = res.sigma if variant == "naive" else sigma_matrix(
                d, res.idx, res.fits, res.tau_adj, res.tau_unadj, "naive")
            out[m] = _tested(m, res.tau_adj, naive.s11, n, tau0, alpha)
    return out, res
