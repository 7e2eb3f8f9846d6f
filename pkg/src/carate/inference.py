"""Wald tests and intervals on the chi-squared(1) scale."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .rngstat import normal_inverse_cdf


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject: bool
    tau0: float
    alpha: float
    method: str = ""

    __test__ = False


def chi2_1_quantile(alpha: float) -> float:
    """Upper-``alpha`` critical value: ``Phi^{-1}(1 - alpha/2)^2``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return normal_inverse_cdf(1.0 - alpha / 2.0) ** 2


def chi2_1_sf(stat: float) -> float:
    """``P(chi2_1 >= stat) = erfc(sqrt(stat / 2))``."""
    if stat <= 0:
        return 1.0
    return float(special.erfc(math.sqrt(stat / 2.0)))


def _test(stat: float, tau0: float, alpha: float, method: str) -> TestResult:
    crit = chi2_1_quantile(alpha)
    return TestResult(stat, chi2_1_sf(stat), bool(stat >= crit), tau0, alpha, method)


def wald(tau_hat: float, var_hat: float, n: int, tau0: float = 0.0, alpha: float = 0.05,
         method: str = "") -> TestResult:
    """Two-sided test of ``tau = tau0`` with statistic ``n (tau_hat - tau0)^2 / var_hat``."""
    if not var_hat > 0:
        raise ValueError("non-positive variance estimate")
    if n < 1:
        raise ValueError("n must be at least 1")
    return _test(n * (tau_hat - tau0) ** 2 / var_hat, tau0, alpha, method)


def confidence_interval(tau_hat: float, var_hat: float, n: int, alpha: float = 0.05) -> tuple[float, float]:
    if not var_hat > 0:
        raise ValueError("non-positive variance estimate")
    half = math.sqrt(chi2_1_quantile(alpha) * var_hat / n)
    return tau_hat - half, tau_hat + half


def multi_combine_test(
    estimates,
    sigma,
    n: int,
    tau0: float = 0.0,
    alpha: float = 0.05,
) -> tuple[TestResult, np.ndarray]:
    """Test based on the variance-minimising combination of K estimators.

    Statistic ``n (1' S^-1 (t - tau0))^2 / (1' S^-1 1)``; weights
    ``S^-1 1 / (1' S^-1 1)``.
    """
    t = np.asarray(estimates, dtype=float).reshape(-1)
    s = np.asarray(sigma, dtype=float)
    k = t.shape[0]
    if s.shape != (k, k):
        raise ValueError("covariance must be K x K")
    if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(np.abs(s).max(), 1e-300)):
        raise ValueError("covariance must be symmetric")
    try:
        chol = linalg.cho_factor(s, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise ValueError("multi-combination requires positive definite covariance") from None
    piv = np.diag(chol[0]) ** 2
    if piv.min() <= 1e-12 * np.diag(s).max():
        raise ValueError("multi-combination requires positive definite covariance")
    ones = np.ones(k)
    sinv_one = linalg.cho_solve(chol, ones)
    denom = float(ones @ sinv_one)
    weights = sinv_one / denom
    num = float(sinv_one @ (t - tau0))
    stat = n * num * num / denom
    return _test(stat, tau0, alpha, "multi"), weights
