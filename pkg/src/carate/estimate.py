"""Point estimators of the ATE: unadjusted, fully saturated adjusted, and their
variance-minimising combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import SigmaHat, sigma_matrix
from .data import DataError, Dataset, StrataIndex, build_index
from .olskernel import ArmFit, demean_by_stratum, fit_all

DEGENERACY_TOL = 1e-12


class DegenerateCombination(ArithmeticError):
    """Combination weight undefined: the two estimators are indistinguishable."""


def arm_means(d: Dataset, idx: StrataIndex) -> dict[tuple[int, str], float]:
    out = {}
    for s in idx.labels:
        for a in (1, 0):
            y = d.y[idx.arm_rows[(a, s)]]
            if y.size == 0:
                raise DataError(f"stratum {s!r} has no {'treated' if a else 'control'} units")
            # same arithmetic as the k = 0 arm fit, so the two estimators agree bit for bit
            out[(a, s)] = y.sum() / y.size
    return out


def tau_unadj(d: Dataset, idx: StrataIndex) -> tuple[float, dict[tuple[int, str], float]]:
    """``sum_s p_s (mean Y_1s - mean Y_0s)`` and the arm means."""
    means = arm_means(d, idx)
    tau = sum(idx.p_hat(s) * (means[(1, s)] - means[(0, s)]) for s in idx.labels)
    return float(tau), means


def tau_unadj_ipw(d: Dataset, idx: StrataIndex) -> float:
    """Inverse-propensity form of the unadjusted estimator."""
    pi = np.empty(d.n)
    for s in idx.labels:
        pi[idx.rows[s]] = idx.pi_hat(s)
    a = d.a.astype(float)
    return float(np.sum(a * d.y / pi) / d.n - np.sum((1.0 - a) * d.y / (1.0 - pi)) / d.n)


def tau_adj(d: Dataset, idx: StrataIndex, xb: np.ndarray) -> tuple[float, dict[tuple[int, str], ArmFit]]:
    fits = fit_all(d, idx, xb)
    tau = sum(idx.p_hat(s) * (fits[(1, s)].tau - fits[(0, s)].tau) for s in idx.labels)
    return float(tau), fits


def aipw_value(d: Dataset, idx: StrataIndex, fits: dict[tuple[int, str], ArmFit]) -> float:
    """Augmented IPW form evaluated on raw covariates with the arm slopes."""
    n, k = d.n, d.k
    pi = np.empty(n)
    b1 = np.zeros((n, k))
    b0 = np.zeros((n, k))
    for s in idx.labels:
        rows = idx.rows[s]
        pi[rows] = idx.pi_hat(s)
        if k:
            b1[rows] = fits[(1, s)].beta
            b0[rows] = fits[(0, s)].beta
    a = d.a.astype(float)
    fit1 = np.einsum("ij,ij->i", d.x, b1)
    fit0 = np.einsum("ij,ij->i", d.x, b0)
    term1 = np.sum(a * (d.y - fit1) / pi) / n
    term0 = np.sum((1.0 - a) * (d.y - fit0) / (1.0 - pi)) / n
    return float(term1 - term0 + np.sum(fit1 - fit0) / n)


def combination_weight(sigma: np.ndarray, ridge: float = 0.0) -> float:
    """``(S22 - S12) / (S11 - 2 S12 + S22 + ridge)``."""
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    s11, s12, s22 = float(sigma[0, 0]), float(sigma[0, 1]), float(sigma[1, 1])
    denom = s11 - 2.0 * s12 + s22 + ridge
    scale = max(abs(s11), abs(s12), abs(s22), 1e-300)
    if ridge == 0 and abs(denom) <= DEGENERACY_TOL * scale:
        raise DegenerateCombination("degenerate combination; supply a positive ridge")
    return (s22 - s12) / denom


def quadratic_form(sigma: np.ndarray, w: float) -> float:
    v = np.array([w, 1.0 - w])
    return float(v @ sigma @ v)


def combine(tau_adj_value: float, tau_unadj_value: float, sigma: np.ndarray,
            ridge: float = 0.0) -> tuple[float, float, float]:
    """Return ``(tau_star, weight, variance_star)``.

    The variance is the quadratic form at the (possibly ridged) weight, so it
    always belongs to the reported estimate.
    """
    sigma = np.asarray(sigma, dtype=float)
    w = combination_weight(sigma, ridge)
    tau = w * tau_adj_value + (1.0 - w) * tau_unadj_value
    return float(tau), float(w), quadratic_form(sigma, w)


@dataclass(frozen=True)
class AteResult:
    """Point estimates with the covariance estimate they were combined under.

    ``tau_star``, ``weight`` and ``var_star`` are None when the combination is
    degenerate and no ridge was given; ``star_error`` then holds the reason.
    """

    n: int
    k: int
    tau_adj: float
    tau_unadj: float
    tau_star: float | None
    weight: float | None
    var_star: float | None
    sigma: SigmaHat
    fits: dict
    arm_means: dict
    idx: StrataIndex
    ridge: float = 0.0
    star_error: str = ""

    def per_stratum(self) -> list[tuple[str, float, float]]:
        return [(s, self.fits[(1, s)].tau, self.fits[(0, s)].tau) for s in self.idx.labels]


def estimate_ate(
    d: Dataset,
    variant: str = "crossfit",
    ridge: float = 0.0,
    idx: StrataIndex | None = None,
) -> AteResult:
    """Fit every arm, build the covariance estimate and combine.

    Raises :class:`carate.olskernel.NotEstimable` if any arm regression fails.
    """
    idx = build_index(d) if idx is None else idx
    t_unadj, means = tau_unadj(d, idx)
    xb = demean_by_stratum(d, idx).xb
    t_adj, fits = tau_adj(d, idx, xb)
    sig = sigma_matrix(d, idx, fits, t_adj, t_unadj, variant)
    try:
        t_star, w, v_star = combine(t_adj, t_unadj, sig.matrix, ridge)
        err = ""
    except DegenerateCombination as exc:
        t_star = w = v_star = None
        err = str(exc)
    return AteResult(d.n, d.k, t_adj, t_unadj, t_star, w, v_star, sig, fits, means, idx, ridge, err)
