"""Estimators of the 2x2 covariance of (adjusted, unadjusted) ATE estimates.

Index 1 is the adjusted estimator, index 2 the unadjusted one.  The adjusted
entries are ``U + V + W``: an intercept-noise part built per arm, a
slope-quadratic part shared by both entries, and the between-strata spread.

Variants of the per-arm noise part:

``crossfit``  products ``Y_i * loo_resid_i`` weighted by annihilator row sums
``ho``        homoskedastic residual variance with a ``n - 1 - k`` divisor
``hc3``       squared leave-one-out residuals (conservative, 1-1 entry only)
``naive``     plain residual second moment, ``gamma = 1``, and V replaced by
              the plug-in ``(b1 - b0)' Gamma_s (b1 - b0) / n_s`` with no
              leverage correction (fixed-dimension formula)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, StrataIndex
from .olskernel import ArmFit

VARIANTS = ("crossfit", "ho", "hc3", "naive")


def _weight(idx: StrataIndex, a: int, s: str) -> float:
    n_s = idx.n_s(s)
    return n_s * n_s / (idx.n * idx.n_as(a, s))


def sigma22(d: Dataset, idx: StrataIndex, tau_unadj: float) -> float:
    """Variance of the unadjusted estimator: within-arm IPW spread plus W."""
    within = 0.0
    between = 0.0
    for s in idx.labels:
        pi = idx.pi_hat(s)
        y1 = d.y[idx.arm_rows[(1, s)]]
        y0 = d.y[idx.arm_rows[(0, s)]]
        if y1.size == 0 or y0.size == 0:
            raise ValueError(f"stratum {s!r} has an empty arm")
        w1 = y1 / pi
        w0 = y0 / (1.0 - pi)
        within += np.sum((w1 - w1.mean()) ** 2) + np.sum((w0 - w0.mean()) ** 2)
        between += idx.p_hat(s) * (y1.sum() / y1.size - y0.sum() / y0.size - tau_unadj) ** 2
    return float(within / d.n + between)


def omega_hat(fit: ArmFit) -> float:
    """Cross-fit ``(1/n) gamma^-2 sum m_i^2 Y_i loo_i``; may be negative."""
    return float(np.sum(fit.rowsum**2 * fit.y * fit.loo_resid) / (fit.n * fit.gamma**2))


def varpi_hat(fit: ArmFit) -> float:
    return float(np.sum(fit.rowsum * fit.y * fit.loo_resid) / (fit.n * fit.gamma))


def omega_hc3(fit: ArmFit) -> float:
    """``(1/n) gamma^-2 sum m_i^2 resid_i^2 / (1 - h_i)^2``; never negative."""
    return float(np.sum(fit.rowsum**2 * fit.loo_resid**2) / (fit.n * fit.gamma**2))


def homoskedastic_variance(fit: ArmFit) -> float:
    """Residual variance with divisor ``n - 1 - k``."""
    dof = fit.n - 1 - fit.k
    if dof <= 0:
        raise ValueError("homoskedastic variance needs n_{a,s} > k + 1")
    return float(np.sum(fit.resid**2) / dof)


def naive_variance(fit: ArmFit) -> float:
    return float(np.sum(fit.resid**2) / fit.n)


def arm_terms(fit: ArmFit, variant: str) -> tuple[float, float]:
    """Per-arm ``(term11, term12)`` before the ``n_s^2/(n n_as)`` weight."""
    if variant == "crossfit":
        return omega_hat(fit), varpi_hat(fit)
    if variant == "ho":
        v = homoskedastic_variance(fit)
        return v / fit.gamma, v
    if variant == "hc3":
        return omega_hc3(fit), varpi_hat(fit)
    if variant == "naive":
        v = naive_variance(fit)
        return v, v
    raise ValueError(f"unknown variance variant {variant!r}; expected one of {VARIANTS}")


def sigma_u_terms(
    fits: dict[tuple[int, str], ArmFit], idx: StrataIndex, variant: str = "crossfit"
) -> tuple[float, float, dict, dict]:
    """Weighted sums giving the U parts of the (1,1) and (1,2) entries.

    Also returns the per-arm terms keyed by ``(a, s)``.
    """
    u11 = 0.0
    u12 = 0.0
    t11, t12 = {}, {}
    for s in idx.labels:
        for a in (1, 0):
            w = _weight(idx, a, s)
            o, v = arm_terms(fits[(a, s)], variant)
            t11[(a, s)], t12[(a, s)] = o, v
            u11 += w * o
            u12 += w * v
    return u11, u12, t11, t12


def sigma_v_adj(fits: dict[tuple[int, str], ArmFit], idx: StrataIndex) -> float:
    """Slope-quadratic part of the adjusted variance.

    Per stratum: each arm's ``beta' Gamma_as beta / n_as`` minus the leverage
    correction ``sum h_i Y_i loo_i / n_as``, less ``2 beta_1' Gamma_s beta_0 / n_s``.
    """
    total = 0.0
    for s in idx.labels:
        f1, f0 = fits[(1, s)], fits[(0, s)]
        if f1.k == 0:
            continue
        inner = 0.0
        for f in (f1, f0):
            inner += f.beta @ f.gram @ f.beta / f.n
            inner -= np.sum(f.leverage * f.y * f.loo_resid) / f.n
        gram_s = f1.gram + f0.gram
        inner -= 2.0 * (f1.beta @ gram_s @ f0.beta) / idx.n_s(s)
        total += idx.p_hat(s) * inner
    return float(total)


def sigma_v_naive(fits: dict[tuple[int, str], ArmFit], idx: StrataIndex) -> float:
    """Fixed-dimension plug-in for the slope part: ``sum_s p_s (b1 - b0)' Gamma_s (b1 - b0) / n_s``."""
    total = 0.0
    for s in idx.labels:
        f1, f0 = fits[(1, s)], fits[(0, s)]
        if f1.k == 0:
            continue
        diff = f1.beta - f0.beta
        total += idx.p_hat(s) * (diff @ (f1.gram + f0.gram) @ diff) / idx.n_s(s)
    return float(total)


def sigma_w(fits: dict[tuple[int, str], ArmFit], idx: StrataIndex, tau_adj: float) -> float:
    return float(sum(idx.p_hat(s) * (fits[(1, s)].tau - fits[(0, s)].tau - tau_adj) ** 2
                     for s in idx.labels))


@dataclass(frozen=True)
class SigmaHat:
    """Estimated covariance with its component breakdown.

    ``arm11`` / ``arm12`` hold the per-arm U terms (omega and varpi for the
    cross-fit variant).  ``psd`` is False when the matrix has a negative
    eigenvalue, which the cross-fit construction allows in finite samples.
    """

    matrix: np.ndarray
    variant: str
    u11: float
    u12: float
    v_adj: float
    w: float
    s22: float
    arm11: dict = field(default_factory=dict)
    arm12: dict = field(default_factory=dict)

    @property
    def s11(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def s12(self) -> float:
        return float(self.matrix[0, 1])

    @property
    def contrast(self) -> float:
        """``S11 + S22 - 2 S12``, the combiner's denominator."""
        return self.s11 + self.s22 - 2.0 * self.s12

    @property
    def psd(self) -> bool:
        m = self.matrix
        return m[0, 0] >= 0 and m[1, 1] >= 0 and m[0, 0] * m[1, 1] - m[0, 1] ** 2 >= 0

    def lines(self) -> list[str]:
        out = [f"variant={self.variant}",
               f"Sigma11={self.s11:.10g} Sigma12={self.s12:.10g} Sigma22={self.s22:.10g}",
               f"U11={self.u11:.10g} U12={self.u12:.10g} V_adj={self.v_adj:.10g} W={self.w:.10g}"]
        for key in sorted(self.arm11, key=lambda t: (t[1], -t[0])):
            out.append(f"  a={key[0]} s={key[1]}: term11={self.arm11[key]:.10g} term12={self.arm12[key]:.10g}")
        if not self.psd:
            out.append("  warning: covariance estimate is not positive semidefinite")
        return out


def sigma_matrix(
    d: Dataset,
    idx: StrataIndex,
    fits: dict[tuple[int, str], ArmFit],
    tau_adj: float,
    tau_unadj: float,
    variant: str = "crossfit",
) -> SigmaHat:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variance variant {variant!r}; expected one of {VARIANTS}")
    u11, u12, t11, t12 = sigma_u_terms(fits, idx, variant)
    v = sigma_v_naive(fits, idx) if variant == "naive" else sigma_v_adj(fits, idx)
    w = sigma_w(fits, idx, tau_adj)
    s22 = sigma22(d, idx, tau_unadj)
    s11 = u11 + v + w
    s12 = u12 + v + w
    if not all(math.isfinite(t) for t in (s11, s12, s22)):
        raise FloatingPointError("non-finite covariance estimate")
    mat = np.array([[s11, s12], [s12, s22]])
    return SigmaHat(mat, variant, u11, u12, v, w, s22, t11, t12)
