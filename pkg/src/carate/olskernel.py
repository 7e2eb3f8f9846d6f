"""Per-(treatment, stratum) least squares without forming the n x n projector.

Covariates are demeaned at the stratum level (both arms pooled) before the
arm regressions.  Within an arm, with ``xb`` the demeaned covariates,
``G = xb' xb`` and ``u = xb' 1``:

* leverage ``h_i = xb_i' G^{-1} xb_i`` (diagonal of the projector onto xb);
* annihilator row sum ``m_i = 1 - xb_i' G^{-1} u``;
* ``gamma = mean(m)``, the normalised quadratic form ``1'M1 / n``;
* intercept ``tau = sum(m y) / sum(m)``, slope ``beta = G^{-1} xb'(y - tau)``.

The annihilator here is that of ``xb`` alone; its diagonal ``1 - h_i`` is not
the hat-matrix diagonal of the intercept-augmented regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import Dataset, StrataIndex

LEVERAGE_FLOOR = 1e-8


class NotEstimable(ArithmeticError):
    """An arm regression cannot be computed (collinearity or leverage one)."""


@dataclass(frozen=True)
class DemeanedCovariates:
    xb: np.ndarray
    means: dict[str, np.ndarray]


def demean_by_stratum(d: Dataset, idx: StrataIndex) -> DemeanedCovariates:
    xb = np.array(d.x, dtype=float)
    means = {}
    for s in idx.labels:
        rows = idx.rows[s]
        mu = d.x[rows].mean(axis=0) if d.k else np.empty(0)
        xb[rows] -= mu
        means[s] = mu
    xb.setflags(write=False)
    return DemeanedCovariates(xb, means)


@dataclass(frozen=True)
class ArmFit:
    """Regression artifacts for one (treatment, stratum) cell.

    ``loo_resid`` is ``resid / (1 - leverage)``.
    """

    a: int
    s: str
    rows: np.ndarray
    y: np.ndarray
    xb: np.ndarray
    tau: float
    beta: np.ndarray
    gram: np.ndarray
    leverage: np.ndarray
    rowsum: np.ndarray
    gamma: float
    resid: np.ndarray
    loo_resid: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.xb.shape[1]


class _GramSolver:
    """Solves ``G z = b`` by Cholesky, falling back once to QR of ``xb``."""

    def __init__(self, xb: np.ndarray, gram: np.ndarray):
        self._chol = None
        self._r = None
        try:
            self._chol = linalg.cho_factor(gram, lower=False, check_finite=False)
            if not np.all(np.diag(self._chol[0]) > 0):
                raise linalg.LinAlgError("non-positive pivot")
        except linalg.LinAlgError:
            self._chol = None
            r = linalg.qr(xb, mode="r", check_finite=False)[0][: xb.shape[1]]
            diag = np.abs(np.diag(r))
            if diag.size and diag.min() <= 1e-12 * max(diag.max(), 1e-300):
                raise NotEstimable("arm not estimable (collinear covariates)") from None
            self._r = r

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            return linalg.cho_solve(self._chol, b, check_finite=False)
        z = linalg.solve_triangular(self._r, b, trans="T", check_finite=False)
        return linalg.solve_triangular(self._r, z, check_finite=False)


def fit_arm(y_arm, xb_arm, a: int = 1, s: str = "", rows=None) -> ArmFit:
    """Saturated arm regression of ``y`` on ``(1, xb)``; cost O(n k^2 + k^3).

    Raises :class:`NotEstimable` when the Gram matrix cannot be factored,
    when the demeaned covariates absorb the intercept, or when some leverage
    is within ``1e-8`` of one.
    """
    y = np.asarray(y_arm, dtype=float)
    xb = np.asarray(xb_arm, dtype=float)
    n = y.shape[0]
    if xb.ndim == 1:
        xb = xb.reshape(n, -1)
    k = xb.shape[1]
    if n < 1:
        raise NotEstimable("empty arm")
    if n < k + 2:
        raise NotEstimable(f"arm not estimable: n_a,s={n} < k+2={k + 2}")
    rows = np.arange(n) if rows is None else np.asarray(rows)

    if k == 0:
        tau = y.sum() / n
        resid = y - tau
        zeros = np.zeros(n)
        return ArmFit(a, s, rows, y, xb, float(tau), np.empty(0), np.empty((0, 0)),
                      zeros, np.ones(n), 1.0, resid, resid.copy())

    gram = xb.T @ xb
    solver = _GramSolver(xb, gram)
    u = xb.sum(axis=0)
    ginv_u = solver.solve(u)
    ginv_xt = solver.solve(xb.T)
    leverage = np.einsum("ij,ji->i", xb, ginv_xt)
    rowsum = 1.0 - xb @ ginv_u
    msum = rowsum.sum()
    gamma = msum / n
    if not gamma > 1e-10:
        raise NotEstimable("arm not estimable (covariates absorb the intercept)")
    tau = (rowsum @ y) / msum
    beta = ginv_xt @ (y - tau)
    resid = y - tau - xb @ beta
    mii = 1.0 - leverage
    if mii.min() < LEVERAGE_FLOOR:
        raise NotEstimable("leverage-one observation")
    return ArmFit(a, s, rows, y, xb, float(tau), beta, gram, leverage, rowsum,
                  float(gamma), resid, resid / mii)


def fit_all(d: Dataset, idx: StrataIndex, xb: np.ndarray) -> dict[tuple[int, str], ArmFit]:
    fits = {}
    for s in idx.labels:
        for a in (1, 0):
            rows = idx.arm_rows[(a, s)]
            fits[(a, s)] = fit_arm(d.y[rows], xb[rows], a=a, s=s, rows=rows)
    return fits
