"""Marchenko-Pastur quantities behind the variance inflation of many regressors.

``zeta(kappa) = int sqrt((l+ - x)(x - l-)) / (2 pi x^2) dx`` over the MP
support ``l+- = (1 +- sqrt(kappa))^2``.  The integral is evaluated by
Gauss-Legendre after ``x = c + r sin(u)``, which turns the endpoint
square-root singularities into a smooth ``r^2 cos^2(u)`` numerator.  The
result equals ``kappa * E[1/x]`` under the MP law, i.e. ``kappa / (1 - kappa)``;
that closed form is used only as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MAX_NODES = 1 << 14


@dataclass(frozen=True)
class MpResult:
    kappa: float
    lower: float
    upper: float
    zeta: float
    vif: float
    error: float
    nodes: int


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not 0.0 <= kappa < 1.0:
        raise ValueError("kappa must lie in [0, 1)")
    return kappa


def zeta_closed_form(kappa: float) -> float:
    kappa = _check_kappa(kappa)
    return kappa / (1.0 - kappa)


def _gauss_legendre(kappa: float, nodes: int) -> float:
    root = math.sqrt(kappa)
    lo, hi = (1.0 - root) ** 2, (1.0 + root) ** 2
    centre, radius = 0.5 * (hi + lo), 0.5 * (hi - lo)
    t, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * math.pi * t
    lam = centre + radius * np.sin(u)
    vals = (radius * np.cos(u)) ** 2 / (2.0 * math.pi * lam**2)
    return float(0.5 * math.pi * (w @ vals))


def mp_integral(kappa: float, tol: float = 1e-12) -> MpResult:
    """Quadrature for ``zeta`` with node doubling until successive values agree."""
    kappa = _check_kappa(kappa)
    root = math.sqrt(kappa)
    lo, hi = (1.0 - root) ** 2, (1.0 + root) ** 2
    if kappa == 0.0:
        return MpResult(0.0, lo, hi, 0.0, 0.0, 0.0, 0)
    nodes = 16
    prev = _gauss_legendre(kappa, nodes)
    while True:
        nodes *= 2
        cur = _gauss_legendre(kappa, nodes)
        err = abs(cur - prev)
        if err < tol or nodes >= _MAX_NODES:
            break
        prev = cur
    if err >= tol:
        raise ArithmeticError(f"MP quadrature did not converge at kappa={kappa} (err={err:.3g})")
    return MpResult(kappa, lo, hi, cur, cur / 2.0, err, nodes)


def mp_zeta(kappa: float, tol: float = 1e-10) -> float:
    """``zeta(kappa)`` by quadrature, cross-checked against ``kappa/(1-kappa)``."""
    res = mp_integral(kappa, tol)
    closed = zeta_closed_form(kappa)
    if abs(res.zeta - closed) > max(1e-8, 1e-8 * closed):
        raise ArithmeticError(f"quadrature {res.zeta!r} disagrees with closed form {closed!r}")
    return res.zeta


def vif(kappa: float) -> float:
    """Proportional variance inflation ``zeta / 2`` (balanced arms)."""
    return mp_zeta(kappa) / 2.0


def gamma_inf(kappa: float, pi: float = 0.5, a: int = 1) -> float:
    """Limit of ``1'M1/n`` for Gaussian regressors."""
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    if a not in (0, 1):
        raise ValueError("a must be 0 or 1")
    share = a * (1.0 - pi) + (1 - a) * pi
    return 1.0 / (1.0 + share * mp_zeta(kappa))


def vif_curve(kappas) -> list[tuple[float, float]]:
    return [(float(k), vif(k)) for k in kappas]
