import math

import numpy as np
import pytest
from scipy import integrate

from carate import rmt
from carate.olskernel import fit_arm
from carate.rngstat import sample_standard_normal, stream


def _trapezoid_oracle(kappa, points=2_000_001):
    # independent check of the integral: trapezoid in theta where lambda = 1 + kappa - 2 sqrt(kappa) cos(theta)
    r = math.sqrt(kappa)
    theta = np.linspace(0.0, math.pi, points)
    lam = 1 + kappa - 2 * r * np.cos(theta)
    dens = np.sqrt(np.clip(((1 + r) ** 2 - lam) * (lam - (1 - r) ** 2), 0, None)) / (2 * math.pi * lam**2)
    return float(integrate.trapezoid(dens * 2 * r * np.sin(theta), theta))


@pytest.mark.parametrize("kappa", [0.1, 0.4, 0.5, 0.8])
def test_closed_form_verified_by_independent_quadratures(kappa):
    closed = kappa / (1 - kappa)
    assert abs(_trapezoid_oracle(kappa) - closed) < 1e-6
    lo, hi = (1 - math.sqrt(kappa)) ** 2, (1 + math.sqrt(kappa)) ** 2
    val, _ = integrate.quad(lambda x: math.sqrt(max((hi - x) * (x - lo), 0)) / (2 * math.pi * x * x), lo, hi,
                            limit=200)
    assert abs(val - closed) < 1e-7


def test_quadrature_matches_closed_form_on_grid():
    for kappa in np.arange(1, 19) * 0.05:
        res = rmt.mp_integral(kappa)
        assert abs(res.zeta - kappa / (1 - kappa)) < 1e-6
        assert res.lower == (1 - math.sqrt(kappa)) ** 2


def test_zero_and_domain():
    assert rmt.mp_zeta(0.0) == 0.0 and rmt.vif(0.0) == 0.0
    for bad in (1.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            rmt.mp_zeta(bad)


@pytest.mark.parametrize("kappa,expected", [(0.2, 0.125), (1 / 3, 0.25), (0.5, 0.5), (2 / 3, 1.0)])
def test_vif_thresholds(kappa, expected):
    assert abs(rmt.vif(kappa) - expected) < 1e-6


def test_zeta_0_5():
    assert abs(rmt.mp_zeta(0.5) - 1.0) < 1e-6
    assert abs(rmt.mp_zeta(0.2) - 0.25) < 1e-6


def test_gamma_inf():
    assert rmt.gamma_inf(0.0) == 1.0
    assert abs(rmt.gamma_inf(0.4, 0.5, 1) - 0.75) < 1e-6
    assert rmt.gamma_inf(0.3, 0.5, 1) == rmt.gamma_inf(0.3, 0.5, 0)
    assert rmt.gamma_inf(0.3, 0.25, 1) < rmt.gamma_inf(0.3, 0.25, 0)


def test_vif_curve():
    assert rmt.vif_curve([]) == []
    curve = rmt.vif_curve(np.linspace(0, 0.9, 19))
    vals = [v for _, v in curve]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_sample_gamma_small_gaussian_design():
    # moderate instance of the Gaussian limit; the acceptance suite runs the full-size version
    gammas = []
    for r in range(20):
        rng = stream(21, r, "analysis")
        x = sample_standard_normal(rng, (400, 80))
        treated = np.arange(200)
        xb = x - x.mean(axis=0)
        gammas.append(fit_arm(np.zeros(200), xb[treated]).gamma)
    assert abs(np.mean(gammas) - rmt.gamma_inf(0.4)) < 0.03
