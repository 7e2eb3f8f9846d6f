import math

import numpy as np
import pytest

from carate import dgp
from carate.estimate import estimate_ate
from carate.randomize import Scheme
from carate.rngstat import stream


def test_strata_from_z1_two_bins():
    labels = dgp.strata_from_z1([-0.5, 0.5, 0.0, -1.0, 1.0], 2)
    assert labels.tolist() == ["2", "1", "2", "2", "1"]


def test_strata_from_z1_four_bins():
    labels = dgp.strata_from_z1([0.9, -0.9, -0.5, 0.0, 0.4], 4)
    assert labels[0] == "1"  # top interval
    assert labels[1] == "4"
    assert labels[2] == "4"  # boundary -0.5 stays in the lower bin
    assert labels[3] == "3" and labels[4] == "2"


def test_toeplitz_sqrt_small_cases():
    assert np.array_equal(dgp.toeplitz_sqrt(0.6, 1), np.array([[1.0]]))
    np.testing.assert_allclose(dgp.toeplitz_sqrt(0.0, 5), np.eye(5), atol=1e-14)
    q = dgp.toeplitz_sqrt(0.6, 2)
    # symmetric 2x2 root from the eigen-pairs 1 +- rho
    a = (math.sqrt(1.6) + math.sqrt(0.4)) / 2
    b = (math.sqrt(1.6) - math.sqrt(0.4)) / 2
    np.testing.assert_allclose(q, [[a, b], [b, a]], atol=1e-12)
    np.testing.assert_allclose(q @ q, [[1, 0.6], [0.6, 1]], atol=1e-12)


def test_toeplitz_sqrt_large():
    q = dgp.toeplitz_sqrt(0.6, 79)
    lags = np.abs(np.subtract.outer(np.arange(79), np.arange(79)))
    assert np.max(np.abs(q @ q - 0.6**lags)) < 1e-10
    assert np.array_equal(q, q.T)
    with pytest.raises(ValueError):
        dgp.toeplitz_sqrt(1.0, 3)


def test_basis_order_and_size():
    terms = dgp.poly_exponents()
    assert len(terms) == 209 == 6 + 21 + 56 + 126
    assert terms[:6] == tuple((j,) for j in range(6))
    assert terms[6:12] == tuple((j, j) for j in range(6))
    assert terms[12:15] == ((0, 1), (0, 2), (0, 3))
    assert terms[27:33] == tuple((j, j, j) for j in range(6))
    assert len(set(terms)) == 209


def test_build_regressors():
    z = np.random.default_rng(0).uniform(-1, 1, (10, 6))
    np.testing.assert_array_equal(dgp.build_regressors(4, z, 6), z)
    assert dgp.build_regressors(4, z, 0).shape == (10, 0)
    np.testing.assert_allclose(dgp.build_regressors(4, z, 13)[:, 12], z[:, 0] * z[:, 1])
    z2 = np.random.default_rng(1).uniform(size=(10, 40))
    np.testing.assert_array_equal(dgp.build_regressors(2, z2, 40), z2)
    with pytest.raises(ValueError):
        dgp.build_regressors(4, z, 210)
    with pytest.raises(ValueError):
        dgp.build_regressors(2, z2, 41)


def _closed_form_constant(model_id, d):
    # E[1 + (Z1 + W)^2] with Z1 ~ U[-1,1] independent of W
    if model_id == 1:
        ew2 = 0.16 + 0.04 * (d - 1)
    elif model_id in (2, 4):
        ew2 = 1 / 3
    else:
        lags = np.abs(np.subtract.outer(np.arange(d - 1), np.arange(d - 1)))
        ew2 = (0.6**lags).sum() / 3 / (d - 1)
    return (1 + 1 / 3 + ew2) ** -0.5


@pytest.mark.parametrize("model_id", [1, 2, 3, 4, 5, 6])
def test_normalizing_constant_against_closed_form(model_id):
    c = dgp.normalizing_constant(model_id, 400, 2)
    d = dgp.available_dim(model_id, 400, 2)
    assert abs(c / _closed_form_constant(model_id, d) - 1) < 0.005


def test_normalizing_constant_reproducible_and_n_free_for_model4():
    c1 = dgp.normalizing_constant(1, 400, 2, rng=stream(9, 0, "calibration"), draws=200_000)
    c2 = dgp.normalizing_constant(1, 400, 2, rng=stream(9, 0, "calibration"), draws=200_000)
    assert abs(c1 - c2) <= 1e-12
    assert dgp.normalizing_constant(4, 400, 2) == dgp.normalizing_constant(4, 800, 2)


@pytest.mark.parametrize("model_id", [1, 2, 3, 4])
def test_normalization_on_fresh_sample(model_id):
    c = dgp.normalizing_constant(model_id, 400, 2)
    d = dgp.available_dim(model_id, 400, 2)
    z = dgp.draw_latent(model_id, 1_000_000, d, stream(11, model_id, "covariates"))
    assert abs(np.mean(c**2 * dgp.variance_factor(z)) - 1) < 0.01


def test_model1_dummy_rate():
    z = dgp.draw_latent(1, 100_000, 40, stream(12, 0, "covariates"))
    assert abs(z[:, 1:].mean() - 0.2) < 0.01
    assert set(np.unique(z[:, 1:])) == {0.0, 1.0}


def test_model3_latent_covariance():
    z = dgp.draw_latent(3, 100_000, 40, stream(13, 0, "covariates"))
    lags = np.abs(np.subtract.outer(np.arange(39), np.arange(39)))
    assert np.max(np.abs(np.cov(z[:, 1:], rowvar=False) - 0.6**lags / 3)) < 0.02


@pytest.mark.slow
def test_models_5_6_conditional_means_are_centred():
    # supports taking the true effect equal to mu_1 - mu_0 for these designs
    rng = stream(14, 0, "covariates")
    sums = {(5, 1): [], (5, 0): [], (6, 1): [], (6, 0): []}
    sq = {key: [] for key in sums}
    total = 0
    for _ in range(100):
        z = dgp.draw_latent(5, 100_000, 40, rng)
        total += z.shape[0]
        for mid in (5, 6):
            m1, m0 = dgp.conditional_means(mid, z)
            for a, m in ((1, m1), (0, m0)):
                sums[(mid, a)].append(math.fsum(m))
                sq[(mid, a)].append(math.fsum(m * m))
    for key in sums:
        mean = math.fsum(sums[key]) / total
        sd = math.sqrt(math.fsum(sq[key]) / total - mean**2)
        assert abs(mean) < 4 * sd / math.sqrt(total), key


def test_generate_model1_shapes_and_masking():
    spec = dgp.ModelSpec(1, 400, 2, 40)
    assert spec.d_available == 40
    trial = dgp.generate_replication(spec, Scheme("sbr"), 1, 0)
    d = trial.data
    assert (d.n, d.k) == (400, 40)
    np.testing.assert_array_equal(d.y, np.where(d.a == 1, trial.y1, trial.y0))
    np.testing.assert_array_equal(d.x, trial.z)
    np.testing.assert_array_equal(d.s, dgp.strata_from_z1(trial.z[:, 0], 2))


def test_null_effect_means_match():
    spec = dgp.ModelSpec(2, 400, 2, 10, effect=0.0)
    trial = dgp.generate_replication(spec, Scheme("srs"), 2, 0)
    m1, m0 = dgp.conditional_means(2, trial.z)
    assert np.array_equal(m1, m0)


def test_generate_is_deterministic():
    spec = dgp.ModelSpec(3, 200, 2, 20)
    t1 = dgp.generate_replication(spec, Scheme("bcd"), 5, 3)
    t2 = dgp.generate_replication(spec, Scheme("bcd"), 5, 3)
    assert np.array_equal(t1.data.y, t2.data.y) and np.array_equal(t1.data.a, t2.data.a)


def test_changing_scheme_keeps_covariates_and_noise():
    spec = dgp.ModelSpec(2, 200, 2, 5)
    t1 = dgp.generate_replication(spec, Scheme("srs"), 5, 3)
    t2 = dgp.generate_replication(spec, Scheme("sbr"), 5, 3)
    assert np.array_equal(t1.z, t2.z) and np.array_equal(t1.y1, t2.y1)


def test_model4_k0_adjusted_equals_unadjusted():
    spec = dgp.ModelSpec(4, 200, 2, 0)
    trial = dgp.generate_replication(spec, Scheme("sbr"), 6, 0)
    res = estimate_ate(trial.data)
    assert res.tau_adj == res.tau_unadj


def test_spec_validation():
    with pytest.raises(ValueError):
        dgp.ModelSpec(7, 400)
    with pytest.raises(ValueError):
        dgp.ModelSpec(1, 400, 2, 41)
    assert dgp.ModelSpec(4, 400, 2, 209).k_max == 209
