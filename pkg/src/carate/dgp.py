"""Synthetic experiments for the six simulation designs.

Potential outcomes follow ``Y(a) = mu_a + m_a(Z) + sigma(Z) eps(a)`` with
``mu_1 = effect`` and ``mu_0 = 0``.  Strata are equal-width bins of ``Z_1``.

Model summary (``W = sum_{j>=2} Z_j / sqrt(d-1)``):

==  =======================================  ===========================
id  latent Z_2..Z_d                          m_1 / m_0
==  =======================================  ===========================
1   Bernoulli(0.2) dummies                   Z_1 + 2W  (both arms)
2   iid U[-1,1]                              2W        (both arms)
3   Toeplitz(0.6)^{1/2} times iid U[-1,1]    2W        (both arms)
4   d = 6, iid U[-1,1], polynomial basis     2 exp(sqrt(mean Z^2))
5   as model 3                               2W / 2 sum Z^3 / sqrt(d-1)
6   as model 3                               2W / centred quadratic
==  =======================================  ===========================

All models share ``sigma(Z) = c [1 + (Z_1 + W)^2]^{1/2}`` with ``c`` chosen so
that ``E sigma^2 = 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import rngstat
from .data import Dataset
from .randomize import Assignment, Scheme, assign

MODELS = (1, 2, 3, 4, 5, 6)
POLY_DIM = 6
POLY_DEGREE = 4
CALIBRATION_DRAWS = 1_000_000
CALIBRATION_SEED = 20240601
_CHUNK = 50_000


def available_dim(model_id: int, n: int, num_strata: int) -> int:
    """Latent dimension d_n: ``0.2 n / |S|`` except model 4, which has 6."""
    if model_id == 4:
        return POLY_DIM
    return int(round(0.2 * n / num_strata))


@lru_cache(maxsize=None)
def poly_exponents(dim: int = POLY_DIM, degree: int = POLY_DEGREE) -> tuple[tuple[int, ...], ...]:
    """Exponent index tuples of the polynomial basis, in basis order.

    For each total degree: pure powers ``Z_j^m`` for ``j = 1..dim``, then the
    remaining monomials of that degree as sorted index tuples in
    lexicographic order.
    """
    terms: list[tuple[int, ...]] = []
    for m in range(1, degree + 1):
        terms.extend((j,) * m for j in range(dim))
        terms.extend(c for c in itertools.combinations_with_replacement(range(dim), m)
                     if len(set(c)) > 1)
    return tuple(terms)


def basis_size(model_id: int, n: int, num_strata: int) -> int:
    if model_id == 4:
        return len(poly_exponents())
    return available_dim(model_id, n, num_strata)


def polynomial_basis(z: np.ndarray, k: int) -> np.ndarray:
    terms = poly_exponents(z.shape[1])
    if k > len(terms):
        raise ValueError(f"k={k} exceeds polynomial basis size {len(terms)}")
    out = np.empty((z.shape[0], k))
    for col, idx in enumerate(terms[:k]):
        out[:, col] = np.prod(z[:, list(idx)], axis=1)
    return out


def build_regressors(model_id: int, z: np.ndarray, k: int) -> np.ndarray:
    """Regressor matrix: first ``k`` columns of Z, or of the polynomial basis for model 4."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if model_id == 4:
        return polynomial_basis(z, k)
    if k > z.shape[1]:
        raise ValueError(f"k={k} exceeds available regressors {z.shape[1]}")
    return np.array(z[:, :k])


def strata_from_z1(z1, num_strata: int) -> np.ndarray:
    """Labels ``S_i = sum_j 1{z1_i <= 2j/|S| - 1}``, as strings ``"1".."|S|"``.

    Low ``z1`` gets the high label; the boundary value goes to the lower bin.
    """
    z1 = np.asarray(z1, dtype=float)
    cuts = 2.0 * np.arange(1, num_strata + 1) / num_strata - 1.0
    counts = (z1[:, None] <= cuts[None, :]).sum(axis=1)
    return counts.astype(str)


def toeplitz_sqrt(rho: float, d: int) -> np.ndarray:
    """Symmetric PSD square root of ``[rho^|i-j|]`` via eigendecomposition."""
    if not abs(rho) < 1:
        raise ValueError("need |rho| < 1")
    if d < 1:
        raise ValueError("need d >= 1")
    lags = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    sigma = np.power(float(rho), lags)
    vals, vecs = np.linalg.eigh(sigma)
    vals = np.clip(vals, 0.0, None)
    q = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (q + q.T)


@lru_cache(maxsize=32)
def _toeplitz_cached(rho: float, d: int) -> np.ndarray:
    q = toeplitz_sqrt(rho, d)
    q.setflags(write=False)
    return q


DUMMY_THRESHOLD = rngstat.normal_inverse_cdf(0.8)


def draw_latent(model_id: int, n: int, d: int, rng: np.random.Generator, rho: float = 0.6) -> np.ndarray:
    """n x d latent covariates; column 0 is always U[-1, 1]."""
    if model_id not in MODELS:
        raise ValueError(f"unknown model {model_id}")
    z1 = rngstat.sample_uniform(rng, -1.0, 1.0, n)
    if model_id == 4:
        rest = rngstat.sample_uniform(rng, -1.0, 1.0, (n, POLY_DIM - 1))
    elif model_id == 1:
        v = rngstat.sample_standard_normal(rng, (n, d - 1))
        rest = (v >= DUMMY_THRESHOLD).astype(float)
    elif model_id == 2:
        rest = rngstat.sample_uniform(rng, -1.0, 1.0, (n, d - 1))
    else:
        v = rngstat.sample_uniform(rng, -1.0, 1.0, (n, d - 1))
        rest = v @ _toeplitz_cached(rho, d - 1)
    return np.column_stack([z1, rest])


def _scaled_sum(zrest: np.ndarray) -> np.ndarray:
    return zrest.sum(axis=1) / math.sqrt(zrest.shape[1]) if zrest.shape[1] else np.zeros(zrest.shape[0])


def variance_factor(z: np.ndarray) -> np.ndarray:
    """Bracket ``1 + (Z_1 + W)^2`` inside the conditional standard deviation."""
    return 1.0 + (z[:, 0] + _scaled_sum(z[:, 1:])) ** 2


def conditional_means(model_id: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(m_1(Z), m_0(Z))``."""
    rest = z[:, 1:]
    scale = math.sqrt(rest.shape[1]) if rest.shape[1] else 1.0
    if model_id == 1:
        m = z[:, 0] + 2.0 * rest.sum(axis=1) / scale
        return m, m
    if model_id in (2, 3):
        m = 2.0 * rest.sum(axis=1) / scale
        return m, m
    if model_id == 4:
        m = 2.0 * np.exp(np.sqrt(np.mean(z**2, axis=1)))
        return m, m
    m1 = 2.0 * rest.sum(axis=1) / scale
    if model_id == 5:
        return m1, 2.0 * (rest**3).sum(axis=1) / scale
    if model_id == 6:
        return m1, 2.0 * ((rest**2 - 1.0 / 3.0) / 3.0 + rest / 10.0).sum(axis=1) / scale
    raise ValueError(f"unknown model {model_id}")


_CONSTANT_CACHE: dict[tuple, float] = {}


def normalizing_constant(
    model_id: int,
    n: int,
    num_strata: int,
    rng: np.random.Generator | None = None,
    draws: int = CALIBRATION_DRAWS,
    rho: float = 0.6,
) -> float:
    """``c = (E[1 + (Z_1 + W)^2])^{-1/2}`` estimated by Monte Carlo.

    Without ``rng`` a fixed calibration stream is used and the result is
    cached per ``(model_id, d_n, draws, rho)``; model 4 therefore shares one
    constant across all ``n``.
    """
    d = available_dim(model_id, n, num_strata)
    key = (model_id, d, draws, rho)
    if rng is None and key in _CONSTANT_CACHE:
        return _CONSTANT_CACHE[key]
    gen = rng if rng is not None else rngstat.stream(CALIBRATION_SEED, 1000 * model_id + d, "calibration")
    partial = []
    done = 0
    while done < draws:
        m = min(_CHUNK, draws - done)
        z = draw_latent(model_id, m, d, gen, rho)
        partial.append(math.fsum(variance_factor(z)))
        done += m
    c = 1.0 / math.sqrt(math.fsum(partial) / draws)
    if rng is None:
        _CONSTANT_CACHE[key] = c
    return c


@dataclass(frozen=True)
class ModelSpec:
    """One simulation design. ``c_eps=None`` means: calibrate on first use."""

    model_id: int
    n: int
    num_strata: int = 2
    k: int = 0
    effect: float = 0.0
    rho: float = 0.6
    c_eps: float | None = None

    def __post_init__(self) -> None:
        if self.model_id not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.n < 2 or self.num_strata < 1:
            raise ValueError("need n >= 2 and at least one stratum")
        if self.model_id != 4 and self.d_available < 2:
            raise ValueError("latent dimension 0.2 n / |S| must be at least 2")
        if not 0 <= self.k <= self.k_max:
            raise ValueError(f"k={self.k} outside [0, {self.k_max}] for model {self.model_id}")

    @property
    def d_available(self) -> int:
        return available_dim(self.model_id, self.n, self.num_strata)

    @property
    def k_max(self) -> int:
        return basis_size(self.model_id, self.n, self.num_strata)

    @property
    def true_tau(self) -> float:
        # every m_a has mean zero except model 4, where m_1 = m_0
        return float(self.effect)

    def resolved(self) -> "ModelSpec":
        if self.c_eps is not None:
            return self
        return replace(self, c_eps=normalizing_constant(self.model_id, self.n, self.num_strata, rho=self.rho))


@dataclass(frozen=True)
class GeneratedTrial:
    data: Dataset
    z: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    assignment: Assignment
    true_tau: float


def generate(
    spec: ModelSpec,
    scheme: Scheme,
    rng: np.random.Generator,
    noise_rng: np.random.Generator | None = None,
    assign_rng: np.random.Generator | None = None,
) -> GeneratedTrial:
    """Draw one experiment.

    ``rng`` supplies the covariates; noise and assignment use their own
    generators when given, otherwise continue on ``rng``.
    """
    spec = spec.resolved()
    noise_rng = rng if noise_rng is None else noise_rng
    assign_rng = rng if assign_rng is None else assign_rng
    z = draw_latent(spec.model_id, spec.n, spec.d_available, rng, spec.rho)
    s = strata_from_z1(z[:, 0], spec.num_strata)
    eps = rngstat.sample_standard_normal(noise_rng, (spec.n, 2))
    sd = spec.c_eps * np.sqrt(variance_factor(z))
    m1, m0 = conditional_means(spec.model_id, z)
    y1 = spec.effect + m1 + sd * eps[:, 0]
    y0 = m0 + sd * eps[:, 1]
    asg = assign(s, scheme, assign_rng)
    y = np.where(asg.a == 1, y1, y0)
    x = build_regressors(spec.model_id, z, spec.k)
    return GeneratedTrial(Dataset(y, asg.a, s, x), z, y1, y0, asg, spec.true_tau)


def generate_replication(spec: ModelSpec, scheme: Scheme, seed: int, replication: int) -> GeneratedTrial:
    """One replication drawn from the dedicated covariate/noise/assignment streams."""
    return generate(
        spec,
        scheme,
        rngstat.stream(seed, replication, "covariates"),
        noise_rng=rngstat.stream(seed, replication, "noise"),
        assign_rng=rngstat.stream(seed, replication, "assignment"),
    )
