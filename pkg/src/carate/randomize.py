"""Covariate-adaptive treatment assignment: SRS, WEI, BCD and SBR.

All schemes see only the stratum sequence and a random generator, never
outcomes or covariates.  Units are processed in row order, which is taken to
be the enrollment order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

SCHEMES = ("srs", "wei", "bcd", "sbr")


def wei_default_f(x: float) -> float:
    return (1.0 - x) / 2.0


@dataclass(frozen=True)
class Scheme:
    """Assignment rule and its parameters.

    ``pi`` is either one target propensity for every stratum or a mapping
    from stratum label to propensity (SRS and SBR only; WEI and BCD target
    1/2).  ``lam`` is the BCD bias and ``f`` the WEI allocation function.
    """

    kind: str = "srs"
    pi: float | Mapping[str, float] = 0.5
    lam: float = 0.75
    f: Callable[[float], float] = field(default=wei_default_f, compare=False)

    def __post_init__(self) -> None:
        kind = self.kind.lower()
        if kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")
        object.__setattr__(self, "kind", kind)
        if kind == "bcd" and not (0.5 < self.lam <= 1.0):
            raise ValueError("BCD requires lambda in (1/2, 1]")

    def pi_for(self, label: str) -> float:
        if self.kind in ("wei", "bcd"):
            return 0.5
        if isinstance(self.pi, Mapping):
            try:
                return float(self.pi[label])
            except KeyError:
                raise KeyError(f"unknown stratum label {label!r}: no target propensity") from None
        return float(self.pi)


@dataclass(frozen=True)
class Assignment:
    """Treatment vector plus end-of-sequence imbalance per stratum.

    ``imbalance[s]`` is ``sum_i (a_i - pi_s) 1{s_i = s}``; ``b_stat[s]`` is
    the same with ``pi_s = 1/2``.
    """

    a: np.ndarray
    imbalance: dict[str, float]
    b_stat: dict[str, float]


def _finish(a: np.ndarray, s_seq: np.ndarray, scheme: Scheme) -> Assignment:
    pis = {str(lab): scheme.pi_for(str(lab)) for lab in np.unique(s_seq)}
    return Assignment(a, imbalance(a, s_seq, pis), imbalance(a, s_seq, 0.5))


def assign_srs(s_seq, scheme: Scheme, rng: np.random.Generator) -> Assignment:
    s_seq = np.asarray(s_seq).astype(str)
    pis = np.array([scheme.pi_for(lab) for lab in s_seq], dtype=float)
    u = rng.random(s_seq.shape[0])
    a = (u < pis).astype(np.int8)
    return _finish(a, s_seq, scheme)


def _sequential(s_seq: np.ndarray, rng: np.random.Generator, prob) -> np.ndarray:
    """Row-order loop shared by WEI and BCD; ``prob(B, count)`` gives P(treat)."""
    u = rng.random(s_seq.shape[0])
    labels, codes = np.unique(s_seq, return_inverse=True)
    b = [0.0] * len(labels)
    count = [0] * len(labels)
    a = np.zeros(s_seq.shape[0], dtype=np.int8)
    for i, c in enumerate(codes):
        if u[i] < prob(b[c], count[c]):
            a[i] = 1
            b[c] += 0.5
        else:
            b[c] -= 0.5
        count[c] += 1
    return a


def assign_wei(s_seq, scheme: Scheme, rng: np.random.Generator) -> Assignment:
    s_seq = np.asarray(s_seq).astype(str)
    f = scheme.f

    def prob(b, count):
        # empty history: the ratio is taken to be zero
        return f(0.0) if count == 0 else f(2.0 * b / count)

    return _finish(_sequential(s_seq, rng, prob), s_seq, scheme)


def assign_bcd(s_seq, scheme: Scheme, rng: np.random.Generator) -> Assignment:
    s_seq = np.asarray(s_seq).astype(str)
    lam = scheme.lam

    def prob(b, count):
        if b == 0:
            return 0.5
        return lam if b < 0 else 1.0 - lam

    return _finish(_sequential(s_seq, rng, prob), s_seq, scheme)


def assign_sbr(s_seq, scheme: Scheme, rng: np.random.Generator) -> Assignment:
    """Exactly ``floor(pi_s n_s)`` treated per stratum, uniformly placed.

    Strata are visited in sorted label order; each draws one Fisher-Yates
    permutation of its row ids.
    """
    s_seq = np.asarray(s_seq).astype(str)
    a = np.zeros(s_seq.shape[0], dtype=np.int8)
    for lab in np.unique(s_seq):
        members = np.flatnonzero(s_seq == lab)
        # guard against pi*n landing a hair below an integer
        n_treat = math.floor(scheme.pi_for(str(lab)) * members.shape[0] + 1e-9)
        a[rng.permutation(members)[:n_treat]] = 1
    return _finish(a, s_seq, scheme)


_DISPATCH = {"srs": assign_srs, "wei": assign_wei, "bcd": assign_bcd, "sbr": assign_sbr}


def assign(s_seq, scheme: Scheme, rng: np.random.Generator) -> Assignment:
    return _DISPATCH[scheme.kind](s_seq, scheme, rng)


def imbalance(a, s_seq, pi: float | Mapping[str, float]) -> dict[str, float]:
    """Per-stratum ``D_{n,s} = sum_i (a_i - pi_s) 1{s_i = s}``."""
    a = np.asarray(a)
    s_seq = np.asarray(s_seq).astype(str)
    out = {}
    for lab in np.unique(s_seq):
        lab = str(lab)
        p = float(pi[lab]) if isinstance(pi, Mapping) else float(pi)
        mask = s_seq == lab
        n_treat = int(a[mask].sum())
        out[lab] = n_treat - p * int(mask.sum())
    return out
