"""Random streams and scalar numerics shared by the rest of the package.

Every random draw in the package comes from an :class:`RngStream`.  A stream is
identified by ``(seed, replication, purpose)``; the triple is hashed with
SHA-256 and the digest keys a Philox counter-based generator, so any stream can
be created in O(1) on any worker without coordination.

Normal variates are produced by pushing the stream's uniforms through the
inverse normal CDF (never Box-Muller or ziggurat), which keeps every normal a
pure function of the underlying uniforms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

PURPOSES = ("covariates", "noise", "assignment", "calibration", "analysis")

_TWO_M53 = 2.0**-53


def _key_digest(seed: int, replication: int, purpose: str) -> bytes:
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}; expected one of {PURPOSES}")
    payload = f"carate/{int(seed)}/{int(replication)}/{purpose}".encode()
    return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, replication, purpose)``.

    The 256-bit SHA-256 digest of the triple is split into the 128-bit Philox
    key and the high 128 bits of the initial counter.
    """

    seed: int
    replication: int = 0
    purpose: str = "analysis"
    key: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "key", _key_digest(self.seed, self.replication, self.purpose))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of the stream."""
        words = np.frombuffer(self.key, dtype="<u8")
        counter = np.array([0, 0, words[2], words[3]], dtype=np.uint64)
        bitgen = np.random.Philox(key=words[:2].copy(), counter=counter)
        return np.random.Generator(bitgen)


def stream(seed: int, replication: int = 0, purpose: str = "analysis") -> np.random.Generator:
    return RngStream(seed, replication, purpose).generator()


def open_uniform(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniforms on the open interval (0, 1): the 53-bit grid shifted by half a step."""
    return rng.random(size) + _TWO_M53 / 2


def sample_uniform(rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0, size=None):
    """Half-open uniforms on ``[lo, hi)``."""
    return lo + (hi - lo) * rng.random(size)


def sample_standard_normal(rng: np.random.Generator, size=None):
    return special.ndtri(open_uniform(rng, size))


def normal_cdf(z):
    return special.ndtr(z)


def normal_inverse_cdf(p):
    """Standard normal quantile function.

    Accepts scalars or arrays with every entry strictly inside (0, 1).  The
    median maps to exactly 0.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError("normal_inverse_cdf requires p in the open interval (0, 1)")
    z = special.ndtri(arr)
    z = np.where(arr == 0.5, 0.0, z)
    if z.ndim == 0:
        return float(z)
    return z


def fsum(values) -> float:
    """Correctly rounded sum; independent of the order in which values arrive."""
    return math.fsum(float(v) for v in values)


def fmean(values) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("mean of empty sequence")
    return math.fsum(vals) / len(vals)
