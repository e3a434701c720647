"""Seeded random streams and service-time laws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# Named stream ids, one per consumer of randomness.
ARRIVALS = 0
SERVICES = 1
THINNING = 2
WEIGHT_INIT = 3
SHUFFLE = 4

_BLOCK = 4096


class RandomStream:
    """Reproducible stream keyed by ``(seed, stream_id)``.

    Backed by PCG64 seeded through ``SeedSequence([seed, stream_id])`` so that
    distinct stream ids are independent. Scalar draws are served from
    pre-generated blocks; the sequence only depends on the order of calls.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id]))
        )
        self._uniforms = np.empty(0)
        self._u_pos = 0
        self._normals = np.empty(0)
        self._n_pos = 0

    def uniform(self) -> float:
        """One draw from U[0, 1)."""
        if self._u_pos >= len(self._uniforms):
            self._uniforms = self.generator.random(_BLOCK)
            self._u_pos = 0
        u = self._uniforms[self._u_pos]
        self._u_pos += 1
        return float(u)

    def exponential(self, rate: float) -> float:
        # 1 - U lies in (0, 1], so the log is finite
        return -math.log(1.0 - self.uniform()) / rate

    def normal(self) -> float:
        if self._n_pos >= len(self._normals):
            self._normals = self.generator.standard_normal(_BLOCK)
            self._n_pos = 0
        z = self._normals[self._n_pos]
        self._n_pos += 1
        return float(z)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class Lognormal:
    log_mean: float
    log_std: float

    def __post_init__(self):
        # log_std == 0 is accepted as the point-mass limit
        if not self.log_std >= 0:
            raise ValueError(f"log_std must be non-negative, got {self.log_std}")


@dataclass(frozen=True)
class Hyperexponential2:
    p: float
    rate1: float
    rate2: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not (self.rate1 > 0 and self.rate2 > 0):
            raise ValueError("rates must be positive")


ServiceDistribution = Union[Exponential, Lognormal, Hyperexponential2]


def fit_lognormal(mean: float, cv: float) -> Lognormal:
    """Lognormal law with the requested mean and coefficient of variation."""
    if not mean > 0:
        raise ValueError(f"mean must be positive, got {mean}")
    if not cv > 0:
        raise ValueError(f"cv must be positive, got {cv}")
    var_log = math.log1p(cv * cv)
    return Lognormal(log_mean=math.log(mean) - var_log / 2.0, log_std=math.sqrt(var_log))


def fit_h2_balanced(mean: float, cv: float) -> Hyperexponential2:
    """Two-phase hyperexponential with balanced means (p/rate1 = (1-p)/rate2)."""
    if not mean > 0:
        raise ValueError(f"mean must be positive, got {mean}")
    if not cv > 1:
        raise ValueError(f"H2 requires cv > 1 (squared cv above 1), got cv={cv}")
    scv = cv * cv
    p = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
    return Hyperexponential2(p=p, rate1=2.0 * p / mean, rate2=2.0 * (1.0 - p) / mean)


def moments(dist: ServiceDistribution) -> tuple[float, float]:
    """Exact (mean, cv) of a service law."""
    if isinstance(dist, Exponential):
        return 1.0 / dist.rate, 1.0
    if isinstance(dist, Lognormal):
        s2 = dist.log_std**2
        mean = math.exp(dist.log_mean + s2 / 2.0)
        return mean, math.sqrt(math.expm1(s2))
    if isinstance(dist, Hyperexponential2):
        p, r1, r2 = dist.p, dist.rate1, dist.rate2
        mean = p / r1 + (1.0 - p) / r2
        second = 2.0 * p / r1**2 + 2.0 * (1.0 - p) / r2**2
        return mean, math.sqrt(second / mean**2 - 1.0)
    raise TypeError(f"unknown service distribution {dist!r}")


def service_rate(dist: ServiceDistribution) -> float:
    return 1.0 / moments(dist)[0]


def sample_service(dist: ServiceDistribution, stream: RandomStream) -> float:
    if isinstance(dist, Exponential):
        return stream.exponential(dist.rate)
    if isinstance(dist, Lognormal):
        return math.exp(dist.log_mean + dist.log_std * stream.normal())
    if isinstance(dist, Hyperexponential2):
        rate = dist.rate1 if stream.uniform() < dist.p else dist.rate2
        return stream.exponential(rate)
    raise TypeError(f"unknown service distribution {dist!r}")


def sample_services(dist: ServiceDistribution, stream: RandomStream, n: int) -> np.ndarray:
    """``n`` consecutive draws, identical to calling ``sample_service`` n times."""
    return np.array([sample_service(dist, stream) for _ in range(n)])


def to_dict(dist: ServiceDistribution) -> dict:
    if isinstance(dist, Exponential):
        return {"type": "exponential", "rate": dist.rate}
    if isinstance(dist, Lognormal):
        return {"type": "lognormal", "log_mean": dist.log_mean, "log_std": dist.log_std}
    if isinstance(dist, Hyperexponential2):
        return {"type": "h2", "p": dist.p, "rate1": dist.rate1, "rate2": dist.rate2}
    raise TypeError(f"unknown service distribution {dist!r}")
