"""Univariate Gaussian mixtures: densities, quantiles, bounds and intervals."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)

_CDF_TOL = 1e-10
_MAX_ITER = 400


def norm_cdf(z: float) -> float:
    # erfc keeps full relative accuracy in the lower tail
    return 0.5 * math.erfc(-z / SQRT2)


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in np.atleast_1d(self.weights))
        m = tuple(float(x) for x in np.atleast_1d(self.means))
        s = tuple(float(x) for x in np.atleast_1d(self.stds))
        if not (len(w) == len(m) == len(s)) or not w:
            raise ValueError("weights, means and stds must be non-empty and of equal length")
        if any(not 0 < x <= 1 for x in w):
            raise ValueError(f"weights must lie in (0, 1], got {w}")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {math.fsum(w)!r}")
        if any(not x > 0 for x in s):
            raise ValueError(f"stds must be positive, got {s}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stds", s)

    @classmethod
    def normal(cls, mean: float, std: float) -> "GaussianMixture":
        return cls((1.0,), (mean,), (std,))

    @property
    def K(self) -> int:
        return len(self.weights)

    def components(self):
        return zip(self.weights, self.means, self.stds)

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "means": list(self.means), "stds": list(self.stds)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        return cls(tuple(data["weights"]), tuple(data["means"]), tuple(data["stds"]))

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))


def log_pdf(m: GaussianMixture, w: float) -> float:
    terms = [
        math.log(p) - math.log(s) - LOG_SQRT_2PI - 0.5 * ((w - mu) / s) ** 2
        for p, mu, s in m.components()
    ]
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def pdf(m: GaussianMixture, w: float) -> float:
    return math.fsum(
        p * math.exp(-0.5 * ((w - mu) / s) ** 2 - LOG_SQRT_2PI) / s for p, mu, s in m.components()
    )


def cdf(m: GaussianMixture, w: float) -> float:
    return math.fsum(p * norm_cdf((w - mu) / s) for p, mu, s in m.components())


def mean(m: GaussianMixture) -> float:
    return math.fsum(p * mu for p, mu, _ in m.components())


def variance(m: GaussianMixture) -> float:
    mu_bar = mean(m)
    # centred form avoids cancellation when the means are large
    return math.fsum(p * (s * s + (mu - mu_bar) ** 2) for p, mu, s in m.components())


def sample(m: GaussianMixture, rng: np.random.Generator, n: int) -> np.ndarray:
    k = rng.choice(m.K, size=n, p=np.array(m.weights) / sum(m.weights))
    return np.asarray(m.means)[k] + np.asarray(m.stds)[k] * rng.standard_normal(n)


def _bisect(f, target: float, lo: float, hi: float) -> float:
    """Root of the nondecreasing ``f(x) = target`` inside ``[lo, hi]``."""
    x = 0.5 * (lo + hi)
    for _ in range(_MAX_ITER):
        x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx - target) < _CDF_TOL or not lo < x < hi:
            break
        if fx < target:
            lo = x
        else:
            hi = x
    return x


def quantile(m: GaussianMixture, p: float) -> float:
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    span = max(m.stds)
    lo = min(mu - 10 * s for _, mu, s in m.components())
    hi = max(mu + 10 * s for _, mu, s in m.components())
    while cdf(m, lo) > p:
        lo -= 10 * span
    while cdf(m, hi) < p:
        hi += 10 * span
    return _bisect(lambda x: cdf(m, x), p, lo, hi)


def bounds(m: GaussianMixture, eps_ub: float, eps_lb: float) -> tuple[float, float]:
    """Lower and upper delay bounds with the given violation probabilities."""
    if not (0 < eps_ub < 1 and 0 < eps_lb < 1):
        raise ValueError("violation probabilities must lie in (0, 1)")
    if eps_ub + eps_lb >= 1:
        raise ValueError(f"eps_ub + eps_lb must be below 1, got {eps_ub + eps_lb}")
    return quantile(m, eps_lb), quantile(m, 1.0 - eps_ub)


def confidence_interval(m: GaussianMixture, p_cl: float) -> float:
    """Half-width ``x`` with ``P(mean - x < W < mean + x) = p_cl``."""
    if not 0 < p_cl < 1:
        raise ValueError(f"p_cl must lie in (0, 1), got {p_cl}")
    mu = mean(m)

    def coverage(x: float) -> float:
        return cdf(m, mu + x) - cdf(m, mu - x)

    hi = max(abs(c - mu) + 10 * s for _, c, s in m.components())
    while coverage(hi) < p_cl:
        hi *= 2.0
    return _bisect(coverage, p_cl, 0.0, hi)
