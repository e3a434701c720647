"""Normal approximation of the delay given the head-of-line wait.

A customer arriving at ``t`` while the head of the line has waited ``w_hol``
needs ``A(t) - A(t - w_hol) + 2`` service completions before entering
service, each spaced by ``S/c``. With Poisson arrivals the count has mean and
variance equal to the integrated rate over the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .arrivals import ArrivalProcess, cumulative_rate, is_poisson
from .mixture import GaussianMixture


@dataclass(frozen=True)
class HolPredictor:
    arrival: ArrivalProcess
    mu: float
    c: int

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.c < 1:
            raise ValueError(f"c must be at least 1, got {self.c}")

    def _window(self, t: float, w_hol: float) -> float:
        if w_hol < 0:
            raise ValueError(f"w_hol must be non-negative, got {w_hol}")
        if t < w_hol:
            raise ValueError(f"window starts before time 0: t={t}, w_hol={w_hol}")
        return cumulative_rate(self.arrival, t - w_hol, t)


def conditional_mean(p: HolPredictor, t: float, w_hol: float) -> float:
    """Refined HOL estimate: expected delay of an arrival at ``t``."""
    return (p._window(t, w_hol) + 2.0) / (p.mu * p.c)


def conditional_variance(p: HolPredictor, t: float, w_hol: float) -> float:
    if not is_poisson(p.arrival):
        raise ValueError("conditional variance needs Poisson arrival counts; ON-OFF arrivals are not supported")
    return (2.0 * p._window(t, w_hol) + 2.0) / (p.mu * p.c) ** 2


def normal_approx(p: HolPredictor, t: float, w_hol: float) -> GaussianMixture:
    return GaussianMixture.normal(
        conditional_mean(p, t, w_hol), math.sqrt(conditional_variance(p, t, w_hol))
    )
