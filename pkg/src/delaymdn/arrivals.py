"""Arrival processes: homogeneous Poisson, sinusoidal NHPP and ON-OFF feeds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from .distributions import RandomStream

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HomogeneousPoisson:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def intensity(self, t: float) -> float:
        return self.rate


@dataclass(frozen=True)
class SinusoidalNHPP:
    """Poisson arrivals with rate ``lambda_bar * (1 + alpha * sin(2 pi t / period))``."""

    lambda_bar: float
    alpha: float
    period: float

    def __post_init__(self):
        if not self.lambda_bar > 0:
            raise ValueError(f"lambda_bar must be positive, got {self.lambda_bar}")
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    def intensity(self, t: float) -> float:
        return self.lambda_bar * (1.0 + self.alpha * math.sin(TWO_PI * t / self.period))

    @property
    def rate_max(self) -> float:
        return self.lambda_bar * (1.0 + self.alpha)


@dataclass(frozen=True)
class DeterministicOnOff:
    """Arrivals only during ``[k*cycle, k*cycle + duty*cycle)``.

    With ``on_pattern="deterministic"`` the ON window holds the grid
    ``k*cycle + j/on_rate``; with ``"poisson"`` arrivals are Poisson at
    ``on_rate`` while ON.
    """

    cycle: float
    duty: float
    on_rate: float
    on_pattern: str = "deterministic"

    def __post_init__(self):
        if not self.cycle > 0:
            raise ValueError(f"cycle must be positive, got {self.cycle}")
        if not 0 < self.duty <= 1:
            raise ValueError(f"duty must lie in (0, 1], got {self.duty}")
        if not self.on_rate > 0:
            raise ValueError(f"on_rate must be positive, got {self.on_rate}")
        if self.on_pattern not in ("deterministic", "poisson"):
            raise ValueError(f"on_pattern must be 'deterministic' or 'poisson', got {self.on_pattern!r}")

    @property
    def on_length(self) -> float:
        return self.duty * self.cycle

    @property
    def arrivals_per_cycle(self) -> int:
        # grid points j/on_rate < on_length, j = 0, 1, ...
        return math.ceil(self.on_length * self.on_rate - 1e-9)

    def intensity(self, t: float) -> float:
        return self.on_rate if (t % self.cycle) < self.on_length else 0.0

    def on_time(self, t: float) -> float:
        """Total ON time contained in ``[0, t]``."""
        k = math.floor(t / self.cycle)
        return k * self.on_length + min(t - k * self.cycle, self.on_length)

    def from_on_time(self, s: float) -> float:
        """Inverse of :meth:`on_time` (the earliest instant with that ON time)."""
        k = math.floor(s / self.on_length)
        return k * self.cycle + (s - k * self.on_length)


ArrivalProcess = Union[HomogeneousPoisson, SinusoidalNHPP, DeterministicOnOff]


def next_arrival(
    proc: ArrivalProcess,
    now: float,
    stream: RandomStream,
    thin_stream: Optional[RandomStream] = None,
) -> float:
    """First arrival epoch strictly after ``now``.

    Sinusoidal arrivals use Lewis-Shedler thinning under the constant envelope
    ``lambda_bar * (1 + alpha)``; candidate gaps come from ``stream`` and the
    acceptance uniforms from ``thin_stream`` (``stream`` when omitted).
    """
    if now < 0:
        raise ValueError(f"now must be non-negative, got {now}")
    if isinstance(proc, HomogeneousPoisson):
        return now + stream.exponential(proc.rate)
    if isinstance(proc, SinusoidalNHPP):
        thin = stream if thin_stream is None else thin_stream
        lam_max = proc.rate_max
        t = now
        while True:
            t += stream.exponential(lam_max)
            if thin.uniform() * lam_max < proc.intensity(t):
                return t
    if isinstance(proc, DeterministicOnOff):
        if proc.on_pattern == "poisson":
            s = proc.on_time(now) + stream.exponential(proc.on_rate)
            return proc.from_on_time(s)
        return _next_grid_point(proc, now)
    raise TypeError(f"unknown arrival process {proc!r}")


def _next_grid_point(proc: DeterministicOnOff, now: float) -> float:
    k = math.floor(now / proc.cycle)
    base = k * proc.cycle
    j = math.floor((now - base) * proc.on_rate) + 1
    t = base + j / proc.on_rate
    if t <= now:
        j += 1
        t = base + j / proc.on_rate
    if j >= proc.arrivals_per_cycle:
        return (k + 1) * proc.cycle
    return t


def cumulative_rate(proc: ArrivalProcess, t0: float, t1: float) -> float:
    """Expected number of arrivals in ``[t0, t1]``."""
    if t0 > t1:
        raise ValueError(f"interval is reversed: t0={t0} > t1={t1}")
    if isinstance(proc, HomogeneousPoisson):
        return proc.rate * (t1 - t0)
    if isinstance(proc, SinusoidalNHPP):
        w = TWO_PI / proc.period
        osc = proc.lambda_bar * proc.alpha / w * (math.cos(w * t0) - math.cos(w * t1))
        return proc.lambda_bar * (t1 - t0) + osc
    if isinstance(proc, DeterministicOnOff):
        return proc.on_rate * (proc.on_time(t1) - proc.on_time(t0))
    raise TypeError(f"unknown arrival process {proc!r}")


def is_poisson(proc: ArrivalProcess) -> bool:
    """True when arrival counts are Poisson (variance equals mean)."""
    return isinstance(proc, (HomogeneousPoisson, SinusoidalNHPP))


def to_dict(proc: ArrivalProcess) -> dict:
    if isinstance(proc, HomogeneousPoisson):
        return {"type": "poisson", "rate": proc.rate}
    if isinstance(proc, SinusoidalNHPP):
        return {"type": "nhpp", "lambda_bar": proc.lambda_bar, "alpha": proc.alpha, "period": proc.period}
    if isinstance(proc, DeterministicOnOff):
        return {
            "type": "onoff",
            "cycle": proc.cycle,
            "duty": proc.duty,
            "on_rate": proc.on_rate,
            "on_pattern": proc.on_pattern,
        }
    raise TypeError(f"unknown arrival process {proc!r}")
