"""Event-driven simulation of the c-server FCFS queue with an infinite buffer."""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import distributions as dist
from .arrivals import ArrivalProcess, next_arrival

DEPARTURE = 0
ARRIVAL = 1

CSV_HEADER = ["id", "arrival_time", "service_start", "service_duration", "wait", "les", "hol"]


@dataclass(frozen=True)
class SimConfig:
    """Simulation setup.

    Exactly one of ``n_customers`` (post-warmup arrivals) and ``horizon_time``
    bounds the run. Arrivals stop at the bound; customers already present are
    served to completion.
    """

    c: int
    arrival: ArrivalProcess
    service: dist.ServiceDistribution
    n_customers: Optional[int] = None
    horizon_time: Optional[float] = None
    warmup: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"c must be at least 1, got {self.c}")
        if self.warmup < 0:
            raise ValueError(f"warmup must be non-negative, got {self.warmup}")
        if (self.n_customers is None) == (self.horizon_time is None):
            raise ValueError("give exactly one of n_customers and horizon_time")
        if self.n_customers is not None and self.n_customers <= 0:
            raise ValueError(f"n_customers must be positive, got {self.n_customers}")
        if self.horizon_time is not None and not self.horizon_time > 0:
            raise ValueError(f"horizon_time must be positive, got {self.horizon_time}")


@dataclass(frozen=True)
class CustomerRecord:
    id: int
    arrival_time: float
    service_start: float
    service_duration: float
    wait: float
    les_at_arrival: float
    hol_at_arrival: float
    entered_service_rank: int
    warmup: bool


@dataclass
class SimOutput:
    """Per-customer columns in arrival order.

    ``les`` is -1 where no customer had entered service before the arrival;
    ``rank`` is the position in the entered-service order. ``wait`` defaults to
    ``service_start - arrival_time``; the engine stores a compensated value that
    does not carry the rounding of the absolute clock.
    """

    arrival_time: np.ndarray
    service_start: np.ndarray
    service_duration: np.ndarray
    les: np.ndarray
    hol: np.ndarray
    rank: np.ndarray
    warmup: int = 0
    wait: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.wait is None:
            self.wait = self.service_start - self.arrival_time

    @property
    def n_arrivals(self) -> int:
        return len(self.arrival_time)

    @property
    def n_completions(self) -> int:
        return len(self.arrival_time)

    @property
    def is_warmup(self) -> np.ndarray:
        return np.arange(self.n_arrivals) < self.warmup

    def __len__(self) -> int:
        return self.n_arrivals

    def record(self, i: int) -> CustomerRecord:
        return CustomerRecord(
            id=i,
            arrival_time=float(self.arrival_time[i]),
            service_start=float(self.service_start[i]),
            service_duration=float(self.service_duration[i]),
            wait=float(self.wait[i]),
            les_at_arrival=float(self.les[i]),
            hol_at_arrival=float(self.hol[i]),
            entered_service_rank=int(self.rank[i]),
            warmup=i < self.warmup,
        )

    @property
    def records(self) -> list[CustomerRecord]:
        return [self.record(i) for i in range(self.n_arrivals)]


def _two_sum(a: float, b: float) -> tuple[float, float]:
    """``a + b`` as a rounded sum plus its exact rounding error."""
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _fast_two_sum(a: float, b: float) -> tuple[float, float]:
    # requires |a| >= |b|
    s = a + b
    return s, b - (s - a)


def run(config: SimConfig) -> SimOutput:
    arrival_stream = dist.RandomStream(config.seed, dist.ARRIVALS)
    service_stream = dist.RandomStream(config.seed, dist.SERVICES)
    thin_stream = dist.RandomStream(config.seed, dist.THINNING)

    max_arrivals = None if config.n_customers is None else config.warmup + config.n_customers
    horizon = math.inf if config.horizon_time is None else config.horizon_time

    arrival_time: list[float] = []
    service_start: list[float] = []
    service_duration: list[float] = []
    les: list[float] = []
    hol: list[float] = []
    rank: list[int] = []
    wait: list[float] = []

    idle = list(range(config.c))  # min-heap of idle server indices
    queue: deque[int] = deque()
    events: list[tuple[float, int, int]] = []
    server_of: dict[int, int] = {}
    # low-order parts of departure times; see _two_sum
    departure_lo: dict[int, float] = {}
    n_entered = 0

    # LES bookkeeping: latest entry instant, its wait, and the last wait
    # recorded strictly before that instant.
    les_time = -math.inf
    les_wait = -1.0
    les_prev = -1.0

    def enter_service(cid: int, now: float, now_lo: float = 0.0) -> None:
        nonlocal n_entered, les_time, les_wait, les_prev
        server = heapq.heappop(idle)
        server_of[cid] = server
        service_start[cid] = now
        rank[cid] = n_entered
        n_entered += 1
        # now and the arrival are close, so the difference is exact
        w = (now - arrival_time[cid]) + now_lo
        wait[cid] = w
        if now > les_time:
            les_prev = les_wait
            les_time = now
        les_wait = w
        hi, lo = _two_sum(now, service_duration[cid])
        hi, lo = _fast_two_sum(hi, lo + now_lo)
        departure_lo[cid] = lo
        heapq.heappush(events, (hi, DEPARTURE, cid))

    t_first = next_arrival(config.arrival, 0.0, arrival_stream, thin_stream)
    if t_first <= horizon:
        heapq.heappush(events, (t_first, ARRIVAL, 0))

    while events:
        now, kind, cid = heapq.heappop(events)
        if kind == DEPARTURE:
            heapq.heappush(idle, server_of.pop(cid))
            lo = departure_lo.pop(cid)
            if queue:
                enter_service(queue.popleft(), now, lo)
        else:
            arrival_time.append(now)
            service_start.append(math.nan)
            service_duration.append(dist.sample_service(config.service, service_stream))
            rank.append(-1)
            wait.append(math.nan)
            les.append(les_wait if les_time < now else les_prev)
            hol.append(now - arrival_time[queue[0]] if queue else 0.0)
            if idle:
                enter_service(cid, now)
            else:
                queue.append(cid)
            n_next = cid + 1
            if max_arrivals is None or n_next < max_arrivals:
                t_next = next_arrival(config.arrival, now, arrival_stream, thin_stream)
                if t_next <= horizon:
                    heapq.heappush(events, (t_next, ARRIVAL, n_next))
        assert not (idle and queue), "work conservation violated"

    n = len(arrival_time)
    return SimOutput(
        arrival_time=np.array(arrival_time),
        service_start=np.array(service_start),
        service_duration=np.array(service_duration),
        les=np.array(les),
        hol=np.array(hol),
        rank=np.array(rank, dtype=np.int64),
        warmup=min(config.warmup, n),
        wait=np.array(wait),
    )


def erlang_c_oracle(c: int, lam: float, mu: float) -> tuple[float, float, float]:
    """M/M/c delay probability, mean wait and mean wait of delayed customers.

    Erlang-B is built up with the recurrence ``B_k = a B_{k-1} / (k + a B_{k-1})``
    and converted to Erlang-C, which avoids factorials.
    """
    if c < 1:
        raise ValueError(f"c must be at least 1, got {c}")
    if lam < 0 or not mu > 0:
        raise ValueError("need lam >= 0 and mu > 0")
    if lam >= c * mu:
        raise ValueError(f"unstable system: lam={lam} >= c*mu={c * mu}")
    a = lam / mu
    b = 1.0
    for k in range(1, c + 1):
        b = a * b / (k + a * b)
    p_wait = c * b / (c - a * (1.0 - b))
    given_delayed = 1.0 / (c * mu - lam)
    return p_wait, p_wait * given_delayed, given_delayed


def write_csv(sim: SimOutput, path) -> None:
    path = Path(path)
    wait = sim.wait
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for i in range(sim.n_arrivals):
            fh.write(
                f"{i},{sim.arrival_time[i]:.17g},{sim.service_start[i]:.17g},"
                f"{sim.service_duration[i]:.17g},{wait[i]:.17g},{sim.les[i]:.17g},{sim.hol[i]:.17g}\n"
            )


def read_csv(path, warmup: int = 0) -> SimOutput:
    """Load a customer CSV; entered-service order is recovered from service starts."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}, expected {CSV_HEADER}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} columns, found {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no customer rows")
    data = np.array(rows)
    start = data[:, 2]
    rank = np.empty(len(data), dtype=np.int64)
    rank[np.lexsort((np.arange(len(data)), start))] = np.arange(len(data))
    return SimOutput(
        arrival_time=data[:, 1],
        service_start=start,
        service_duration=data[:, 3],
        les=data[:, 5],
        hol=data[:, 6],
        rank=rank,
        warmup=min(warmup, len(data)),
        wait=data[:, 4],
    )
