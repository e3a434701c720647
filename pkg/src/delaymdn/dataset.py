"""Delay-history samples extracted from simulated customers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .simulator import SimOutput


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: float
    arrival_time: float
    hol: float = float("nan")


@dataclass
class Dataset:
    """Chronologically ordered samples.

    ``features[:, 0]`` is the LES delay, ``features[:, i]`` the wait of the
    (i+1)-th last customer to enter service before the arrival. ``hol`` is
    carried in memory for the HOL baselines and is not persisted to CSV.
    """

    h: int
    features: np.ndarray
    labels: np.ndarray
    arrival_time: np.ndarray
    hol: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, self.h)
        self.labels = np.asarray(self.labels, dtype=float)
        self.arrival_time = np.asarray(self.arrival_time, dtype=float)
        n = len(self.labels)
        if len(self.features) != n or len(self.arrival_time) != n:
            raise ValueError("features, labels and arrival_time must have equal length")
        if self.hol is not None:
            self.hol = np.asarray(self.hol, dtype=float)
            if len(self.hol) != n:
                raise ValueError("hol must have one entry per sample")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> Sample:
        return Sample(
            features=self.features[i],
            label=float(self.labels[i]),
            arrival_time=float(self.arrival_time[i]),
            hol=float("nan") if self.hol is None else float(self.hol[i]),
        )

    def subset(self, index) -> "Dataset":
        return Dataset(
            h=self.h,
            features=self.features[index],
            labels=self.labels[index],
            arrival_time=self.arrival_time[index],
            hol=None if self.hol is None else self.hol[index],
        )


def entered_service_order(sim: SimOutput) -> np.ndarray:
    """Customer ids sorted by entered-service rank."""
    order = np.empty(sim.n_arrivals, dtype=np.int64)
    order[sim.rank] = np.arange(sim.n_arrivals)
    return order


def extract(sim: SimOutput, h: int) -> Dataset:
    """One sample per delayed post-warmup customer with at least ``h`` predecessors in service."""
    if h < 1:
        raise ValueError(f"h must be at least 1, got {h}")
    order = entered_service_order(sim)
    starts = sim.service_start[order]
    waits = sim.wait[order]
    # number of customers that entered service strictly before each arrival
    n_before = np.searchsorted(starts, sim.arrival_time, side="left")
    wait = sim.wait
    keep = (~sim.is_warmup) & (wait > 0) & (n_before >= h)
    idx = np.flatnonzero(keep)
    lags = np.arange(h)
    features = waits[n_before[idx, None] - 1 - lags[None, :]]
    return Dataset(
        h=h,
        features=features,
        labels=wait[idx],
        arrival_time=sim.arrival_time[idx],
        hol=sim.hol[idx],
    )


def split_chronological(d: Dataset, n_train: int, n_test: int) -> tuple[Dataset, Dataset]:
    if n_train < 0 or n_test < 0:
        raise ValueError("split sizes must be non-negative")
    if n_train + n_test > len(d):
        raise ValueError(f"need {n_train + n_test} samples for the split, dataset has {len(d)}")
    return d.subset(slice(0, n_train)), d.subset(slice(n_train, n_train + n_test))


def concat(a: Dataset, b: Dataset) -> Dataset:
    if a.h != b.h:
        raise ValueError(f"history lengths differ: {a.h} vs {b.h}")
    hol = None
    if a.hol is not None and b.hol is not None:
        hol = np.concatenate([a.hol, b.hol])
    return Dataset(
        h=a.h,
        features=np.vstack([a.features, b.features]),
        labels=np.concatenate([a.labels, b.labels]),
        arrival_time=np.concatenate([a.arrival_time, b.arrival_time]),
        hol=hol,
    )


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.flagged is None:
            self.flagged = np.zeros(len(self.mean), dtype=bool)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def apply(self, d: Dataset) -> Dataset:
        return Dataset(d.h, self.transform(d.features), d.labels, d.arrival_time, d.hol)

    def invert(self, d: Dataset) -> Dataset:
        return Dataset(d.h, self.inverse_transform(d.features), d.labels, d.arrival_time, d.hol)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(mean=data["mean"], std=data["std"])

    @classmethod
    def identity(cls, h: int) -> "Standardizer":
        return cls(mean=np.zeros(h), std=np.ones(h))


def fit_standardizer(train: Dataset) -> Standardizer:
    """Per-feature z-scoring fitted on ``train``; zero-variance columns keep std 1 and are flagged."""
    if len(train) == 0:
        raise ValueError("cannot fit a standardizer on an empty dataset")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    # rounding leaves a tiny spread on constant columns
    flagged = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    std = np.where(flagged, 1.0, std)
    mean = np.where(flagged, train.features[0], mean)
    return Standardizer(mean=mean, std=std, flagged=flagged)


def write_csv(d: Dataset, path) -> None:
    path = Path(path)
    header = ["arrival_time"] + [f"w{i + 1}" for i in range(d.h)] + ["label"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for t, x, y in zip(d.arrival_time, d.features, d.labels):
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in x) + f",{y:.17g}\n")


def read_csv(path, h: Optional[int] = None) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty file")
        found_h = len(header) - 2
        if h is not None and found_h != h:
            raise ValueError(
                f"{path}: expected {h + 2} columns for h={h}, found {len(header)}"
            )
        expected = ["arrival_time"] + [f"w{i + 1}" for i in range(found_h)] + ["label"]
        if found_h < 1 or header != expected:
            raise ValueError(f"{path}: malformed header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, found {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, found_h + 2)
    return Dataset(h=found_h, features=data[:, 1:-1], labels=data[:, -1], arrival_time=data[:, 0])
