"""Baseline predictors, accuracy metrics, calibration and figure-data export."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import mixture as mx
from .dataset import Dataset, Sample

SCATTER_HEADER = ["label", "prediction"]
PATH_HEADER = ["arrival_time", "label", "mmse", "lb", "ub", "ci_lo", "ci_hi", "lb_raw"]
SCATTER_CAP = 5000


@dataclass
class EvalReport:
    predictor: str
    n_sample: int
    bias: float
    ase: float
    mse_reduction_vs_baseline: Optional[float] = None
    bound_violation_ub: Optional[float] = None
    bound_violation_lb: Optional[float] = None
    ci_coverage: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def les_predict(sample: Sample) -> float:
    return float(sample.features[0])


def hol_predict(sample: Sample, hol: Optional[float] = None) -> float:
    return float(sample.hol if hol is None else hol)


def les_predictions(d: Dataset) -> np.ndarray:
    return d.features[:, 0].copy()


def hol_predictions(d: Dataset) -> np.ndarray:
    if d.hol is None:
        raise ValueError("dataset carries no HOL values")
    return d.hol.copy()


def _paired(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=float)
    d = np.asarray(labels, dtype=float)
    if p.shape != d.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {d.shape} labels")
    if p.size == 0:
        raise ValueError("no predictions to score")
    return p, d


def bias(preds, labels) -> float:
    """Absolute mean error ``|mean(label - pred)|``."""
    p, d = _paired(preds, labels)
    return abs(float(np.mean(d - p)))


def ase(preds, labels) -> float:
    """Average squared error."""
    p, d = _paired(preds, labels)
    return float(np.mean((d - p) ** 2))


def mse_reduction(candidate_ase: float, baseline_ase: float) -> float:
    if not baseline_ase > 0:
        raise ValueError(f"baseline ASE must be positive, got {baseline_ase}")
    return 1.0 - candidate_ase / baseline_ase


def calibration(
    mixtures: Sequence[mx.GaussianMixture],
    labels,
    eps_ub: float,
    eps_lb: float,
    p_cl: float,
) -> tuple[float, float, float]:
    """Empirical (upper-bound violation, lower-bound violation, interval coverage)."""
    labels = np.asarray(labels, dtype=float)
    if len(mixtures) != len(labels):
        raise ValueError(f"length mismatch: {len(mixtures)} mixtures vs {len(labels)} labels")
    if len(labels) == 0:
        raise ValueError("no labels to score")
    lb, ub, lo, hi = bands(mixtures, eps_ub, eps_lb, p_cl)[1:]
    return (
        float(np.mean(labels > ub)),
        float(np.mean(labels < lb)),
        float(np.mean((labels > lo) & (labels < hi))),
    )


def bands(mixtures: Sequence[mx.GaussianMixture], eps_ub: float, eps_lb: float, p_cl: float):
    """Per-mixture arrays ``(mmse, lb, ub, ci_lo, ci_hi)``."""
    n = len(mixtures)
    out = np.empty((5, n))
    for i, m in enumerate(mixtures):
        mean = mx.mean(m)
        lb, ub = mx.bounds(m, eps_ub, eps_lb)
        x = mx.confidence_interval(m, p_cl)
        out[:, i] = (mean, lb, ub, mean - x, mean + x)
    return tuple(out)


def report(
    name: str,
    preds,
    labels,
    baseline_preds=None,
    mixtures: Optional[Sequence[mx.GaussianMixture]] = None,
    eps_ub: float = 0.05,
    eps_lb: float = 0.05,
    p_cl: float = 0.95,
) -> EvalReport:
    r = EvalReport(name, len(labels), bias(preds, labels), ase(preds, labels))
    if baseline_preds is not None:
        r.mse_reduction_vs_baseline = mse_reduction(r.ase, ase(baseline_preds, labels))
    if mixtures is not None:
        r.bound_violation_ub, r.bound_violation_lb, r.ci_coverage = calibration(
            mixtures, labels, eps_ub, eps_lb, p_cl
        )
    return r


def _write_rows(path, header, columns) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*columns):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_rows(path, header) -> np.ndarray:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            found = next(reader, None)
            if found != header:
                raise ValueError(f"{path}: expected header {header}, found {found}")
            rows = [[float(v) for v in row] for row in reader]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, len(header))


def export_scatter(preds, labels, path, cap: int = SCATTER_CAP) -> None:
    """``label,prediction`` rows; larger inputs are thinned to ``cap`` evenly spaced rows."""
    p, d = _paired(preds, labels)
    if len(p) > cap:
        idx = np.linspace(0, len(p) - 1, cap).round().astype(int)
        p, d = p[idx], d[idx]
    _write_rows(path, SCATTER_HEADER, [d, p])


def read_scatter(path) -> tuple[np.ndarray, np.ndarray]:
    data = _read_rows(path, SCATTER_HEADER)
    return data[:, 0], data[:, 1]


def export_sample_path(arrival_time, labels, mmse, lb, ub, ci_lo, ci_hi, path) -> None:
    """Sample-path band file; ``lb`` is clamped at zero and the raw bound kept in ``lb_raw``."""
    t = np.asarray(arrival_time, dtype=float)
    order = np.argsort(t, kind="stable")
    cols = [np.asarray(c, dtype=float)[order] for c in (t, labels, mmse, lb, ub, ci_lo, ci_hi)]
    raw_lb = cols[3]
    cols[3] = np.maximum(raw_lb, 0.0)
    _write_rows(path, PATH_HEADER, cols + [raw_lb])


def read_sample_path(path) -> dict[str, np.ndarray]:
    data = _read_rows(path, PATH_HEADER)
    return {name: data[:, i] for i, name in enumerate(PATH_HEADER)}
