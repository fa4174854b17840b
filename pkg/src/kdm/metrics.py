"""Forecast evaluation: proper scoring rules and out-of-sample R-squared."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .lowrank import NumericsError

DS_JITTER_REL = 1e-8


@dataclass
class ForecastRecord:
    """One forecast: predicted mean and covariance plus the realized outcome."""

    mean: np.ndarray
    cov: np.ndarray
    realized: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.realized = np.atleast_1d(np.asarray(self.realized, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = self.mean.shape[0]
        if self.realized.shape != (d,) or self.cov.shape != (d, d):
            raise ValueError("mean, cov, realized have inconsistent dimensions")


def energy_score(y: np.ndarray, xs: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """Weighted-ensemble energy score of outcome y against candidates xs.

    (1/m) sum_i w_i ||y - x_i||  -  1/(2 m^2) sum_ij w_i w_j ||x_i - x_j||.
    Unit weights recover the plain Monte Carlo energy score; importance
    weights must be scaled so their mean is one to stay comparable.
    """
    yv = np.atleast_1d(np.asarray(y, dtype=np.float64))
    pts = np.asarray(xs, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    m = pts.shape[0]
    if pts.shape[1] != yv.shape[0]:
        raise ValueError("candidate dimension differs from outcome")
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise ValueError("weights must have one entry per candidate")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    misfit = float(w @ np.linalg.norm(pts - yv, axis=1)) / m
    diff = pts[:, None, :] - pts[None, :, :]
    spread = float(w @ np.sqrt(np.sum(diff**2, axis=2)) @ w) / (2.0 * m**2)
    return misfit - spread


def energy_score_differential(baseline_scores: Sequence[float], method_scores: Sequence[float]) -> float:
    """Mean of (baseline - method) per-point scores; positive favors the method."""
    a = np.asarray(baseline_scores, dtype=np.float64)
    b = np.asarray(method_scores, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("score arrays must be nonempty and aligned")
    return float(np.mean(a - b))


def r2_oos(records: Sequence[ForecastRecord], baseline_means: Sequence[np.ndarray]) -> float:
    """One minus the squared-error ratio of the forecasts to a baseline mean."""
    if len(records) == 0 or len(records) != len(baseline_means):
        raise ValueError("records and baseline_means must be nonempty and aligned")
    num = sum(float(np.sum((r.realized - r.mean) ** 2)) for r in records)
    den = sum(
        float(np.sum((r.realized - np.atleast_1d(np.asarray(b, dtype=np.float64))) ** 2))
        for r, b in zip(records, baseline_means)
    )
    if den == 0:
        raise ValueError("baseline residuals are identically zero")
    return 1.0 - num / den


def _second_moment_residual(record: ForecastRecord) -> float:
    realized = np.outer(record.realized, record.realized)
    predicted = record.cov + np.outer(record.mean, record.mean)
    return float(np.sum((realized - predicted) ** 2))


def r2_second_moment(records: Sequence[ForecastRecord], baseline: Sequence[ForecastRecord]) -> float:
    """Same ratio comparison on the predicted second moment cov + mean mean^T."""
    if len(records) == 0 or len(records) != len(baseline):
        raise ValueError("records and baseline must be nonempty and aligned")
    num = sum(_second_moment_residual(r) for r in records)
    den = sum(_second_moment_residual(r) for r in baseline)
    if den == 0:
        raise ValueError("baseline residuals are identically zero")
    return 1.0 - num / den


def dawid_sebastiani(realized: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """log det(cov) + squared Mahalanobis distance of the realized outcome.

    Solved through a Cholesky factorization, never an explicit inverse.  A
    covariance that fails to factor gets one diagonal boost of relative size
    DS_JITTER_REL before the attempt is abandoned.
    """
    mu = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    yv = np.atleast_1d(np.asarray(realized, dtype=np.float64))
    sig = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    d = mu.shape[0]
    if yv.shape != (d,) or sig.shape != (d, d):
        raise ValueError("inconsistent dimensions")
    sig = 0.5 * (sig + sig.T)
    boost = DS_JITTER_REL * float(np.trace(sig)) / d
    for attempt in range(2):
        try:
            chol = np.linalg.cholesky(sig if attempt == 0 else sig + boost * np.eye(d))
            break
        except np.linalg.LinAlgError:
            if attempt == 1 or not boost > 0:
                raise NumericsError("covariance is not positive definite")
    resid = scipy.linalg.solve_triangular(chol, yv - mu, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return logdet + float(resid @ resid)


def excess_scoring_loss(records: Sequence[ForecastRecord], baseline: Sequence[ForecastRecord]) -> float:
    """Mean Dawid-Sebastiani score gap, baseline minus method; positive favors the method."""
    if len(records) == 0 or len(records) != len(baseline):
        raise ValueError("records and baseline must be nonempty and aligned")
    gaps = [
        dawid_sebastiani(b.realized, b.mean, b.cov) - dawid_sebastiani(r.realized, r.mean, r.cov)
        for r, b in zip(records, baseline)
    ]
    return float(np.mean(gaps))
