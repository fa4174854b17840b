"""Conditional distribution estimates from a joint sample.

A density-ratio model fitted between a decoupled sample (x and y taken from
different rows, approximating the product of marginals) and the paired sample
turns into conditional weights over a grid of candidate y values, from which
conditional expectations and moments follow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .estimator import KdmModel, PriorSpec, eval_density_ratio, fit
from .kernels import Dataset, KernelSpec

SCHEMES = ("shifted", "three_split")
DEFAULT_GRID_CAP = 2000


@dataclass
class JointDataset:
    """Paired sample of predictors x and outcomes y, one row per observation."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError("x and y must be 2-d with the same number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("joint sample contains NaN or infinite entries")
        self.x, self.y = x, y

    @property
    def rows(self) -> int:
        return self.x.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def d_y(self) -> int:
        return self.y.shape[1]


def split_joint_sample(joint: JointDataset, scheme: str = "shifted") -> tuple[Dataset, Dataset]:
    """Build the decoupled sample (P) and the paired sample (Q).

    "three_split" uses disjoint row blocks: x from odd rows and y from even
    rows of the first two thirds for P, the last third intact for Q; the row
    count must be divisible by 3 and both outputs have rows/3 points.
    "shifted" pairs each x with the next row's y (cyclically) for P and with
    its own y for Q, keeping all n rows; it needs n >= 2.
    """
    if scheme == "three_split":
        if joint.rows % 3 != 0:
            raise ValueError("three_split needs a row count divisible by 3")
        n = joint.rows // 3
        xp = joint.x[0 : 2 * n : 2]
        yp = joint.y[1 : 2 * n : 2]
        xq = joint.x[2 * n :]
        yq = joint.y[2 * n :]
    elif scheme == "shifted":
        if joint.rows < 2:
            raise ValueError("shifted scheme needs at least 2 rows")
        xp, yp = joint.x, np.roll(joint.y, -1, axis=0)
        xq, yq = joint.x, joint.y
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")
    return Dataset(np.hstack([xp, yp])), Dataset(np.hstack([xq, yq]))


@dataclass
class ConditionalModel:
    """Density-ratio model on (x, y) pairs plus a candidate grid for y."""

    base: KdmModel
    y_grid: np.ndarray
    scheme: str

    @property
    def d_x(self) -> int:
        return self.base.d - self.y_grid.shape[1]

    @property
    def d_y(self) -> int:
        return self.y_grid.shape[1]


def _reservoir_indices(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    # Algorithm R; deterministic for a given generator state
    if n <= k:
        return np.arange(n)
    reservoir = np.arange(k)
    for t in range(k, n):
        j = int(rng.integers(0, t + 1))
        if j < k:
            reservoir[j] = t
    return np.sort(reservoir)


def fit_conditional(
    joint: JointDataset,
    kernel: KernelSpec,
    lam: float,
    *,
    scheme: str = "shifted",
    prior: Optional[PriorSpec] = None,
    epsilon: Optional[float] = None,
    epsilon_rel: float = 1e-6,
    strategy: str = "greedy",
    max_rank: Optional[int] = None,
    standardize: bool = False,
    y_grid: Optional[np.ndarray] = None,
    grid_cap: int = DEFAULT_GRID_CAP,
    seed: int = 0,
) -> ConditionalModel:
    """Split the joint sample, fit the ratio model, and attach a y grid.

    The default grid holds the sample's own y rows, subsampled down to
    min(n, grid_cap) entries with the given seed when there are more.
    """
    sample_p, sample_q = split_joint_sample(joint, scheme)
    n = sample_p.n
    model = fit(
        sample_p,
        sample_q,
        kernel,
        lam,
        epsilon=epsilon,
        epsilon_rel=epsilon_rel,
        prior=prior,
        strategy=strategy,
        max_rank=max_rank,
        standardize=standardize,
        seed=seed,
    )
    if y_grid is None:
        cap = min(n, grid_cap)
        idx = _reservoir_indices(joint.rows, cap, np.random.default_rng(seed))
        y_grid = joint.y[idx].copy()
    else:
        y_grid = np.asarray(y_grid, dtype=np.float64)
        if y_grid.ndim == 1:
            y_grid = y_grid[:, None]
        if y_grid.shape[1] != joint.d_y:
            raise ValueError("y_grid dimension differs from the sample's y")
    return ConditionalModel(base=model, y_grid=y_grid, scheme=scheme)


def conditional_weights(
    cmodel: ConditionalModel,
    x: np.ndarray,
    return_degenerate: bool = False,
) -> Union[np.ndarray, tuple[np.ndarray, bool]]:
    """Normalized nonnegative weights over the y grid at predictor value x.

    Estimated ratio values at (x, y_i) are clipped at zero and normalized to
    sum to one.  If everything clips away the weights fall back to uniform
    and the optional degenerate flag is set.
    """
    xv = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if xv.ndim != 1 or xv.shape[0] != cmodel.d_x:
        raise ValueError(f"x must be a vector of dimension {cmodel.d_x}")
    grid = cmodel.y_grid
    pairs = np.hstack([np.tile(xv, (grid.shape[0], 1)), grid])
    vals = np.maximum(eval_density_ratio(cmodel.base, pairs), 0.0)
    total = float(vals.sum())
    degenerate = not total > 0
    if degenerate:
        warnings.warn("all ratio values clipped to zero; using uniform weights", RuntimeWarning)
        weights = np.full(grid.shape[0], 1.0 / grid.shape[0])
    else:
        weights = vals / total
    return (weights, degenerate) if return_degenerate else weights


def conditional_expectation(cmodel: ConditionalModel, x: np.ndarray, f_values: np.ndarray) -> Union[float, np.ndarray]:
    """Weighted average of f over the y grid: estimates E[f(Y) | X = x]."""
    fv = np.asarray(f_values, dtype=np.float64)
    if fv.shape[0] != cmodel.y_grid.shape[0]:
        raise ValueError("f_values must have one entry per grid point")
    w = conditional_weights(cmodel, x)
    out = w @ fv
    return float(out) if out.ndim == 0 else out


def conditional_moments(cmodel: ConditionalModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean vector and covariance matrix of Y given X = x."""
    w = conditional_weights(cmodel, x)
    mean = w @ cmodel.y_grid
    centered = cmodel.y_grid - mean
    cov = (centered * w[:, None]).T @ centered
    return mean, cov
