"""Kernel families and data containers shared by the estimators.

Three positive-definite families on R^d are supported.  ``gaussian`` and
``laplace`` are bounded with sup-norm exactly 1; the ``polynomial`` family is
unbounded, so its sup can only be reported empirically over a data set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

FAMILIES = ("gaussian", "laplace", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of one kernel family.

    Parameters
    ----------
    family : str
        One of ``"gaussian"``, ``"laplace"``, ``"polynomial"``.
    rho : float
        Squared length scale for ``gaussian`` (k = exp(-|z-z'|^2 / (2 rho))),
        decay rate for ``laplace`` (k = exp(-rho |z-z'|)).  Ignored by the
        polynomial family.
    c : float
        Offset of the polynomial kernel k = (<z, z'> + c)^q.  Must be >= 0
        so the kernel stays positive semidefinite.
    q : int
        Degree of the polynomial kernel, >= 1.
    """

    family: str
    rho: float = 1.0
    c: float = 0.0
    q: int = 2

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "gaussian" and not self.rho > 0:
            raise ValueError("gaussian kernel needs rho > 0")
        if self.family == "laplace" and not self.rho > 0:
            raise ValueError("laplace kernel needs rho > 0")
        if self.family == "polynomial":
            if self.c < 0:
                raise ValueError("polynomial kernel needs c >= 0")
            if int(self.q) != self.q or self.q < 1:
                raise ValueError("polynomial kernel needs integer q >= 1")

    def to_dict(self) -> dict:
        return {"family": self.family, "rho": self.rho, "c": self.c, "q": self.q}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            family=d["family"],
            rho=float(d.get("rho", 1.0)),
            c=float(d.get("c", 0.0)),
            q=int(d.get("q", 2)),
        )


@dataclass
class Dataset:
    """An n x d sample matrix with optional seed provenance."""

    points: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must be a nonempty 2-d array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or infinite entries")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine transform z -> (z - mean) / scale."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.mean) / self.scale

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Standardizer":
        pts = np.asarray(points, dtype=np.float64)
        mean = pts.mean(axis=0)
        scale = pts.std(axis=0)
        # constant columns pass through unscaled rather than dividing by zero
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)


def _as_points(data: Union[Dataset, np.ndarray]) -> np.ndarray:
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # expanded form with a clamp at zero so duplicate points never go negative
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def cross_kernel_matrix(
    spec: KernelSpec,
    rows: Union[Dataset, np.ndarray],
    cols: Union[Dataset, np.ndarray],
) -> np.ndarray:
    """Evaluate k(z_i, z'_j) for every row point against every column point."""
    a = _as_points(rows)
    b = _as_points(cols)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if spec.family == "gaussian":
        return np.exp(_sq_dists(a, b) / (-2.0 * spec.rho))
    if spec.family == "laplace":
        return np.exp(-spec.rho * np.sqrt(_sq_dists(a, b)))
    return (a @ b.T + spec.c) ** spec.q


def eval_kernel(spec: KernelSpec, z1: np.ndarray, z2: np.ndarray) -> float:
    """Single kernel evaluation k(z1, z2)."""
    a = np.atleast_1d(np.asarray(z1, dtype=np.float64))
    b = np.atleast_1d(np.asarray(z2, dtype=np.float64))
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("z1 and z2 must be vectors of equal dimension")
    return float(cross_kernel_matrix(spec, a[None, :], b[None, :])[0, 0])


def kernel_diagonal(spec: KernelSpec, data: Union[Dataset, np.ndarray]) -> np.ndarray:
    """k(z_i, z_i) for each point, without forming the full matrix."""
    pts = _as_points(data)
    if spec.family in ("gaussian", "laplace"):
        return np.ones(pts.shape[0])
    return (np.sum(pts * pts, axis=1) + spec.c) ** spec.q


def kernel_sup(spec: KernelSpec, data: Union[Dataset, np.ndarray, None] = None) -> float:
    """Upper bound kappa on sup_z k(z, z).

    Exact (= 1) for the bounded families.  The polynomial family is unbounded,
    so the value returned is the empirical max of k(z, z) over ``data`` and is
    only a surrogate; see :func:`kernel_sup_is_empirical`.
    """
    if spec.family in ("gaussian", "laplace"):
        return 1.0
    if data is None:
        raise ValueError("polynomial kernel sup requires data points")
    return float(np.max(kernel_diagonal(spec, data)))


def kernel_sup_is_empirical(spec: KernelSpec) -> bool:
    """True when kernel_sup is a data-dependent surrogate, not a true bound."""
    return spec.family == "polynomial"
