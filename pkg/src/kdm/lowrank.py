"""Pivoted incomplete Cholesky decomposition with a biorthogonal factor.

Given column access to a symmetric positive-semidefinite N x N matrix K, the
decomposition selects m pivot indices pi_1..pi_m and produces

* ``L``  (N x m): an incomplete Cholesky factor with trace(K - L L^T) <= eps,
* ``R``  (m x m): a biorthogonal factor satisfying K[:, piv] R = L and
  R^T L[piv, :] = I, hence R R^T = inv(K[piv, piv]).

Only the diagonal of K plus one full column per pivot are ever requested, so
the cost is O(m^2 N) time and O(m N) memory.  With ``epsilon=0`` the loop runs
until the residual diagonal is exhausted and L L^T reproduces K to the
numerical rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .kernels import Dataset, KernelSpec, cross_kernel_matrix, kernel_diagonal

# residual diagonal entries below DIAG_FLOOR_REL * max(diag K) are treated as
# exhausted; entries more negative than -PSD_TOL_REL * max(diag K) mean the
# oracle was not PSD
DIAG_FLOOR_REL = 1e-12
PSD_TOL_REL = 1e-8

DEFAULT_MAX_RANK = 2000


class NumericsError(RuntimeError):
    """Numerical failure: non-PSD input, singular system, or similar."""


class MatrixOracle:
    """Column access to a materialized symmetric PSD matrix."""

    def __init__(self, matrix: np.ndarray):
        k = np.asarray(matrix, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("matrix oracle needs a square matrix")
        self._k = k
        self.queries = 0

    @property
    def size(self) -> int:
        return self._k.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.diag(self._k).copy()

    def column(self, j: int) -> np.ndarray:
        self.queries += 1
        return self._k[:, j].copy()


class KernelOracle:
    """Lazy columns of the kernel matrix of one point set against itself."""

    def __init__(self, spec: KernelSpec, points: Union[Dataset, np.ndarray]):
        self._spec = spec
        self._pts = points.points if isinstance(points, Dataset) else np.asarray(points, dtype=np.float64)
        if self._pts.ndim == 1:
            self._pts = self._pts[:, None]
        self.queries = 0

    @property
    def size(self) -> int:
        return self._pts.shape[0]

    def diagonal(self) -> np.ndarray:
        return kernel_diagonal(self._spec, self._pts)

    def column(self, j: int) -> np.ndarray:
        self.queries += 1
        return cross_kernel_matrix(self._spec, self._pts, self._pts[j : j + 1])[:, 0]


@dataclass
class CholeskyFactors:
    """Output of :func:`pivoted_cholesky`.

    ``pivots`` lists the selected indices in selection order.  ``L`` has one
    column per pivot; ``R`` is upper triangular in the pivot ordering.
    ``residual_trace`` is trace(K - L L^T) = l1 norm of the final residual
    diagonal, and ``epsilon`` the absolute tolerance the loop was run with.
    """

    pivots: np.ndarray
    L: np.ndarray
    R: np.ndarray
    residual_trace: float
    epsilon: float
    hit_rank_cap: bool = False

    @property
    def rank(self) -> int:
        return len(self.pivots)


def greedy_pivot(d: np.ndarray, excluded: Optional[np.ndarray] = None) -> int:
    """Index of the largest residual diagonal entry.

    Ties resolve to the smallest index.  Raises when no strictly positive
    non-excluded entry remains.
    """
    scores = np.asarray(d, dtype=np.float64).copy()
    if excluded is not None:
        scores[excluded] = -np.inf
    scores[scores <= 0] = -np.inf
    j = int(np.argmax(scores))
    if not np.isfinite(scores[j]):
        raise ValueError("no strictly positive diagonal entry available for pivoting")
    return j


def omp_pivot(
    d: np.ndarray,
    target_values: np.ndarray,
    w_running: np.ndarray,
    quantile_threshold: float = 0.9,
) -> int:
    """Pivot maximizing the normalized unexplained target energy.

    Candidates are restricted to indices whose residual diagonal reaches the
    given quantile of the nonzero diagonal entries; among them the score
    (f(z_j) - w_j)^2 / d_j decides, ties to the smallest index.  When every
    score vanishes the choice falls back to :func:`greedy_pivot`.
    """
    d = np.asarray(d, dtype=np.float64)
    nz = d[d > 0]
    if nz.size == 0:
        raise ValueError("no strictly positive diagonal entry available for pivoting")
    if not 0.0 <= quantile_threshold <= 1.0:
        raise ValueError("quantile_threshold must lie in [0, 1]")
    eta = np.quantile(nz, quantile_threshold)
    cand = d >= eta
    scores = np.full(d.shape, -np.inf)
    resid = np.asarray(target_values, dtype=np.float64) - np.asarray(w_running, dtype=np.float64)
    scores[cand] = resid[cand] ** 2 / d[cand]
    j = int(np.argmax(scores))
    if scores[j] <= 0:
        return greedy_pivot(d)
    return j


def pivoted_cholesky(
    oracle,
    epsilon: float,
    strategy: str = "greedy",
    *,
    omp_target: Optional[np.ndarray] = None,
    omp_quantile: float = 0.9,
    max_rank: Optional[int] = None,
) -> CholeskyFactors:
    """Run the decomposition until trace(K - L L^T) <= epsilon.

    Parameters
    ----------
    oracle : object with ``size``, ``diagonal()``, ``column(j)``
        Column access to the PSD matrix.  Exactly ``rank`` columns are read.
    epsilon : float
        Absolute trace tolerance, >= 0.  Zero runs to numerical rank.
    strategy : {"greedy", "omp"}
        Pivot rule.  ``omp`` additionally needs ``omp_target``, the target
        function values at all N points.
    max_rank : int, optional
        Hard cap on the number of pivots; hitting it is reported through
        ``hit_rank_cap``, not raised.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if strategy not in ("greedy", "omp"):
        raise ValueError(f"unknown pivot strategy {strategy!r}")
    if strategy == "omp":
        if omp_target is None:
            raise ValueError("omp strategy requires omp_target values")
        target = np.asarray(omp_target, dtype=np.float64)
        if target.shape != (oracle.size,):
            raise ValueError("omp_target must have one value per point")

    n = oracle.size
    cap = min(n, DEFAULT_MAX_RANK if max_rank is None else max_rank)

    d = oracle.diagonal().astype(np.float64, copy=True)
    if not np.all(np.isfinite(d)):
        raise NumericsError("matrix diagonal contains non-finite entries")
    dmax = float(np.max(d, initial=0.0))
    if np.any(d < -PSD_TOL_REL * max(dmax, 1.0)):
        raise NumericsError("matrix diagonal has negative entries; oracle is not PSD")
    floor = DIAG_FLOOR_REL * dmax
    d[d <= floor] = 0.0

    lbuf = np.zeros((n, cap))
    rbuf = np.zeros((cap, cap))
    pivots: list[int] = []
    w = np.zeros(n) if strategy == "omp" else None

    i = 0
    while i < cap and float(d.sum()) > epsilon and np.any(d > 0):
        if strategy == "greedy":
            piv = greedy_pivot(d)
        else:
            piv = omp_pivot(d, target, w, omp_quantile)
        scale = 1.0 / np.sqrt(d[piv])

        lrow = lbuf[piv, :i].copy()
        ell = oracle.column(piv) - lbuf[:, :i] @ lrow
        ell *= scale
        if pivots:
            ell[pivots] = 0.0  # Schur complement vanishes at previous pivots
        ell[piv] = np.sqrt(d[piv])

        rbuf[:i, i] = -scale * (rbuf[:i, :i] @ lrow)
        rbuf[i, i] = scale

        if w is not None:
            w += ell * (scale * (target[piv] - w[piv]))

        d -= ell * ell
        d[piv] = 0.0
        if np.any(d < -PSD_TOL_REL * max(dmax, 1.0)):
            raise NumericsError("residual diagonal went negative; oracle is not PSD")
        d[d <= floor] = 0.0

        lbuf[:, i] = ell
        pivots.append(piv)
        i += 1

    residual = float(d.sum())
    return CholeskyFactors(
        pivots=np.asarray(pivots, dtype=np.intp),
        L=lbuf[:, :i].copy(),
        R=rbuf[:i, :i].copy(),
        residual_trace=residual,
        epsilon=float(epsilon),
        hit_rank_cap=bool(i == cap and residual > epsilon and np.any(d > 0)),
    )


@dataclass
class FactorCheck:
    """Frobenius residuals of the five structural identities plus PSD slack."""

    col_identity: float  # || K[:, piv] R - L ||_F
    biorthogonality: float  # || R^T L[piv, :] - I ||_F
    pivot_inverse: float  # || R R^T - inv(K[piv, piv]) ||_F
    nystrom: float  # || L L^T - K[:, piv] inv(K[piv, piv]) K[piv, :] ||_F
    residual_min_eig: float  # min eigenvalue of K - L L^T
    residual_trace: float  # trace of K - L L^T


def verify_factors(matrix: np.ndarray, factors: CholeskyFactors) -> FactorCheck:
    """Recompute the structural identities of a decomposition against K."""
    k = np.asarray(matrix, dtype=np.float64)
    piv = factors.pivots
    lmat, rmat = factors.L, factors.R
    cols = k[:, piv]
    kpp = k[np.ix_(piv, piv)]
    eye = np.eye(len(piv))
    kpp_inv = np.linalg.solve(kpp, eye)
    nystrom = cols @ np.linalg.solve(kpp, cols.T)
    resid = k - lmat @ lmat.T
    resid = 0.5 * (resid + resid.T)
    return FactorCheck(
        col_identity=float(np.linalg.norm(cols @ rmat - lmat)),
        biorthogonality=float(np.linalg.norm(rmat.T @ lmat[piv, :] - eye)),
        pivot_inverse=float(np.linalg.norm(rmat @ rmat.T - kpp_inv)),
        nystrom=float(np.linalg.norm(lmat @ lmat.T - nystrom)),
        residual_min_eig=float(np.linalg.eigvalsh(resid)[0]),
        residual_trace=float(np.trace(resid)),
    )
