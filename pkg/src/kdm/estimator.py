"""Regularized density-ratio estimation between two samples.

The ratio dQ/dP is modeled as a fixed prior guess plus an RKHS correction h.
Fitting solves a ridge system in the span of the pivot columns selected by the
incomplete Cholesky decomposition, so the linear algebra stays m x m even when
the stacked sample holds thousands of points.  ``fit_full`` solves the exact
representer system over all 2n points for cross-checking at small scale.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .kernels import (
    Dataset,
    KernelSpec,
    Standardizer,
    cross_kernel_matrix,
    kernel_sup,
    kernel_sup_is_empirical,
)
from .lowrank import CholeskyFactors, KernelOracle, NumericsError, pivoted_cholesky

DEFAULT_EPSILON_REL = 1e-6


@dataclass(frozen=True)
class PriorSpec:
    """Prior guess for the density ratio with a declared sup bound.

    ``pi_inf`` bounds sup |p(z)|; for a custom evaluator it is taken on trust
    and only checked lazily against the values actually requested.
    """

    kind: str
    pi_inf: float
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    @classmethod
    def zero(cls) -> "PriorSpec":
        return cls(kind="zero", pi_inf=0.0)

    @classmethod
    def one(cls) -> "PriorSpec":
        return cls(kind="one", pi_inf=1.0)

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], np.ndarray], pi_inf: float) -> "PriorSpec":
        if pi_inf < 0:
            raise ValueError("pi_inf must be >= 0")
        return cls(kind="custom", pi_inf=float(pi_inf), func=func)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if self.kind == "zero":
            return np.zeros(pts.shape[0])
        if self.kind == "one":
            return np.ones(pts.shape[0])
        if self.kind != "custom" or self.func is None:
            raise ValueError(f"malformed prior {self.kind!r}")
        vals = np.asarray(self.func(pts), dtype=np.float64).reshape(-1)
        if vals.shape[0] != pts.shape[0]:
            raise ValueError("prior evaluator returned wrong number of values")
        if not np.all(np.isfinite(vals)):
            raise ValueError("prior evaluator returned non-finite values")
        if np.max(np.abs(vals), initial=0.0) > self.pi_inf * (1 + 1e-12):
            warnings.warn("prior values exceed the declared sup bound pi_inf", RuntimeWarning)
        return vals


@dataclass
class KdmModel:
    """Fitted low-rank density-ratio model.

    ``pivot_points`` are stored in the kernel's coordinate system (after the
    optional standardization); queries are transformed the same way before
    kernel evaluation.  ``p_star_train`` keeps the prior values at the first
    sample so the hypothesis test can be rerun without the evaluator.
    """

    kernel: KernelSpec
    lam: float
    prior: PriorSpec
    pivot_points: np.ndarray
    pivots: np.ndarray
    beta: np.ndarray
    w: np.ndarray
    L_P: np.ndarray
    L_Q: np.ndarray
    R: np.ndarray
    p_star_train: np.ndarray
    n: int
    epsilon: float
    residual_trace: float
    kappa_inf: float
    kappa_empirical: bool
    standardizer: Optional[Standardizer] = None
    hit_rank_cap: bool = False
    seed: Optional[int] = None

    @property
    def rank(self) -> int:
        return len(self.pivots)

    @property
    def d(self) -> int:
        return self.pivot_points.shape[1]


def _as_dataset(sample) -> Dataset:
    return sample if isinstance(sample, Dataset) else Dataset(np.asarray(sample))


@dataclass
class _Decomposition:
    """Kernel-dependent part of a fit, reusable across lambda values."""

    kernel: KernelSpec
    factors: CholeskyFactors
    points: np.ndarray  # stacked, in kernel coordinates
    L_P: np.ndarray
    L_Q: np.ndarray
    p_star: np.ndarray
    prior: PriorSpec
    n: int
    kappa_inf: float
    standardizer: Optional[Standardizer]
    seed: Optional[int]


def _decompose(
    sample_p,
    sample_q,
    kernel: KernelSpec,
    *,
    epsilon: Optional[float] = None,
    epsilon_rel: float = DEFAULT_EPSILON_REL,
    prior: Optional[PriorSpec] = None,
    strategy: str = "greedy",
    omp_target=None,
    omp_quantile: float = 0.9,
    max_rank: Optional[int] = None,
    standardize: bool = False,
    seed: Optional[int] = None,
) -> _Decomposition:
    sp, sq = _as_dataset(sample_p), _as_dataset(sample_q)
    if sp.d != sq.d:
        raise ValueError(f"sample dimensions differ: {sp.d} vs {sq.d}")
    n = min(sp.n, sq.n)
    if sp.n != sq.n:
        warnings.warn(
            f"sample sizes differ ({sp.n} vs {sq.n}); truncating both to {n}",
            RuntimeWarning,
        )
    pts_p, pts_q = sp.points[:n], sq.points[:n]
    prior = prior if prior is not None else PriorSpec.one()

    stacked = np.vstack([pts_p, pts_q])
    standardizer = Standardizer.from_points(stacked) if standardize else None
    zs = standardizer.apply(stacked) if standardizer is not None else stacked

    if callable(omp_target):
        omp_target = np.asarray(omp_target(stacked), dtype=np.float64).reshape(-1)

    oracle = KernelOracle(kernel, zs)
    if epsilon is None:
        epsilon = epsilon_rel * float(oracle.diagonal().sum())
    factors = pivoted_cholesky(
        oracle,
        epsilon,
        strategy,
        omp_target=omp_target,
        omp_quantile=omp_quantile,
        max_rank=max_rank,
    )
    if factors.rank == 0:
        raise NumericsError("decomposition selected no pivots; kernel matrix is numerically zero")
    return _Decomposition(
        kernel=kernel,
        factors=factors,
        points=zs,
        L_P=factors.L[:n],
        L_Q=factors.L[n:],
        p_star=prior.evaluate(pts_p),
        prior=prior,
        n=n,
        kappa_inf=kernel_sup(kernel, zs),
        standardizer=standardizer,
        seed=seed,
    )


def _solve(dec: _Decomposition, lam: float) -> KdmModel:
    if lam <= 0:
        raise ValueError("lam must be > 0")
    n, m = dec.n, dec.factors.rank
    # m x m SPD system; smallest eigenvalue >= n*lam, so no jitter is needed
    a = dec.L_P.T @ dec.L_P + n * lam * np.eye(m)
    rhs = dec.L_Q.T @ np.ones(n) - dec.L_P.T @ dec.p_star
    try:
        cf = scipy.linalg.cho_factor(a, lower=True)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
        raise NumericsError(f"ridge system not SPD: {exc}") from exc
    w = scipy.linalg.cho_solve(cf, rhs)
    beta = dec.factors.R @ w
    return KdmModel(
        kernel=dec.kernel,
        lam=float(lam),
        prior=dec.prior,
        pivot_points=dec.points[dec.factors.pivots].copy(),
        pivots=dec.factors.pivots.copy(),
        beta=beta,
        w=w,
        L_P=dec.L_P,
        L_Q=dec.L_Q,
        R=dec.factors.R,
        p_star_train=dec.p_star,
        n=n,
        epsilon=dec.factors.epsilon,
        residual_trace=dec.factors.residual_trace,
        kappa_inf=dec.kappa_inf,
        kappa_empirical=kernel_sup_is_empirical(dec.kernel),
        standardizer=dec.standardizer,
        hit_rank_cap=dec.factors.hit_rank_cap,
        seed=dec.seed,
    )


def fit(
    sample_p,
    sample_q,
    kernel: KernelSpec,
    lam: float,
    *,
    epsilon: Optional[float] = None,
    epsilon_rel: float = DEFAULT_EPSILON_REL,
    prior: Optional[PriorSpec] = None,
    strategy: str = "greedy",
    omp_target=None,
    omp_quantile: float = 0.9,
    max_rank: Optional[int] = None,
    standardize: bool = False,
    seed: Optional[int] = None,
) -> KdmModel:
    """Fit the low-rank density-ratio model dQ/dP ~ prior + h.

    ``sample_p`` and ``sample_q`` are the denominator and numerator samples.
    ``epsilon`` is the absolute decomposition tolerance; when omitted it
    defaults to ``epsilon_rel`` times the kernel trace of the stacked sample.
    The fit is deterministic: no randomness enters anywhere.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    dec = _decompose(
        sample_p,
        sample_q,
        kernel,
        epsilon=epsilon,
        epsilon_rel=epsilon_rel,
        prior=prior,
        strategy=strategy,
        omp_target=omp_target,
        omp_quantile=omp_quantile,
        max_rank=max_rank,
        standardize=standardize,
        seed=seed,
    )
    return _solve(dec, lam)


def _query_points(model, z) -> tuple[np.ndarray, bool]:
    pts = np.asarray(z, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.shape[1] != model.pivot_points.shape[1]:
        raise ValueError(f"query dimension {pts.shape[1]} != model dimension {model.pivot_points.shape[1]}")
    return pts, single


def eval_h(model: KdmModel, z) -> Union[float, np.ndarray]:
    """RKHS correction h at one point (1-d input) or a batch (2-d input)."""
    pts, single = _query_points(model, z)
    zs = model.standardizer.apply(pts) if model.standardizer is not None else pts
    vals = cross_kernel_matrix(model.kernel, zs, model.pivot_points) @ model.beta
    return float(vals[0]) if single else vals


def eval_density_ratio(model: KdmModel, z, clip: bool = False) -> Union[float, np.ndarray]:
    """Estimated dQ/dP at z; ``clip`` truncates negatives at zero."""
    pts, single = _query_points(model, z)
    vals = model.prior.evaluate(pts) + eval_h(model, pts)
    if clip:
        vals = np.maximum(vals, 0.0)
    return float(vals[0]) if single else vals


def h_norm(model: KdmModel, method: str = "gram") -> float:
    """RKHS norm of the fitted correction h.

    ``method="gram"`` evaluates sqrt(beta^T K[piv, piv] beta); ``"weights"``
    uses the biorthogonal identity, under which the norm equals ||w||_2.  The
    two agree to roundoff and the second is cheaper.
    """
    if method == "weights":
        return float(np.linalg.norm(model.w))
    if method != "gram":
        raise ValueError(f"unknown method {method!r}")
    kpp = cross_kernel_matrix(model.kernel, model.pivot_points, model.pivot_points)
    val = float(model.beta @ kpp @ model.beta)
    return float(np.sqrt(max(val, 0.0)))


@dataclass
class FullRankModel:
    """Exact representer-system fit over all 2n stacked points."""

    kernel: KernelSpec
    lam: float
    prior: PriorSpec
    points: np.ndarray  # in kernel coordinates
    beta: np.ndarray
    n: int
    standardizer: Optional[Standardizer] = None


def fit_full(
    sample_p,
    sample_q,
    kernel: KernelSpec,
    lam: float,
    *,
    prior: Optional[PriorSpec] = None,
    standardize: bool = False,
    max_points: int = 4000,
) -> FullRankModel:
    """Dense 2n x 2n reference fit; quadratic memory, for validation scale."""
    if lam <= 0:
        raise ValueError("lam must be > 0")
    sp, sq = _as_dataset(sample_p), _as_dataset(sample_q)
    if sp.d != sq.d:
        raise ValueError(f"sample dimensions differ: {sp.d} vs {sq.d}")
    n = min(sp.n, sq.n)
    if sp.n != sq.n:
        warnings.warn(
            f"sample sizes differ ({sp.n} vs {sq.n}); truncating both to {n}",
            RuntimeWarning,
        )
    if 2 * n > max_points:
        raise ValueError(f"dense fit limited to {max_points} stacked points, got {2 * n}")
    prior = prior if prior is not None else PriorSpec.one()
    stacked = np.vstack([sp.points[:n], sq.points[:n]])
    standardizer = Standardizer.from_points(stacked) if standardize else None
    zs = standardizer.apply(stacked) if standardizer is not None else stacked

    k = cross_kernel_matrix(kernel, zs, zs)
    p_star = prior.evaluate(sp.points[:n])
    q_star = np.concatenate([-p_star, np.ones(n)])
    # minimizer of the regularized empirical loss solves (K D_P K + n lam K) b
    # = K q; any solution of (D_P K + n lam I) b = q works and that system is
    # provably invertible since D_P K has nonnegative real eigenvalues
    m = k.copy()
    m[n:, :] = 0.0
    m[np.diag_indices(2 * n)] += n * lam
    try:
        beta = np.linalg.solve(m, q_star)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"dense representer system is singular: {exc}") from exc
    return FullRankModel(
        kernel=kernel,
        lam=float(lam),
        prior=prior,
        points=zs,
        beta=beta,
        n=n,
        standardizer=standardizer,
    )


def eval_h_full(full: FullRankModel, z) -> Union[float, np.ndarray]:
    """Correction h of the dense fit at one point or a batch."""
    pts = np.asarray(z, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    zs = full.standardizer.apply(pts) if full.standardizer is not None else pts
    vals = cross_kernel_matrix(full.kernel, zs, full.points) @ full.beta
    return float(vals[0]) if single else vals


def rkhs_gap(full: FullRankModel, model: KdmModel) -> float:
    """RKHS distance between the dense and the low-rank fit.

    Computed from Gram matrices, so it costs O((2n)^2) and is meant for
    validation scale.  Both fits must use the same kernel and coordinates.
    """
    if full.kernel != model.kernel:
        raise ValueError("fits use different kernels")
    if (full.standardizer is None) != (model.standardizer is None):
        raise ValueError("fits use different coordinate transforms")
    k_ff = cross_kernel_matrix(full.kernel, full.points, full.points)
    k_ll = cross_kernel_matrix(full.kernel, model.pivot_points, model.pivot_points)
    k_fl = cross_kernel_matrix(full.kernel, full.points, model.pivot_points)
    gap2 = (
        full.beta @ k_ff @ full.beta
        + model.beta @ k_ll @ model.beta
        - 2.0 * (full.beta @ k_fl @ model.beta)
    )
    return float(np.sqrt(max(gap2, 0.0)))


def validation_loss(model: KdmModel, val_p, val_q) -> float:
    """Out-of-sample quadratic loss of the fitted ratio (lower is better).

    Both empirical sums are averaged over their validation sample sizes; the
    normalization does not move the argmin across models on common data.
    """
    vp, vq = _as_dataset(val_p), _as_dataset(val_q)
    if vp.d != model.d or vq.d != model.d:
        raise ValueError("validation sample dimension differs from model")
    hp = eval_h(model, vp.points)
    hq = eval_h(model, vq.points)
    pbar = model.prior.evaluate(vp.points)
    cross = float(hq.sum()) / vq.n - float(pbar @ hp) / vp.n
    quad = float(hp @ hp) / vp.n
    return -2.0 * cross + quad


@dataclass
class CvResult:
    """Grid search outcome: chosen entry plus the per-entry mean losses."""

    kernel: KernelSpec
    lam: float
    mean_losses: np.ndarray
    grid: list


def grid_product(kernels: Sequence[KernelSpec], lambdas: Sequence[float]) -> list:
    """All (kernel, lambda) pairs, kernels outermost, in stable order."""
    return [(k, float(l)) for k in kernels for l in lambdas]


def cross_validate(
    sample_p,
    sample_q,
    grid: Sequence,
    folds: int,
    *,
    epsilon: Optional[float] = None,
    epsilon_rel: float = DEFAULT_EPSILON_REL,
    prior: Optional[PriorSpec] = None,
    strategy: str = "greedy",
    max_rank: Optional[int] = None,
    standardize: bool = False,
    seed: int = 0,
) -> CvResult:
    """K-fold selection of (kernel, lambda) by mean validation loss.

    Folds are drawn once from ``seed`` and shared across the whole grid, with
    the i-th fold of the P-sample paired with the i-th fold of the Q-sample.
    Decompositions are reused across lambda values within a fold, so grids
    dense in lambda cost little extra.  Ties resolve to the earliest grid
    entry.
    """
    sp, sq = _as_dataset(sample_p), _as_dataset(sample_q)
    n = min(sp.n, sq.n)
    if folds < 2 or folds > n:
        raise ValueError("folds must lie in [2, n]")
    if len(grid) == 0:
        raise ValueError("empty grid")
    rng = np.random.default_rng(seed)
    chunks_p = np.array_split(rng.permutation(n), folds)
    chunks_q = np.array_split(rng.permutation(n), folds)

    kernels_in_order: list[KernelSpec] = []
    for k, _ in grid:
        if k not in kernels_in_order:
            kernels_in_order.append(k)

    losses = np.zeros((len(grid), folds))
    for f in range(folds):
        val_p_idx, val_q_idx = chunks_p[f], chunks_q[f]
        tr_p_idx = np.concatenate([chunks_p[j] for j in range(folds) if j != f])
        tr_q_idx = np.concatenate([chunks_q[j] for j in range(folds) if j != f])
        tr_p, tr_q = sp.points[:n][tr_p_idx], sq.points[:n][tr_q_idx]
        va_p, va_q = sp.points[:n][val_p_idx], sq.points[:n][val_q_idx]
        for kern in kernels_in_order:
            dec = _decompose(
                tr_p,
                tr_q,
                kern,
                epsilon=epsilon,
                epsilon_rel=epsilon_rel,
                prior=prior,
                strategy=strategy,
                max_rank=max_rank,
                standardize=standardize,
            )
            for g, (gk, glam) in enumerate(grid):
                if gk == kern:
                    losses[g, f] = validation_loss(_solve(dec, glam), va_p, va_q)

    mean_losses = losses.mean(axis=1)
    if not np.all(np.isfinite(mean_losses)):
        raise NumericsError("validation losses are not finite")
    best = int(np.argmin(mean_losses))
    return CvResult(kernel=grid[best][0], lam=grid[best][1], mean_losses=mean_losses, grid=list(grid))


# ---------------------------------------------------------------------------
# model serialization: a deterministic binary container (no timestamps, fixed
# field order) so identical fits produce identical bytes

_MAGIC = b"KDM\x01"
_ARRAY_FIELDS = ("pivot_points", "pivots", "beta", "w", "L_P", "L_Q", "R", "p_star_train")


def save_model(model: KdmModel, path: str) -> None:
    """Write the model as a self-contained binary bundle."""
    if model.prior.kind == "custom":
        raise ValueError("custom prior evaluators cannot be serialized; refit with zero/one prior")
    header = {
        "format": 1,
        "kernel": model.kernel.to_dict(),
        "lam": model.lam,
        "prior": {"kind": model.prior.kind, "pi_inf": model.prior.pi_inf},
        "n": model.n,
        "epsilon": model.epsilon,
        "residual_trace": model.residual_trace,
        "kappa_inf": model.kappa_inf,
        "kappa_empirical": model.kappa_empirical,
        "hit_rank_cap": model.hit_rank_cap,
        "seed": model.seed,
        "standardizer": (
            None
            if model.standardizer is None
            else {"mean": model.standardizer.mean.tolist(), "scale": model.standardizer.scale.tolist()}
        ),
        "arrays": [],
    }
    blobs = []
    for name in _ARRAY_FIELDS:
        arr = np.ascontiguousarray(getattr(model, name))
        dtype = "i8" if name == "pivots" else "f8"
        arr = arr.astype(np.int64 if dtype == "i8" else np.float64)
        header["arrays"].append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_model(path: str) -> KdmModel:
    """Read a bundle written by :func:`save_model`."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a model bundle")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for meta in header["arrays"]:
            dtype = np.int64 if meta["dtype"] == "i8" else np.float64
            count = int(np.prod(meta["shape"])) if meta["shape"] else 1
            buf = fh.read(count * 8)
            arrays[meta["name"]] = np.frombuffer(buf, dtype=dtype).reshape(meta["shape"]).copy()
    prior = PriorSpec.one() if header["prior"]["kind"] == "one" else PriorSpec.zero()
    std = header["standardizer"]
    return KdmModel(
        kernel=KernelSpec.from_dict(header["kernel"]),
        lam=float(header["lam"]),
        prior=prior,
        pivot_points=arrays["pivot_points"],
        pivots=arrays["pivots"],
        beta=arrays["beta"],
        w=arrays["w"],
        L_P=arrays["L_P"],
        L_Q=arrays["L_Q"],
        R=arrays["R"],
        p_star_train=arrays["p_star_train"],
        n=int(header["n"]),
        epsilon=float(header["epsilon"]),
        residual_trace=float(header["residual_trace"]),
        kappa_inf=float(header["kappa_inf"]),
        kappa_empirical=bool(header["kappa_empirical"]),
        standardizer=(
            None if std is None else Standardizer(mean=np.asarray(std["mean"]), scale=np.asarray(std["scale"]))
        ),
        hit_rank_cap=bool(header["hit_rank_cap"]),
        seed=header["seed"],
    )
