"""Monte Carlo studies: test calibration, power curves, forecast comparisons.

Replication r of a study with master seed s uses the derived stream s XOR r,
so studies can be chunked or resumed without replaying earlier replications.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conditional import JointDataset, conditional_weights, fit_conditional, split_joint_sample
from .estimator import fit
from .hypothesis import DEFAULT_TRUNCATION_T, TestResult, run_test
from .kernels import KernelSpec
from .simulate import MixtureConfig, draw_mixture_model, sample_distribution

DEFAULT_EPS_REL = 1e-5
DEFAULT_MAX_RANK = 256
# default Gaussian length scale: this multiple of the median heuristic; wider
# than the classic choice because the chi-square approximation of the test
# needs the covariance spectrum to decay well inside the truncation window
DEFAULT_RHO_MULT = 4.0


def median_heuristic_rho(points: np.ndarray, cap: int = 500) -> float:
    """Half the median pairwise squared distance over (at most cap) points.

    Deterministic: when subsampling is needed the points are thinned with an
    even stride rather than at random.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n > cap:
        pts = pts[np.linspace(0, n - 1, cap).astype(np.intp)]
    sq = np.sum(pts**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T, 0.0)
    iu = np.triu_indices(pts.shape[0], k=1)
    med = float(np.median(d2[iu]))
    return max(med / 2.0, 1e-12)


def independence_test(
    joint: JointDataset,
    *,
    kernel: Optional[KernelSpec] = None,
    rho_mult: float = DEFAULT_RHO_MULT,
    lam: float = 1e-3,
    epsilon_rel: float = DEFAULT_EPS_REL,
    max_rank: int = DEFAULT_MAX_RANK,
    scheme: str = "three_split",
    truncation: str = "relative",
    t: float = DEFAULT_TRUNCATION_T,
) -> TestResult:
    """Test X independent of Y in a joint sample.

    The decoupled/paired samples come from the chosen split scheme; the
    default kernel is Gaussian with ``rho_mult`` times the median-heuristic
    length scale of the stacked sample.  The statistic does not depend on
    lam.
    """
    sample_p, sample_q = split_joint_sample(joint, scheme)
    if kernel is None:
        stacked = np.vstack([sample_p.points, sample_q.points])
        kernel = KernelSpec("gaussian", rho=rho_mult * median_heuristic_rho(stacked))
    model = fit(sample_p, sample_q, kernel, lam, epsilon_rel=epsilon_rel, max_rank=max_rank)
    return run_test(model, truncation, t)


@dataclass
class RejectionStudy:
    """Rejection rate of the independence test over seeded replications."""

    distribution: str
    n: int
    reps: int
    level: float
    p_values: np.ndarray
    rejection_rate: float

    @property
    def mc_stderr(self) -> float:
        r = self.rejection_rate
        return float(np.sqrt(max(r * (1.0 - r), 1e-12) / self.reps))


def rejection_study(
    distribution: str,
    n: int,
    reps: int,
    seed: int,
    *,
    level: float = 0.05,
    c: Optional[float] = None,
    kernel: Optional[KernelSpec] = None,
    rho_mult: float = DEFAULT_RHO_MULT,
    lam: float = 1e-3,
    epsilon_rel: float = DEFAULT_EPS_REL,
    max_rank: int = DEFAULT_MAX_RANK,
    scheme: str = "three_split",
    truncation: str = "relative",
    t: float = DEFAULT_TRUNCATION_T,
) -> RejectionStudy:
    """Run the independence test on `reps` fresh data sets of per-sample size n."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rows = 3 * n if scheme == "three_split" else n
    pvals = np.empty(reps)
    for r in range(reps):
        joint = sample_distribution(distribution, rows, seed ^ r, c=c)
        pvals[r] = independence_test(
            joint,
            kernel=kernel,
            rho_mult=rho_mult,
            lam=lam,
            epsilon_rel=epsilon_rel,
            max_rank=max_rank,
            scheme=scheme,
            truncation=truncation,
            t=t,
        ).p_value
    return RejectionStudy(
        distribution=distribution,
        n=n,
        reps=reps,
        level=level,
        p_values=pvals,
        rejection_rate=float(np.mean(pvals <= level)),
    )


def ks_to_uniform(p_values: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of the sample to the uniform law on [0, 1]."""
    p = np.sort(np.asarray(p_values, dtype=np.float64))
    if p.size == 0 or p[0] < 0 or p[-1] > 1:
        raise ValueError("p-values must lie in [0, 1]")
    k = p.size
    grid = np.arange(1, k + 1) / k
    return float(max(np.max(grid - p), np.max(p - (grid - 1.0 / k))))


def null_bound_study(
    n: int,
    reps: int,
    seed: int,
    *,
    eta: float = 0.1,
    lam: float = 1e-3,
    kernel: Optional[KernelSpec] = None,
    epsilon_rel: float = DEFAULT_EPS_REL,
    max_rank: int = DEFAULT_MAX_RANK,
) -> np.ndarray:
    """Check the finite-sample norm bound under a true null, rep by rep.

    Each replication draws two fresh samples from the same independent-clouds
    law, where the prior ratio one is exact, and records whether the fitted
    correction norm stays below the eta-level threshold.
    """
    holds = np.empty(reps, dtype=bool)
    for r in range(reps):
        rng = np.random.default_rng(seed ^ r)
        joint = sample_distribution("independent_clouds", 2 * n, rng)
        pts = np.hstack([joint.x, joint.y])
        sample_p, sample_q = pts[:n], pts[n:]
        kern = kernel
        if kern is None:
            rho = DEFAULT_RHO_MULT * median_heuristic_rho(np.vstack([sample_p, sample_q]))
            kern = KernelSpec("gaussian", rho=rho)
        model = fit(sample_p, sample_q, kern, lam, epsilon_rel=epsilon_rel, max_rank=max_rank)
        holds[r] = run_test(model, eta=eta).bound_holds
    return holds


@dataclass
class MixtureStudy:
    """Energy-score comparison of conditional weights against uniform weights."""

    differentials: np.ndarray
    clusters: np.ndarray

    @property
    def median_differential(self) -> float:
        return float(np.median(self.differentials))


def mixture_energy_study(
    runs: int,
    seed: int,
    *,
    n_train: int = 1000,
    n_test: int = 200,
    grid_cap: int = 500,
    lam: float = 1e-3,
    epsilon_rel: float = DEFAULT_EPS_REL,
    max_rank: int = 400,
    max_clusters: int = 3,
) -> MixtureStudy:
    """Out-of-sample energy scores on random Gaussian mixtures.

    Run r draws a mixture with 1 + (r mod max_clusters) clusters, fits the
    conditional model on a three-way split of 3 * n_train rows, and scores
    n_test fresh outcomes against the candidate grid twice: once with the
    conditional weights (scaled to mean one) and once with uniform weights.
    The differential is the mean uniform-minus-conditional score, so positive
    values favor the conditional model.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    diffs = np.empty(runs)
    clusters = np.empty(runs, dtype=np.intp)
    for r in range(runs):
        rng = np.random.default_rng(seed ^ r)
        k = 1 + r % max_clusters
        clusters[r] = k
        mixture = draw_mixture_model(MixtureConfig(n_clusters=k), rng)
        train, _ = mixture.sample(3 * n_train, rng)
        test, _ = mixture.sample(n_test, rng)

        stacked = np.hstack([train.x, train.y])
        kernel = KernelSpec("gaussian", rho=median_heuristic_rho(stacked))
        cmodel = fit_conditional(
            train,
            kernel,
            lam,
            scheme="three_split",
            epsilon_rel=epsilon_rel,
            max_rank=max_rank,
            grid_cap=grid_cap,
            seed=seed ^ r,
        )

        grid = cmodel.y_grid
        m = grid.shape[0]
        gd = grid[:, None, :] - grid[None, :, :]
        pair_dist = np.sqrt(np.sum(gd**2, axis=2))
        gaps = np.empty(n_test)
        for i in range(n_test):
            w = conditional_weights(cmodel, test.x[i]) * m  # mean-one scaling
            dist_to_y = np.linalg.norm(grid - test.y[i], axis=1)
            es_cond = float(w @ dist_to_y) / m - float(w @ pair_dist @ w) / (2.0 * m**2)
            es_unif = float(dist_to_y.sum()) / m - float(pair_dist.sum()) / (2.0 * m**2)
            gaps[i] = es_unif - es_cond
        diffs[r] = float(np.mean(gaps))
    return MixtureStudy(differentials=diffs, clusters=clusters)
