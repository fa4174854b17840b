"""Chi-square test of a prior density-ratio guess against two samples.

Under the null dQ/dP = prior, the scaled moment-gap vector of a fitted model
is asymptotically Gaussian with a covariance that can be estimated from the
same decomposition.  Summing squared standardized principal components gives
a statistic with a chi-square(ell) limit, where ell counts the eigenvalues
kept by a truncation rule.  Neither the vector nor the covariance depends on
the ridge parameter, so the test needs no lambda tuning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.special

from .estimator import KdmModel, h_norm

# eigenvalues below EIG_FLOOR_REL times the largest are treated as zero
EIG_FLOOR_REL = 1e-12
DEFAULT_TRUNCATION_T = 1e-9


def chi_square_upper_tail(x: float, dof: int) -> float:
    """P[chi2(dof) >= x] via the regularized upper incomplete gamma."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if x < 0:
        raise ValueError("x must be >= 0")
    return float(scipy.special.gammaincc(dof / 2.0, x / 2.0))


def sample_variable(model: KdmModel) -> np.ndarray:
    """Scaled moment gap n^{-1/2} (L_Q^T 1 - L_P^T p*); zero-mean under the null."""
    n = model.n
    return (model.L_Q.T @ np.ones(n) - model.L_P.T @ model.p_star_train) / np.sqrt(n)


def covariance_matrix(model: KdmModel) -> np.ndarray:
    """Plug-in covariance of the sample variable, symmetrized."""
    n = model.n
    lq1 = model.L_Q.T @ np.ones(n)
    lpp = model.L_P.T @ model.p_star_train
    sig = (
        model.L_Q.T @ model.L_Q / n
        - np.outer(lq1, lq1) / n**2
        + (model.L_P * model.p_star_train[:, None] ** 2).T @ model.L_P / n
        - np.outer(lpp, lpp) / n**2
    )
    return 0.5 * (sig + sig.T)


@dataclass
class C_coefficients:
    """Finite-sample constants and the resulting norm threshold."""

    c_fs: float
    c_ae: float
    rhs: float


def finite_sample_bound(
    eta: float,
    lam: float,
    n: int,
    epsilon: float,
    kappa_inf: float,
    pi_inf: float,
    s: float = 0.0,
) -> C_coefficients:
    """High-probability threshold on the fitted correction norm.

    With probability at least 1 - eta under the null (true correction norm
    <= s), the fitted h satisfies ||h||_H <= rhs.  ``epsilon`` is the absolute
    decomposition tolerance actually used.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if lam <= 0 or n < 1 or epsilon < 0 or kappa_inf <= 0 or pi_inf < 0 or s < 0:
        raise ValueError("invalid bound parameters")
    c_fs = 2.0 * np.sqrt(2.0 * np.log(2.0 / eta) * kappa_inf) * (1.0 + pi_inf + s * np.sqrt(kappa_inf))
    c_ae = np.sqrt(epsilon) * (1.0 + np.sqrt(kappa_inf / lam)) * (pi_inf + 1.0)
    rhs = (c_fs + c_ae) / (lam * np.sqrt(n))
    return C_coefficients(c_fs=float(c_fs), c_ae=float(c_ae), rhs=float(rhs))


@dataclass
class TestResult:
    """Outcome of the chi-square ratio test."""

    statistic: float
    ell: int
    p_value: float
    truncation: str
    threshold: float
    n: int
    rank: int
    eigenvalues: np.ndarray = field(repr=False, default=None)
    h_norm: Optional[float] = None
    norm_bound: Optional[float] = None
    bound_holds: Optional[bool] = None

    def to_dict(self) -> dict:
        out = {
            "statistic": self.statistic,
            "ell": self.ell,
            "p_value": self.p_value,
            "truncation": self.truncation,
            "threshold": self.threshold,
            "n": self.n,
            "rank": self.rank,
        }
        if self.h_norm is not None:
            out["h_norm"] = self.h_norm
            out["norm_bound"] = self.norm_bound
            out["bound_holds"] = self.bound_holds
        return out


def _truncation_length(eig: np.ndarray, rule: str, t: float) -> int:
    pos = eig[eig > 0]
    if pos.size == 0:
        return 0
    if rule == "relative":
        if t <= 0:
            raise ValueError("relative truncation needs t > 0")
        return int(np.sum(pos >= t * pos[0]))
    if rule == "explained":
        if not 0 < t <= 1:
            raise ValueError("explained-variation truncation needs t in (0, 1]")
        frac = np.cumsum(pos) / pos.sum()
        return int(np.searchsorted(frac, t) + 1)
    raise ValueError(f"unknown truncation rule {rule!r}")


def run_test(
    model: KdmModel,
    truncation: str = "relative",
    t: float = DEFAULT_TRUNCATION_T,
    eta: Optional[float] = None,
) -> TestResult:
    """Test whether the model's prior already explains the two samples.

    Eigenvalues of the estimated covariance below EIG_FLOOR_REL times the
    largest are zeroed; the truncation rule then keeps ell leading components
    ("relative": eigenvalues >= t * largest; "explained": smallest count
    reaching a fraction t of the total).  A degenerate covariance yields
    statistic 0 with p-value 1.  Passing ``eta`` additionally reports the
    finite-sample norm check at that confidence level.
    """
    v = sample_variable(model)
    sig = covariance_matrix(model)
    eig, vec = np.linalg.eigh(sig)
    eig, vec = eig[::-1].copy(), vec[:, ::-1]
    if eig.size and eig[0] > 0:
        eig[eig < EIG_FLOOR_REL * eig[0]] = 0.0
    else:
        eig = np.zeros_like(eig)

    ell = _truncation_length(eig, truncation, t)
    if ell == 0:
        stat, p = 0.0, 1.0
    else:
        proj = vec[:, :ell].T @ v
        stat = float(np.sum(proj**2 / eig[:ell]))
        p = chi_square_upper_tail(stat, ell)

    result = TestResult(
        statistic=stat,
        ell=ell,
        p_value=p,
        truncation=truncation,
        threshold=float(t),
        n=model.n,
        rank=model.rank,
        eigenvalues=eig,
    )
    if eta is not None:
        bound = finite_sample_bound(
            eta, model.lam, model.n, model.epsilon, model.kappa_inf, model.prior.pi_inf, s=0.0
        )
        result.h_norm = h_norm(model, method="weights")
        result.norm_bound = bound.rhs
        result.bound_holds = bool(result.h_norm <= bound.rhs)
    return result
