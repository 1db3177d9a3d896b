"""MMD test statistics and a deterministic permutation engine.

Large kernel bandwidths push every determinant factor toward zero, so each
statistic is assembled in the log domain.  The permutation engine ranks
replicates by log-scale keys (a strictly monotone transform of the statistic),
which keeps comparisons exact even when the statistic itself underflows in
linear floating point.

All engines are vectorized over permutation rows: the first row is always the
identity (the observed data), the remaining B rows are uniformly random
permutations, each derived from its own counter-based stream ``(seed, 1, b)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod
from .errors import (
    InsufficientPermutationsError,
    InvalidArgumentError,
    NumericalInconsistencyError,
    SingularDesignError,
    UnderDeterminedError,
)
from .estimators import DesignMatrix
from .funcspace import FunctionalDataset

MMDS = "mmds"
MMDP = "mmdp"
ANOVA_MMD0 = "anova_mmd0"
COV_MMD = "cov_mmd"
L2_SLOPE = "l2_slope"
L2_ANOVA = "l2_anova"
L2_COV = "l2_cov"

DEFAULT_SIGMA = {MMDS: 5e4, MMDP: 5e1, ANOVA_MMD0: 1e3, COV_MMD: 1e3}
DEFAULT_PERMUTATIONS = 200
MIN_PERMUTATIONS = 19

_BRACKET_CLAMP = 1e-12
_BRACKET_ERROR = 1e-9


class PermutationScheme(Enum):
    """How the null is re-sampled: each kind is exchangeable under its null."""

    COVARIATES = "covariates"
    GROUP_LABELS = "group_labels"
    CENTERED_RESIDUAL_LABELS = "centered_residual_labels"


DEFAULT_SCHEME = {
    MMDS: PermutationScheme.COVARIATES,
    MMDP: PermutationScheme.COVARIATES,
    L2_SLOPE: PermutationScheme.COVARIATES,
    ANOVA_MMD0: PermutationScheme.GROUP_LABELS,
    L2_ANOVA: PermutationScheme.GROUP_LABELS,
    COV_MMD: PermutationScheme.CENTERED_RESIDUAL_LABELS,
    L2_COV: PermutationScheme.CENTERED_RESIDUAL_LABELS,
}

_REGRESSION_STATS = (MMDS, MMDP, L2_SLOPE)
_ANOVA_STATS = (ANOVA_MMD0, L2_ANOVA)
_COV_STATS = (COV_MMD, L2_COV)


@dataclass(frozen=True)
class TestResult:
    """Observed statistic, permutation p-value and the reproducibility seed."""

    statistic: float
    p_value: float
    permutations: int
    seed: int
    statistic_name: str

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "permutations": self.permutations,
            "seed": self.seed,
            "statistic_name": self.statistic_name,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ----------------------------------------------------------------------
# batched numerical pieces
# ----------------------------------------------------------------------

def _logdet_ishift(C: np.ndarray, c: float) -> np.ndarray:
    """log |I + cC| for a batch (..., K, K) of PSD matrices, via Cholesky."""
    K = C.shape[-1]
    M = c * C + np.eye(K)
    L = np.linalg.cholesky(M)
    diag = np.diagonal(L, axis1=-2, axis2=-1)
    return 2.0 * np.log(diag).sum(axis=-1)


def _quads_and_logdet(C: np.ndarray, c: float, D: np.ndarray):
    """Resolvent quadratic forms <(I+cC)^{-1} d, d> for rows of D, plus log |I+cC|.

    C: (..., K, K) PSD,  D: (..., n, K).  Returns ((..., n), (...,)).
    """
    K = C.shape[-1]
    M = c * C + np.eye(K)
    L = np.linalg.cholesky(M)
    diag = np.diagonal(L, axis1=-2, axis2=-1)
    logdet = 2.0 * np.log(diag).sum(axis=-1)
    sol = np.linalg.solve(M, np.swapaxes(D, -1, -2))
    quads = np.einsum("...nk,...kn->...n", D, sol)
    return np.clip(quads, 0.0, None), logdet


def _log_diff3(la, lb, lc2) -> np.ndarray:
    """log(e^la + e^lb - e^lc2) elementwise; -inf when the bracket clamps to 0."""
    la, lb, lc2 = np.broadcast_arrays(la, lb, lc2)
    m = np.maximum(np.maximum(la, lb), lc2)
    r = np.exp(la - m) + np.exp(lb - m) - np.exp(lc2 - m)
    if np.any(r < -_BRACKET_ERROR):
        raise NumericalInconsistencyError(
            f"squared statistic bracket fell to {float(r.min()):.3e} of its scale"
        )
    with np.errstate(divide="ignore"):
        return m + np.log(np.clip(r, 0.0, None))


def _value_from_log_sq(log_sq: np.ndarray) -> np.ndarray:
    """sqrt of the squared statistic, evaluated from its log (0 when -inf)."""
    with np.errstate(over="ignore"):
        return np.exp(0.5 * log_sq)


def _log_of(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


# ----------------------------------------------------------------------
# permutation layouts
# ----------------------------------------------------------------------

def permutation_rows(n: int, B: int, seed: int) -> np.ndarray:
    """(B+1, n) index rows: identity first, then B seeded uniform permutations.

    Permutation b is drawn from the counter-based stream (seed, 1, b), so any
    subset of rows can be regenerated independently and in any order.
    """
    perms = np.empty((B + 1, n), dtype=np.intp)
    perms[0] = np.arange(n)
    for b in range(1, B + 1):
        perms[b] = rngmod.substream(seed, rngmod.PERMUTE, b).permutation(n)
    return perms


# ----------------------------------------------------------------------
# batched engines: one row per permutation, row 0 observed
# ----------------------------------------------------------------------

def regression_engine(
    Y: np.ndarray,
    x: np.ndarray,
    perms: np.ndarray,
    sigmas: dict,
    want: tuple = _REGRESSION_STATS,
) -> dict:
    """Sum/product-kernel MMD statistics (and the L2 slope baseline) for the
    intercept + one covariate regression, for every permutation of the
    covariate rows.

    Returns name -> {"log_key": (B+1,), "value": (B+1,)} where log_key orders
    identically to the statistic value.
    """
    n, K = Y.shape
    ybar = Y.mean(axis=0)
    Yc = Y - ybar
    C0 = Yc.T @ Yc / (n - 1)
    ev0 = np.clip(np.linalg.eigvalsh(C0), 0.0, None)

    xb = x[perms]
    sx = float(x.sum())
    sxx = float(x @ x)
    den = n * sxx - sx * sx
    if den <= 1e-12 * max(n * sxx, 1.0):
        raise SingularDesignError("covariate is constant")
    sy = Y.sum(axis=0)
    Sxy = xb @ Y
    slope = (n * Sxy - sx * sy) / den
    alpha1 = (sy - sx * slope) / n
    resid = Y[None, :, :] - alpha1[:, None, :] - xb[:, :, None] * slope[:, None, :]
    C1 = np.matmul(resid.transpose(0, 2, 1), resid) / (n - 2)
    D = resid - Yc[None, :, :]
    S = C1 + C0[None]

    out = {}
    if L2_SLOPE in want:
        l2 = np.einsum("bk,bk->b", slope, slope)
        out[L2_SLOPE] = {"log_key": _log_of(l2), "value": l2}
    for name in (MMDS, MMDP):
        if name not in want:
            continue
        s = sigmas[name]
        ld0 = float(np.log1p(4.0 * s * ev0).sum())
        quads, ld_sum = _quads_and_logdet(S, 2.0 * s, D)
        ld1 = _logdet_ishift(C1, 4.0 * s)
        if name == MMDS:
            la = math.log(n) - 0.5 * ld0
            lb = np.log(n) - 0.5 * ld1
            lc2 = math.log(2.0) - 0.5 * ld_sum + logsumexp(-s * quads, axis=1)
        else:
            la = -0.5 * n * ld0
            lb = -0.5 * n * ld1
            lc2 = math.log(2.0) - 0.5 * n * ld_sum - s * quads.sum(axis=1)
        log_sq = _log_diff3(la, lb, lc2)
        out[name] = {"log_key": log_sq, "value": _value_from_log_sq(log_sq)}
    return out


def _group_onehot(labels: np.ndarray, k: int) -> np.ndarray:
    return (labels[..., None] == np.arange(1, k + 1)).astype(float)


def anova_engine(
    Y: np.ndarray,
    groups: np.ndarray,
    perms: np.ndarray,
    sigma: float,
    want: tuple = _ANOVA_STATS,
) -> dict:
    """Whitened between-group statistic for every permutation of group labels."""
    n, K = Y.shape
    k = int(groups.max())
    counts = np.bincount(groups - 1, minlength=k).astype(float)
    labels = groups[perms]
    onehot = _group_onehot(labels, k)
    means = np.matmul(onehot.transpose(0, 2, 1), Y) / counts[None, :, None]
    grand = Y.mean(axis=0)
    diffs = means - grand
    YtY = Y.T @ Y
    weighted = means * counts[None, :, None]
    Cw = (YtY[None] - np.matmul(weighted.transpose(0, 2, 1), means)) / n

    out = {}
    if L2_ANOVA in want:
        l2 = (counts[None, :] * np.einsum("bgk,bgk->bg", diffs, diffs)).sum(axis=1)
        out[L2_ANOVA] = {"log_key": _log_of(l2), "value": l2}
    if ANOVA_MMD0 in want:
        quads, _ = _quads_and_logdet(Cw, 4.0 * sigma, diffs)
        stat = (counts[None, :] * quads).sum(axis=1)
        out[ANOVA_MMD0] = {"log_key": _log_of(stat), "value": stat}
    return out


def cov_engine(
    Yc: np.ndarray,
    groups: np.ndarray,
    perms: np.ndarray,
    sigma: float,
    want: tuple = _COV_STATS,
) -> dict:
    """Covariance-homogeneity statistic for every permutation of group labels.

    ``Yc`` must already be centered (the engine re-centers within each permuted
    group, so feeding centered residuals is idempotent for the identity row).
    """
    n, K = Yc.shape
    k = int(groups.max())
    counts = np.bincount(groups - 1, minlength=k).astype(float)
    labels = groups[perms]
    onehot = _group_onehot(labels, k)
    B1 = perms.shape[0]

    sums = np.matmul(onehot.transpose(0, 2, 1), Yc)
    means = sums / counts[None, :, None]
    outer = (Yc[:, :, None] * Yc[:, None, :]).reshape(n, K * K)
    Sg = np.matmul(onehot.transpose(0, 2, 1), outer).reshape(B1, k, K, K)
    Cg = (Sg - counts[None, :, None, None] * (means[..., :, None] * means[..., None, :]))
    Cg /= counts[None, :, None, None]
    Cpool = (Cg * counts[None, :, None, None]).sum(axis=1) / n

    out = {}
    if L2_COV in want:
        dev = Cg - Cpool[:, None]
        l2 = (counts[None, :] * np.einsum("bgkl,bgkl->bg", dev, dev)).sum(axis=1)
        out[L2_COV] = {"log_key": _log_of(l2), "value": l2}
    if COV_MMD in want:
        u = -0.5 * _logdet_ishift(Cpool, 4.0 * sigma)
        v = -0.5 * _logdet_ishift(Cg, 4.0 * sigma)
        w = -0.5 * _logdet_ishift(Cpool[:, None] + Cg, 2.0 * sigma)
        m = np.maximum(np.maximum(u[:, None], v), w)
        bracket = np.exp(u[:, None] - m) + np.exp(v - m) - 2.0 * np.exp(w - m)
        if np.any(bracket < -_BRACKET_ERROR):
            raise NumericalInconsistencyError(
                f"covariance bracket fell to {float(bracket.min()):.3e} of its scale"
            )
        bracket = np.clip(bracket, 0.0, None)
        with np.errstate(divide="ignore"):
            term_log = np.log(counts)[None, :] + m + np.log(bracket)
        log_sq = logsumexp(term_log, axis=1)
        out[COV_MMD] = {"log_key": log_sq, "value": _value_from_log_sq(log_sq)}
    return out


# ----------------------------------------------------------------------
# validation + single-shot statistic values
# ----------------------------------------------------------------------

def _check_regression(ds: FunctionalDataset, design: DesignMatrix) -> np.ndarray:
    X = design.X
    if X.shape[0] != ds.n:
        raise InvalidArgumentError("design rows must match sample count")
    if X.shape[1] != 2:
        raise InvalidArgumentError("regression statistics need intercept + one covariate")
    if not np.allclose(X[:, 0], 1.0):
        raise InvalidArgumentError("first design column must be the intercept")
    if ds.n < 3:
        raise UnderDeterminedError("regression statistics need at least 3 samples")
    return X[:, 1].copy()


def _check_groups(ds: FunctionalDataset, min_size: int = 2) -> np.ndarray:
    if ds.groups is None:
        raise InvalidArgumentError("dataset has no group labels")
    k = ds.n_groups
    if k < 2:
        raise InvalidArgumentError("need at least two groups")
    sizes = ds.group_sizes()
    if sizes.min() < min_size:
        raise InvalidArgumentError(f"every group needs at least {min_size} samples")
    return ds.groups


def _identity_rows(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.intp)[None, :]


def mmds_statistic(ds: FunctionalDataset, design: DesignMatrix, sigma: float = DEFAULT_SIGMA[MMDS]) -> float:
    """Sum-kernel MMD between the intercept-only and full regression plugins."""
    x = _check_regression(ds, design)
    res = regression_engine(ds.coeffs, x, _identity_rows(ds.n), {MMDS: sigma}, want=(MMDS,))
    return float(res[MMDS]["value"][0])


def mmdp_statistic(ds: FunctionalDataset, design: DesignMatrix, sigma: float = DEFAULT_SIGMA[MMDP]) -> float:
    """Product-kernel MMD between the intercept-only and full regression plugins."""
    x = _check_regression(ds, design)
    res = regression_engine(ds.coeffs, x, _identity_rows(ds.n), {MMDP: sigma}, want=(MMDP,))
    return float(res[MMDP]["value"][0])


def l2_slope_statistic(ds: FunctionalDataset, design: DesignMatrix) -> float:
    """Squared L2 norm of the fitted slope function."""
    x = _check_regression(ds, design)
    res = regression_engine(ds.coeffs, x, _identity_rows(ds.n), {}, want=(L2_SLOPE,))
    return float(res[L2_SLOPE]["value"][0])


def anova_mmd0_statistic(ds: FunctionalDataset, sigma: float = DEFAULT_SIGMA[ANOVA_MMD0]) -> float:
    """Weighted whitened distance of group means from the grand mean."""
    groups = _check_groups(ds)
    res = anova_engine(ds.coeffs, groups, _identity_rows(ds.n), sigma, want=(ANOVA_MMD0,))
    return float(res[ANOVA_MMD0]["value"][0])


def cov_mmd_statistic(ds: FunctionalDataset, sigma: float = DEFAULT_SIGMA[COV_MMD]) -> float:
    """Root of the weighted sum of per-group embedding distances to the pool."""
    groups = _check_groups(ds)
    res = cov_engine(ds.coeffs, groups, _identity_rows(ds.n), sigma, want=(COV_MMD,))
    return float(res[COV_MMD]["value"][0])


# ----------------------------------------------------------------------
# the permutation test
# ----------------------------------------------------------------------

def _center_by_groups(Y: np.ndarray, groups: np.ndarray) -> np.ndarray:
    out = Y.copy()
    for g in range(1, int(groups.max()) + 1):
        mask = groups == g
        out[mask] -= Y[mask].mean(axis=0)
    return out


def _run_engine(statistic: str, ds: FunctionalDataset, perms: np.ndarray, sigma: float | None):
    if statistic in _REGRESSION_STATS:
        if ds.covariates is None or ds.covariates.shape[1] != 1:
            raise InvalidArgumentError("regression statistics need exactly one covariate")
        design = DesignMatrix.with_intercept(ds.covariates)
        x = _check_regression(ds, design)
        sigmas = {} if statistic == L2_SLOPE else {statistic: sigma}
        return regression_engine(ds.coeffs, x, perms, sigmas, want=(statistic,))[statistic]
    if statistic in _ANOVA_STATS:
        groups = _check_groups(ds)
        return anova_engine(ds.coeffs, groups, perms, sigma, want=(statistic,))[statistic]
    if statistic in _COV_STATS:
        groups = _check_groups(ds)
        Yc = _center_by_groups(ds.coeffs, groups)
        return cov_engine(Yc, groups, perms, sigma, want=(statistic,))[statistic]
    raise InvalidArgumentError(f"unknown statistic {statistic!r}")


def scheme_for(statistic: str) -> PermutationScheme:
    try:
        return DEFAULT_SCHEME[statistic]
    except KeyError:
        raise InvalidArgumentError(f"unknown statistic {statistic!r}") from None


def permutation_test(
    statistic: str,
    ds: FunctionalDataset,
    scheme: PermutationScheme | None = None,
    B: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
    sigma: float | None = None,
) -> TestResult:
    """Permutation p-value for a named statistic.

    The p-value uses the add-one convention (1 + #{permuted >= observed}) /
    (B + 1); with equal seeds the result is bit-identical regardless of how
    the permutation rows are scheduled.
    """
    if B < MIN_PERMUTATIONS:
        raise InsufficientPermutationsError(f"need at least {MIN_PERMUTATIONS} permutations")
    expected = scheme_for(statistic)
    if scheme is not None and scheme != expected:
        raise InvalidArgumentError(
            f"statistic {statistic!r} requires scheme {expected.value!r}"
        )
    if sigma is None:
        sigma = DEFAULT_SIGMA.get(statistic)
    perms = permutation_rows(ds.n, B, seed)
    res = _run_engine(statistic, ds, perms, sigma)
    keys = res["log_key"]
    count = int(np.count_nonzero(keys[1:] >= keys[0]))
    p_value = (1 + count) / (B + 1)
    return TestResult(
        statistic=float(res["value"][0]),
        p_value=p_value,
        permutations=B,
        seed=int(seed),
        statistic_name=statistic,
    )
