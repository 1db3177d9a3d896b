"""Regression and covariance estimators obtained by maximizing the kernel mean.

For function-on-scalar regression with Gaussian errors the maximizer of the
product-measure kernel mean coincides with coefficient-wise OLS, so the fit is
computed by ordinary least squares.  The covariance under a fitted design is
estimated from error contrasts (the annihilator eigenvectors of the hat
matrix), and the bandwidth-dependent eigenvalue estimator subtracts 1/(2 sigma)
from each raw eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularDesignError, UnderDeterminedError
from .funcspace import Fn, FunctionalDataset
from .operators import CovOperator, _fix_signs, eigh_psd


@dataclass(frozen=True)
class DesignMatrix:
    """n x p regression design with full column rank (checked at fit time)."""

    X: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise InvalidArgumentError("design matrix must be two-dimensional")
        object.__setattr__(self, "X", X)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"x{j+1}" for j in range(X.shape[1])))
        elif len(self.labels) != X.shape[1]:
            raise InvalidArgumentError("one label per design column required")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @staticmethod
    def with_intercept(covariates: np.ndarray) -> "DesignMatrix":
        """Design [1, covariates] with an explicit intercept column."""
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        X = np.column_stack([np.ones(cov.shape[0]), cov])
        labels = ("intercept",) + tuple(f"x{j+1}" for j in range(cov.shape[1]))
        return DesignMatrix(X, labels)


@dataclass(frozen=True)
class FittedRegression:
    """OLS fit: functional coefficients, residuals and restricted covariance."""

    beta: tuple
    residuals: tuple
    cov: CovOperator
    design: DesignMatrix


def _validate_design(ds: FunctionalDataset, design: DesignMatrix):
    X = design.X
    if X.shape[0] != ds.n:
        raise InvalidArgumentError("design rows must match sample count")
    if ds.n <= design.p:
        raise UnderDeterminedError(f"need more than p={design.p} samples, got {ds.n}")
    if np.linalg.matrix_rank(X) < design.p:
        raise SingularDesignError("design matrix is rank deficient")


def ols_fit(ds: FunctionalDataset, design: DesignMatrix) -> FittedRegression:
    """Coefficient-wise least squares; also the kernel-mean maximizer."""
    _validate_design(ds, design)
    X, Y = design.X, ds.coeffs
    n, p = X.shape
    beta_mat = np.linalg.solve(X.T @ X, X.T @ Y)
    resid = Y - X @ beta_mat
    cov = eigh_psd(resid.T @ resid / (n - p), basis=ds.basis)
    beta = tuple(Fn(row, ds.basis) for row in beta_mat)
    residuals = tuple(Fn(row, ds.basis) for row in resid)
    return FittedRegression(beta, residuals, cov, design)


def error_contrasts(ds: FunctionalDataset, design: DesignMatrix) -> list:
    """Contrast functions u_i^T Y for the unit-eigenvalue annihilator directions.

    The u_i are the eigenvectors of I - X (X^T X)^{-1} X^T with eigenvalue 1,
    ordered by the symmetric eigendecomposition and sign-fixed so the first
    non-negligible entry of each vector is positive.
    """
    _validate_design(ds, design)
    X = design.X
    n, p = X.shape
    hat = X @ np.linalg.solve(X.T @ X, X.T)
    annihilator = np.eye(n) - hat
    lam, vecs = np.linalg.eigh((annihilator + annihilator.T) / 2.0)
    keep = lam > 0.5
    if int(keep.sum()) != n - p:
        raise SingularDesignError("annihilator rank does not match n - p")
    U = _fix_signs(vecs[:, keep].T)
    contrast_rows = U @ ds.coeffs
    return [Fn(row, ds.basis) for row in contrast_rows]


def restricted_cov(contrasts: list) -> CovOperator:
    """(1 / m) sum_i y*_i (x) y*_i over m error contrasts."""
    if not contrasts:
        raise InvalidArgumentError("need at least one contrast")
    rows = np.stack([c.coeffs for c in contrasts])
    return eigh_psd(rows.T @ rows / rows.shape[0], basis=contrasts[0].basis)


def mkm_cov_eigen(ds: FunctionalDataset, sigma: float) -> CovOperator:
    """Bandwidth-corrected covariance eigensystem for the zero-mean model.

    Eigenfunctions are those of (1/n) sum_i y_i (x) y_i; each raw eigenvalue is
    shrunk by 1/(2 sigma) and clamped at zero.  sigma = inf gives the
    uncorrected limit.
    """
    if not sigma > 0:
        raise InvalidArgumentError("sigma must be positive (or inf)")
    Y = ds.coeffs
    raw = eigh_psd(Y.T @ Y / ds.n, basis=ds.basis)
    if math.isinf(sigma):
        return raw
    lam = np.clip(raw.eigenvalues - 1.0 / (2.0 * sigma), 0.0, None)
    return CovOperator(lam, raw.eigenfuncs, raw.basis)


def small_ball_fit(
    ds: FunctionalDataset, design: DesignMatrix, eigensystem: CovOperator, h: int
) -> tuple:
    """OLS on samples projected onto the top-h eigenfunctions."""
    _validate_design(ds, design)
    if not 1 <= h <= eigensystem.eigenvalues.size:
        raise InvalidArgumentError(f"h must be in 1..{eigensystem.eigenvalues.size}")
    top = eigensystem.eigenfuncs[:h]
    projected = (ds.coeffs @ top.T) @ top
    X = design.X
    beta_mat = np.linalg.solve(X.T @ X, X.T @ projected)
    return tuple(Fn(row, ds.basis) for row in beta_mat)


def components_for_radius(eigensystem: CovOperator, radius: float) -> int:
    """Largest h with lambda_h >= radius^2 (the radius/component coupling)."""
    if not radius > 0:
        raise InvalidArgumentError("radius must be positive")
    return int(np.count_nonzero(eigensystem.eigenvalues >= radius * radius))
