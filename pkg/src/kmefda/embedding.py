"""Closed-form embeddings of Gaussian measures under the squared-exponential kernel.

For a Gaussian measure P = N(mu, C) and kernel k(x, y) = exp(-sigma ||x-y||^2):

  m_P(x)        = |I + 2 sigma C|^{-1/2} exp(-sigma <(I + 2 sigma C)^{-1}(x - mu), x - mu>)
  ||m_P||^2     = |I + 4 sigma C|^{-1/2}
  <m_P, m_Q>    = |I + 2 sigma (C_P + C_Q)|^{-1/2} exp(-sigma <(I + 2 sigma (C_P + C_Q))^{-1} d, d>)

with d = mu_P - mu_Q.  Every quantity carries a log-domain form; the linear
value is exp() of it, which may underflow to zero for very large sigma while
the log form stays finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BasisMismatchError,
    InvalidArgumentError,
    NumericalInconsistencyError,
)
from .funcspace import Fn, FunctionalDataset, inner
from .operators import (
    CovOperator,
    det_inv_sqrt_shifted,
    eigh_psd,
    log_det_shifted,
    resolvent_quad_form,
)

MMD_CLAMP = 1e-12
MMD_ERROR = 1e-9


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian measure N(mean, cov) in shared basis coordinates."""

    mean: Fn
    cov: CovOperator

    def __post_init__(self):
        if self.cov.dim != self.mean.coeffs.size:
            raise BasisMismatchError("mean and covariance dimensions differ")
        if self.cov.basis is not None and not self.mean.basis.compatible(self.cov.basis):
            raise BasisMismatchError("mean and covariance live in different bases")


@dataclass(frozen=True)
class KernelConfig:
    """Kernel bandwidth and the product/sum variant used on sample spaces."""

    sigma: float
    variant: str = "sum"

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.variant not in ("sum", "product"):
            raise InvalidArgumentError("variant must be 'sum' or 'product'")


def _check_sigma(sigma: float):
    if not sigma > 0:
        raise InvalidArgumentError("sigma must be positive")


def gaussian_kernel(x: Fn, y: Fn, sigma: float) -> float:
    """exp(-sigma ||x - y||^2)."""
    _check_sigma(sigma)
    d = (x - y).coeffs
    return float(np.exp(-sigma * (d @ d)))


def log_kernel_mean_at(P: GaussianMeasure, x: Fn, sigma: float) -> float:
    """log m_P(x); finite for every sigma > 0."""
    _check_sigma(sigma)
    diff = x - P.mean
    quad = resolvent_quad_form(P.cov, 2.0 * sigma, diff)
    return -0.5 * log_det_shifted(P.cov, 2.0 * sigma) - sigma * quad


def kernel_mean_at(P: GaussianMeasure, x: Fn, sigma: float) -> float:
    """Kernel mean function of P evaluated at x, in (0, 1]."""
    return float(math.exp(log_kernel_mean_at(P, x, sigma)))


def log_kernel_mean_norm_sq(P: GaussianMeasure, sigma: float) -> float:
    _check_sigma(sigma)
    return -0.5 * log_det_shifted(P.cov, 4.0 * sigma)


def kernel_mean_norm_sq(P: GaussianMeasure, sigma: float) -> float:
    """Squared RKHS norm of the embedding; depends on the covariance only."""
    _check_sigma(sigma)
    return det_inv_sqrt_shifted(P.cov, 4.0 * sigma)


def cov_sum(a: CovOperator, b: CovOperator) -> CovOperator:
    """Eigensystem of the dense sum of two operators in one basis."""
    if a.dim != b.dim:
        raise BasisMismatchError("operators have different ambient dimensions")
    basis = a.basis if a.basis is not None else b.basis
    if a.basis is not None and b.basis is not None and not _compat(a.basis, b.basis):
        raise BasisMismatchError("operators live in different bases")
    return eigh_psd(a.to_matrix() + b.to_matrix(), basis=basis)


def _compat(a, b) -> bool:
    if a is b:
        return True
    compat = getattr(a, "compatible", None)
    return bool(compat(b)) if compat is not None else False


def log_kernel_mean_inner(P: GaussianMeasure, Q: GaussianMeasure, sigma: float) -> float:
    _check_sigma(sigma)
    S = cov_sum(P.cov, Q.cov)
    diff = P.mean - Q.mean
    quad = resolvent_quad_form(S, 2.0 * sigma, diff)
    return -0.5 * log_det_shifted(S, 2.0 * sigma) - sigma * quad


def kernel_mean_inner(P: GaussianMeasure, Q: GaussianMeasure, sigma: float) -> float:
    """RKHS inner product of two Gaussian embeddings, in (0, 1]."""
    return float(math.exp(log_kernel_mean_inner(P, Q, sigma)))


def mmd_sq_gaussian(P: GaussianMeasure, Q: GaussianMeasure, sigma: float) -> float:
    """Squared MMD between two Gaussian measures; zero iff P = Q."""
    la = log_kernel_mean_norm_sq(P, sigma)
    lb = log_kernel_mean_norm_sq(Q, sigma)
    lc = math.log(2.0) + log_kernel_mean_inner(P, Q, sigma)
    m = max(la, lb, lc)
    value = math.exp(m) * (math.exp(la - m) + math.exp(lb - m) - math.exp(lc - m))
    if value < 0.0:
        if value < -MMD_ERROR:
            raise NumericalInconsistencyError(f"squared MMD came out {value:.3e}")
        value = 0.0
    return float(value)


def log_kernel_mean_product(
    samples: FunctionalDataset, means: list, C: CovOperator, sigma: float
) -> float:
    """Log kernel mean of the n-fold product measure at the observed sample.

    ``means[i]`` is the mean function of the i-th factor; all factors share the
    covariance C.  Equals ``sum_i log m_{N(means_i, C)}(y_i)``.
    """
    _check_sigma(sigma)
    n = samples.n
    if len(means) != n:
        raise InvalidArgumentError("need exactly one mean per sample")
    total_quad = 0.0
    for i in range(n):
        diff = samples.sample(i) - means[i]
        total_quad += resolvent_quad_form(C, 2.0 * sigma, diff)
    return -sigma * total_quad - 0.5 * n * log_det_shifted(C, 2.0 * sigma)


def kernel_score(P: GaussianMeasure, x: Fn, sigma: float) -> float:
    """Kernel scoring rule S(P, x) = -m_P(x) + ||m_P||^2 / 2; proper and strict."""
    return -kernel_mean_at(P, x, sigma) + 0.5 * kernel_mean_norm_sq(P, sigma)
