"""Spectral primitives for finite-rank covariance operators.

A covariance operator is stored as an eigensystem (nonincreasing nonnegative
eigenvalues plus orthonormal eigenvector rows in basis coordinates), so that
shifted determinants ``|I + cC|`` and resolvent quadratic forms stay cheap and
stable in the log domain even for shifts of order 1e5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BasisMismatchError,
    InvalidArgumentError,
    NotPositiveSemidefiniteError,
)

PSD_TOL = 1e-10
SYM_TOL = 1e-10


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its first non-negligible entry is positive."""
    out = np.array(vectors, dtype=float, copy=True)
    for row in out:
        scale = np.abs(row).max() if row.size else 0.0
        if scale == 0.0:
            continue
        nz = np.flatnonzero(np.abs(row) > 1e-12 * max(1.0, scale))
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return out


@dataclass(frozen=True)
class CovOperator:
    """Finite-rank PSD operator: eigenvalues (descending) and eigenvector rows.

    ``eigenfuncs`` has shape (r, K): row j holds the coefficients of the j-th
    eigenfunction in the shared orthonormal basis.  Directions orthogonal to
    all stored eigenfunctions carry eigenvalue zero.
    """

    eigenvalues: np.ndarray
    eigenfuncs: np.ndarray
    basis: object | None = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenfuncs, dtype=float)
        if lam.ndim != 1 or vecs.ndim != 2 or vecs.shape[0] != lam.size:
            raise InvalidArgumentError("eigenvalues and eigenfunction rows disagree in shape")
        if lam.size and np.any(np.diff(lam) > 0):
            raise InvalidArgumentError("eigenvalues must be nonincreasing")
        if lam.size and lam[-1] < 0:
            raise NotPositiveSemidefiniteError("negative eigenvalue in covariance operator")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenfuncs", vecs)

    @property
    def dim(self) -> int:
        return self.eigenfuncs.shape[1]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > 0))

    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def to_matrix(self) -> np.ndarray:
        """Dense K x K realization ``sum_j lambda_j psi_j psi_j^T``."""
        if self.eigenvalues.size == 0:
            return np.zeros((self.dim, self.dim))
        return (self.eigenfuncs.T * self.eigenvalues) @ self.eigenfuncs

    def scaled(self, alpha: float) -> "CovOperator":
        if alpha < 0:
            raise InvalidArgumentError("scale factor must be nonnegative")
        return CovOperator(self.eigenvalues * alpha, self.eigenfuncs, self.basis)

    @staticmethod
    def zero(dim: int, basis: object | None = None) -> "CovOperator":
        return CovOperator(np.zeros(0), np.zeros((0, dim)), basis)


# EigenSystem and CovOperator share one representation.
EigenSystem = CovOperator


def eigh_psd(matrix: np.ndarray, basis: object | None = None) -> CovOperator:
    """Eigensystem of a symmetric PSD matrix, eigenvalues descending.

    Eigenvalues in [-PSD_TOL, 0) are clamped to zero; anything below -PSD_TOL
    is treated as a genuine PSD violation.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError("expected a square matrix")
    scale = max(1.0, float(np.abs(M).max()) if M.size else 0.0)
    if float(np.abs(M - M.T).max()) > SYM_TOL * scale:
        raise InvalidArgumentError("matrix is not symmetric within tolerance")
    lam, vecs = np.linalg.eigh((M + M.T) / 2.0)
    if lam.size and lam[0] < -PSD_TOL * scale:
        raise NotPositiveSemidefiniteError(
            f"eigenvalue {lam[0]:.3e} below -{PSD_TOL:.0e} tolerance"
        )
    lam = np.clip(lam[::-1], 0.0, None)
    rows = _fix_signs(vecs[:, ::-1].T)
    return CovOperator(lam, rows, basis)


def _as_coeffs(v) -> np.ndarray:
    coeffs = getattr(v, "coeffs", v)
    return np.asarray(coeffs, dtype=float)


def _check_vector(C: CovOperator, v) -> np.ndarray:
    vb = getattr(v, "basis", None)
    if C.basis is not None and vb is not None and not _bases_match(C.basis, vb):
        raise BasisMismatchError("vector and operator live in different bases")
    coeffs = _as_coeffs(v)
    if coeffs.shape != (C.dim,):
        raise BasisMismatchError(
            f"vector dimension {coeffs.shape} does not match operator dimension {C.dim}"
        )
    return coeffs


def _bases_match(a, b) -> bool:
    if a is b:
        return True
    compat = getattr(a, "compatible", None)
    return bool(compat(b)) if compat is not None else False


def log_det_shifted(C: CovOperator, c: float) -> float:
    """``log |I + cC| = sum_j log(1 + c lambda_j)`` over stored eigenvalues."""
    if not c > 0:
        raise InvalidArgumentError("shift c must be positive")
    return float(np.log1p(c * C.eigenvalues).sum())


def det_inv_sqrt_shifted(C: CovOperator, c: float) -> float:
    """``|I + cC|^{-1/2}`` evaluated through the log domain."""
    return float(np.exp(-0.5 * log_det_shifted(C, c)))


def resolvent_quad_form(C: CovOperator, c: float, v) -> float:
    """``<(I + cC)^{-1} v, v>`` with the complement of the eigenspace at lambda=0."""
    if not c > 0:
        raise InvalidArgumentError("shift c must be positive")
    coeffs = _check_vector(C, v)
    total = float(coeffs @ coeffs)
    if C.eigenvalues.size == 0:
        return total
    proj = C.eigenfuncs @ coeffs
    quad = total - float(proj @ proj) + float((proj * proj / (1.0 + c * C.eigenvalues)).sum())
    return max(quad, 0.0)
