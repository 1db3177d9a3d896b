"""Grids, orthonormal basis systems and coefficient-space functional data.

Every function is represented by its coefficients in an orthonormalized basis
on a fixed grid, so inner products are plain dot products and covariance
operators are K x K symmetric matrices.  Raw discretized curves enter through
``smooth_project`` (least squares onto the basis span) and never leave
coefficient space afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    BasisMismatchError,
    IllConditionedBasisError,
    InvalidArgumentError,
    OverParameterizedBasisError,
)
from .operators import CovOperator, eigh_psd

FOURIER = "fourier"
BSPLINE = "bspline"


@dataclass(frozen=True)
class Grid:
    """Strictly increasing time points inside [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidArgumentError("grid needs at least two points")
        if np.any(np.diff(pts) <= 0):
            raise InvalidArgumentError("grid points must be strictly increasing")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise InvalidArgumentError("grid points must lie in [0, 1]")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.size

    def trapezoid_weights(self) -> np.ndarray:
        """Trapezoid-rule quadrature weights on the grid points."""
        t = self.points
        w = np.empty_like(t)
        w[0] = (t[1] - t[0]) / 2.0
        w[-1] = (t[-1] - t[-2]) / 2.0
        w[1:-1] = (t[2:] - t[:-2]) / 2.0
        return w


def make_grid(size: int) -> Grid:
    """Balanced design grid t_j = j / (size + 1), j = 1..size."""
    if size < 2:
        raise InvalidArgumentError("grid size must be at least 2")
    j = np.arange(1, size + 1, dtype=float)
    return Grid(j / (size + 1))


def fourier_values(t: np.ndarray, size: int) -> np.ndarray:
    """Columns 1, sqrt2 sin(2 pi r t), sqrt2 cos(2 pi r t) for r = 1, 2, ..."""
    t = np.asarray(t, dtype=float)
    out = np.empty((t.size, size))
    out[:, 0] = 1.0
    for col in range(1, size):
        r = (col + 1) // 2
        arg = 2.0 * np.pi * r * t
        out[:, col] = np.sqrt(2.0) * (np.sin(arg) if col % 2 == 1 else np.cos(arg))
    return out


def bspline_values(t: np.ndarray, size: int, order: int) -> np.ndarray:
    """Open-uniform B-spline basis of the given order on [0, 1]."""
    interior = np.linspace(0.0, 1.0, size - order + 2)[1:-1]
    knots = np.concatenate([np.zeros(order), interior, np.ones(order)])
    return BSpline.design_matrix(
        np.asarray(t, dtype=float), knots, order - 1, extrapolate=False
    ).toarray()


class BasisSystem:
    """Orthonormalized basis on a grid.

    ``design`` holds the orthonormalized basis values (T x K): its Gram matrix
    under the trapezoid quadrature of the grid is the identity.
    ``orthonormalizer`` maps raw-basis coefficients to orthonormal coordinates.
    """

    def __init__(self, kind: str, size: int, grid: Grid, order: int = 4):
        if size < 1:
            raise InvalidArgumentError("basis size must be positive")
        if size > grid.size:
            raise OverParameterizedBasisError(
                f"basis size {size} exceeds grid size {grid.size}"
            )
        if kind == FOURIER:
            raw = fourier_values(grid.points, size)
        elif kind == BSPLINE:
            if order < 2:
                raise InvalidArgumentError("B-spline order must be at least 2")
            if size < order:
                raise InvalidArgumentError("B-spline basis size must be >= order")
            raw = bspline_values(grid.points, size, order)
        else:
            raise InvalidArgumentError(f"unknown basis kind {kind!r}")

        weights = grid.trapezoid_weights()
        gram = raw.T @ (weights[:, None] * raw)
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedBasisError("basis Gram matrix is not positive definite") from exc
        diag = np.diag(chol)
        if diag.min() < 1e-8 * diag.max():
            raise IllConditionedBasisError("basis Gram matrix is numerically singular")

        self.kind = kind
        self.order = order if kind == BSPLINE else None
        self.size = size
        self.grid = grid
        self.weights = weights
        # raw coeffs -> orthonormal coords is chol.T; columns of design are orthonormal
        self.orthonormalizer = chol.T
        self.design = np.linalg.solve(chol, raw.T).T
        # plain least-squares projector onto the design columns
        self._projector = np.linalg.pinv(self.design)

    def compatible(self, other: "BasisSystem") -> bool:
        if self is other:
            return True
        return (
            isinstance(other, BasisSystem)
            and self.kind == other.kind
            and self.order == other.order
            and self.size == other.size
            and self.grid.size == other.grid.size
            and np.array_equal(self.grid.points, other.grid.points)
        )

    def __repr__(self):
        return f"BasisSystem({self.kind!r}, size={self.size}, grid={self.grid.size})"


def build_basis(kind: str, size: int, grid: Grid, order: int = 4) -> BasisSystem:
    """Orthonormalized basis system of the given kind and size on the grid."""
    return BasisSystem(kind, size, grid, order=order)


def _require_same_basis(a: "Fn", b: "Fn"):
    if not a.basis.compatible(b.basis):
        raise BasisMismatchError("functions live in different basis systems")


@dataclass(frozen=True)
class Fn:
    """A function as a coefficient vector in an orthonormal basis."""

    coeffs: np.ndarray
    basis: BasisSystem

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.basis.size,):
            raise InvalidArgumentError(
                f"expected {self.basis.size} coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def values(self, grid: Grid | None = None) -> np.ndarray:
        """Function values on the basis grid (or a compatible explicit grid)."""
        if grid is None or grid is self.basis.grid:
            return self.basis.design @ self.coeffs
        raise InvalidArgumentError("evaluation off the basis grid is not supported")

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other: "Fn") -> "Fn":
        _require_same_basis(self, other)
        return Fn(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other: "Fn") -> "Fn":
        _require_same_basis(self, other)
        return Fn(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar: float) -> "Fn":
        return Fn(self.coeffs * float(scalar), self.basis)

    __rmul__ = __mul__

    def __neg__(self) -> "Fn":
        return Fn(-self.coeffs, self.basis)


def inner(f: Fn, g: Fn) -> float:
    """L2 inner product, exact in orthonormal coordinates."""
    _require_same_basis(f, g)
    return float(f.coeffs @ g.coeffs)


@dataclass(frozen=True)
class FunctionalDataset:
    """A sample of functions with optional scalar covariates and group labels."""

    coeffs: np.ndarray
    basis: BasisSystem
    covariates: np.ndarray | None = None
    groups: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1] != self.basis.size:
            raise InvalidArgumentError("coefficient matrix must be n x K")
        object.__setattr__(self, "coeffs", coeffs)
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != coeffs.shape[0]:
                raise InvalidArgumentError("covariate rows must match sample count")
            object.__setattr__(self, "covariates", cov)
        if self.groups is not None:
            grp = np.asarray(self.groups, dtype=int)
            if grp.shape != (coeffs.shape[0],):
                raise InvalidArgumentError("group labels must match sample count")
            labels = np.unique(grp)
            if labels.size == 0 or labels[0] != 1 or np.any(np.diff(labels) != 1):
                raise InvalidArgumentError("group indices must be contiguous from 1")
            object.__setattr__(self, "groups", grp)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_groups(self) -> int:
        return 0 if self.groups is None else int(self.groups.max())

    def group_sizes(self) -> np.ndarray:
        if self.groups is None:
            raise InvalidArgumentError("dataset has no group labels")
        return np.bincount(self.groups - 1, minlength=self.n_groups)

    def sample(self, i: int) -> Fn:
        return Fn(self.coeffs[i], self.basis)

    @property
    def samples(self) -> list:
        return [Fn(row, self.basis) for row in self.coeffs]


def smooth_project(
    raw: np.ndarray,
    basis: BasisSystem,
    covariates: np.ndarray | None = None,
    groups: np.ndarray | None = None,
    provenance: dict | None = None,
) -> FunctionalDataset:
    """Least-squares projection of raw curve values onto the basis span."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.shape[1] != basis.grid.size:
        raise InvalidArgumentError(
            f"curves have {raw.shape[1]} values but grid has {basis.grid.size} points"
        )
    coeffs = raw @ basis._projector.T
    return FunctionalDataset(
        coeffs, basis, covariates=covariates, groups=groups, provenance=provenance or {}
    )


def sample_mean(ds: FunctionalDataset, subset=None) -> Fn:
    """Coefficient-wise average over the dataset (or an index subset)."""
    rows = ds.coeffs if subset is None else ds.coeffs[np.asarray(subset, dtype=int)]
    if rows.shape[0] == 0:
        raise InvalidArgumentError("cannot average an empty subset")
    return Fn(rows.mean(axis=0), ds.basis)


GRAND_MEAN = "grand"
GROUP_MEAN = "group"


def sample_cov(ds: FunctionalDataset, center: str | None = GRAND_MEAN) -> CovOperator:
    """Second-moment operator with divisor n, optionally centered.

    center: ``"grand"`` subtracts the overall mean, ``"group"`` subtracts each
    sample's group mean, ``None`` leaves samples uncentered.
    """
    Y = ds.coeffs
    n = Y.shape[0]
    if n < 1:
        raise InvalidArgumentError("dataset is empty")
    if center is None:
        dev = Y
    elif center == GRAND_MEAN:
        if n < 2:
            raise InvalidArgumentError("centering requires at least two samples")
        dev = Y - Y.mean(axis=0)
    elif center == GROUP_MEAN:
        if ds.groups is None:
            raise InvalidArgumentError("group centering requires group labels")
        if n < 2:
            raise InvalidArgumentError("centering requires at least two samples")
        dev = Y.copy()
        for g in range(1, ds.n_groups + 1):
            mask = ds.groups == g
            dev[mask] -= Y[mask].mean(axis=0)
    else:
        raise InvalidArgumentError(f"unknown centering mode {center!r}")
    second_moment = dev.T @ dev / n
    return eigh_psd(second_moment, basis=ds.basis)
