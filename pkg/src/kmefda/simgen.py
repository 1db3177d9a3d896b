"""Seeded generators for the three simulation protocols.

Protocols
---------
fos      Function-on-scalar regression y_i(t) = 2t + x_i (-c0 cos(pi t)) + e_i(t)
         with e_i a mean-zero Gaussian process whose covariance kernel is
         squared-exponential exp(-|s-t|^2 / rho) or exponential exp(-|s-t| / rho),
         and x_i i.i.d. standard normal.
anova    One-way layout y_ij(t) = c_i^T [1, t, t^2, t^3] + sum_r sqrt(l_r) z_ijr f_r(t)
         with l_r = a rho^{r-1}, f_1 = 1, f_{2r} = sqrt2 sin(2 pi r t),
         f_{2r+1} = sqrt2 cos(2 pi r t), c_i = c_1 + (i-1) delta u.
cov      k-regime scheme y_ij(t) = h(t) sum_r sqrt(l_r) z_ijr f_ir(t) with
         h(t) = T/(t+1), f_ir = f_r except f_i2 = f_2 + (i-1) omega / h(t),
         so group i gains an extra constant-direction variance component.

Draws are synthesized in eigen-coordinates (exact at finite rank) and then
evaluated on the grid; every replicate uses the counter-based stream
(seed, 0, replicate).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .errors import InvalidArgumentError
from .funcspace import (
    BSPLINE,
    FOURIER,
    BasisSystem,
    Grid,
    bspline_values,
    build_basis,
    fourier_values,
    make_grid,
)
from .operators import CovOperator, eigh_psd

SQEXP = "sqexp"
EXP = "exp"

PROTOCOL_FOS = "fos"
PROTOCOL_ANOVA = "anova"
PROTOCOL_COV = "cov"

# unit-variance noise menu: t_4 / sqrt(2) and sqrt(3/5) t_5
NOISE_SCALES = {"normal": None, "t4": (4.0, 1.0 / np.sqrt(2.0)), "t5": (5.0, np.sqrt(0.6))}


@dataclass(frozen=True)
class NoiseDist:
    """Unit-variance score distribution: standard normal or scaled Student t."""

    kind: str = "normal"
    df: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "normal":
            return
        if self.kind == "t":
            if self.df is None or self.df <= 2:
                raise InvalidArgumentError("t noise needs df > 2 for a finite variance")
            return
        raise InvalidArgumentError(f"unknown noise kind {self.kind!r}")

    @staticmethod
    def from_name(name: str) -> "NoiseDist":
        if name not in NOISE_SCALES:
            raise InvalidArgumentError(f"unknown noise name {name!r}")
        if name == "normal":
            return NoiseDist("normal")
        df, scale = NOISE_SCALES[name]
        return NoiseDist("t", df=df, scale=scale)


def draw_noise(dist: NoiseDist, size, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws from the unit-variance family."""
    if dist.kind == "normal":
        return rng.standard_normal(size)
    return dist.scale * rng.standard_t(dist.df, size)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a generator needs; identical configs give identical output."""

    protocol: str
    group_sizes: tuple = (30,)
    grid_size: int = 80
    effect: float = 0.0
    cov_kind: str = SQEXP
    rho: float = 1.0
    decay_scale: float = 1.5
    n_components: int = 11
    noise: str = "normal"
    family_basis: str = FOURIER
    smooth_basis: str = FOURIER
    smooth_components: int = 41
    seed: int = 0
    tag: str = ""

    def __post_init__(self):
        if self.protocol not in (PROTOCOL_FOS, PROTOCOL_ANOVA, PROTOCOL_COV):
            raise InvalidArgumentError(f"unknown protocol {self.protocol!r}")
        if self.effect < 0:
            raise InvalidArgumentError("effect size must be nonnegative")
        if any(n < 1 for n in self.group_sizes):
            raise InvalidArgumentError("group sizes must be positive")
        if self.protocol == PROTOCOL_FOS:
            if self.rho <= 0:
                raise InvalidArgumentError("rho must be positive")
            if self.cov_kind not in (SQEXP, EXP):
                raise InvalidArgumentError(f"unknown covariance kind {self.cov_kind!r}")
        else:
            if not 0 < self.rho < 1:
                raise InvalidArgumentError("eigenvalue decay rho must be in (0, 1)")
            if self.n_components < 1:
                raise InvalidArgumentError("need at least one variance component")
        NoiseDist.from_name(self.noise)

    @property
    def n_total(self) -> int:
        return int(sum(self.group_sizes))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


def fos_config(n=30, m=20, c0=0.0, cov_kind=SQEXP, rho=1.0, seed=0, noise="normal") -> ScenarioConfig:
    return ScenarioConfig(
        protocol=PROTOCOL_FOS, group_sizes=(n,), grid_size=m, effect=c0,
        cov_kind=cov_kind, rho=rho, noise=noise, smooth_basis=FOURIER, seed=seed,
    )


def anova_config(sizes=(20, 30, 30), rho=0.1, delta=0.0, noise="normal", seed=0, T=80) -> ScenarioConfig:
    return ScenarioConfig(
        protocol=PROTOCOL_ANOVA, group_sizes=tuple(sizes), grid_size=T, effect=delta,
        rho=rho, n_components=11, noise=noise, smooth_basis=BSPLINE, seed=seed,
    )


def cov_config(sizes=(20, 30, 30), rho=0.5, omega=0.0, noise="normal", seed=0, T=80,
               family_basis=FOURIER) -> ScenarioConfig:
    return ScenarioConfig(
        protocol=PROTOCOL_COV, group_sizes=tuple(sizes), grid_size=T, effect=omega,
        rho=rho, n_components=41, noise=noise, family_basis=family_basis,
        smooth_basis=BSPLINE, seed=seed,
    )


def matern_cov(kind: str, rho: float, grid: Grid, basis: BasisSystem) -> CovOperator:
    """Grid-evaluated stationary kernel projected into basis coordinates.

    kind 'sqexp' uses exp(-|s-t|^2 / rho), 'exp' uses exp(-|s-t| / rho); the
    operator in coefficient space is B^T W K W B with trapezoid weights W.
    """
    if rho <= 0:
        raise InvalidArgumentError("rho must be positive")
    t = grid.points
    gaps = np.abs(t[:, None] - t[None, :])
    if kind == SQEXP:
        kernel = np.exp(-(gaps**2) / rho)
    elif kind == EXP:
        kernel = np.exp(-gaps / rho)
    else:
        raise InvalidArgumentError(f"unknown covariance kind {kind!r}")
    WB = basis.weights[:, None] * basis.design
    coef = WB.T @ kernel @ WB
    return eigh_psd((coef + coef.T) / 2.0, basis=basis)


def gaussian_draws(cov: CovOperator, scores: np.ndarray) -> np.ndarray:
    """Coefficient-space draws sum_j sqrt(lambda_j) z_j psi_j from unit scores."""
    root = np.sqrt(cov.eigenvalues)
    return (scores * root) @ cov.eigenfuncs


def _eigendecay(cfg: ScenarioConfig) -> np.ndarray:
    r = np.arange(cfg.n_components)
    return cfg.decay_scale * cfg.rho**r


def gen_fos_regression(cfg: ScenarioConfig, replicate: int = 0):
    """Raw curves (n x m), scalar covariates (n,) and a truth record."""
    if cfg.protocol != PROTOCOL_FOS:
        raise InvalidArgumentError("config protocol is not 'fos'")
    (n,) = cfg.group_sizes
    grid = make_grid(cfg.grid_size)
    K = min(cfg.smooth_components, cfg.grid_size)
    basis = build_basis(FOURIER, K, grid)
    cov = matern_cov(cfg.cov_kind, cfg.rho, grid, basis)
    rng = rngmod.substream(cfg.seed, rngmod.GENERATE, replicate)
    x = rng.standard_normal(n)
    scores = draw_noise(NoiseDist.from_name(cfg.noise), (n, cov.eigenvalues.size), rng)
    eps = gaussian_draws(cov, scores) @ basis.design.T
    t = grid.points
    intercept = 2.0 * t
    slope = -cfg.effect * np.cos(np.pi * t)
    raw = intercept[None, :] + x[:, None] * slope[None, :] + eps
    truth = {
        "protocol": cfg.protocol, "n": n, "grid_size": cfg.grid_size,
        "c0": cfg.effect, "cov_kind": cfg.cov_kind, "rho": cfg.rho,
        "seed": cfg.seed, "replicate": replicate,
    }
    return raw, x, truth


_ANOVA_BASE = np.array([1.0, 2.3, 3.4, 1.5])
_ANOVA_DIRECTION = np.array([1.0, 2.0, 3.0, 4.0]) / np.sqrt(30.0)


def _poly_mean(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    powers = np.stack([np.ones_like(t), t, t**2, t**3])
    return coeffs @ powers


def gen_anova(cfg: ScenarioConfig, replicate: int = 0):
    """Raw curves (sum n_i x T), group labels and a truth record."""
    if cfg.protocol != PROTOCOL_ANOVA:
        raise InvalidArgumentError("config protocol is not 'anova'")
    grid = make_grid(cfg.grid_size)
    t = grid.points
    lam = _eigendecay(cfg)
    eigenfuncs = fourier_values(t, cfg.n_components)
    rng = rngmod.substream(cfg.seed, rngmod.GENERATE, replicate)
    noise = NoiseDist.from_name(cfg.noise)
    rows, labels = [], []
    for i, n_i in enumerate(cfg.group_sizes, start=1):
        c_i = _ANOVA_BASE + (i - 1) * cfg.effect * _ANOVA_DIRECTION
        mean = _poly_mean(c_i, t)
        scores = draw_noise(noise, (n_i, cfg.n_components), rng)
        eps = (scores * np.sqrt(lam)) @ eigenfuncs.T
        rows.append(mean[None, :] + eps)
        labels.append(np.full(n_i, i, dtype=int))
    truth = {
        "protocol": cfg.protocol, "group_sizes": list(cfg.group_sizes),
        "grid_size": cfg.grid_size, "delta": cfg.effect, "rho": cfg.rho,
        "a": cfg.decay_scale, "q": cfg.n_components, "noise": cfg.noise,
        "seed": cfg.seed, "replicate": replicate,
    }
    return np.vstack(rows), np.concatenate(labels), truth


def _family_values(kind: str, t: np.ndarray, q: int) -> np.ndarray:
    if kind == FOURIER:
        return fourier_values(t, q)
    if kind == BSPLINE:
        return bspline_values(t, q, order=4)
    raise InvalidArgumentError(f"unknown basis family {kind!r}")


def gen_cov_scenario(cfg: ScenarioConfig, replicate: int = 0):
    """Raw curves (sum n_i x T), group labels and a truth record."""
    if cfg.protocol != PROTOCOL_COV:
        raise InvalidArgumentError("config protocol is not 'cov'")
    grid = make_grid(cfg.grid_size)
    t = grid.points
    T = cfg.grid_size
    # amplitude envelope T/(j+1) over the day index j = 1..T: decays ~1/t, so the
    # per-group constant-direction variance bump is visible against the base process
    h = T / (np.arange(1, T + 1, dtype=float) + 1.0)
    lam = _eigendecay(cfg)
    family = _family_values(cfg.family_basis, t, cfg.n_components)
    rng = rngmod.substream(cfg.seed, rngmod.GENERATE, replicate)
    noise = NoiseDist.from_name(cfg.noise)
    rows, labels = [], []
    for i, n_i in enumerate(cfg.group_sizes, start=1):
        funcs = family.copy()
        funcs[:, 1] = family[:, 1] + (i - 1) * cfg.effect / h
        scores = draw_noise(noise, (n_i, cfg.n_components), rng)
        rows.append(h[None, :] * ((scores * np.sqrt(lam)) @ funcs.T))
        labels.append(np.full(n_i, i, dtype=int))
    truth = {
        "protocol": cfg.protocol, "group_sizes": list(cfg.group_sizes),
        "grid_size": cfg.grid_size, "omega": cfg.effect, "rho": cfg.rho,
        "a": cfg.decay_scale, "q": cfg.n_components, "noise": cfg.noise,
        "family_basis": cfg.family_basis, "seed": cfg.seed, "replicate": replicate,
    }
    return np.vstack(rows), np.concatenate(labels), truth


def generate(cfg: ScenarioConfig, replicate: int = 0):
    """Dispatch on protocol: returns (raw, covariates-or-groups, truth)."""
    if cfg.protocol == PROTOCOL_FOS:
        return gen_fos_regression(cfg, replicate)
    if cfg.protocol == PROTOCOL_ANOVA:
        return gen_anova(cfg, replicate)
    return gen_cov_scenario(cfg, replicate)
