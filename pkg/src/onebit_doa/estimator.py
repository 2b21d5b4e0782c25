"""DOA estimators: conservative ML on 1-bit data and the Gaussian ML baseline.

Both use the same search: evaluate the objective on a uniform angle grid,
take the grid minimum, bracket a sign change of the score between the
neighbouring grid points and refine it with Brent's method. The
data-independent parts of each grid (model moments and their factorizations)
are cached per ``(K, gamma, grid)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

from .array_model import UlaSource, receive_covariance
from .errors import NoSignChange
from .numerics import as_symmetric, brent_root, golden_section_min, spd_factor
from .quantized_moments import model_moments, pair_index, strict_lower

CMLE = "CMLE"
GAUSSIAN_MLE = "GaussianMLE"


@dataclass(frozen=True)
class BitSnapshots:
    """``M x N`` matrix of +-1 samples, one snapshot per column."""
    Z: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z)
        if Z.ndim != 2:
            raise ValueError("snapshots must be an M x N matrix")
        if not np.all((Z == 1) | (Z == -1)):
            raise ValueError("1-bit snapshots must contain only +1 and -1")
        object.__setattr__(self, "Z", Z.astype(np.int8, copy=False))

    @property
    def M(self) -> int:
        return self.Z.shape[0]

    @property
    def N(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class EstimatorOptions:
    grid_points: int = 361
    theta_max_deg: float = 89.5
    xtol: float = 1e-8

    def grid(self) -> np.ndarray:
        return np.radians(np.linspace(-self.theta_max_deg, self.theta_max_deg, self.grid_points))


@dataclass(frozen=True)
class EstimateResult:
    theta_hat_rad: float
    method: str
    objective: float
    grid_minimum_deg: float
    root_bracket: tuple[float, float] | None
    converged: bool

    @property
    def theta_hat_deg(self) -> float:
        return math.degrees(self.theta_hat_rad)


def sample_statistics(bits: BitSnapshots) -> np.ndarray:
    """Sample mean of the pairwise products ``z_i z_j`` over the snapshots."""
    Z = bits.Z.astype(np.int64)
    return strict_lower(Z @ Z.T) / bits.N


def mirror_statistics(phi: np.ndarray, K: int) -> np.ndarray:
    """Statistics of the snapshots with the quadrature block negated.

    Negating the quadrature rows maps data at angle ``theta`` onto data at ``-theta``.
    """
    d = np.concatenate([np.ones(K), -np.ones(K)])
    p = pair_index(2 * K)
    return phi * d[p.rows] * d[p.cols]


def _batched_lower_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return np.linalg.solve(chol, rhs[..., None])[..., 0]


@dataclass(frozen=True)
class _CmleGrid:
    thetas: np.ndarray
    mu: np.ndarray      # (G, L)
    chol: np.ndarray    # (G, L, L) lower Cholesky factors of R
    wdmu: np.ndarray    # (G, L) chol^-1 dmu


@lru_cache(maxsize=32)
def _cmle_grid(K: int, gamma: float, opts: EstimatorOptions) -> _CmleGrid:
    thetas = opts.grid()
    mus, chols, wdmus = [], [], []
    for th in thetas:
        sm = model_moments(UlaSource(K, float(th), gamma))
        c = spd_factor(sm.R)
        mus.append(sm.mu)
        chols.append(c)
        wdmus.append(scipy.linalg.solve_triangular(c, sm.dmu, lower=True))
    return _CmleGrid(thetas, np.array(mus), np.array(chols), np.array(wdmus))


def cmle_score(theta: float, phi: np.ndarray, K: int, gamma: float) -> tuple[float, float]:
    """``(s, Q)`` at ``theta``: the estimating function and the GLS objective."""
    sm = model_moments(UlaSource(K, theta, gamma))
    c = spd_factor(sm.R)
    w = scipy.linalg.solve_triangular(c, phi - sm.mu, lower=True)
    a = scipy.linalg.solve_triangular(c, sm.dmu, lower=True)
    return float(a @ w), float(w @ w)


def _grid_refine(method: str, thetas: np.ndarray, Q: np.ndarray, s: np.ndarray,
                 score: Callable[[float], float], objective: Callable[[float], float],
                 xtol: float) -> EstimateResult:
    g = int(np.argmin(Q))
    grid_min_deg = math.degrees(thetas[g])
    lo_i, hi_i = max(g - 1, 0), min(g + 1, len(thetas) - 1)
    flat = (np.ptp(Q) <= 1e-12 * (1.0 + abs(Q[g]))) or not np.any(s)
    if flat:
        return EstimateResult(float(thetas[g]), method, float(Q[g]), grid_min_deg, None, False)

    lo, hi = float(thetas[lo_i]), float(thetas[hi_i])
    if s[lo_i] * s[hi_i] <= 0:
        try:
            root = brent_root(score, lo, hi, xtol)
            return EstimateResult(root, method, objective(root), grid_min_deg, (lo, hi), True)
        except NoSignChange:
            pass
    theta = golden_section_min(objective, lo, hi, xtol)
    return EstimateResult(theta, method, objective(theta), grid_min_deg, None, False)


def cmle(phi: np.ndarray, K: int, gamma: float,
         opts: EstimatorOptions | None = None) -> EstimateResult:
    """Conservative ML estimate of the DOA from 1-bit sample statistics ``phi``.

    Solves ``dmu(theta)^T R(theta)^-1 (phi - mu(theta)) = 0``, choosing the root at
    the global grid minimum of ``(phi - mu)^T R^-1 (phi - mu)``.
    """
    opts = opts or EstimatorOptions()
    phi = np.asarray(phi, dtype=float)
    L = K * (2 * K - 1)
    if phi.shape != (L,):
        raise ValueError(f"expected {L} statistics for K={K}, got shape {phi.shape}")
    grid = _cmle_grid(int(K), float(gamma), opts)
    w = _batched_lower_solve(grid.chol, phi[None, :] - grid.mu)
    Q = np.einsum("gl,gl->g", w, w)
    s = np.einsum("gl,gl->g", grid.wdmu, w)

    cache: dict[float, tuple[float, float]] = {}

    def evaluate(theta: float) -> tuple[float, float]:
        if theta not in cache:
            cache[theta] = cmle_score(theta, phi, K, gamma)
        return cache[theta]

    return _grid_refine(CMLE, grid.thetas, Q, s, lambda t: evaluate(t)[0],
                        lambda t: evaluate(t)[1], opts.xtol)


@dataclass(frozen=True)
class _GaussGrid:
    thetas: np.ndarray
    sigma: np.ndarray   # (G, M, M)
    W: np.ndarray       # (G, M, M) Sigma^-1 Sigma'
    logdet: np.ndarray  # (G,)


@lru_cache(maxsize=32)
def _gauss_grid(K: int, gamma: float, opts: EstimatorOptions) -> _GaussGrid:
    thetas = opts.grid()
    sig, W, logdet = [], [], []
    for th in thetas:
        cov = receive_covariance(UlaSource(K, float(th), gamma))
        c = spd_factor(cov.sigma_y)
        sig.append(cov.sigma_y)
        W.append(scipy.linalg.cho_solve((c, True), cov.dsigma_y))
        logdet.append(2.0 * np.sum(np.log(np.diag(c))))
    return _GaussGrid(thetas, np.array(sig), np.array(W), np.array(logdet))


def gaussian_objective(theta: float, sample_cov: np.ndarray, K: int, gamma: float) -> tuple[float, float]:
    """``(-dJ/dtheta, J)`` with ``J = ln det Sigma + tr(S Sigma^-1)``."""
    cov = receive_covariance(UlaSource(K, theta, gamma))
    c = spd_factor(cov.sigma_y)
    X = scipy.linalg.cho_solve((c, True), sample_cov)
    W = scipy.linalg.cho_solve((c, True), cov.dsigma_y)
    J = 2.0 * float(np.sum(np.log(np.diag(c)))) + float(np.trace(X))
    dJ = float(np.trace(W)) - float(np.sum(X * W.T))
    return -dJ, J


def gaussian_mle(sample_cov, K: int, gamma: float,
                 opts: EstimatorOptions | None = None) -> EstimateResult:
    """Gaussian ML estimate from the unquantized sample covariance."""
    opts = opts or EstimatorOptions()
    S = as_symmetric(sample_cov)
    if S.shape != (2 * K, 2 * K):
        raise ValueError(f"sample covariance must be {2 * K}x{2 * K}")
    grid = _gauss_grid(int(K), float(gamma), opts)
    X = np.linalg.solve(grid.sigma, np.broadcast_to(S, grid.sigma.shape))
    Q = grid.logdet + np.trace(X, axis1=1, axis2=2)
    s = -(np.trace(grid.W, axis1=1, axis2=2) - np.einsum("gij,gji->g", X, grid.W))

    cache: dict[float, tuple[float, float]] = {}

    def evaluate(theta: float) -> tuple[float, float]:
        if theta not in cache:
            cache[theta] = gaussian_objective(theta, S, K, gamma)
        return cache[theta]

    return _grid_refine(GAUSSIAN_MLE, grid.thetas, Q, s, lambda t: evaluate(t)[0],
                        lambda t: evaluate(t)[1], opts.xtol)
