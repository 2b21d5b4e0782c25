"""Real-valued uniform linear array (half-wavelength spacing) with one Gaussian source.

The receive vector stacks in-phase over quadrature samples, ``y = gamma*A(theta)x + eta``
with ``x ~ N(0, I_2)`` and ``eta ~ N(0, I_2K)``. Angles are radians here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import spd_solve


def snr_db_to_gamma(snr_db: float) -> float:
    """Source amplitude for a given SNR in dB (SNR = gamma**2)."""
    return math.sqrt(10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class UlaSource:
    K: int
    theta_rad: float
    gamma: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DomainError(f"sensor count K must be a positive integer, got {self.K}")
        if not (abs(self.theta_rad) < math.pi / 2):
            raise DomainError(f"DOA must lie in the open interval (-pi/2, pi/2), got {self.theta_rad}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise DomainError(f"gamma must be finite and non-negative, got {self.gamma}")

    @classmethod
    def from_degrees(cls, K: int, theta_deg: float, snr_db: float) -> "UlaSource":
        return cls(int(K), math.radians(theta_deg), snr_db_to_gamma(snr_db))

    @property
    def M(self) -> int:
        return 2 * self.K

    @property
    def snr(self) -> float:
        return self.gamma ** 2

    def with_theta(self, theta_rad: float) -> "UlaSource":
        return UlaSource(self.K, theta_rad, self.gamma)


@dataclass(frozen=True)
class SteeringPair:
    A: np.ndarray   # (M, 2)
    dA: np.ndarray  # (M, 2), derivative w.r.t. theta


@dataclass(frozen=True)
class CovariancePair:
    sigma_y: np.ndarray
    dsigma_y: np.ndarray


def steering(src: UlaSource) -> SteeringPair:
    k = np.arange(src.K)
    phase = k * math.pi * math.sin(src.theta_rad)
    xi, psi = np.cos(phase), np.sin(phase)
    rate = k * math.pi * math.cos(src.theta_rad)
    dxi, dpsi = -rate * psi, rate * xi

    A = np.empty((src.M, 2))
    A[:src.K, 0], A[:src.K, 1] = xi, psi
    A[src.K:, 0], A[src.K:, 1] = -psi, xi
    dA = np.empty((src.M, 2))
    dA[:src.K, 0], dA[:src.K, 1] = dxi, dpsi
    dA[src.K:, 0], dA[src.K:, 1] = -dpsi, dxi
    return SteeringPair(A, dA)


def receive_covariance(src: UlaSource) -> CovariancePair:
    """``Sigma_y = gamma^2 A A^T + I`` and its derivative in theta."""
    st = steering(src)
    g2 = src.gamma ** 2
    sigma = g2 * (st.A @ st.A.T) + np.eye(src.M)
    cross = st.dA @ st.A.T
    dsigma = g2 * (cross + cross.T)
    # rows of A have unit norm, so the diagonal is exactly gamma^2 + 1 and its derivative 0
    np.fill_diagonal(sigma, g2 + 1.0)
    np.fill_diagonal(dsigma, 0.0)
    sigma = 0.5 * (sigma + sigma.T)
    dsigma = 0.5 * (dsigma + dsigma.T)
    return CovariancePair(sigma, dsigma)


def fisher_unquantized(cov: CovariancePair) -> float:
    """Gaussian Fisher information ``0.5 * tr(S^-1 S' S^-1 S')`` for the unquantized data."""
    X = spd_solve(cov.sigma_y, cov.dsigma_y)
    return max(0.5 * float(np.sum(X * X.T)), 0.0)
