"""Fisher-information lower bound, quantization loss and pessimistic CRLB.

The lower bound replaces the quantized model by the exponential-family model
whose sufficient statistics are the pairwise sign products; its Fisher
information ``dmu^T R^-1 dmu`` never exceeds the true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .array_model import UlaSource, fisher_unquantized, receive_covariance
from .errors import DegenerateModel, DimensionTooLarge, NormalizationFailure
from .numerics import spd_solve
from .quantized_moments import (StatisticMoments, arcsine_map, orthant2, orthant4, sign_patterns,
                                statistic_moments)

RAD2_TO_DEG2 = (180.0 / math.pi) ** 2


@dataclass(frozen=True)
class BoundReport:
    fisher_y: float
    fisher_lb: float
    chi: float
    chi_db: float
    pcrlb_rad2: float
    pcrlb_deg2: float
    gls_weights: np.ndarray

    @property
    def pcrlb_root_deg(self) -> float:
        return math.sqrt(self.pcrlb_deg2)


def fisher_lower_bound(sm: StatisticMoments) -> tuple[float, np.ndarray]:
    """Return ``(dmu^T R^-1 dmu, R^-1 dmu)``."""
    weights = spd_solve(sm.R, sm.dmu)
    return max(float(sm.dmu @ weights), 0.0), weights


def quantization_loss(fisher_lb: float, fisher_y: float) -> tuple[float, float]:
    if not fisher_y > 0:
        raise DegenerateModel("unquantized Fisher information is zero")
    chi = fisher_lb / fisher_y
    chi_db = 10.0 * math.log10(chi) if chi > 0 else -math.inf
    return chi, chi_db


def pcrlb(fisher_lb: float, N: int) -> tuple[float, float]:
    """Pessimistic CRLB for ``N`` snapshots in rad^2 and deg^2."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not fisher_lb > 0:
        raise DegenerateModel("Fisher lower bound is zero; the bound is infinite")
    rad2 = 1.0 / (N * fisher_lb)
    return rad2, rad2 * RAD2_TO_DEG2


def bound_report(src: UlaSource, N: int = 1) -> BoundReport:
    cov = receive_covariance(src)
    fy = fisher_unquantized(cov)
    sm = statistic_moments(arcsine_map(cov, src.gamma))
    flb, weights = fisher_lower_bound(sm)
    chi, chi_db = quantization_loss(flb, fy)
    rad2, deg2 = pcrlb(flb, N)
    return BoundReport(fy, flb, chi, chi_db, rad2, deg2, weights)


def outcome_probabilities(src: UlaSource) -> np.ndarray:
    """``p(z)`` for every sign pattern of ``sign_patterns(2K)``; needs ``K <= 2``."""
    if src.K > 2:
        raise DimensionTooLarge(f"exact outcome enumeration is limited to K <= 2, got K={src.K}")
    rho = receive_covariance(src).sigma_y / (src.gamma ** 2 + 1.0)
    patterns = sign_patterns(src.M)
    if src.M == 2:
        return np.array([orthant2(float(np.clip(q[0] * q[1] * rho[0, 1], -1, 1))) for q in patterns])
    return np.array([orthant4(rho * np.outer(q, q)) for q in patterns])


def fisher_exact_small(src: UlaSource, h: float = 1e-6) -> float:
    """Exact Fisher information of the 1-bit data for ``K <= 2`` by enumeration.

    The score is obtained by central differences of the outcome probabilities,
    keeping this independent of the analytic derivative pipeline.
    """
    if src.K > 2:
        raise DimensionTooLarge(f"exact quantized Fisher information is limited to K <= 2, got K={src.K}")
    if not 1e-7 <= h <= 1e-4:
        raise ValueError("finite-difference step must lie in [1e-7, 1e-4]")
    p = outcome_probabilities(src)
    total = math.fsum(p)
    if abs(total - 1.0) > 1e-7:
        raise NormalizationFailure(f"outcome probabilities sum to {total!r}")
    dp = (outcome_probabilities(src.with_theta(src.theta_rad + h))
          - outcome_probabilities(src.with_theta(src.theta_rad - h))) / (2.0 * h)
    return math.fsum(dp * dp / p)
