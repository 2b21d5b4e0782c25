"""Moments of hard-limited (sign-quantized) zero-mean Gaussian vectors.

Covers the arcsine law, bivariate and quadrivariate orthant probabilities,
fourth-order sign moments and the mean / covariance of the pairwise sign
products ``z_i z_j`` (strict lower triangle, column-major ordering).

Fourth-order sign moments use Plackett's identity: the derivative of
``E[z_a z_b z_c z_d]`` with respect to the correlation ``rho_ef`` equals
``(4/pi^2) asin(rho_gh|ef) / sqrt(1 - rho_ef^2)``, where ``rho_gh|ef`` is the
partial correlation of the remaining pair. Integrating that along the path that
switches on the cross-correlations between ``{a, b}`` and ``{c, d}`` starts from
the product ``E[z_a z_b] E[z_c z_d]`` and leaves a single smooth 1-D integral.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import owens_t

from .array_model import CovariancePair, UlaSource, receive_covariance
from .errors import InvalidCorrelation, MaxDepthExceeded, NotPositiveDefinite
from .numerics import (GAUSS_TRUNCATION, QuadratureSpec, gauss_legendre_unit, norm_cdf,
                       norm_pdf, quad_adaptive, spd_factor)

log = logging.getLogger(__name__)

RHO_CLAMP = 1.0 - 1e-12
CACHE_DECIMALS = 14

_TWO_OVER_PI = 2.0 / math.pi
_FOUR_OVER_PI2 = 4.0 / math.pi ** 2

# Correlations of a quadruple are passed around as 6-vectors in this order.
_PAIR6 = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
# cross pair (e, f) -> (index in the 6-vector, remaining pair g, h)
_CROSS = ((1, (0, 2), (1, 3)), (2, (0, 3), (1, 2)), (3, (1, 2), (0, 3)), (4, (1, 3), (0, 2)))


@dataclass(frozen=True)
class QuantizedCovariance:
    sigma_z: np.ndarray
    dsigma_z: np.ndarray
    rho: np.ndarray  # clamped correlation matrix of the unquantized data

    @property
    def M(self) -> int:
        return self.sigma_z.shape[0]


@dataclass(frozen=True)
class PairIndex:
    """Bijection ``l <-> (i, j)`` with ``i > j`` over the strict lower triangle.

    Pairs are enumerated column by column: (1,0), (2,0), ..., (M-1,0), (2,1), ...
    Indices are zero-based.
    """
    M: int
    rows: np.ndarray
    cols: np.ndarray
    lookup: np.ndarray  # (M, M), symmetric, -1 on the diagonal

    @property
    def L(self) -> int:
        return len(self.rows)

    def pair(self, l: int) -> tuple[int, int]:
        return int(self.rows[l]), int(self.cols[l])


@lru_cache(maxsize=None)
def pair_index(M: int) -> PairIndex:
    rows, cols = [], []
    for j in range(M):
        for i in range(j + 1, M):
            rows.append(i)
            cols.append(j)
    rows_a, cols_a = np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)
    lookup = -np.ones((M, M), dtype=np.intp)
    lookup[rows_a, cols_a] = np.arange(len(rows))
    lookup[cols_a, rows_a] = np.arange(len(rows))
    for a in (rows_a, cols_a, lookup):
        a.setflags(write=False)
    return PairIndex(M, rows_a, cols_a, lookup)


def strict_lower(mat: np.ndarray) -> np.ndarray:
    """Strict-lower-triangle entries of ``mat`` in :class:`PairIndex` order."""
    p = pair_index(mat.shape[0])
    return mat[p.rows, p.cols]


def arcsine_map(cov: CovariancePair, gamma: float) -> QuantizedCovariance:
    """Covariance of ``sign(y)`` and its theta-derivative from those of ``y``."""
    scale = gamma ** 2 + 1.0
    rho = np.clip(cov.sigma_y / scale, -RHO_CLAMP, RHO_CLAMP)
    np.fill_diagonal(rho, 1.0)
    sigma_z = _TWO_OVER_PI * np.arcsin(rho)
    off = ~np.eye(rho.shape[0], dtype=bool)
    dsigma_z = np.zeros_like(rho)
    dsigma_z[off] = (2.0 * cov.dsigma_y[off]) / (math.pi * scale * np.sqrt(1.0 - rho[off] ** 2))
    np.fill_diagonal(sigma_z, 1.0)
    return QuantizedCovariance(sigma_z, dsigma_z, rho)


def orthant2(rho: float) -> float:
    """``P(x1 > 0, x2 > 0)`` for a standard bivariate normal with correlation ``rho``."""
    if abs(rho) > 1.0:
        raise InvalidCorrelation(f"|rho| must not exceed 1, got {rho}")
    return 0.25 + math.asin(rho) / (2.0 * math.pi)


def _partial_corr(s: dict, e: int, f: int, g: int, h: int):
    """Correlation of ``x_g, x_h`` given ``x_e, x_f`` (arrays broadcast)."""
    r = s[e, f]
    det = 1.0 - r * r
    ge, gf, he, hf = s[g, e], s[g, f], s[h, e], s[h, f]
    cgg = 1.0 - (ge * ge + gf * gf - 2.0 * r * ge * gf) / det
    chh = 1.0 - (he * he + hf * hf - 2.0 * r * he * hf) / det
    cgh = s[g, h] - (ge * he + gf * hf - r * (ge * hf + gf * he)) / det
    denom = np.sqrt(np.maximum(cgg * chh, 1e-300))
    return np.clip(cgh / denom, -1.0, 1.0)


def _path_integrand(r6: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d/dt of the sign moment along the cross-correlation path.

    ``r6`` has shape (n, 6) and ``t`` shape (m,); returns shape (n, m).
    """
    r = r6[:, :, None]
    t = np.asarray(t, dtype=float)[None, :]
    s = {}
    for p, (a, b) in enumerate(_PAIR6):
        val = r[:, p] if p in (0, 5) else t * r[:, p]
        s[a, b] = s[b, a] = val
    out = 0.0
    for p, (e, f), (g, h) in _CROSS:
        ref = r[:, p]
        out = out + ref * np.arcsin(_partial_corr(s, e, f, g, h)) / np.sqrt(1.0 - (t * ref) ** 2)
    return _FOUR_OVER_PI2 * np.broadcast_to(out, (r6.shape[0], t.shape[1]))


def _sign_moment4_adaptive(r6: np.ndarray, spec: QuadratureSpec) -> float:
    r6 = np.asarray(r6, dtype=float).reshape(1, 6)
    base = _TWO_OVER_PI ** 2 * math.asin(r6[0, 0]) * math.asin(r6[0, 5])
    # t = 1 - u^2 removes the inverse square-root endpoint singularity at t = 1
    # when a cross correlation approaches +-1
    def f(u):
        return 2.0 * u * _path_integrand(r6, 1.0 - u * u)[0]
    return base + quad_adaptive(f, 0.0, 1.0, spec, vectorized=True)


_BATCH_NODES = (24, 48)
_BATCH_TOL = 1e-13
_FALLBACK_SPEC = QuadratureSpec(abs_tol=1e-14, rel_tol=1e-13, max_depth=50)
# nearly singular inputs have a roundoff floor around 1e-12 in the integrand
_RELAXED_SPEC = QuadratureSpec(abs_tol=1e-10, rel_tol=1e-10, max_depth=50)


def _sign_moment4_robust(r6: np.ndarray) -> float:
    try:
        return _sign_moment4_adaptive(r6, _FALLBACK_SPEC)
    except MaxDepthExceeded:
        log.debug("sign moment for %s: relaxing quadrature tolerance", r6)
        return _sign_moment4_adaptive(r6, _RELAXED_SPEC)


def sign_moment4_batch(r6) -> np.ndarray:
    """``E[z_0 z_1 z_2 z_3]`` for a batch of 4x4 correlation matrices.

    Each row of ``r6`` holds ``(r01, r02, r03, r12, r13, r23)``. Rows are
    deduplicated after rounding to 1e-14. Fixed Gauss-Legendre rules of two
    orders are compared; rows that disagree fall back to adaptive quadrature.
    """
    r6 = np.clip(np.atleast_2d(np.asarray(r6, dtype=float)), -RHO_CLAMP, RHO_CLAMP)
    if r6.shape[0] == 0:
        return np.zeros(0)
    keys, first, inverse = np.unique(np.round(r6, CACHE_DECIMALS), axis=0,
                                     return_index=True, return_inverse=True)
    u = r6[first]
    base = _TWO_OVER_PI ** 2 * np.arcsin(u[:, 0]) * np.arcsin(u[:, 5])
    vals = []
    for n in _BATCH_NODES:
        x, w = gauss_legendre_unit(n)
        vals.append(base + _path_integrand(u, x) @ w)
    result = vals[-1]
    for idx in np.flatnonzero(np.abs(vals[-1] - vals[0]) > _BATCH_TOL):
        result[idx] = _sign_moment4_robust(u[idx])
    return result[np.asarray(inverse).reshape(-1)]


@lru_cache(maxsize=1 << 16)
def _sign_moment4_cached(key: tuple) -> float:
    return float(sign_moment4_batch(np.array([key]))[0])


def validate_correlation(corr) -> np.ndarray:
    """Check and clamp a 4x4 correlation matrix; returns the clamped copy."""
    c = np.array(corr, dtype=float)
    if c.shape != (4, 4) or not np.all(np.isfinite(c)):
        raise InvalidCorrelation(f"expected a finite 4x4 matrix, got shape {c.shape}")
    if np.max(np.abs(c - c.T)) > 1e-10:
        raise InvalidCorrelation("correlation matrix is not symmetric")
    if np.max(np.abs(np.diag(c) - 1.0)) > 1e-10:
        raise InvalidCorrelation("correlation matrix must have a unit diagonal")
    if np.max(np.abs(c)) > 1.0 + 1e-10:
        raise InvalidCorrelation("correlations must lie in [-1, 1]")
    c = np.clip(0.5 * (c + c.T), -RHO_CLAMP, RHO_CLAMP)
    np.fill_diagonal(c, 1.0)
    try:
        spd_factor(c)
    except NotPositiveDefinite as exc:
        raise InvalidCorrelation("matrix is not positive semidefinite") from exc
    return c


def _six(c: np.ndarray) -> tuple:
    return tuple(float(c[a, b]) for a, b in _PAIR6)


def sign_moment4(corr) -> float:
    """``E[sign(x0) sign(x1) sign(x2) sign(x3)]`` for ``x ~ N(0, corr)`` (memoized)."""
    c = validate_correlation(corr)
    return _sign_moment4_cached(tuple(round(v, CACHE_DECIMALS) for v in _six(c)))


def orthant4(corr) -> float:
    """``P(x > 0)`` for a zero-mean quadrivariate normal with correlation ``corr``.

    Odd sign moments vanish, so the orthant probability is
    ``(1 + sum_{i<j} E[z_i z_j] + E[z_0 z_1 z_2 z_3]) / 16``.
    """
    c = validate_correlation(corr)
    pairwise = _TWO_OVER_PI * math.fsum(math.asin(v) for v in _six(c))
    quartic = _sign_moment4_cached(tuple(round(v, CACHE_DECIMALS) for v in _six(c)))
    return (1.0 + pairwise + quartic) / 16.0


def sign_patterns(M: int) -> np.ndarray:
    """All ``2**M`` vectors in ``{-1, +1}^M``, shape (2**M, M)."""
    grid = np.array(np.meshgrid(*([[1, -1]] * M), indexing="ij"))
    return grid.reshape(M, -1).T.astype(int)


def bvn_cdf(h, k, r):
    """Bivariate standard normal CDF ``P(X <= h, Y <= k)`` via Owen's T function."""
    h, k, r = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float), np.asarray(r, float))
    tiny = 1e-300
    h = np.where(h == 0.0, tiny, h)
    k = np.where(k == 0.0, tiny, k)
    sq = np.sqrt(1.0 - r * r)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ah = (k - r * h) / (h * sq)
        ak = (h - r * k) / (k * sq)
    # sign test rather than h * k, which underflows for the tiny offsets above
    beta = np.where(np.sign(h) == np.sign(k), 0.0, 0.5)
    return 0.5 * norm_cdf(h) + 0.5 * norm_cdf(k) - owens_t(h, ah) - owens_t(k, ak) - beta


def orthant4_conditioning(corr, spec: QuadratureSpec | None = None) -> float:
    """``P(x > 0)`` by conditioning; slow, independent cross-check of :func:`orthant4`.

    Outer quadrature runs over the first coordinate. The conditional trivariate
    orthant is a 1-D integral over the second coordinate of a shifted bivariate
    normal CDF. Gaussian tails are truncated at 8.5 standard deviations.
    """
    spec = spec or QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12)
    c = validate_correlation(corr)
    c1 = c[1:, 0]
    C = c[1:, 1:] - np.outer(c1, c1)
    s2 = math.sqrt(C[0, 0])
    beta = C[1:, 0] / C[0, 0]
    Cp = C[1:, 1:] - np.outer(C[1:, 0], C[1:, 0]) / C[0, 0]
    s34 = np.sqrt(np.diag(Cp))
    r34 = Cp[0, 1] / (s34[0] * s34[1])

    def trivariate(x: float) -> float:
        m = c1 * x
        lo = max(-m[0] / s2, -GAUSS_TRUNCATION)
        if lo >= GAUSS_TRUNCATION:
            return 0.0

        def inner(u):
            w2 = s2 * u
            m3 = m[1] + beta[0] * w2
            m4 = m[2] + beta[1] * w2
            return norm_pdf(u) * bvn_cdf(m3 / s34[0], m4 / s34[1], r34)

        return quad_adaptive(inner, lo, GAUSS_TRUNCATION, spec, vectorized=True)

    def outer(xs):
        return np.array([norm_pdf(x) * trivariate(float(x)) for x in xs])

    return quad_adaptive(outer, 0.0, GAUSS_TRUNCATION, spec, vectorized=True)


def quartic_moment(i: int, j: int, k: int, l: int, qc: QuantizedCovariance) -> float:
    """``E[z_i z_j z_k z_l]`` (zero-based indices) by coincidence pattern.

    Fully paired indices give 1, exactly two unpaired indices give the arcsine
    covariance of that pair, and four distinct indices need the quadrivariate
    sign moment.
    """
    idx = (i, j, k, l)
    for v in idx:
        if not 0 <= v < qc.M:
            raise IndexError(f"index {v} outside 0..{qc.M - 1}")
    odd = sorted(v for v in set(idx) if idx.count(v) % 2)
    if not odd:
        return 1.0
    if len(odd) == 2:
        return float(qc.sigma_z[odd[0], odd[1]])
    sub = qc.rho[np.ix_(odd, odd)]
    return sign_moment4(sub)


@dataclass(frozen=True)
class StatisticMoments:
    mu: np.ndarray
    dmu: np.ndarray
    R: np.ndarray

    @property
    def L(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class _Layout:
    quads: np.ndarray  # (Q, 4) sorted index quadruples, colex order
    code: np.ndarray   # (L, L) index into [1, sigma_z.ravel(), E4 per quad]


def _colex_rank(q: np.ndarray) -> np.ndarray:
    w, x, y, z = (q[:, n].astype(np.int64) for n in range(4))
    return w + x * (x - 1) // 2 + y * (y - 1) * (y - 2) // 6 + z * (z - 1) * (z - 2) * (z - 3) // 24


@lru_cache(maxsize=64)
def _layout(M: int) -> _Layout:
    p = pair_index(M)
    quads = np.array(list(combinations(range(M), 4)), dtype=np.intp).reshape(-1, 4)
    if len(quads):
        quads = quads[np.argsort(_colex_rank(quads))]

    a, b = p.rows[:, None], p.cols[:, None]
    c, d = p.rows[None, :], p.cols[None, :]
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    eq_ac, eq_ad, eq_bc, eq_bd = a == c, a == d, b == c, b == d
    shared = eq_ac.astype(int) + eq_ad + eq_bc + eq_bd

    code = np.zeros(a.shape, dtype=np.intp)  # 0 -> same pair, E = 1
    one = shared == 1
    x = np.select([eq_ac, eq_ad, eq_bc, eq_bd], [b, b, a, a])
    y = np.select([eq_ac, eq_ad, eq_bc, eq_bd], [d, c, d, c])
    code[one] = 1 + x[one] * M + y[one]
    none = shared == 0
    if none.any():
        q = np.sort(np.stack([a[none], b[none], c[none], d[none]], axis=1), axis=1)
        code[none] = 1 + M * M + _colex_rank(q)
    code.setflags(write=False)
    quads.setflags(write=False)
    return _Layout(quads, code)


def quad_correlations(rho: np.ndarray, quads: np.ndarray) -> np.ndarray:
    """(Q, 6) correlation vectors of the index quadruples ``quads``."""
    return np.stack([rho[quads[:, a], quads[:, b]] for a, b in _PAIR6], axis=1)


def statistic_moments(qc: QuantizedCovariance) -> StatisticMoments:
    """Mean, theta-derivative and covariance of the pairwise sign products."""
    M = qc.M
    lay = _layout(M)
    mu = strict_lower(qc.sigma_z)
    dmu = strict_lower(qc.dsigma_z)
    if len(lay.quads):
        e4 = sign_moment4_batch(quad_correlations(qc.rho, lay.quads))
    else:
        e4 = np.zeros(0)
    table = np.concatenate([[1.0], qc.sigma_z.ravel(), e4])
    R = table[lay.code] - np.outer(mu, mu)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0 - mu * mu)
    return StatisticMoments(mu, dmu, R)


def model_moments(src: UlaSource) -> StatisticMoments:
    return statistic_moments(arcsine_map(receive_covariance(src), src.gamma))
