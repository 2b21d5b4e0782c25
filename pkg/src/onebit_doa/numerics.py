"""Numeric kernels shared by the rest of the package.

Cholesky factorization with a jitter ladder, solves that never form an
explicit inverse, adaptive Gauss-Kronrod quadrature, bracketed root finding
and standard-normal helpers.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import ndtr

from .errors import MaxDepthExceeded, NoSignChange, NotPositiveDefinite

MAX_JITTER = 1e-6
FIRST_JITTER = 1e-12
# Infinite Gaussian integration domains are truncated here.
GAUSS_TRUNCATION = 8.5

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def as_symmetric(a, *, atol: float = 1e-10) -> np.ndarray:
    """Return ``a`` as a float array with exactly symmetric storage.

    Raises ValueError if ``a`` is not square, not finite, or asymmetric beyond
    ``atol`` (relative to its largest entry).
    """
    s = np.array(a, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
    if np.max(np.abs(s - s.T), initial=0.0) > atol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (s + s.T)


def _jitter_ladder(jitter: float):
    yield jitter
    j = max(FIRST_JITTER, 10.0 * jitter) if jitter > 0 else FIRST_JITTER
    while j <= MAX_JITTER * (1 + 1e-9):
        yield j
        j *= 10.0


def spd_factor_with_jitter(S, jitter: float = 0.0) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``S + j*I`` and the jitter ``j`` that was needed."""
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    S = np.asarray(S, dtype=float)
    eye = np.eye(S.shape[0])
    for j in _jitter_ladder(jitter):
        try:
            return np.linalg.cholesky(S + j * eye if j else S), j
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(f"matrix not positive definite even with jitter {MAX_JITTER:g}")


def spd_factor(S, jitter: float = 0.0) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == S + jitter*I``.

    On failure the jitter is escalated by factors of ten (starting at 1e-12)
    up to 1e-6 before :class:`NotPositiveDefinite` is raised.
    """
    return spd_factor_with_jitter(S, jitter)[0]


def spd_solve(S, b, jitter: float = 0.0) -> np.ndarray:
    """Solve ``S x = b`` for symmetric positive definite ``S``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    L = spd_factor(S, jitter)
    return scipy.linalg.cho_solve((L, True), np.asarray(b, dtype=float))


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_depth: int = 40
    max_intervals: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_intervals < 2:
            raise ValueError("max_intervals must be >= 2")


# Gauss-Kronrod 7/15 nodes on [-1, 1]; the odd-indexed Kronrod nodes are the Gauss nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, a: float, b: float, vectorized: bool) -> tuple[float, float]:
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _NODES15
    if vectorized:
        y = np.asarray(f(x), dtype=float)
    else:
        y = np.array([f(float(t)) for t in x], dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError(f"integrand not finite on [{a}, {b}]")
    kronrod = half * float(_WK15 @ y)
    gauss = half * float(_WG15 @ y)
    return kronrod, abs(kronrod - gauss)


def quad_adaptive(f: Callable, a: float, b: float, spec: QuadratureSpec | None = None,
                  *, vectorized: bool = False) -> float:
    """Integrate ``f`` over ``[a, b]`` by globally adaptive Gauss-Kronrod (7/15).

    The interval with the largest error estimate is bisected until the summed
    estimate drops below ``max(abs_tol, rel_tol*|result|)``. With
    ``vectorized=True`` ``f`` receives an array of 15 abscissae per panel.
    """
    spec = spec or QuadratureSpec()
    if a == b:
        return 0.0
    if b < a:
        return -quad_adaptive(f, b, a, spec, vectorized=vectorized)

    val, err = _gk15(f, a, b, vectorized)
    heap = [(-err, a, b, val, 0)]
    total, total_err = val, err
    while total_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        neg_err, lo, hi, v, depth = heapq.heappop(heap)
        if depth >= spec.max_depth:
            raise MaxDepthExceeded(
                f"adaptive quadrature on [{a}, {b}] hit depth {spec.max_depth} "
                f"(error estimate {total_err:.3g})")
        if len(heap) >= spec.max_intervals:
            raise MaxDepthExceeded(
                f"adaptive quadrature on [{a}, {b}] used {spec.max_intervals} intervals "
                f"(error estimate {total_err:.3g})")
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid, vectorized)
        v2, e2 = _gk15(f, mid, hi, vectorized)
        heapq.heappush(heap, (-e1, lo, mid, v1, depth + 1))
        heapq.heappush(heap, (-e2, mid, hi, v2, depth + 1))
        # re-sum rather than update incrementally so rounding does not accumulate
        total = math.fsum(item[3] for item in heap)
        total_err = math.fsum(-item[0] for item in heap)
    return total


@lru_cache(maxsize=None)
def gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def brent_root(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-12) -> float:
    """Root of ``f`` in ``[lo, hi]`` by Brent's method (scipy ``brentq``)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChange(f"f({lo})={flo:.3g} and f({hi})={fhi:.3g} have the same sign")
    return scipy.optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f: Callable[[float], float], lo: float, hi: float,
                       xtol: float = 1e-10) -> float:
    """Minimizer of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def std_normal(x: float) -> tuple[float, float]:
    """Standard normal ``(pdf, cdf)`` at ``x``; the cdf goes through ``erfc``."""
    return math.exp(-0.5 * x * x) / _SQRT_2PI, 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def norm_cdf(x):
    return ndtr(x)
