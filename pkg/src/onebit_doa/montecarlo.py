"""Monte Carlo RMSE experiment: simulate, hard-limit, estimate, aggregate.

Every run draws from its own generator seeded by
``run_seed(master_seed, snr_index, run_index)``, so a report depends only on
the configuration and never on how runs are spread over worker processes.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .array_model import UlaSource, fisher_unquantized, receive_covariance, steering
from .bounds import bound_report
from .estimator import (CMLE, GAUSSIAN_MLE, BitSnapshots, EstimatorOptions, cmle, gaussian_mle,
                        sample_statistics)
from .quantized_moments import model_moments

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
FAILURE_WARN_FRACTION = 0.01


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def run_seed(master_seed: int, snr_index: int, run_index: int) -> int:
    h = splitmix64(master_seed & _MASK64)
    h = splitmix64(h ^ (snr_index & _MASK64))
    return splitmix64(h ^ (run_index & _MASK64))


def sample_receive(src: UlaSource, N: int, seed) -> np.ndarray:
    """``M x N`` unquantized snapshots ``gamma*A x + eta``.

    ``seed`` is an integer or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A = steering(src).A
    x = rng.standard_normal((2, N))
    eta = rng.standard_normal((src.M, N))
    return src.gamma * (A @ x) + eta


def quantize(Y) -> BitSnapshots:
    """Element-wise sign with ``sign(0) = +1``."""
    Y = np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise ValueError("cannot quantize non-finite samples")
    return BitSnapshots(np.where(Y >= 0, 1, -1).astype(np.int8))


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 4
    theta_deg: float = 5.0
    snr_db_list: tuple[float, ...] = (-6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0)
    N: int = 1000
    runs: int = 2000
    master_seed: int = 20160101
    estimator: str = CMLE
    grid_points: int = 361
    # test hook: feed the population statistics instead of simulated data
    population_statistics: bool = False

    def __post_init__(self):
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))
        if self.runs < 1 or self.N < 1:
            raise ValueError("runs and N must be >= 1")
        if not self.snr_db_list:
            raise ValueError("snr_db_list must not be empty")
        if self.estimator not in (CMLE, GAUSSIAN_MLE):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        UlaSource.from_degrees(self.K, self.theta_deg, self.snr_db_list[0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db_list"] = list(self.snr_db_list)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)


@dataclass(frozen=True)
class SnrPoint:
    snr_db: float
    rmse_deg: float
    pcrlb_root_deg: float
    crlb_root_deg: float
    ratio: float
    failed_runs: int
    wall_time_sec: float = field(compare=False)


@dataclass(frozen=True)
class RmseReport:
    config: ExperimentConfig
    points: tuple[SnrPoint, ...]

    CSV_HEADER = ("snr_db", "rmse_deg", "pcrlb_root_deg", "ratio", "failed_runs")

    def csv_rows(self) -> list[tuple]:
        return [(p.snr_db, p.rmse_deg, p.pcrlb_root_deg, p.ratio, p.failed_runs) for p in self.points]


def _single_run(cfg: ExperimentConfig, snr_index: int, run_index: int) -> float | None:
    """Estimation error in radians, or None when the estimator did not converge."""
    src = UlaSource.from_degrees(cfg.K, cfg.theta_deg, cfg.snr_db_list[snr_index])
    opts = EstimatorOptions(grid_points=cfg.grid_points)
    try:
        if cfg.population_statistics:
            if cfg.estimator == CMLE:
                res = cmle(model_moments(src).mu, cfg.K, src.gamma, opts)
            else:
                res = gaussian_mle(receive_covariance(src).sigma_y, cfg.K, src.gamma, opts)
        else:
            Y = sample_receive(src, cfg.N, run_seed(cfg.master_seed, snr_index, run_index))
            if cfg.estimator == CMLE:
                res = cmle(sample_statistics(quantize(Y)), cfg.K, src.gamma, opts)
            else:
                res = gaussian_mle(Y @ Y.T / cfg.N, cfg.K, src.gamma, opts)
    except (ArithmeticError, ValueError) as exc:
        log.debug("run %d at SNR index %d failed: %s", run_index, snr_index, exc)
        return None
    if not res.converged:
        return None
    return res.theta_hat_rad - src.theta_rad


def _run_chunk(cfg: ExperimentConfig, snr_index: int, run_indices: range) -> list[float | None]:
    return [_single_run(cfg, snr_index, r) for r in run_indices]


def _chunks(n: int, parts: int) -> list[range]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def run_rmse_experiment(cfg: ExperimentConfig, workers: int = 1) -> RmseReport:
    """RMSE of the configured estimator against the pessimistic CRLB per SNR point."""
    points = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for si, snr_db in enumerate(cfg.snr_db_list):
            t0 = time.perf_counter()
            if pool is None:
                errors = _run_chunk(cfg, si, range(cfg.runs))
            else:
                futures = [pool.submit(_run_chunk, cfg, si, ch)
                           for ch in _chunks(cfg.runs, 4 * workers)]
                errors = [e for f in futures for e in f.result()]
            ok = [e for e in errors if e is not None]
            failed = len(errors) - len(ok)
            if failed > FAILURE_WARN_FRACTION * cfg.runs:
                log.warning("SNR %.2f dB: %d of %d runs did not converge and are excluded",
                            snr_db, failed, cfg.runs)
            rmse_deg = math.degrees(math.sqrt(math.fsum(e * e for e in ok) / len(ok))) if ok else math.nan

            src = UlaSource.from_degrees(cfg.K, cfg.theta_deg, snr_db)
            pcrlb_root = bound_report(src, cfg.N).pcrlb_root_deg
            crlb_root = math.degrees(math.sqrt(1.0 / (cfg.N * fisher_unquantized(receive_covariance(src)))))
            points.append(SnrPoint(snr_db, rmse_deg, pcrlb_root, crlb_root, rmse_deg / pcrlb_root,
                                   failed, time.perf_counter() - t0))
    finally:
        if pool is not None:
            pool.shutdown()
    return RmseReport(cfg, tuple(points))
