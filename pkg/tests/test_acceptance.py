"""Acceptance criteria, one PASS/FAIL line each in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are printed
under the "acceptance criteria" section at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from onebit_doa.array_model import UlaSource, receive_covariance
from onebit_doa.bounds import bound_report, fisher_exact_small
from onebit_doa.cli import simulate_csv
from onebit_doa.estimator import cmle, gaussian_mle
from onebit_doa.montecarlo import ExperimentConfig, run_rmse_experiment
from onebit_doa.quantized_moments import model_moments, orthant4, pair_index, sign_patterns

from conftest import ACCEPTANCE_LINES, random_correlation


def record(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, detail


def chi_db(K, theta_deg, snr_db):
    return bound_report(UlaSource.from_degrees(K, theta_deg, snr_db)).chi_db


def test_sandwich_oracle():
    t0 = time.perf_counter()
    worst = math.inf
    for theta in range(-80, 81, 10):
        for snr in (-15.0, -9.0, -3.0, 0.0, 5.0):
            src = UlaSource.from_degrees(2, float(theta), snr)
            r = bound_report(src)
            exact = fisher_exact_small(src)
            slack = min(exact - r.fisher_lb, r.fisher_y - exact) / r.fisher_y
            worst = min(worst, slack)
    elapsed = time.perf_counter() - t0
    record("1 sandwich oracle", worst >= -1e-6 and elapsed < 120,
           f"worst relative slack {worst:.3g} (limit -1e-6), {elapsed:.1f} s")


def test_orthant_closure_and_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20160101)
    worst_sum, worst_z, misses = 0.0, 0.0, 0
    n = 1_000_000
    for _ in range(200):
        c = random_correlation(rng)
        total = math.fsum(orthant4(c * np.outer(q, q)) for q in sign_patterns(4))
        worst_sum = max(worst_sum, abs(total - 1.0))
        p = orthant4(c)
        x = np.linalg.cholesky(c) @ rng.standard_normal((4, n))
        est = np.count_nonzero(np.all(x > 0, axis=0)) / n
        z = abs(est - p) / math.sqrt(p * (1 - p) / n)
        worst_z = max(worst_z, z)
        misses += z > 3
    elapsed = time.perf_counter() - t0
    record("2 orthant closure and Monte Carlo", worst_sum <= 1e-7 and misses == 0 and elapsed < 180,
           f"max |sum - 1| {worst_sum:.2g}, max MC deviation {worst_z:.2f} sigma, "
           f"{misses}/200 beyond 3 sigma, {elapsed:.0f} s")


def test_low_snr_limit():
    values = {(K, th): chi_db(K, th, -30.0) for K in (2, 4, 8) for th in (0.0, 10.0, 45.0)}
    target = 10 * math.log10((2 / math.pi) ** 2)
    dev = max(abs(v - target) for v in values.values())
    record("3 low-SNR limit", dev <= 0.2,
           f"chi_dB in [{min(values.values()):.4f}, {max(values.values()):.4f}], "
           f"max deviation {dev:.4f} dB from {target:.4f}")


@pytest.fixture(scope="module")
def snr_sweep():
    snrs = np.arange(-20.0, 10.0 + 1e-9, 0.5)
    return {(K, th): np.array([chi_db(K, th, s) for s in snrs])
            for K in (2, 4, 8) for th in (10.0, 70.0)}, snrs


def test_loss_within_plotted_band(snr_sweep):
    sweep, snrs = snr_sweep
    allv = np.concatenate(list(sweep.values()))
    outside = [(K, th, snrs[i], v[i]) for (K, th), v in sweep.items()
               for i in np.flatnonzero((v < -8) | (v > -2))]
    detail = f"chi_dB range [{allv.min():.3f}, {allv.max():.3f}], {len(outside)} of {allv.size} points outside [-8, -2]"
    if outside:
        first = min(outside, key=lambda o: o[2])
        detail += f"; lowest SNR outside: K={first[0]} theta={first[1]:g} at {first[2]:g} dB ({first[3]:.3f})"
    record("4a loss inside [-8, -2] dB band", not outside, detail)


def test_loss_improves_with_array_size(snr_sweep):
    sweep, snrs = snr_sweep
    i0 = int(np.flatnonzero(snrs == 0.0)[0])
    ok = True
    parts = []
    for th in (10.0, 70.0):
        v = [sweep[K, th][i0] for K in (2, 4, 8)]
        ok &= v[0] < v[1] < v[2]
        parts.append(f"theta={th:g}: " + " < ".join(f"{x:.3f}" for x in v))
    record("4b loss ordered K=2 < K=4 < K=8 at 0 dB", ok, "; ".join(parts))


def test_loss_flattens_with_array_size():
    thetas = np.arange(0.0, 80.0 + 1e-9, 1.0)
    spread = {}
    for K in (2, 4, 8):
        v = np.array([chi_db(K, th, 0.0) for th in thetas])
        spread[K] = float(v.max() - v.min())
    ok = spread[2] > spread[4] > spread[8]
    record("5 angle spread decreases with K at 0 dB", ok,
           ", ".join(f"K={K}: {s:.4f} dB" for K, s in spread.items()))


@pytest.fixture(scope="module")
def rmse_report():
    cfg = ExperimentConfig(K=4, theta_deg=5.0, snr_db_list=tuple(range(-6, 1)), N=1000, runs=2000)
    t0 = time.perf_counter()
    report = run_rmse_experiment(cfg)
    return report, time.perf_counter() - t0


def test_rmse_tracks_pessimistic_bound(rmse_report):
    report, elapsed = rmse_report
    ratios = [p.ratio for p in report.points]
    failed = sum(p.failed_runs for p in report.points)
    ok = all(0.95 <= r <= 1.20 for r in ratios) and elapsed < 1200
    record("6a CMLE RMSE / PCRLB in [0.95, 1.20]", ok,
           "ratios " + ", ".join(f"{r:.3f}" for r in ratios)
           + f"; {failed} excluded runs; {elapsed:.0f} s")


def test_rmse_within_plotted_band(rmse_report):
    report, _ = rmse_report
    vals = [(p.rmse_deg, p.pcrlb_root_deg) for p in report.points]
    ok = all(0.005 <= v <= 0.015 for pair in vals for v in pair)
    record("6b RMSE and PCRLB root inside [0.005, 0.015] deg", ok,
           "PCRLB root (deg) " + ", ".join(f"{b:.4f}" for _, b in vals)
           + "; RMSE (deg) " + ", ".join(f"{a:.4f}" for a, _ in vals))


def test_moment_oracle():
    src = UlaSource.from_degrees(2, 10.0, 0.0)
    sm = model_moments(src)
    rng = np.random.default_rng(777)
    n, chunk = 1_000_000, 250_000
    p = pair_index(src.M)
    from onebit_doa.array_model import steering
    A = steering(src).A
    phis = []
    for _ in range(n // chunk):
        y = src.gamma * A @ rng.standard_normal((2, chunk)) + rng.standard_normal((src.M, chunk))
        z = np.where(y >= 0, 1.0, -1.0)
        phis.append((z[p.rows] * z[p.cols]).T)
    phi = np.concatenate(phis)
    mu_z = np.abs(phi.mean(axis=0) - sm.mu) / np.sqrt(np.diag(sm.R) / n)
    centered = phi - phi.mean(axis=0)
    R_hat = centered.T @ centered / n
    prods = centered[:, :, None] * centered[:, None, :]
    R_se = prods.std(axis=0) / math.sqrt(n)
    R_z = np.abs(R_hat - sm.R) / np.maximum(R_se, 1e-300)
    worst = max(mu_z.max(), R_z.max())
    record("7 moment oracle", worst <= 4,
           f"max deviation mu {mu_z.max():.2f} SE, R {R_z.max():.2f} SE (limit 4)")


def test_fixed_points():
    rng = np.random.default_rng(8)
    worst_c = worst_g = 0.0
    bad = 0
    for _ in range(50):
        K = int(rng.integers(2, 7))
        theta = math.radians(rng.uniform(-80, 80))
        gamma = 10 ** (rng.uniform(-10, 10) / 20)
        src = UlaSource(K, theta, gamma)
        rc = cmle(model_moments(src).mu, K, gamma)
        rg = gaussian_mle(receive_covariance(src).sigma_y, K, gamma)
        bad += (not rc.converged) + (not rg.converged)
        worst_c = max(worst_c, abs(rc.theta_hat_rad - theta))
        worst_g = max(worst_g, abs(rg.theta_hat_rad - theta))
    record("8 estimator fixed points", bad == 0 and max(worst_c, worst_g) <= 1e-6,
           f"max error CMLE {worst_c:.2g} rad, Gaussian {worst_g:.2g} rad, {bad} not converged")


def test_determinism_across_workers():
    cfg = ExperimentConfig(K=2, theta_deg=5.0, snr_db_list=(-6.0, -3.0, 0.0), N=300, runs=24)
    outputs = {w: simulate_csv(run_rmse_experiment(cfg, workers=w)).encode() for w in (1, 2, 8)}
    ok = outputs[1] == outputs[2] == outputs[8]
    record("9 determinism across 1, 2, 8 workers", ok,
           "byte-identical CSV" if ok else "CSV output differs between worker counts")
