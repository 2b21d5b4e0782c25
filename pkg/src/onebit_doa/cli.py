"""Command-line interface.

    onebit-doa loss --var snr --range -20:10:0.5 --k 8 --theta 10 --out fig1_k8.csv
    onebit-doa bound --k 4 --theta 5 --snr -3 --n 1000
    onebit-doa simulate --k 4 --theta 5 --snr-list -6:0:1 --runs 2000 --out fig4.csv
    onebit-doa orthant 0.5 0 0 0 0 0 --mc 1000000
    onebit-doa selftest

Angles are degrees and SNRs dB on this surface; the library works in radians.
Exit codes: 0 success, 2 invalid input, 3 runtime failure, 3+n for n failed
selftest groups.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from unittest import mock

import numpy as np

from . import quantized_moments
from .array_model import UlaSource, fisher_unquantized, receive_covariance
from .bounds import bound_report, fisher_exact_small, fisher_lower_bound
from .errors import DomainError, InvalidCorrelation, OneBitDoaError
from .estimator import CMLE, GAUSSIAN_MLE, cmle
from .montecarlo import ExperimentConfig, RmseReport, run_rmse_experiment
from .quantized_moments import (arcsine_map, orthant4, orthant4_conditioning, sign_patterns,
                                statistic_moments)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
LONG_K = 8
LOSS_HEADER = ("variable", "K", "theta_deg", "snr_db", "fisher_y", "fisher_lb", "chi_db")

log = logging.getLogger("onebit_doa")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers

def parse_range(text: str) -> list[float]:
    """``start:stop:step`` inclusive of ``stop``."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"range must look like start:stop:step, got {text!r}") from None
    if step == 0 or (stop - start) / step < 0:
        raise UsageError(f"range {text!r} is empty")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def parse_list(text: str) -> list[float]:
    """Comma list (``1,2,5``), integer span (``2..8``) or a ``start:stop:step`` range."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..")
        try:
            return [float(v) for v in range(int(a), int(b) + 1)]
        except ValueError:
            raise UsageError(f"bad span {text!r}") from None
    if ":" in text:
        return parse_range(text)
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad list {text!r}") from None
    if not values:
        raise UsageError("empty list")
    return values


# flags whose value may legitimately start with a minus sign
_VALUE_FLAGS = {"--range", "--list", "--snr", "--theta", "--snr-list"}


def _join_negative_values(argv: list[str]) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1][:1] == "-" \
                and argv[i + 1][1:2] in set("0123456789."):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; keys mirror long flag names."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
    parser.set_defaults(**defaults)


# ---------------------------------------------------------------- output helpers

def _render(header, rows, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` (stdout when None) without leaving partial files."""
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------- commands

def loss_row(variable: str, K: int, theta_deg: float, snr_db: float) -> tuple:
    rep = bound_report(UlaSource.from_degrees(K, theta_deg, snr_db))
    return (variable, K, theta_deg, snr_db, rep.fisher_y, rep.fisher_lb, rep.chi_db)


def _loss_task(args: tuple) -> tuple:
    return loss_row(*args)


def cmd_loss(args) -> int:
    if (args.range is None) == (args.list is None):
        raise UsageError("give exactly one of --range or --list")
    values = parse_range(args.range) if args.range is not None else parse_list(args.list)
    points = []
    for v in values:
        K, theta, snr = args.k, args.theta, args.snr
        if args.var == "snr":
            snr = v
        elif args.var == "theta":
            theta = v
        else:
            if v != int(v):
                raise UsageError(f"K must be an integer, got {v}")
            K = int(v)
        if K > LONG_K and not args.allow_long:
            raise UsageError(f"K={K} exceeds {LONG_K}; pass --allow-long for large arrays")
        UlaSource.from_degrees(K, theta, snr)
        points.append((args.var, K, theta, snr))

    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_loss_task, points))
    else:
        rows = [loss_row(*p) for p in points]
    _write_atomic(args.out, _render(LOSS_HEADER, rows, args.format))
    return EXIT_OK


def cmd_bound(args) -> int:
    rep = bound_report(UlaSource.from_degrees(args.k, args.theta, args.snr), args.n)
    fields = {
        "K": args.k, "theta_deg": args.theta, "snr_db": args.snr, "N": args.n,
        "fisher_y": rep.fisher_y, "fisher_lb": rep.fisher_lb, "chi": rep.chi, "chi_db": rep.chi_db,
        "pcrlb_rad2": rep.pcrlb_rad2, "pcrlb_deg2": rep.pcrlb_deg2,
        "pcrlb_root_deg": rep.pcrlb_root_deg,
    }
    if args.format == "json":
        fields["gls_weights"] = rep.gls_weights.tolist()
        _write_atomic(args.out, json.dumps(fields, indent=2) + "\n")
    else:
        _write_atomic(args.out, _render(tuple(fields), [tuple(fields.values())], "csv"))
    return EXIT_OK


def _simulate_config(args) -> ExperimentConfig:
    if args.replay:
        try:
            summary = json.loads(Path(args.replay).read_text())
            return ExperimentConfig.from_dict(summary["config"])
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot replay {args.replay}: {exc}") from None
    estimator = {"cmle": CMLE, "gaussian": GAUSSIAN_MLE}[args.estimator]
    return ExperimentConfig(K=args.k, theta_deg=args.theta, snr_db_list=tuple(parse_list(args.snr_list)),
                            N=args.n, runs=args.runs, master_seed=args.seed, estimator=estimator,
                            grid_points=args.grid_points)


def simulate_csv(report: RmseReport, fmt: str = "csv") -> str:
    return _render(RmseReport.CSV_HEADER, report.csv_rows(), fmt)


def cmd_simulate(args) -> int:
    cfg = _simulate_config(args)
    try:
        # setup: the bound must exist before any runs are spent
        bound_report(UlaSource.from_degrees(cfg.K, cfg.theta_deg, cfg.snr_db_list[0]), cfg.N)
    except OneBitDoaError as exc:
        log.error("estimator setup failed: %s", exc)
        return EXIT_RUNTIME
    report = run_rmse_experiment(cfg, workers=args.threads)
    _write_atomic(args.out, simulate_csv(report, args.format))
    summary_path = args.summary or (str(Path(args.out).with_suffix(".json")) if args.out else None)
    if summary_path:
        summary = {
            "config": cfg.to_dict(),
            "points": [{"snr_db": p.snr_db, "rmse_deg": p.rmse_deg, "pcrlb_root_deg": p.pcrlb_root_deg,
                        "crlb_root_deg": p.crlb_root_deg, "ratio": p.ratio,
                        "failed_runs": p.failed_runs, "wall_time_sec": p.wall_time_sec}
                       for p in report.points],
        }
        _write_atomic(summary_path, json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def correlation_from_six(r) -> np.ndarray:
    r12, r13, r14, r23, r24, r34 = r
    return np.array([[1, r12, r13, r14], [r12, 1, r23, r24], [r13, r23, 1, r34], [r14, r24, r34, 1]],
                    dtype=float)


def cmd_orthant(args) -> int:
    corr = correlation_from_six(args.corr)
    p = orthant4(corr)
    total = math.fsum(orthant4(corr * np.outer(q, q)) for q in sign_patterns(4))
    out = {"orthant4": p, "orthant_sum": total}
    if args.mc:
        rng = np.random.default_rng(args.seed)
        chol = np.linalg.cholesky(quantized_moments.validate_correlation(corr))
        hits, done = 0, 0
        while done < args.mc:
            n = min(1_000_000, args.mc - done)
            x = chol @ rng.standard_normal((4, n))
            hits += int(np.count_nonzero(np.all(x > 0, axis=0)))
            done += n
        est = hits / args.mc
        sigma = math.sqrt(p * (1.0 - p) / args.mc)
        out["mc"] = {"n": args.mc, "estimate": est, "sigma": sigma,
                     "within_3sigma": abs(est - p) <= 3.0 * sigma}
    _write_atomic(args.out, json.dumps(out, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- selftest

def _corrupted_arcsine_map(cov, gamma):
    qc = arcsine_map(cov, gamma)
    return quantized_moments.QuantizedCovariance(qc.sigma_z, 1.5 * qc.dsigma_z, qc.rho)


def check_sandwich() -> list[str]:
    failures = []
    for th in range(-80, 81, 10):
        for snr in (-15, -9, -3, 0, 5):
            src = UlaSource.from_degrees(2, th, snr)
            cov = receive_covariance(src)
            fy = fisher_unquantized(cov)
            flb, _ = fisher_lower_bound(statistic_moments(quantized_moments.arcsine_map(cov, src.gamma)))
            fz = fisher_exact_small(src)
            slack = 1e-6 * fy
            if not (flb <= fz + slack and fz <= fy + slack):
                failures.append(f"theta={th} snr={snr}: lb={flb:.6g} exact={fz:.6g} y={fy:.6g}")
    return failures


def check_orthant(n: int = 20, seed: int = 7) -> list[str]:
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n):
        g = rng.standard_normal((4, 6))
        c = g @ g.T
        d = np.sqrt(np.diag(c))
        c = c / np.outer(d, d)
        total = math.fsum(orthant4(c * np.outer(q, q)) for q in sign_patterns(4))
        if abs(total - 1.0) > 1e-7:
            failures.append(f"matrix {i}: orthant sum {total!r}")
        if i < 3:
            ref = orthant4_conditioning(c)
            if abs(ref - orthant4(c)) > 1e-8:
                failures.append(f"matrix {i}: orthant4 {orthant4(c)!r} vs conditioning {ref!r}")
    return failures


def check_fixed_point() -> list[str]:
    failures = []
    for K, th, snr in ((2, 10.0, 0.0), (3, -35.0, -5.0), (4, 5.0, -3.0)):
        src = UlaSource.from_degrees(K, th, snr)
        sm = statistic_moments(quantized_moments.arcsine_map(receive_covariance(src), src.gamma))
        res = cmle(sm.mu, K, src.gamma)
        if not res.converged or abs(res.theta_hat_rad - src.theta_rad) > 1e-6:
            failures.append(f"K={K} theta={th} snr={snr}: got {res.theta_hat_deg!r} deg")
    return failures


SELFTEST_GROUPS = (("sandwich", check_sandwich), ("orthant", check_orthant),
                   ("fixed_point", check_fixed_point))


def cmd_selftest(args) -> int:
    t0 = time.perf_counter()
    failed = 0
    with ExitStack() as stack:
        if args.corrupt_arcsine:
            stack.enter_context(mock.patch.object(quantized_moments, "arcsine_map",
                                                  _corrupted_arcsine_map))
        for name, check in SELFTEST_GROUPS:
            problems = check()
            print(f"{'PASS' if not problems else 'FAIL'} {name}")
            for p in problems[:10]:
                print(f"    {p}")
            failed += bool(problems)
    elapsed = time.perf_counter() - t0
    if elapsed > 120:
        log.warning("selftest took %.0f s (budget 120 s)", elapsed)
    return EXIT_OK if failed == 0 else EXIT_RUNTIME + failed


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=20160101, help="master seed (default %(default)s)")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--config", default=None, help="flat key = value file; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--k", type=int, default=4, help="number of sensors")
    model.add_argument("--theta", type=float, default=10.0, help="DOA in degrees")
    model.add_argument("--snr", type=float, default=0.0, help="SNR in dB")

    parser = argparse.ArgumentParser(prog="onebit-doa", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loss", parents=[common, model], help="quantization-loss sweep")
    p.add_argument("--var", choices=("snr", "theta", "k"), required=True)
    p.add_argument("--range", default=None, help="start:stop:step, stop inclusive")
    p.add_argument("--list", default=None, help="comma list or integer span a..b")
    p.add_argument("--allow-long", action="store_true", help=f"permit K > {LONG_K}")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("bound", parents=[common, model], help="bounds at one model point")
    p.add_argument("--n", type=int, default=1, help="snapshots for the PCRLB")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo RMSE versus PCRLB")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--theta", type=float, default=5.0)
    p.add_argument("--snr-list", default="-6:0:1")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--runs", type=int, default=2000)
    p.add_argument("--estimator", choices=("cmle", "gaussian"), default="cmle")
    p.add_argument("--grid-points", type=int, default=361)
    p.add_argument("--summary", default=None, help="JSON summary path (default: --out with .json)")
    p.add_argument("--replay", default=None, help="rerun the configuration stored in a JSON summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("orthant", parents=[common], help="quadrivariate orthant probability")
    p.add_argument("corr", type=float, nargs=6, metavar="R",
                   help="correlations r12 r13 r14 r23 r24 r34")
    p.add_argument("--mc", type=int, default=0, help="Monte Carlo cross-check sample count")
    p.set_defaults(func=cmd_orthant)

    p = sub.add_parser("selftest", parents=[common], help="built-in consistency checks")
    p.add_argument("--corrupt-arcsine", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)
    parser.subcommands = sub.choices
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            _apply_config(parser.subcommands[args.command], read_config_file(args.config))
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError, ValueError) as exc:
        print(f"onebit-doa: error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError, InvalidCorrelation) as exc:
        print(f"onebit-doa: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OneBitDoaError, ArithmeticError) as exc:
        print(f"onebit-doa: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"onebit-doa: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
