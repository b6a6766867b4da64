"""Command-line entry point: ``fdsic sweep | single | selftest``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import selftest
from .config import ConfigError, SweepConfig, SweepPoint, load_config
from .metrics import compute_isinr, compute_osinr, spectral_efficiency_ratio
from .sweep import method_specs, run_method, run_sweep, simulate, summarize, write_csv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdsic", description="LS vs FastICA digital SIC for full-duplex OFDM links")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run a Monte-Carlo sweep and write a CSV")
    s.add_argument("config", help="key = value sweep configuration file")
    s.add_argument("-o", "--output", default="sweep.csv", help="CSV path (default: %(default)s)")
    s.add_argument("-j", "--jobs", type=int, default=None, help="worker processes (overrides config)")
    s.add_argument("-q", "--quiet", action="store_true", help="do not print the summary table")

    g = sub.add_parser("single", help="one trial with per-subcarrier FICA diagnostics")
    g.add_argument("--soi-tx-db", type=float, default=-10.0)
    g.add_argument("--si-tx-db", type=float, default=0.0)
    g.add_argument("--hpr3-db", type=float, default=200.0)
    g.add_argument("--n-symbols", type=int, default=100)
    g.add_argument("--noise-power-db", type=float, default=-40.0)
    g.add_argument("--channel", choices=("flat", "multipath"), default="flat")
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("selftest", help="run quick oracle checks")
    t.add_argument("--seed", type=int, default=0)
    return p


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    rows = run_sweep(cfg, args.jobs)
    path = write_csv(rows, args.output)
    if not args.quiet:
        print(f"{'method':6} {'soi_dB':>7} {'si_dB':>6} {'hpr3':>6} {'N':>4} "
              f"{'ISINR':>7} {'OSINR':>7} {'SIC':>7} {'BER':>9}")
        for s in summarize(rows):
            print(f"{s['method']:6} {s['soi_tx_db']:7.1f} {s['si_tx_db']:6.1f} {s['hpr3_db']:6.1f} "
                  f"{s['n_symbols']:4d} {s['isinr_db']:7.2f} {s['osinr_db']:7.2f} {s['sic_db']:7.2f} "
                  f"{s['ber']:9.2e}")
        specs = method_specs(cfg.n_symbols[0])
        ratio = spectral_efficiency_ratio(specs["FICA"], specs["LS"])
        print(f"data-subcarrier throughput FICA/LS = {specs['FICA'].n_data}/{specs['LS'].n_data} "
              f"= {float(ratio):.4f}")
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_single(args) -> int:
    cfg = SweepConfig(noise_power_db=args.noise_power_db, channel=args.channel, seed=args.seed,
                      n_symbols=[args.n_symbols], hpr3_db=[args.hpr3_db],
                      soi_tx_db=[args.soi_tx_db], si_tx_db=[args.si_tx_db], trials=1)
    point = SweepPoint(args.soi_tx_db, args.si_tx_db, args.hpr3_db, args.n_symbols)
    for method, spec in method_specs(args.n_symbols).items():
        x1, x2, genie, fb = simulate(spec, point, args.seed, cfg)
        res = run_method(method, spec, x1, x2)
        osinr = compute_osinr(res.soi_grid, fb.ref_grid.data, spec)
        print(f"{method}: ISINR {compute_isinr(genie, spec):.2f} dB  OSINR {osinr:.2f} dB  "
              f"fallback {res.n_fallback}/{len(res.per_subcarrier_diag)}")
        if method != "FICA":
            continue
        print(f"  {'k':>4} {'cand':>11} {'iter':>4} {'cond':>8} {'leak':>6} {'cplx':>6} "
              f"{'osinr':>7}  status")
        for d, b in zip(res.per_subcarrier_diag, spec.data_bins):
            e = np.mean(np.abs(res.soi_grid[b] - fb.ref_grid.data[b]) ** 2)
            sc = 10 * np.log10(1 / e) if e > 0 else float("inf")
            status = ("LS fallback: " if d.fallback else "failed: ") + d.reason if d.failed else "ok"
            print(f"  {d.subcarrier:4d} {d.candidate or '-':>11} {d.iterations:4d} "
                  f"{d.condition_number:8.2f} {d.si_leak_correlation:6.3f} {d.complexness:6.3f} "
                  f"{sc:7.2f}  {status}")
    return 0


def cmd_selftest(args) -> int:
    return 0 if selftest.run(args.seed) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"sweep": cmd_sweep, "single": cmd_single, "selftest": cmd_selftest}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"fdsic: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fdsic: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
