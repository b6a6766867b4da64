"""Monte-Carlo sweeps comparing LS-SIC and FICA-SIC.

Every trial draws one channel, one noise stream and one payload from seeds
derived from ``(base seed, point index, trial index)``, so results do not
depend on how trials are scheduled across worker processes.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bss_sic import FicaOptions, fica_sic
from .config import SweepConfig, SweepPoint
from .impairments import ChannelRealization, ImpairmentConfig, transmit_through
from .ls_sic import ls_sic
from .metrics import SinrReport, compute_ber, compute_evm, compute_isinr, compute_osinr
from .ofdm_phy import FrameSpec, build_frame, demap_bits, random_bits

METHODS = ("FICA", "LS")
OUTPUT_DIR_ENV = "FDSIC_OUTPUT_DIR"


def trial_seed(base_seed: int, point_index: int, trial: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(point_index, trial))
    return int(ss.generate_state(1, np.uint64)[0])


def method_specs(n_symbols: int) -> dict[str, FrameSpec]:
    """Frame layouts per method: LS spends 8 subcarriers on pilots, FICA none."""
    return {"FICA": FrameSpec.fica_default(n_symbols), "LS": FrameSpec.ls_default(n_symbols)}


def simulate(spec: FrameSpec, point: SweepPoint, seed: int, cfg: SweepConfig):
    """Build both frames and pass them through one channel/noise draw.

    The three sub-seeds (channel, noise, payload) are derived from ``seed``
    alone, so two frame layouts simulated with the same seed share the
    channel, the noise samples and the leading payload bits.

    Returns ``(x1, x2, genie, soi_frame)``.
    """
    rng = np.random.default_rng(seed)
    chan_seed, noise_seed, bit_seed = (int(s) for s in rng.integers(0, 2 ** 63, 3))
    brng = np.random.default_rng(bit_seed)
    fa = build_frame(random_bits(brng, spec, cfg.modulation), spec, "A", cfg.modulation)
    fb = build_frame(random_bits(brng, spec, cfg.modulation), spec, "B", cfg.modulation)
    chan = ChannelRealization.random(np.random.default_rng(chan_seed), spec, cfg.channel, cfg.n_taps)
    icfg = ImpairmentConfig(
        noise_power=cfg.noise_power,
        hpr3_db=point.hpr3_db,
        si_tx_power_db=point.si_tx_db,
        soi_tx_power_db=point.soi_tx_db,
    )
    x1, x2, genie = transmit_through(fa, fb, chan, icfg, spec, np.random.default_rng(noise_seed))
    return x1, x2, genie, fb


def run_method(method: str, spec: FrameSpec, x1, x2, modulation: int = 4):
    if method == "LS":
        return ls_sic(x1, x2, spec)
    if method == "FICA":
        return fica_sic(x1, x2, spec, FicaOptions(modulation=modulation))
    raise ValueError(f"unknown method {method!r}")


def run_trial(point: SweepPoint, trial: int, seed: int, cfg: SweepConfig) -> list[SinrReport]:
    reports = []
    for method, spec in method_specs(point.n_symbols).items():
        x1, x2, genie, fb = simulate(spec, point, seed, cfg)
        result = run_method(method, spec, x1, x2, cfg.modulation)
        s_hat = result.soi_grid[spec.data_bins]
        s_true = fb.ref_grid.data[spec.data_bins]
        bits_hat = demap_bits(s_hat.T.ravel(), cfg.modulation)
        isinr = compute_isinr(genie, spec)
        osinr = compute_osinr(s_hat, s_true)
        reports.append(SinrReport(
            method=method,
            soi_tx_db=point.soi_tx_db,
            si_tx_db=point.si_tx_db,
            hpr3_db=point.hpr3_db,
            n_symbols=point.n_symbols,
            trial=trial,
            trial_seed=seed,
            isinr_db=isinr,
            osinr_db=osinr,
            sic_db=osinr - isinr,
            ber=compute_ber(bits_hat, fb.payload_bits),
            evm_db=compute_evm(s_hat, s_true),
            n_bits=int(fb.payload_bits.size),
            data_subcarriers=spec.n_data,
            n_fallback=result.n_fallback,
        ))
    return reports


def _task(args):
    return run_trial(*args)


def run_sweep(cfg: SweepConfig, jobs: int | None = None) -> list[SinrReport]:
    """All (point, trial) pairs of ``cfg``, sorted by (axes, method, trial)."""
    jobs = cfg.jobs if jobs is None else jobs
    tasks = [(p, t, trial_seed(cfg.seed, i, t), cfg)
             for i, p in enumerate(cfg.points()) for t in range(cfg.trials)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        batches = [_task(t) for t in tasks]
    rows = [r for batch in batches for r in batch]
    rows.sort(key=lambda r: (r.soi_tx_db, r.si_tx_db, r.hpr3_db, r.n_symbols, r.method, r.trial))
    return rows


def to_csv(rows: list[SinrReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SinrReport.columns())
    for r in rows:
        w.writerow(r.as_row())
    return buf.getvalue()


def resolve_output(path) -> Path:
    """Apply the output-directory override from the environment, if set."""
    path = Path(path)
    override = os.environ.get(OUTPUT_DIR_ENV)
    return Path(override) / path.name if override else path


def write_csv(rows: list[SinrReport], path) -> Path:
    path = resolve_output(path)
    path.write_text(to_csv(rows), encoding="utf-8")
    return path


def summarize(rows: list[SinrReport]) -> list[dict]:
    """Mean OSINR / SIC / BER per (point, method)."""
    groups: dict = {}
    for r in rows:
        key = (r.soi_tx_db, r.si_tx_db, r.hpr3_db, r.n_symbols, r.method)
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        out.append(dict(
            soi_tx_db=key[0], si_tx_db=key[1], hpr3_db=key[2], n_symbols=key[3], method=key[4],
            trials=len(rs),
            isinr_db=float(np.mean([r.isinr_db for r in rs])),
            osinr_db=float(np.mean([r.osinr_db for r in rs])),
            sic_db=float(np.mean([r.sic_db for r in rs])),
            ber=float(np.mean([r.ber for r in rs])),
        ))
    return out
