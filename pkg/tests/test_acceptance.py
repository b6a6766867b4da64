"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line.

The lines are printed in the pytest terminal summary under
"acceptance criteria".
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from fdsic.bss_sic import FicaOptions, fica_sic, lift_to_real, lifted_mixing
from fdsic.config import SweepConfig
from fdsic.fica_core import center_and_whiten, contrast_tanh, deflation_fica
from fdsic.impairments import ChannelRealization, ImpairmentConfig, transmit_through
from fdsic.ls_sic import lp_estimates
from fdsic.metrics import compute_ber, compute_osinr, qpsk_ber, spectral_efficiency_ratio
from fdsic.ofdm_phy import FrameSpec, build_frame, demap_bits, map_bits, random_bits, training_sequence
from fdsic.sweep import method_specs, run_sweep, summarize, to_csv

N_SWEEP = (10, 25, 50, 100)


def record(log, number, ok, detail, elapsed):
    log.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s]")
    print(log[-1])
    assert ok, detail


def corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return abs(np.vdot(a, b)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)


def si_leak(est, soi, si):
    basis = np.column_stack([soi, np.conj(soi), si, np.conj(si)])
    c, *_ = np.linalg.lstsq(basis, est, rcond=None)
    return float(np.linalg.norm(c[2:]) / abs(c[0]))


def fig6_config(hpr):
    return SweepConfig(soi_tx_db=[-10.0], si_tx_db=[0.0], hpr3_db=[hpr], n_symbols=list(N_SWEEP),
                       trials=100, seed=2024, noise_power_db=-40.0)


def mean_by(rows, key):
    out = {}
    for s in summarize(rows):
        out[(s["n_symbols"], s["method"])] = s[key]
    return out


@pytest.fixture(scope="module")
def sweep_linear():
    t0 = time.perf_counter()
    rows = run_sweep(fig6_config(200.0))
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep_cubic():
    t0 = time.perf_counter()
    rows = run_sweep(fig6_config(35.0))
    return rows, time.perf_counter() - t0


def test_criterion_1_lifting(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 10_000
    a1, a2, s1, s2, w = (rng.standard_normal((5, n)) + 1j * rng.standard_normal((5, n)))
    direct = a1 * s1 + a2 * s2 + w
    worst = 0.0
    for i in range(n):
        src = np.array([s1[i].real, s1[i].imag, s2[i].real, s2[i].imag])
        lifted = lifted_mixing(a1[i], a2[i]) @ src + np.array([0, 0, w[i].real, w[i].imag])
        want = lift_to_real([s1[i]], [direct[i]])[:, 0]
        worst = max(worst, np.max(np.abs(lifted - want)))
    dt = time.perf_counter() - t0
    record(acceptance_log, 1, worst <= 1e-12 and dt < 1.0,
           f"max |lifted - complex| = {worst:.2e} over {n} draws", dt)


def test_criterion_2_whitening_deflation(acceptance_log):
    t0 = time.perf_counter()
    cov_err = orth_err = fd_err = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(50, 1000))
        x = rng.standard_normal((4, 4)) @ rng.laplace(size=(4, m)) + rng.standard_normal((4, 1))
        z, vt = center_and_whiten(x)
        cov_err = max(cov_err, np.max(np.abs(z @ z.T / m - np.eye(vt.kept_dims))))
        rows = deflation_fica(z, 2)
        orth_err = max(orth_err, np.max(np.abs(rows.rows @ rows.rows.T - np.eye(2))))
        u = rng.uniform(-5, 5, 200)
        h = 1e-4
        fd = (contrast_tanh(u + h)[0] - contrast_tanh(u - h)[0]) / (2 * h)
        fd_err = max(fd_err, np.max(np.abs(fd - contrast_tanh(u)[1])))
    dt = time.perf_counter() - t0
    ok = cov_err <= 1e-8 and orth_err <= 1e-8 and fd_err <= 1e-6 and dt < 10
    record(acceptance_log, 2, ok,
           f"cov err {cov_err:.1e}, row orthonormality {orth_err:.1e}, tanh' fd err {fd_err:.1e}", dt)


def test_criterion_3_noiseless_separation(acceptance_log):
    t0 = time.perf_counter()
    opts = FicaOptions(gate="none", fallback=False)
    good = total = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        spec = FrameSpec.fica_default(100)
        fa = build_frame(random_bits(rng, spec), spec, "A")
        fb = build_frame(random_bits(rng, spec), spec, "B")
        cfg = ImpairmentConfig(noise_power=0.0, pa_nodes="none", soi_tx_power_db=-10.0)
        x1, x2, _ = transmit_through(fa, fb, ChannelRealization.random(rng, spec), cfg, spec, rng)
        res = fica_sic(x1, x2, spec, opts)
        for d, b in zip(res.per_subcarrier_diag, spec.data_bins):
            total += 1
            if d.failed:
                continue
            est, s, si = res.soi_grid[b], fb.ref_grid.data[b], fa.ref_grid.data[b]
            good += corr(est, s) >= 0.999 and si_leak(est, s, si) <= 0.01
    dt = time.perf_counter() - t0
    frac = good / total
    record(acceptance_log, 3, frac >= 0.95 and dt < 60,
           f"{frac:.1%} of {total} subcarriers with corr >= 0.999 and SI leak <= 0.01", dt)


def test_criterion_4_gap(acceptance_log, sweep_linear):
    rows, dt = sweep_linear
    m = mean_by(rows, "osinr_db")
    gaps = {n: m[(n, "FICA")] - m[(n, "LS")] for n in N_SWEEP}
    ok = gaps[100] >= 3.0 and all(gaps[n] > 0 for n in (25, 50, 100)) and dt < 300
    detail = "FICA-LS mean OSINR gap " + ", ".join(f"N={n}: {gaps[n]:+.2f} dB" for n in N_SWEEP)
    record(acceptance_log, 4, ok, detail, dt)


def test_criterion_5_frame_length_trend(acceptance_log, sweep_linear, sweep_cubic):
    lin = mean_by(sweep_linear[0], "osinr_db")
    cub = mean_by(sweep_cubic[0], "osinr_db")
    dt = sweep_linear[1] + sweep_cubic[1]
    curve = [lin[(n, "FICA")] for n in N_SWEEP]
    sat = [cub[(n, "FICA")] for n in N_SWEEP]
    increasing = all(b > a for a, b in zip(curve, curve[1:]))
    d_small = sat[1] - sat[0]
    d_large = sat[3] - sat[2]
    ok = increasing and d_large < d_small and dt < 600
    detail = ("HPR3=200: " + "/".join(f"{v:.2f}" for v in curve)
              + f" dB; HPR3=35: 10->25 {d_small:+.2f} dB, 50->100 {d_large:+.2f} dB")
    record(acceptance_log, 5, ok, detail, dt)


def test_criterion_6_ls_statistics(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    spec = FrameSpec.fica_default(1)
    sigma2 = 0.01
    bins = spec.active_bins
    errs = []
    t_abs2 = np.abs(training_sequence(spec, "B")[bins, 0]) ** 2
    for _ in range(200):
        fa = build_frame(random_bits(rng, spec), spec, "A")
        fb = build_frame(random_bits(rng, spec), spec, "B")
        cfg = ImpairmentConfig(noise_power=sigma2, pa_nodes="none")
        _, x2, g = transmit_through(fa, fb, ChannelRealization.random(rng, spec, "multipath"), cfg, spec, rng)
        _, a2 = lp_estimates(x2, spec)
        errs.append(a2[bins] - g.alpha2[bins])
    errs = np.concatenate(errs)
    expected = sigma2 / (spec.lp_symbols * np.mean(t_abs2))
    var = np.mean(np.abs(errs) ** 2)
    se = np.sqrt(var / errs.size)
    bias = abs(np.mean(errs))
    dt = time.perf_counter() - t0
    ok = abs(var / expected - 1) <= 0.05 and bias < 3 * se and dt < 30
    record(acceptance_log, 6, ok,
           f"Var ratio {var / expected:.4f} over {errs.size} estimates, |bias| {bias:.2e} (3 SE {3 * se:.2e})", dt)


def test_criterion_7_ber(acceptance_log, sweep_linear):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n = 200_000
    parts, ok = [], True
    for target in (4.0, 7.0, 10.0):
        bits = rng.integers(0, 2, 2 * n)
        s = map_bits(bits)
        e2 = 10 ** (-target / 10)
        s_hat = s + np.sqrt(e2 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        osinr = 10 ** (compute_osinr(s_hat, s) / 10)
        ber = compute_ber(demap_bits(s_hat), bits)
        p = qpsk_ber(osinr)
        sd = np.sqrt(p * (1 - p) / bits.size)
        ok &= abs(ber - p) <= 3 * sd
        parts.append(f"{target:g} dB: {ber:.4g} vs {p:.4g}")
    ber = mean_by(sweep_linear[0], "ber")
    order = {n_: (ber[(n_, "FICA")], ber[(n_, "LS")]) for n_ in (25, 50, 100)}
    ok &= all(f <= l for f, l in order.values())
    dt = time.perf_counter() - t0
    parts.append("BER FICA/LS " + ", ".join(f"N={k}: {f:.1e}/{l:.1e}" for k, (f, l) in order.items()))
    record(acceptance_log, 7, bool(ok) and dt < 120, "; ".join(parts), dt)


def test_criterion_8_spectral_efficiency(acceptance_log, sweep_linear):
    t0 = time.perf_counter()
    specs = method_specs(100)
    ratio = spectral_efficiency_ratio(specs["FICA"], specs["LS"])
    per_row = {r.method: r.data_subcarriers for r in sweep_linear[0]}
    ok = ratio == Fraction(52, 44) and Fraction(per_row["FICA"], per_row["LS"]) == Fraction(52, 44)
    record(acceptance_log, 8, ok, f"FICA/LS data subcarriers = {per_row['FICA']}/{per_row['LS']} "
           f"= {float(ratio):.4f}", time.perf_counter() - t0)


def test_criterion_9_determinism(acceptance_log):
    t0 = time.perf_counter()
    cfg = SweepConfig(soi_tx_db=[-10.0, 0.0], hpr3_db=[200.0, 35.0], n_symbols=[10, 25], trials=3, seed=5)
    a = to_csv(run_sweep(cfg, jobs=1))
    b = to_csv(run_sweep(cfg, jobs=1))
    c = to_csv(run_sweep(cfg, jobs=8))
    dt = time.perf_counter() - t0
    ok = a == b == c and dt < 60
    record(acceptance_log, 9, ok, f"{len(a.splitlines()) - 1} rows identical across runs and jobs 1/8", dt)
