"""Quick oracle checks runnable from the command line (``fdsic selftest``)."""

from __future__ import annotations

import numpy as np

from .bss_sic import complex_block, lift_to_real, lifted_mixing
from .fica_core import center_and_whiten, contrast_tanh, deflation_fica
from .ls_sic import ls_estimate
from .metrics import compute_ber, qpsk_ber
from .ofdm_phy import FrameSpec, build_frame, demap_bits, demodulate_ofdm, map_bits, random_bits


def check_lifting(rng):
    a1, a2, s1, s2, n = (rng.standard_normal(5) + 1j * rng.standard_normal(5))
    r = a1 * s1 + a2 * s2 + n
    x = lift_to_real([s1], [r - n])
    mixed = lifted_mixing(a1, a2) @ np.array([s1.real, s1.imag, s2.real, s2.imag])
    err = np.max(np.abs(mixed - x[:, 0]))
    ok = err < 1e-12 and np.allclose(complex_block(a1) @ [1, 0], [a1.real, a1.imag])
    return ok, f"max error {err:.2e}"


def check_round_trip(rng):
    spec = FrameSpec.fica_default(10)
    bits = random_bits(rng, spec)
    frame = build_frame(bits, spec, "B")
    grid = demodulate_ofdm(frame.time_samples, spec)
    err = np.max(np.abs(grid.data - frame.ref_grid.data))
    back = demap_bits(grid.data[spec.data_bins].T.ravel())
    return err < 1e-12 and np.array_equal(back, bits), f"grid error {err:.2e}"


def check_whitening(rng):
    x = rng.laplace(size=(4, 500)) * np.arange(1, 5)[:, None]
    z, _ = center_and_whiten(x)
    err = np.max(np.abs(z @ z.T / z.shape[1] - np.eye(4)))
    rows = deflation_fica(z, 2).rows
    orth = np.max(np.abs(rows @ rows.T - np.eye(2)))
    return err < 1e-8 and orth < 1e-8, f"cov error {err:.1e}, row orthonormality {orth:.1e}"


def check_tanh_derivative(rng):
    u = rng.standard_normal(100)
    h = 1e-6
    fd = (np.tanh(u + h) - np.tanh(u - h)) / (2 * h)
    err = np.max(np.abs(contrast_tanh(u)[1] - fd))
    return err < 1e-6, f"max error {err:.1e}"


def check_ls_variance(rng):
    sigma2, trials = 0.1, 4000
    t = np.exp(1j * np.pi / 4 * np.array([1, 3]))
    noise = np.sqrt(sigma2 / 2) * (rng.standard_normal((trials, 2)) + 1j * rng.standard_normal((trials, 2)))
    est = ls_estimate(0.5 * t + noise, np.broadcast_to(t, (trials, 2)))
    ratio = np.var(est) / (sigma2 / 2)
    return abs(ratio - 1) < 0.1, f"variance ratio {ratio:.3f}"


def check_qpsk_ber(rng):
    snr = 10 ** 0.7
    n = 200_000
    s = map_bits(rng.integers(0, 2, 2 * n))
    noisy = s + np.sqrt(1 / (2 * snr)) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    ber = compute_ber(demap_bits(noisy), demap_bits(s))
    p = qpsk_ber(snr)
    sd = np.sqrt(p * (1 - p) / (2 * n))
    return abs(ber - p) < 4 * sd, f"BER {ber:.4g} vs {p:.4g}"


CHECKS = {
    "lifting": check_lifting,
    "ofdm round trip": check_round_trip,
    "whitening/deflation": check_whitening,
    "tanh derivative": check_tanh_derivative,
    "LS variance": check_ls_variance,
    "QPSK BER": check_qpsk_ber,
}


def run(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS.items():
        ok, msg = fn(rng)
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {msg}")
    return all_ok
