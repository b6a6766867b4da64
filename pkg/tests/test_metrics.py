from fractions import Fraction

import numpy as np
import pytest

from fdsic.impairments import ChannelRealization, ImpairmentConfig, transmit_through
from fdsic.metrics import (
    OSINR_CAP_DB,
    MetricError,
    compute_ber,
    compute_evm,
    compute_isinr,
    compute_osinr,
    qpsk_ber,
    spectral_efficiency_ratio,
)
from fdsic.ofdm_phy import FrameSpec, build_frame, demap_bits, map_bits, random_bits


def qpsk(rng, n):
    return map_bits(rng.integers(0, 2, 2 * n))


class TestOsinr:
    def test_exact_is_capped(self, rng):
        s = qpsk(rng, 100)
        assert compute_osinr(s, s) == OSINR_CAP_DB

    def test_error_equal_to_signal(self, rng):
        s = qpsk(rng, 100)
        assert compute_osinr(s + s * 1j, s) == pytest.approx(0.0, abs=1e-12)

    def test_injected_noise(self):
        rng = np.random.default_rng(4)
        s = qpsk(rng, 100_000)
        sigma2 = 10 ** -1.3
        noisy = s + np.sqrt(sigma2 / 2) * (rng.standard_normal(s.size) + 1j * rng.standard_normal(s.size))
        assert compute_osinr(noisy, s) == pytest.approx(13.0, abs=0.1)

    def test_errors(self):
        with pytest.raises(MetricError):
            compute_osinr(np.zeros(0), np.zeros(0))
        with pytest.raises(MetricError):
            compute_osinr(np.zeros(3), np.zeros(4))

    def test_spec_restricts_to_data_bins(self, rng):
        spec = FrameSpec.ls_default(3)
        s = rng.standard_normal((64, 3)) + 0j
        hat = s.copy()
        hat[spec.pilot_bins("A")] += 5  # ignored: not data bins
        assert compute_osinr(hat, s, spec) == OSINR_CAP_DB


class TestBer:
    def test_identical_and_complement(self, rng):
        b = rng.integers(0, 2, 1000)
        assert compute_ber(b, b) == 0
        assert compute_ber(1 - b, b) == 1

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            compute_ber([0, 1], [0])

    def test_qpsk_at_10db(self):
        rng = np.random.default_rng(6)
        n, snr = 200_000, 10.0
        bits = rng.integers(0, 2, 2 * n)
        y = map_bits(bits) + np.sqrt(1 / (2 * snr)) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        p = qpsk_ber(snr)
        assert abs(compute_ber(demap_bits(y), bits) - p) < 3 * np.sqrt(p * (1 - p) / bits.size)


def test_evm(rng):
    s = qpsk(rng, 1000)
    assert compute_evm(s * 1.1, s) == pytest.approx(-20.0)
    assert compute_evm(s, s) == -OSINR_CAP_DB


def test_isinr_tracks_soi_power_step():
    spec = FrameSpec.fica_default(20)
    vals = []
    for soi_db in (0.0, 5.0, 10.0, 15.0):
        rng = np.random.default_rng(1)
        fa = build_frame(random_bits(rng, spec), spec, "A")
        fb = build_frame(random_bits(rng, spec), spec, "B")
        cfg = ImpairmentConfig(noise_power=1e-2, pa_nodes="none", soi_tx_power_db=soi_db)
        _, _, g = transmit_through(fa, fb, ChannelRealization.random(rng, spec, "multipath"), cfg, spec, rng)
        vals.append(compute_isinr(g, spec))
    assert np.allclose(np.diff(vals), 5.0, atol=1e-9)


def test_isinr_flat_unit_channels():
    spec = FrameSpec.fica_default(50)
    rng = np.random.default_rng(2)
    fa = build_frame(random_bits(rng, spec), spec, "A")
    fb = build_frame(random_bits(rng, spec), spec, "B")
    cfg = ImpairmentConfig(noise_power=0.0, soi_tx_power_db=-10.0)
    _, _, g = transmit_through(fa, fb, ChannelRealization.random(rng, spec), cfg, spec, rng)
    assert compute_isinr(g, spec) == pytest.approx(-10.0, abs=1e-6)


def test_spectral_efficiency_ratio():
    r = spectral_efficiency_ratio(FrameSpec.fica_default(), FrameSpec.ls_default())
    assert r == Fraction(52, 44) and float(r) == pytest.approx(1.1818, abs=1e-4)
