"""Link metrics: input/output SINR, SIC gain, BER, EVM and throughput ratio."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .impairments import GenieRecord
from .ofdm_phy import ComplexGrid, FrameSpec

OSINR_CAP_DB = 80.0


class MetricError(ValueError):
    pass


@dataclass
class SinrReport:
    """One CSV row: a method's result on one trial at one sweep point."""

    method: str
    soi_tx_db: float
    si_tx_db: float
    hpr3_db: float
    n_symbols: int
    trial: int
    trial_seed: int
    isinr_db: float
    osinr_db: float
    sic_db: float
    ber: float
    evm_db: float
    n_bits: int
    data_subcarriers: int
    n_fallback: int

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.__dataclass_fields__)

    def as_row(self) -> list:
        return list(asdict(self).values())


def _db(x: float) -> float:
    with np.errstate(divide="ignore"):
        return float(10.0 * np.log10(x))


def compute_isinr(genie: GenieRecord, spec: FrameSpec) -> float:
    """SOI power over SI-plus-noise power at the receiver input, in dB.

    Powers are averaged over the data subcarriers and data symbols of the
    noise-free received components; the noise term is the configured
    per-bin variance.
    """
    b = spec.data_bins
    p_soi = np.mean(np.abs(genie.soi_rx.data[b]) ** 2)
    p_si = np.mean(np.abs(genie.si_rx.data[b]) ** 2)
    den = p_si + genie.noise_power
    if den == 0:
        return OSINR_CAP_DB
    return min(_db(p_soi / den), OSINR_CAP_DB)


def compute_osinr(soi_hat, soi_truth, spec: FrameSpec | None = None) -> float:
    """``10 log10(E|S|^2 / E|S_hat - S|^2)`` over the data region, capped.

    ``soi_hat`` and ``soi_truth`` are arrays of matching shape, or the
    truth may be a :class:`ComplexGrid` (its data region is used). With a
    ``spec`` only its data bins are scored.
    """
    if isinstance(soi_truth, ComplexGrid):
        soi_truth = soi_truth.data
    s_hat = np.asarray(getattr(soi_hat, "soi_grid", soi_hat), complex)
    s = np.asarray(soi_truth, complex)
    if spec is not None:
        s_hat, s = s_hat[spec.data_bins], s[spec.data_bins]
    if s_hat.shape != s.shape:
        raise MetricError(f"shape mismatch {s_hat.shape} vs {s.shape}")
    if s.size == 0:
        raise MetricError("empty data region")
    err = np.mean(np.abs(s_hat - s) ** 2)
    sig = np.mean(np.abs(s) ** 2)
    if err == 0:
        return OSINR_CAP_DB
    return min(_db(sig / err), OSINR_CAP_DB)


def compute_ber(bits_hat, bits_true) -> float:
    a = np.asarray(bits_hat).ravel()
    b = np.asarray(bits_true).ravel()
    if a.shape != b.shape:
        raise MetricError(f"bit streams differ in length ({a.size} vs {b.size})")
    if a.size == 0:
        raise MetricError("empty bit stream")
    return float(np.count_nonzero(a != b) / a.size)


def compute_evm(soi_hat, soi_truth) -> float:
    """RMS error vector magnitude relative to RMS reference, in dB."""
    a = np.asarray(soi_hat, complex).ravel()
    b = np.asarray(soi_truth, complex).ravel()
    if a.shape != b.shape:
        raise MetricError("length mismatch")
    if a.size == 0:
        raise MetricError("empty symbol stream")
    err = np.mean(np.abs(a - b) ** 2)
    if err == 0:
        return -OSINR_CAP_DB
    return max(_db(err / np.mean(np.abs(b) ** 2)), -OSINR_CAP_DB)


def qfunc(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def qpsk_ber(snr_linear: float) -> float:
    """Gray QPSK bit error probability at symbol SNR ``Es/N0``."""
    return qfunc(math.sqrt(snr_linear))


def spectral_efficiency_ratio(fica_spec: FrameSpec, ls_spec: FrameSpec) -> Fraction:
    """Data-subcarrier throughput ratio between two frame layouts."""
    return Fraction(fica_spec.n_data, ls_spec.n_data)
