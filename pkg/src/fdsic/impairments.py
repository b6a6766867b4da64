"""Two-input full-duplex channel: Tx powers, PA cubic nonlinearity, IQ
imbalance, per-subcarrier channel gains and AWGN.

The receiver of node A sees

    R(k) = alpha1(k) S_si(k) + alpha2(k) S_soi(k) + N(k)

where the SI comes from node A's own transmitter and the SOI from node B.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ofdm_phy import ComplexGrid, FrameSpec, NodeFrame, demodulate_ofdm

PA_NODES = ("both", "si", "soi", "none")


@dataclass
class ChannelRealization:
    """Per-subcarrier SI and SOI gains (FFT-bin order, length ``n_fft``)."""

    alpha1: np.ndarray
    alpha2: np.ndarray
    model: str = "flat"
    taps1: Optional[np.ndarray] = None
    taps2: Optional[np.ndarray] = None

    @classmethod
    def flat(cls, alpha1: complex, alpha2: complex, n_fft: int = 64) -> "ChannelRealization":
        return cls(
            np.full(n_fft, alpha1, complex),
            np.full(n_fft, alpha2, complex),
            "flat",
            np.array([alpha1], complex),
            np.array([alpha2], complex),
        )

    @classmethod
    def from_taps(cls, taps1, taps2, spec: FrameSpec) -> "ChannelRealization":
        taps1 = np.atleast_1d(np.asarray(taps1, complex))
        taps2 = np.atleast_1d(np.asarray(taps2, complex))
        if max(taps1.size, taps2.size) - 1 > spec.cp_len:
            raise ValueError("channel memory exceeds the cyclic prefix")
        # unitary DFT grid convention: circular convolution scales bin k by H(k)
        h1 = np.fft.fft(taps1, spec.n_fft)
        h2 = np.fft.fft(taps2, spec.n_fft)
        model = "flat" if taps1.size == taps2.size == 1 else f"multipath-{max(taps1.size, taps2.size)}-tap"
        return cls(h1, h2, model, taps1, taps2)

    @classmethod
    def random(cls, rng: np.random.Generator, spec: FrameSpec, model: str = "flat",
               n_taps: int = 4, decay: float = 0.5) -> "ChannelRealization":
        """Unit-average-power channel pair.

        ``flat`` draws unit-magnitude gains with uniform random phase, so the
        ISINR is set by the Tx powers alone. ``multipath`` draws Rayleigh taps
        with an exponential power-delay profile normalised to unit energy.
        """
        if model == "flat":
            ph = rng.uniform(0, 2 * np.pi, 2)
            return cls.from_taps(np.exp(1j * ph[:1]), np.exp(1j * ph[1:]), spec)
        if model == "multipath":
            pdp = decay ** np.arange(n_taps)
            pdp /= pdp.sum()
            taps = (rng.standard_normal((2, n_taps)) + 1j * rng.standard_normal((2, n_taps)))
            taps *= np.sqrt(pdp / 2)
            return cls.from_taps(taps[0], taps[1], spec)
        raise ValueError(f"unknown channel model {model!r}")


@dataclass
class ImpairmentConfig:
    noise_power: float = 1e-4
    hpr3_db: float = 200.0
    si_tx_power_db: float = 0.0
    soi_tx_power_db: float = 0.0
    iqi: dict = field(default_factory=dict)  # node -> (gain_mismatch_db, phase_mismatch_deg)
    pa_nodes: str = "both"
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.noise_power >= 0:
            raise ValueError("noise_power must be >= 0")
        if not 0 <= self.hpr3_db <= 200 and self.hpr3_db != np.inf:
            raise ValueError("hpr3_db must lie in [0, 200] (or inf for a linear PA)")
        if self.pa_nodes not in PA_NODES:
            raise ValueError(f"pa_nodes must be one of {PA_NODES}")
        for node in self.iqi:
            if node not in ("A", "B"):
                raise ValueError(f"IQ imbalance given for unknown node {node!r}")


def db_to_amplitude(db: float) -> float:
    return 10.0 ** (db / 20.0)


def cubic_coefficient(hpr3_db: float, ref_power: float) -> float:
    """Real ``c3`` putting the cubic term ``hpr3_db`` below the linear term.

    Uses circular-Gaussian moments at the reference power:
    ``c3**2 * E|x|^6 / E|x|^2 = 10**(-hpr3_db/10)`` with ``E|x|^6 = 6 P**3``.
    """
    if not ref_power > 0:
        raise ValueError("ref_power must be positive")
    if np.isinf(hpr3_db):
        return 0.0
    return float(np.sqrt(10.0 ** (-hpr3_db / 10.0) / (6.0 * ref_power ** 2)))


def apply_pa_nonlinearity(x, hpr3_db: float, ref_power: float) -> np.ndarray:
    """Memoryless baseband cubic PA: ``y = x + c3 x |x|^2``."""
    c3 = cubic_coefficient(hpr3_db, ref_power)
    x = np.asarray(x, dtype=complex)
    if c3 == 0.0:
        return x.copy()
    return x + c3 * x * (x.real ** 2 + x.imag ** 2)


def iq_coefficients(gain_mismatch_db: float, phase_mismatch_deg: float) -> tuple[complex, complex]:
    g = db_to_amplitude(gain_mismatch_db)
    e = g * np.exp(1j * np.deg2rad(phase_mismatch_deg))
    return (1 + e) / 2, (1 - e) / 2


def apply_iq_imbalance(x, gain_mismatch_db: float = 0.0, phase_mismatch_deg: float = 0.0) -> np.ndarray:
    """Widely-linear IQ imbalance ``y = mu x + nu conj(x)``."""
    mu, nu = iq_coefficients(gain_mismatch_db, phase_mismatch_deg)
    x = np.asarray(x, dtype=complex)
    if nu == 0:
        return mu * x
    return mu * x + nu * np.conj(x)


def convolve_channel(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Linear convolution truncated to the input length (channel starts at rest)."""
    if taps.size == 1:
        return x * taps[0]
    return np.convolve(x, taps)[: x.size]


def awgn(rng: np.random.Generator, n: int, noise_power: float) -> np.ndarray:
    if noise_power == 0:
        return np.zeros(n, complex)
    return np.sqrt(noise_power / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def nominal_power(spec: FrameSpec, tx_power_db: float) -> float:
    """Average time-domain power of a unit-energy-per-subcarrier OFDM body."""
    return len(spec.active_subcarriers) / spec.n_fft * 10.0 ** (tx_power_db / 10.0)


@dataclass
class GenieRecord:
    """Noise-free received components and the quantities behind the metrics."""

    alpha1: np.ndarray  # effective SI gain per bin, Tx amplitude included
    alpha2: np.ndarray
    si_rx: ComplexGrid  # SI component at the demodulator, distortion included
    soi_rx: ComplexGrid
    noise: ComplexGrid
    noise_power: float
    si_tx_db: float
    soi_tx_db: float


def _tx_chain(frame: NodeFrame, power_db: float, pa_on: bool, cfg: ImpairmentConfig) -> np.ndarray:
    spec = frame.spec
    x = frame.time_samples * db_to_amplitude(power_db)
    if pa_on:
        x = apply_pa_nonlinearity(x, cfg.hpr3_db, nominal_power(spec, power_db))
    if frame.node_id in cfg.iqi:
        x = apply_iq_imbalance(x, *cfg.iqi[frame.node_id])
    return x


def transmit_through(frame_si: NodeFrame, frame_soi: NodeFrame, chan: ChannelRealization,
                     cfg: ImpairmentConfig, spec: FrameSpec,
                     rng: Optional[np.random.Generator] = None):
    """Pass both nodes' frames through the channel and demodulate at node A.

    Returns ``(x1_grid, x2_grid, genie)`` where ``x1_grid`` is the clean
    digital SI reference (the direct feed) and ``x2_grid`` the received
    mixture. Noise is drawn from ``rng`` if given, else from ``cfg.seed``.
    """
    if frame_si.spec != spec or frame_soi.spec != spec:
        raise ValueError("frames were built for a different FrameSpec")
    if frame_si.node_id == frame_soi.node_id:
        raise ValueError("SI and SOI frames must come from different nodes")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    pa_si = cfg.pa_nodes in ("both", "si")
    pa_soi = cfg.pa_nodes in ("both", "soi")
    si_tx = _tx_chain(frame_si, cfg.si_tx_power_db, pa_si, cfg)
    soi_tx = _tx_chain(frame_soi, cfg.soi_tx_power_db, pa_soi, cfg)

    si_rx = convolve_channel(si_tx, chan.taps1)
    soi_rx = convolve_channel(soi_tx, chan.taps2)
    noise = awgn(rng, spec.frame_len, cfg.noise_power)

    si_grid = demodulate_ofdm(si_rx, spec)
    soi_grid = demodulate_ofdm(soi_rx, spec)
    noise_grid = demodulate_ofdm(noise, spec)
    x2 = demodulate_ofdm(si_rx + soi_rx + noise, spec)

    genie = GenieRecord(
        alpha1=chan.alpha1 * db_to_amplitude(cfg.si_tx_power_db),
        alpha2=chan.alpha2 * db_to_amplitude(cfg.soi_tx_power_db),
        si_rx=si_grid,
        soi_rx=soi_grid,
        noise=noise_grid,
        noise_power=cfg.noise_power,
        si_tx_db=cfg.si_tx_power_db,
        soi_tx_db=cfg.soi_tx_power_db,
    )
    x1 = ComplexGrid(frame_si.ref_grid.lp.copy(), frame_si.ref_grid.data.copy())
    return x1, x2, genie
