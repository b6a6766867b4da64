"""Two-node full-duplex OFDM frame construction and demodulation.

Frames follow a WiFi-like layout: a short preamble (inert, sync is assumed
perfect), a long preamble carrying each node's known training sequence, then
``n_symbols`` cyclic-prefixed data symbols. In nonoverlapped mode each node
owns its own long-preamble slot and is silent during the other's.

All grids are stored in FFT-bin order with shape ``(n_fft, n_symbols)``.
Logical subcarrier ``k`` in ``[-n_fft/2, n_fft/2)`` lives in bin ``k % n_fft``.
The DFT is unitary in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

NODES = ("A", "B")
PREAMBLE_MODES = ("overlapped", "nonoverlapped")
QAM_ORDERS = (4, 16, 64)

# Seeds fixing the per-node training / pilot sequences.
_TRAINING_SEED = {"A": 0x5A11, "B": 0x50B1}
_SHORT_PREAMBLE_SEED = 0x5B


class FrameError(ValueError):
    """Raised on malformed frame specs, grids or sample streams."""


@dataclass(frozen=True)
class FrameSpec:
    """OFDM and frame dimensioning.

    Defaults reproduce the 52-data / 0-pilot configuration at 5 MHz:
    64-point FFT, 3.2 us CP (16 samples), 16 us symbols, a 32 us long
    preamble (two 80-sample symbols) and a 16 us short preamble.
    """

    n_fft: int = 64
    n_data: int = 52
    n_pilot: int = 0
    cp_len: int = 16
    n_symbols: int = 100
    lp_symbols: int = 2
    sp_len: int = 80
    sample_rate: float = 5e6
    preamble_mode: str = "nonoverlapped"

    def __post_init__(self):
        if self.n_fft < 8 or self.n_fft & (self.n_fft - 1):
            raise FrameError(f"n_fft must be a power of two >= 8, got {self.n_fft}")
        if not 0 <= self.cp_len <= self.n_fft:
            raise FrameError(f"cp_len must lie in [0, n_fft], got {self.cp_len}")
        if self.n_symbols < 1 or self.lp_symbols < 1:
            raise FrameError("n_symbols and lp_symbols must be positive")
        if self.sp_len < 0 or self.sp_len % 2:
            raise FrameError("sp_len must be a non-negative even sample count")
        if self.preamble_mode not in PREAMBLE_MODES:
            raise FrameError(f"unknown preamble_mode {self.preamble_mode!r}")
        if self.n_pilot not in (0, 8):
            raise FrameError("n_pilot must be 0 or 8 (four per node)")
        active = self.active_subcarriers
        pilots = self.pilot_subcarriers("A") + self.pilot_subcarriers("B")
        if len(set(pilots)) != len(pilots) or not set(pilots) <= set(active):
            raise FrameError(f"pilot positions collide for n_fft={self.n_fft}")
        if self.n_data + self.n_pilot != len(active):
            raise FrameError(
                f"n_data + n_pilot = {self.n_data + self.n_pilot} does not fill "
                f"the {len(active)} active subcarriers"
            )

    @classmethod
    def fica_default(cls, n_symbols: int = 100, **kw) -> "FrameSpec":
        return cls(n_data=52, n_pilot=0, n_symbols=n_symbols, **kw)

    @classmethod
    def ls_default(cls, n_symbols: int = 100, **kw) -> "FrameSpec":
        return cls(n_data=44, n_pilot=8, n_symbols=n_symbols, **kw)

    # -- layout -----------------------------------------------------------
    @property
    def symbol_len(self) -> int:
        return self.cp_len + self.n_fft

    @property
    def lp_slot_len(self) -> int:
        return self.lp_symbols * self.symbol_len

    @property
    def n_lp_slots(self) -> int:
        return 2 if self.preamble_mode == "nonoverlapped" else 1

    @property
    def n_lp_grid_symbols(self) -> int:
        """Long-preamble OFDM symbols in a demodulated grid (all slots)."""
        return self.n_lp_slots * self.lp_symbols

    @property
    def frame_len(self) -> int:
        return self.sp_len + self.n_lp_slots * self.lp_slot_len + self.n_symbols * self.symbol_len

    def lp_slot(self, node: str) -> slice:
        """Columns of the LP grid belonging to ``node``'s training slot."""
        _check_node(node)
        if self.preamble_mode == "overlapped":
            return slice(0, self.lp_symbols)
        i = NODES.index(node)
        return slice(i * self.lp_symbols, (i + 1) * self.lp_symbols)

    # -- subcarrier map ---------------------------------------------------
    @cached_property
    def active_subcarriers(self) -> tuple[int, ...]:
        """Logical indices of used subcarriers (DC and band edges null)."""
        half = self.n_fft * 13 // 32
        return tuple(range(-half, 0)) + tuple(range(1, half + 1))

    def pilot_subcarriers(self, node: str) -> tuple[int, ...]:
        _check_node(node)
        if self.n_pilot == 0:
            return ()
        half = self.n_fft * 13 // 32
        if node == "A":
            pos = (int(round(7 * self.n_fft / 64)), int(round(21 * self.n_fft / 64)))
        else:
            pos = (int(round(14 * self.n_fft / 64)), half)
        return tuple(sorted(-p for p in pos)) + tuple(sorted(pos))

    @cached_property
    def data_subcarriers(self) -> tuple[int, ...]:
        pilots = set(self.pilot_subcarriers("A") + self.pilot_subcarriers("B"))
        return tuple(k for k in self.active_subcarriers if k not in pilots)

    @cached_property
    def subcarrier_map(self) -> dict[int, str]:
        """Role of every logical subcarrier: data, pilot-A, pilot-B or null."""
        roles = {k: "null" for k in range(-self.n_fft // 2, self.n_fft // 2)}
        for k in self.data_subcarriers:
            roles[k] = "data"
        for node in NODES:
            for k in self.pilot_subcarriers(node):
                roles[k] = f"pilot-{node}"
        return roles

    def bins(self, logical) -> np.ndarray:
        return np.asarray(logical, dtype=int) % self.n_fft

    @property
    def active_bins(self) -> np.ndarray:
        return self.bins(self.active_subcarriers)

    @property
    def data_bins(self) -> np.ndarray:
        return self.bins(self.data_subcarriers)

    def pilot_bins(self, node: str) -> np.ndarray:
        return self.bins(self.pilot_subcarriers(node))


def _check_node(node):
    if node not in NODES:
        raise FrameError(f"unknown node id {node!r}; expected one of {NODES}")


@dataclass
class ComplexGrid:
    """Frequency-domain symbols of one frame.

    ``lp`` holds the long-preamble symbols of every LP slot and ``data`` the
    payload symbols; both are ``(n_fft, n)`` arrays in FFT-bin order.
    """

    lp: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.lp = np.asarray(self.lp, dtype=complex)
        self.data = np.asarray(self.data, dtype=complex)
        if self.lp.ndim != 2 or self.data.ndim != 2 or self.lp.shape[0] != self.data.shape[0]:
            raise FrameError("lp and data must be 2-D with a common subcarrier axis")

    @classmethod
    def zeros(cls, spec: FrameSpec) -> "ComplexGrid":
        return cls(
            np.zeros((spec.n_fft, spec.n_lp_grid_symbols), complex),
            np.zeros((spec.n_fft, spec.n_symbols), complex),
        )

    def check(self, spec: FrameSpec):
        want_lp = (spec.n_fft, spec.n_lp_grid_symbols)
        want_data = (spec.n_fft, spec.n_symbols)
        if self.lp.shape != want_lp or self.data.shape != want_data:
            raise FrameError(
                f"grid dims lp{self.lp.shape}/data{self.data.shape} do not match "
                f"spec lp{want_lp}/data{want_data}"
            )

    @property
    def values(self) -> np.ndarray:
        """LP and data symbols side by side, in time order."""
        return np.concatenate([self.lp, self.data], axis=1)

    def scaled(self, factor) -> "ComplexGrid":
        return ComplexGrid(self.lp * factor, self.data * factor)

    def __add__(self, other: "ComplexGrid") -> "ComplexGrid":
        return ComplexGrid(self.lp + other.lp, self.data + other.data)


@dataclass
class NodeFrame:
    time_samples: np.ndarray
    ref_grid: ComplexGrid
    payload_bits: np.ndarray
    node_id: str
    spec: FrameSpec = field(repr=False)
    qam_order: int = 4


# -- QAM ------------------------------------------------------------------

def _check_order(order):
    if order not in QAM_ORDERS:
        raise FrameError(f"unsupported QAM order {order}; allowed {QAM_ORDERS}")
    return int(np.log2(order))


def _pam_levels(bits_per_axis):
    """Gray-coded PAM amplitude for every axis bit pattern (as integer)."""
    m = 1 << bits_per_axis
    levels = np.empty(m)
    for i in range(m):  # i is the position on the line, gray(i) the label
        levels[i ^ (i >> 1)] = 2 * i - (m - 1)
    return levels


def _qam_scale(order):
    m = int(np.sqrt(order))
    return np.sqrt(2 * (m * m - 1) / 3)


def map_bits(bits, order: int = 4) -> np.ndarray:
    """Map bits onto unit-average-energy Gray-coded square QAM symbols.

    The first half of each symbol's bits select the in-phase level and the
    second half the quadrature level. For QPSK, ``00`` maps to ``(-1-1j)/sqrt(2)``.
    """
    k = _check_order(order)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % k:
        raise FrameError(f"bit count {bits.size} is not a multiple of {k}")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise FrameError("bits must be 0/1")
    half = k // 2
    weights = 1 << np.arange(half - 1, -1, -1)
    groups = bits.reshape(-1, k)
    i_idx = groups[:, :half] @ weights
    q_idx = groups[:, half:] @ weights
    levels = _pam_levels(half)
    return (levels[i_idx] + 1j * levels[q_idx]) / _qam_scale(order)


def demap_bits(symbols, order: int = 4) -> np.ndarray:
    """Hard-decision nearest-neighbour demapping (inverse of :func:`map_bits`)."""
    k = _check_order(order)
    half = k // 2
    m = 1 << half
    sym = np.asarray(symbols, dtype=complex).ravel() * _qam_scale(order)

    def axis_bits(x):
        pos = np.clip(np.rint((x + (m - 1)) / 2), 0, m - 1).astype(np.int64)
        label = pos ^ (pos >> 1)
        return (label[:, None] >> np.arange(half - 1, -1, -1)) & 1

    return np.concatenate([axis_bits(sym.real), axis_bits(sym.imag)], axis=1).ravel()


def nearest_symbol(symbols, order: int = 4) -> np.ndarray:
    """Closest constellation point to each sample (hard decision)."""
    sym = np.asarray(symbols, dtype=complex)
    return map_bits(demap_bits(sym, order), order).reshape(sym.shape)


# -- known sequences --------------------------------------------------------

def training_sequence(spec: FrameSpec, node: str) -> np.ndarray:
    """Node's long-preamble grid for its own slot, shape ``(n_fft, lp_symbols)``.

    A seeded constant-modulus QPSK base sequence on all active subcarriers;
    LP symbol ``l`` carries the base rotated by ``j**l`` so consecutive
    training vectors are orthogonal in the real (I, Q) plane.
    """
    _check_node(node)
    rng = np.random.default_rng([_TRAINING_SEED[node], spec.n_fft])
    base = np.zeros(spec.n_fft, complex)
    n_act = len(spec.active_subcarriers)
    base[spec.active_bins] = map_bits(rng.integers(0, 2, 2 * n_act), 4)
    rot = 1j ** np.arange(spec.lp_symbols)
    return base[:, None] * rot[None, :]


def pilot_values(spec: FrameSpec, node: str) -> np.ndarray:
    """Known pilot symbols of ``node``, shape ``(n_pilot_per_node, n_symbols)``."""
    bins = spec.pilot_bins(node)
    if bins.size == 0:
        return np.zeros((0, spec.n_symbols), complex)
    base = training_sequence(spec, node)[bins, 0]
    rng = np.random.default_rng([_TRAINING_SEED[node], 7])
    polarity = 1 - 2 * rng.integers(0, 2, spec.n_symbols)
    return base[:, None] * polarity[None, :]


def short_preamble(spec: FrameSpec) -> np.ndarray:
    """Periodic short training burst of ``sp_len // 2`` samples (inert)."""
    n = spec.sp_len // 2
    if n == 0:
        return np.zeros(0, complex)
    rng = np.random.default_rng(_SHORT_PREAMBLE_SEED)
    grid = np.zeros(spec.n_fft, complex)
    sparse = spec.active_bins[::4]
    grid[sparse] = map_bits(rng.integers(0, 2, 2 * sparse.size), 4) * 2.0
    period = np.fft.ifft(grid, norm="ortho")
    return np.resize(period, n)


# -- (de)modulation ---------------------------------------------------------

def _ofdm_symbols(cols: np.ndarray, spec: FrameSpec) -> np.ndarray:
    body = np.fft.ifft(cols, axis=0, norm="ortho")
    with_cp = np.concatenate([body[spec.n_fft - spec.cp_len:], body], axis=0)
    return with_cp.T.ravel()


def modulate_ofdm(grid: ComplexGrid, spec: FrameSpec) -> np.ndarray:
    """Unitary IDFT per symbol with cyclic prefix; returns the full frame.

    The short preamble region is filled with zeros here; :func:`build_frame`
    writes each node's burst into it.
    """
    grid.check(spec)
    out = np.zeros(spec.frame_len, complex)
    lp = _ofdm_symbols(grid.lp, spec)
    start = spec.sp_len
    out[start:start + lp.size] = lp
    data = _ofdm_symbols(grid.data, spec)
    out[start + lp.size:] = data
    return out


def _strip(samples: np.ndarray, n_sym: int, spec: FrameSpec) -> np.ndarray:
    blocks = samples.reshape(n_sym, spec.symbol_len)[:, spec.cp_len:]
    return np.fft.fft(blocks.T, axis=0, norm="ortho")


def demodulate_ofdm(samples, spec: FrameSpec) -> ComplexGrid:
    """Strip CPs and apply a unitary DFT per symbol; perfect timing assumed."""
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim != 1 or samples.size != spec.frame_len:
        raise FrameError(f"expected {spec.frame_len} samples, got {samples.shape}")
    n_lp = spec.n_lp_grid_symbols
    lp_end = spec.sp_len + n_lp * spec.symbol_len
    return ComplexGrid(
        _strip(samples[spec.sp_len:lp_end], n_lp, spec),
        _strip(samples[lp_end:], spec.n_symbols, spec),
    )


def build_frame(bits, spec: FrameSpec, node: str, modulation: int = 4) -> NodeFrame:
    """Lay out one node's frame: SP, LP in the node's slot, pilots, QAM payload."""
    _check_node(node)
    k = _check_order(modulation)
    bits = np.asarray(bits, dtype=np.int8).ravel()
    expected = spec.n_data * spec.n_symbols * k
    if bits.size != expected:
        raise FrameError(f"expected {expected} payload bits, got {bits.size}")

    grid = ComplexGrid.zeros(spec)
    grid.lp[:, spec.lp_slot(node)] = training_sequence(spec, node)
    symbols = map_bits(bits, modulation).reshape(spec.n_symbols, spec.n_data).T
    grid.data[spec.data_bins] = symbols
    if spec.n_pilot:
        grid.data[spec.pilot_bins(node)] = pilot_values(spec, node)

    samples = modulate_ofdm(grid, spec)
    half = spec.sp_len // 2
    i = NODES.index(node)
    samples[i * half:(i + 1) * half] = short_preamble(spec)
    return NodeFrame(samples, grid, bits, node, spec, modulation)


def random_bits(rng: np.random.Generator, spec: FrameSpec, modulation: int = 4) -> np.ndarray:
    return rng.integers(0, 2, spec.n_data * spec.n_symbols * _check_order(modulation), dtype=np.int8)
