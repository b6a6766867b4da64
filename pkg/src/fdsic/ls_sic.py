"""Least-squares SIC baseline: LP channel estimates, per-symbol pilot
correction and cancellation/equalisation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ofdm_phy import ComplexGrid, FrameSpec, pilot_values, training_sequence

UNRECOVERABLE_GAIN = 1e-12


@dataclass
class LsChannelEstimate:
    """Channel estimates on FFT bins.

    ``alpha*_hat`` are the LP estimates, shape ``(n_fft,)``; the per-symbol
    corrections have shape ``(n_fft, n_symbols)`` and are 1 when no pilots
    are configured.
    """

    alpha1_hat: np.ndarray
    alpha2_hat: np.ndarray
    correction1: np.ndarray
    correction2: np.ndarray

    def tracked(self):
        return (self.alpha1_hat[:, None] * self.correction1,
                self.alpha2_hat[:, None] * self.correction2)


@dataclass
class SubcarrierDiag:
    subcarrier: int
    converged: bool = True
    iterations: int = 0
    condition_number: float = 1.0
    si_leak_correlation: float = 0.0
    complexness: float = 0.0
    failed: bool = False
    fallback: bool = False
    reason: str = ""
    candidate: str = ""
    lp_misfit: float = float("nan")
    residual: float = float("nan")


@dataclass
class SicResult:
    """Recovered SOI on the data region, shape ``(n_fft, n_symbols)``.

    Bins that are not data subcarriers, and data bins that could not be
    recovered, hold zeros.
    """

    soi_grid: np.ndarray
    per_subcarrier_diag: list[SubcarrierDiag]
    method_tag: str
    spec: FrameSpec = field(repr=False, default=None)

    @property
    def n_failed(self) -> int:
        return sum(d.failed for d in self.per_subcarrier_diag)

    @property
    def n_fallback(self) -> int:
        return sum(d.fallback for d in self.per_subcarrier_diag)


def ls_estimate(r_lp, t_lp) -> np.ndarray:
    """Sample mean of ``R_l(k) / T_l(k)`` over the ``L`` training symbols.

    ``r_lp`` and ``t_lp`` share shape ``(..., L)``.
    """
    r_lp = np.asarray(r_lp, complex)
    t_lp = np.asarray(t_lp, complex)
    if r_lp.shape != t_lp.shape:
        raise ValueError(f"shape mismatch {r_lp.shape} vs {t_lp.shape}")
    if np.any(t_lp == 0):
        raise ZeroDivisionError("training sequence has zero entries")
    return np.mean(r_lp / t_lp, axis=-1)


def lp_estimates(x2_grid: ComplexGrid, spec: FrameSpec):
    """Estimate ``alpha1`` (SI, node A slot) and ``alpha2`` (SOI, node B slot)
    on all active bins; other bins are left at zero."""
    if spec.preamble_mode != "nonoverlapped":
        raise ValueError("LS estimation needs a nonoverlapped long preamble")
    bins = spec.active_bins
    out = []
    for node in ("A", "B"):
        t = training_sequence(spec, node)[bins]
        a = np.zeros(spec.n_fft, complex)
        a[bins] = ls_estimate(x2_grid.lp[bins][:, spec.lp_slot(node)], t)
        out.append(a)
    return out[0], out[1]


def lp_noise_power(x2_grid: ComplexGrid, spec: FrameSpec) -> float:
    """Pooled noise variance from the spread of ``R_l / T_l`` across LP symbols.

    Valid for a channel that is static over the preamble; needs at least two
    LP symbols per slot.
    """
    if spec.lp_symbols < 2 or spec.preamble_mode != "nonoverlapped":
        return float("nan")
    bins = spec.active_bins
    dev = []
    for node in ("A", "B"):
        ratio = x2_grid.lp[bins][:, spec.lp_slot(node)] / training_sequence(spec, node)[bins]
        dev.append(ratio - ratio.mean(axis=1, keepdims=True))
    dev = np.concatenate(dev, axis=1)
    dof = spec.lp_symbols - 1
    return float(np.sum(np.abs(dev) ** 2) / (dev.shape[0] * 2 * dof))


def _interp_complex(x_new, x_known, y_known):
    return np.interp(x_new, x_known, y_known.real) + 1j * np.interp(x_new, x_known, y_known.imag)


def pilot_track(rx_grid: ComplexGrid, alpha1_hat, alpha2_hat, spec: FrameSpec) -> LsChannelEstimate:
    """Per-symbol multiplicative corrections from each node's four pilots.

    At every symbol, pilot bins give ``R / (alpha_hat T_p)``; these are
    linearly interpolated over logical subcarrier index (held at the band
    edges) onto all active subcarriers.
    """
    ones = np.ones((spec.n_fft, spec.n_symbols), complex)
    if spec.n_pilot == 0:
        warnings.warn("no pilots configured; LS estimates are not tracked", stacklevel=2)
        return LsChannelEstimate(np.asarray(alpha1_hat), np.asarray(alpha2_hat), ones, ones.copy())

    active = np.array(spec.active_subcarriers)
    corrections = []
    for node, alpha in (("A", alpha1_hat), ("B", alpha2_hat)):
        k_p = np.array(spec.pilot_subcarriers(node))
        b_p = spec.bins(k_p)
        ratio = rx_grid.data[b_p] / (alpha[b_p, None] * pilot_values(spec, node))
        c = ones.copy()
        for n in range(spec.n_symbols):
            c[spec.bins(active), n] = _interp_complex(active, k_p, ratio[:, n])
        corrections.append(c)
    return LsChannelEstimate(np.asarray(alpha1_hat), np.asarray(alpha2_hat), *corrections)


def ls_cancel(x2_grid: ComplexGrid, si_grid: ComplexGrid, est: LsChannelEstimate,
              spec: FrameSpec) -> SicResult:
    """``S_soi = (R - alpha1 S_si) / alpha2`` on every data subcarrier."""
    a1, a2 = est.tracked()
    out = np.zeros((spec.n_fft, spec.n_symbols), complex)
    diags = []
    for k, b in zip(spec.data_subcarriers, spec.data_bins):
        d = SubcarrierDiag(k)
        if np.any(np.abs(a2[b]) < UNRECOVERABLE_GAIN):
            d.failed = True
            d.reason = "alpha2 estimate vanishes"
        else:
            out[b] = (x2_grid.data[b] - a1[b] * si_grid.data[b]) / a2[b]
        diags.append(d)
    return SicResult(out, diags, "LS", spec)


def ls_sic(x1_grid: ComplexGrid, x2_grid: ComplexGrid, spec: FrameSpec, track: bool = True) -> SicResult:
    """Full LS pipeline: LP estimates, optional pilot tracking, cancellation."""
    x1_grid.check(spec)
    x2_grid.check(spec)
    a1, a2 = lp_estimates(x2_grid, spec)
    if track and spec.n_pilot:
        est = pilot_track(x2_grid, a1, a2, spec)
    else:
        ones = np.ones((spec.n_fft, spec.n_symbols), complex)
        est = LsChannelEstimate(a1, a2, ones, ones.copy())
    return ls_cancel(x2_grid, x1_grid, est, spec)
