"""FastICA-based self-interference cancellation in the frequency domain.

Per active subcarrier, the direct-feed SI reference ``X1`` and the received
mixture ``X2`` are lifted to four real rows ``[Re X1, Im X1, Re X2, Im X2]``
and whitened. The known SI directions seed the deflation; two components
carrying the SOI are extracted, ordered and sign-fixed, and the remaining
real 2x2 map ``G`` is estimated from the SOI long preamble (sent while the
SI node is silent) and inverted.

Several demixing candidates are tried per subcarrier and scored on the
known preambles and on constellation fit; subcarriers whose best score is
worse than preamble-only LS fall back to LS.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .fica_core import (
    DEFAULT_MAX_ITER,
    DEFAULT_RANK_TOL,
    DEFAULT_TOL,
    DemixingRows,
    RankDeficiencyWarning,
    WhiteningError,
    center_and_whiten,
    deflation_fica,
    refine_unit,
)
from .ls_sic import UNRECOVERABLE_GAIN, SicResult, SubcarrierDiag, lp_estimates, lp_noise_power
from .ofdm_phy import ComplexGrid, FrameSpec, nearest_symbol, training_sequence

MAX_CONDITION = 1e3
SI_LEAK_THRESHOLD = 0.9
POLISH_COLLAPSE = 0.5
MISFIT_FLOOR = 1e-9


class SeparationError(RuntimeError):
    pass


@dataclass
class FicaOptions:
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    rank_tol: float = DEFAULT_RANK_TOL
    ambiguity: str = "diagonal"  # or "full"
    max_condition: float = MAX_CONDITION
    si_leak_threshold: float = SI_LEAK_THRESHOLD
    include_lp: bool = True
    refine_si_leak: bool = False
    fallback: bool = True
    granularity: str = "per_subcarrier"  # or "joint" (flat channels only)
    polish: bool = True
    misfit_gate: float = 2.5  # threshold (x noise estimate) when gate == "misfit"
    gate: str = "residual"  # "residual", "misfit" or "none"
    modulation: int = 4  # QAM order of the SOI data, used by the residual score
    constrain_si: bool = False  # keep SOI rows orthogonal to the SI rows throughout

    def __post_init__(self):
        if self.ambiguity not in ("diagonal", "full"):
            raise ValueError(f"unknown ambiguity model {self.ambiguity!r}")
        if self.gate not in ("residual", "misfit", "none"):
            raise ValueError(f"unknown gate {self.gate!r}")
        if self.granularity not in ("per_subcarrier", "joint"):
            raise ValueError(f"unknown granularity {self.granularity!r}")


@dataclass
class AmbiguityEstimate:
    g_matrix: np.ndarray
    condition_number: float
    complexness: float
    residual: float = 0.0  # relative LP fit residual

    @property
    def accepted(self) -> bool:
        return bool(np.isfinite(self.condition_number) and self.condition_number <= MAX_CONDITION)

    @property
    def as_complex(self) -> complex:
        """Nearest complex scalar ``a + jb`` to ``G`` in the ``[[a,-b],[b,a]]`` sense."""
        g = self.g_matrix
        return complex((g[0, 0] + g[1, 1]) / 2, (g[1, 0] - g[0, 1]) / 2)


def lift_to_real(x1, x2) -> np.ndarray:
    """Stack ``[Re x1; Im x1; Re x2; Im x2]`` into a 4 x M real matrix."""
    x1 = np.asarray(x1, complex).ravel()
    x2 = np.asarray(x2, complex).ravel()
    if x1.size != x2.size:
        raise ValueError(f"length mismatch {x1.size} vs {x2.size}")
    return np.vstack([x1.real, x1.imag, x2.real, x2.imag])


def complex_block(a: complex) -> np.ndarray:
    """Real 2x2 matrix acting on ``[Re s, Im s]`` like multiplication by ``a``."""
    return np.array([[a.real, -a.imag], [a.imag, a.real]])


def lifted_mixing(alpha1: complex, alpha2: complex) -> np.ndarray:
    """Genie 4x4 real mixing matrix for one subcarrier."""
    a = np.zeros((4, 4))
    a[0, 0] = a[1, 1] = 1.0
    a[2:, :2] = complex_block(complex(alpha1))
    a[2:, 2:] = complex_block(complex(alpha2))
    return a


def complexness(g) -> float:
    """Share of ``G``'s Frobenius norm outside the complex-scalar structure."""
    g = np.asarray(g, float)
    anti = np.array([[g[0, 0] - g[1, 1], g[0, 1] + g[1, 0]],
                     [g[0, 1] + g[1, 0], g[1, 1] - g[0, 0]]]) / 2
    norm = np.linalg.norm(g)
    return float(np.linalg.norm(anti) / norm) if norm > 0 else 0.0


def _training_real(t_lp):
    t_lp = np.asarray(t_lp, complex).ravel()
    return np.vstack([t_lp.real, t_lp.imag])


def estimate_ambiguity(y_lp, t_lp, model: str = "full") -> AmbiguityEstimate:
    """Sample-mean estimate of the real 2x2 map from ``[T_r; T_i]`` to ``y``.

    ``y_lp`` is ``(2, L)`` (the recovered component pair over the SOI long
    preamble) and ``t_lp`` the ``L`` known complex training symbols. The
    full model solves ``mean(y t') mean(t t')^-1``; the diagonal model keeps
    one sample mean per row (``Y3`` against ``T_r``, ``Y4`` against ``T_i``).
    """
    y = np.atleast_2d(np.asarray(y_lp, float))
    t = _training_real(t_lp)
    if y.shape != t.shape:
        raise ValueError(f"y_lp must have shape {t.shape}, got {y.shape}")
    m = t.shape[1]
    if model == "full":
        ytt = y @ t.T / m
        ttt = t @ t.T / m
        if np.linalg.cond(ttt) > 1e12:
            raise np.linalg.LinAlgError("training vectors do not span the real plane")
        g = ytt @ np.linalg.inv(ttt)
    elif model == "diagonal":
        power = np.sum(t * t, axis=1) / m
        if np.any(power == 0):
            raise np.linalg.LinAlgError("training has a vanishing real or imaginary part")
        g = np.diag(np.sum(y * t, axis=1) / m / power)
    else:
        raise ValueError(f"unknown ambiguity model {model!r}")
    s = np.linalg.svd(g, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    fit = g @ t
    denom = np.sum(y * y)
    resid = float(np.sum((y - fit) ** 2) / denom) if denom > 0 else np.inf
    return AmbiguityEstimate(g, cond, complexness(g), resid)


@dataclass
class ResolvedPair:
    y: np.ndarray  # (2, M) ordered and sign-fixed component signals
    order: tuple[int, int]
    signs: np.ndarray
    si_leak_correlation: float
    rejected: list[int]


def _abs_corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(abs(a @ b) / den) if den > 0 else 0.0


def resolve_components(components, x1, y_lp_index, t_lp,
                       si_leak_threshold: float = SI_LEAK_THRESHOLD) -> ResolvedPair:
    """Reject SI-like components and order/sign the remaining pair.

    Parameters
    ----------
    components : ndarray, shape (K, M)
        Extracted component signals over all observation columns.
    x1 : complex ndarray, shape (M,)
        Known SI samples on the same columns.
    y_lp_index : index array
        Columns of the SOI long preamble.
    t_lp : complex ndarray
        Known SOI training symbols on those columns.

    Raises
    ------
    SeparationError
        If fewer than two SI-uncorrelated components remain.
    """
    components = np.atleast_2d(np.asarray(components, float))
    x1 = np.asarray(x1, complex)
    leaks = [max(_abs_corr(c, x1.real), _abs_corr(c, x1.imag)) for c in components]
    keep = [i for i, r in enumerate(leaks) if r <= si_leak_threshold]
    rejected = [i for i, r in enumerate(leaks) if r > si_leak_threshold]
    if len(keep) < 2:
        raise SeparationError(f"only {len(keep)} SI-uncorrelated components (leaks {leaks})")

    best = None
    for i, j in itertools.permutations(keep, 2):
        y = components[[i, j]]
        est = estimate_ambiguity(y[:, y_lp_index], t_lp, "full")
        g = est.g_matrix
        # the diagonal should carry the pair: prefer orders where it dominates
        score = (abs(g[0, 0]) + abs(g[1, 1])) / (np.abs(g).sum() + 1e-300) - 1e-3 * np.log10(est.condition_number + 1)
        if best is None or score > best[0] + 1e-12:
            best = (score, (i, j), g)
    _, order, g = best
    signs = np.where(np.diag(g) < 0, -1.0, 1.0)
    y = components[list(order)] * signs[:, None]
    leak = max(leaks[order[0]], leaks[order[1]])
    return ResolvedPair(y, order, signs, leak, rejected)


def _whitened_direction(dewhiten_row, known):
    w = np.array(dewhiten_row, float)
    for b in known:
        w -= (w @ b) * b
    n = np.linalg.norm(w)
    return w / n if n > 1e-12 else None


def lp_consistency(estimate, t_lp, lp_cols, si_lp_cols=None) -> float:
    """Mean squared misfit of an SOI estimate on the known preamble columns.

    The estimate should reproduce ``t_lp`` on the SOI preamble and vanish on
    the SI preamble, where the SOI node is silent.
    """
    err = np.abs(estimate[lp_cols] - np.asarray(t_lp)) ** 2
    if si_lp_cols is not None and len(si_lp_cols):
        err = np.concatenate([err, np.abs(estimate[si_lp_cols]) ** 2])
    return float(err.mean())


def residual_score(estimate, t_lp, lp_cols, si_lp_cols, data_cols, order) -> float:
    """Mean squared residual of an SOI estimate over all columns.

    Preamble columns are compared with the known training (SOI slot) or
    with zero (SI slot); data columns with their nearest constellation
    point. Needs no knowledge of the transmitted data.
    """
    est = np.asarray(estimate, complex)
    r = [np.abs(est[lp_cols] - t_lp) ** 2]
    if si_lp_cols is not None:
        r.append(np.abs(est[si_lp_cols]) ** 2)
    d = est[data_cols]
    r.append(np.abs(d - nearest_symbol(d, order)) ** 2)
    return float(np.mean(np.concatenate(r)))


def _candidate_rows(z, known, w_init, opts):
    """Demixing-row candidates: SI-orthogonal deflation, its unconstrained
    polish, and plain deflation of the X2 rows followed by a polish."""
    constrained = deflation_fica(z, 2, w_init, opts.max_iter, opts.tol, known)
    yield "constrained", constrained
    if opts.constrain_si:
        return
    free = deflation_fica(z, 2, w_init, opts.max_iter, opts.tol)
    for label, start in (("polished", constrained), ("free", free)):
        if not opts.polish:
            if label == "free":
                yield label, start
            continue
        refined = [refine_unit(z, w, opts.max_iter, opts.tol) for w in start.rows]
        rows = np.array([r[0] for r in refined])
        if abs(rows[0] @ rows[1]) < POLISH_COLLAPSE:
            yield label, DemixingRows(
                rows,
                [a + r[1] for a, r in zip(start.iterations_used, refined)],
                [c and r[2] for c, r in zip(start.converged, refined)],
            )


def separate_subcarrier(x1, x2, lp_cols, t_lp, opts: FicaOptions, si_lp_cols=None, fit_cols=None):
    """Run the lifting / whitening / deflation / ambiguity chain on one subcarrier.

    ``x1``, ``x2`` are complex over all observation columns; ``lp_cols``
    indexes the SOI long preamble and ``fit_cols`` (default: all) the
    columns the whitening and ICA are fitted on. Several demixing
    candidates are tried and the one most consistent with the known
    preambles is kept. Returns ``(soi_estimate, diag_fields)`` with the
    estimate over every column.
    """
    x = lift_to_real(x1, x2)
    x1 = np.asarray(x1, complex)
    t_lp = np.asarray(t_lp, complex)
    x_fit = x if fit_cols is None else x[:, fit_cols]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        z, vt = center_and_whiten(x_fit, opts.rank_tol)
    d = vt.kept_dims
    if d < 4:
        raise SeparationError(f"observation rank {d} < 4: no room for two SOI components")
    dewhiten = vt.dewhitening  # (4, d); row i maps z back to centred x_i
    known = []
    for i in (0, 1):
        w = _whitened_direction(dewhiten[i], known)
        if w is None:
            raise SeparationError("SI reference is degenerate")
        known.append(w)
    w_init = []
    for i in (2, 3):
        w = _whitened_direction(dewhiten[i], known + w_init)
        w_init.append(w if w is not None else np.zeros(d))
    known, w_init = np.array(known), np.array(w_init)
    # demix uncentred data so LP columns keep their known-symbol values
    x_white = vt.apply(x, center=False)
    preamble = [np.atleast_1d(lp_cols)] + ([] if si_lp_cols is None else [np.atleast_1d(si_lp_cols)])
    data_cols = np.setdiff1d(np.arange(x.shape[1]), np.concatenate(preamble).astype(int))

    best, last_error = None, None
    for label, rows in _candidate_rows(z, known, w_init, opts):
        info = dict(converged=rows.all_converged, iterations=int(max(rows.iterations_used)))
        try:
            pair = resolve_components(rows.rows @ x_white, x1, lp_cols, t_lp, opts.si_leak_threshold)
        except SeparationError as exc:
            last_error = SeparationError(str(exc), info)
            continue
        y = pair.y
        if opts.refine_si_leak and si_lp_cols is not None and len(si_lp_cols):
            leak = estimate_ambiguity(y[:, si_lp_cols], x1[si_lp_cols], "full").g_matrix
            y = y - leak @ np.vstack([x1.real, x1.imag])
        amb = estimate_ambiguity(y[:, lp_cols], t_lp, opts.ambiguity)
        info.update(
            condition_number=amb.condition_number,
            si_leak_correlation=pair.si_leak_correlation,
            complexness=amb.complexness,
            candidate=label,
        )
        if not np.isfinite(amb.condition_number) or amb.condition_number > opts.max_condition:
            last_error = SeparationError(
                f"ill-conditioned ambiguity matrix (cond {amb.condition_number:.3g})", info)
            continue
        if not rows.all_converged:
            last_error = SeparationError("FastICA did not converge", info)
            continue
        s = np.linalg.solve(amb.g_matrix, y)
        est = s[0] + 1j * s[1]
        info["lp_misfit"] = lp_consistency(est, t_lp, lp_cols, si_lp_cols)
        info["residual"] = residual_score(est, t_lp, lp_cols, si_lp_cols, data_cols, opts.modulation)
        key = "residual" if opts.gate == "residual" else "lp_misfit"
        if best is None or info[key] < best[1][key]:
            best = (est, info)
    if best is None:
        raise last_error or SeparationError("no separation candidate")
    return best


def fica_sic(x1_grid: ComplexGrid, x2_grid: ComplexGrid, spec: FrameSpec,
             opts: FicaOptions | None = None) -> SicResult:
    """FICA-based SIC over all data subcarriers of ``spec``.

    Subcarriers whose separation fails (non-convergence, rank deficiency,
    SI leak, ill-conditioned ``G``, or a residual score above that of the
    preamble-only LS estimate) fall back to LS cancellation from the long
    preamble when ``opts.fallback`` is set and are flagged in the
    diagnostics.
    """
    opts = opts or FicaOptions()
    if spec.preamble_mode != "nonoverlapped":
        raise SeparationError("FICA-SIC requires a nonoverlapped long preamble")
    x1_grid.check(spec)
    x2_grid.check(spec)
    if opts.granularity == "joint":
        return _fica_joint(x1_grid, x2_grid, spec, opts)

    n_lp = spec.n_lp_grid_symbols
    t_b = training_sequence(spec, "B")
    lp_cols = np.arange(n_lp)[spec.lp_slot("B")]
    si_lp_cols = np.arange(n_lp)[spec.lp_slot("A")]
    fit_cols = None if opts.include_lp else np.arange(n_lp, n_lp + spec.n_symbols)

    a1_ls, a2_ls = lp_estimates(x2_grid, spec)
    out = np.zeros((spec.n_fft, spec.n_symbols), complex)
    diags = []
    for k, b in zip(spec.data_subcarriers, spec.data_bins):
        d = SubcarrierDiag(k)
        try:
            est, info = separate_subcarrier(x1_grid.values[b], x2_grid.values[b], lp_cols,
                                            t_b[b], opts, si_lp_cols, fit_cols)
            for key, val in info.items():
                setattr(d, key, val)
            out[b] = est[n_lp:]
        except (SeparationError, WhiteningError, np.linalg.LinAlgError) as exc:
            if len(exc.args) > 1 and isinstance(exc.args[1], dict):
                for key, val in exc.args[1].items():
                    setattr(d, key, val)
            d.reason = str(exc.args[0]) if exc.args else type(exc).__name__
            d.failed = True
        diags.append(d)

    if opts.gate == "misfit" and opts.misfit_gate:
        _gate_by_preamble_misfit(diags, a2_ls, lp_noise_power(x2_grid, spec), spec, opts.misfit_gate)
    elif opts.gate == "residual":
        data_cols = np.arange(n_lp, n_lp + spec.n_symbols)
        for d, b in zip(diags, spec.data_bins):
            if d.failed or abs(a2_ls[b]) < UNRECOVERABLE_GAIN:
                continue
            ls_all = (x2_grid.values[b] - a1_ls[b] * x1_grid.values[b]) / a2_ls[b]
            ls_score = residual_score(ls_all, t_b[b], lp_cols, si_lp_cols, data_cols, opts.modulation)
            if not d.residual <= ls_score:
                d.failed = True
                d.reason = f"residual {d.residual:.3g} above LS residual {ls_score:.3g}"

    for d, b in zip(diags, spec.data_bins):
        if d.failed:
            out[b] = 0
            if opts.fallback and abs(a2_ls[b]) >= UNRECOVERABLE_GAIN:
                out[b] = (x2_grid.data[b] - a1_ls[b] * x1_grid.data[b]) / a2_ls[b]
                d.fallback = True

    if not opts.fallback and all(d.failed for d in diags):
        raise SeparationError("separation failed on every subcarrier")
    return SicResult(out, diags, "FICA", spec)


def _gate_by_preamble_misfit(diags, alpha2, noise_power, spec, factor):
    """Flag subcarriers whose preamble misfit exceeds ``factor`` times the
    LP noise estimate (misfits are scaled to received units by
    ``|alpha2|**2``). The reference is floored relative to the SOI preamble
    power so that noiseless input is not rejected wholesale.
    """
    bins = spec.data_bins
    floor = MISFIT_FLOOR * float(np.mean(np.abs(alpha2[bins]) ** 2))
    ref = max(noise_power if np.isfinite(noise_power) else 0.0, floor)
    for d, b in zip(diags, bins):
        if d.failed:
            continue
        m = d.lp_misfit * abs(alpha2[b]) ** 2
        if not m <= factor * ref:
            d.failed = True
            d.reason = f"preamble misfit {m / ref:.3g}x noise estimate"


def _fica_joint(x1_grid, x2_grid, spec, opts):
    """One separation pooled over all data subcarriers (flat channels only)."""
    n_lp = spec.n_lp_grid_symbols
    bins = spec.data_bins
    n_cols = n_lp + spec.n_symbols
    x1 = x1_grid.values[bins].ravel()
    x2 = x2_grid.values[bins].ravel()
    offsets = np.arange(len(bins))[:, None] * n_cols
    lp_cols = (offsets + np.arange(n_lp)[spec.lp_slot("B")][None, :]).ravel()
    si_lp_cols = (offsets + np.arange(n_lp)[spec.lp_slot("A")][None, :]).ravel()
    t_b = training_sequence(spec, "B")[bins].ravel()
    fit_cols = None
    if not opts.include_lp:
        fit_cols = (offsets + np.arange(n_lp, n_cols)[None, :]).ravel()
    est, info = separate_subcarrier(x1, x2, lp_cols, t_b, opts, si_lp_cols, fit_cols)
    out = np.zeros((spec.n_fft, spec.n_symbols), complex)
    out[bins] = est.reshape(len(bins), n_cols)[:, n_lp:]
    diags = [SubcarrierDiag(k, **info) for k in spec.data_subcarriers]
    return SicResult(out, diags, "FICA", spec)
