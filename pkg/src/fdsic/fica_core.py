"""Real-valued FastICA: centering, prewhitening and one-unit deflation with
the tanh contrast."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
DEFAULT_RANK_TOL = 1e-10


class WhiteningError(ValueError):
    pass


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass
class WhiteningTransform:
    """``Z = matrix @ (X - mean)``; ``matrix`` has ``kept_dims`` rows."""

    mean: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    kept_dims: int
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def apply(self, x: np.ndarray, center: bool = True) -> np.ndarray:
        x = np.asarray(x, float)
        if center:
            x = x - self.mean[:, None]
        return self.matrix @ x

    @property
    def dewhitening(self) -> np.ndarray:
        """Pseudo-inverse mapping whitened coordinates back to observations."""
        return np.linalg.pinv(self.matrix)


@dataclass
class DemixingRows:
    rows: np.ndarray  # (n_components, kept_dims), unit norm, mutually orthonormal
    iterations_used: list[int]
    converged: list[bool]

    @property
    def all_converged(self) -> bool:
        return all(self.converged)


def contrast_tanh(u):
    """``g(u) = tanh(u)`` and ``g'(u) = 1 - tanh(u)**2``."""
    g = np.tanh(u)
    return g, 1.0 - g * g


def center_and_whiten(x, rank_tol: float = DEFAULT_RANK_TOL):
    """Center rows of ``x`` and whiten via eigendecomposition of the covariance.

    Eigen-directions with eigenvalue below ``rank_tol * lambda_max`` are
    dropped (and reported in the returned transform) rather than inverted.

    Returns
    -------
    z : ndarray, shape (kept_dims, M)
    transform : WhiteningTransform
    """
    x = np.asarray(x, float)
    if x.ndim != 2:
        raise WhiteningError("observation matrix must be 2-D (channels x samples)")
    n, m = x.shape
    if m < 8:
        raise WhiteningError(f"need at least 8 samples to whiten, got {m}")
    if m < n:
        raise WhiteningError(f"fewer samples ({m}) than channels ({n})")
    if not np.all(np.isfinite(x)):
        raise WhiteningError("observation matrix has non-finite entries")

    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    cov = xc @ xc.T / m
    lam, vec = np.linalg.eigh(cov)
    lam, vec = lam[::-1], vec[:, ::-1]
    if lam[0] <= 0:
        raise WhiteningError("observation matrix is constant (all-zero after centering)")
    keep = lam > rank_tol * lam[0]
    kept = int(keep.sum())
    if kept < 2:
        raise WhiteningError(f"effective rank {kept} < 2")
    if kept < n:
        warnings.warn(
            f"covariance has effective rank {kept} of {n}; dropping {n - kept} dims",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    v = vec[:, keep].T / np.sqrt(lam[keep])[:, None]
    z = v @ xc
    return z, WhiteningTransform(mean, v, lam, kept, lam[~keep])


def _is_white(z, atol=1e-6):
    cov = z @ z.T / z.shape[1]
    return np.allclose(cov, np.eye(z.shape[0]), atol=atol)


def deflation_fica(z, n_components: int = 2, w_init=None, max_iter: int = DEFAULT_MAX_ITER,
                   tol: float = DEFAULT_TOL, known_rows=None) -> DemixingRows:
    """Extract ``n_components`` one at a time with the tanh fixed-point update.

    Each unit iterates ``w <- E[z g(w'z)] - E[g'(w'z)] w``, is orthogonalised
    (Gram-Schmidt) against ``known_rows`` and all previously extracted rows,
    then renormalised, until ``|<w_new, w_old>| > 1 - tol``.

    Parameters
    ----------
    z : ndarray, shape (d, M)
        Whitened data.
    w_init : ndarray, shape (n_components, d), optional
        Starting rows. Defaults to the last ``n_components`` rows of the
        ``d x d`` identity.
    known_rows : ndarray, shape (r, d), optional
        Orthonormal rows already accounted for; extracted rows stay
        orthogonal to them.
    """
    z = np.asarray(z, float)
    d, m = z.shape
    if not _is_white(z):
        raise WhiteningError("deflation_fica expects whitened input (cov(z) != I)")
    known = np.zeros((0, d)) if known_rows is None else np.atleast_2d(np.asarray(known_rows, float))
    if n_components < 1 or n_components + known.shape[0] > d:
        raise ValueError(
            f"cannot extract {n_components} components from rank {d} "
            f"with {known.shape[0]} known rows"
        )
    if w_init is None:
        w_init = np.eye(d)[d - n_components:]
    w_init = np.atleast_2d(np.asarray(w_init, float))
    if w_init.shape != (n_components, d):
        raise ValueError(f"w_init must have shape {(n_components, d)}, got {w_init.shape}")

    basis = list(known)
    rows, iters, conv = [], [], []
    for p in range(n_components):
        w = _orthonormalize(w_init[p], basis)
        if w is None:
            # initial row lies in the span of the basis; fall back to the
            # first canonical vector that does not
            for e in np.eye(d):
                w = _orthonormalize(e, basis)
                if w is not None:
                    break
        ok = False
        it = 0
        for it in range(1, max_iter + 1):
            g, dg = contrast_tanh(w @ z)
            w_new = z @ g / m - dg.mean() * w
            w_new = _orthonormalize(w_new, basis)
            if w_new is None:
                break
            ok = abs(w_new @ w) > 1.0 - tol
            w = w_new
            if ok:
                break
        rows.append(w)
        basis.append(w)
        iters.append(it)
        conv.append(bool(ok))
    return DemixingRows(np.array(rows), iters, conv)


def _orthonormalize(w, basis):
    w = np.array(w, float)
    for b in basis:
        w -= (w @ b) * b
    norm = np.linalg.norm(w)
    if norm < 1e-12:
        return None
    return w / norm


def refine_unit(z, w, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL):
    """One-unit tanh fixed-point iterations from ``w`` without orthogonalisation.

    Returns ``(w, iterations, converged)``.
    """
    z = np.asarray(z, float)
    w = np.asarray(w, float) / np.linalg.norm(w)
    m = z.shape[1]
    for it in range(1, max_iter + 1):
        g, dg = contrast_tanh(w @ z)
        w_new = z @ g / m - dg.mean() * w
        w_new /= np.linalg.norm(w_new)
        done = abs(w_new @ w) > 1.0 - tol
        w = w_new
        if done:
            return w, it, True
    return w, max_iter, False
