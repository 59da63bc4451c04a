"""Brute-force photon statistics in a truncated Fock basis.

Independent of the generating-function route: single-mode states are built
as dense density matrices, ``rho = D(alpha) S(r) rho_th S(r)^dag D(alpha)^dag``,
and the per-mode count distributions of a product state are convolved.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm

from .photon_stats import PhotonDistribution

DEFAULT_DIM = 80
MAX_DIM = 640
LEAKAGE_TOL = 1e-8


class FockTruncationError(RuntimeError):
    """Raised when the Fock cutoff is too small for the requested accuracy."""


def lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def squeeze_operator(r: float, dim: int) -> np.ndarray:
    """Truncated squeezer that scales the ``q`` variance by ``e^{2r}``."""
    a = lowering(dim)
    return expm(0.5 * r * (a.T @ a.T - a @ a))


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    a = lowering(dim).astype(complex)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def _single_mode(nu, r, alpha, dim):
    ratio = (nu - 1.0) / (nu + 1.0)
    thermal = (1 - ratio) * ratio ** np.arange(dim)
    lost = ratio**dim
    u = displacement_operator(alpha, dim) @ squeeze_operator(r, dim)
    probs = np.einsum("nk,k,nk->n", u, thermal, u.conj()).real
    half = dim // 2
    # mass near the cutoff is distorted by truncation; keep the inner half only
    leakage = lost + max(0.0, float(probs[half:].sum()))
    return probs[:half], leakage


def single_mode_probs(nu: float, r: float, alpha: complex, dim: int | None = None,
                      leakage_tol: float = LEAKAGE_TOL) -> tuple:
    """Photon-number probabilities of a displaced squeezed thermal mode.

    The covariance of the mode is ``diag(nu e^{2r}, nu e^{-2r})`` and
    ``alpha = (d_q + i d_p) / sqrt(2)``. With ``dim`` omitted the cutoff starts
    at 80 and doubles (up to 640) until the leakage is below ``leakage_tol``.

    Returns:
        tuple ``(probs, leakage)``; ``probs`` covers the inner half of the basis.

    Raises:
        FockTruncationError: if the leakage stays above ``leakage_tol``.
    """
    if nu < 1:
        raise ValueError(f"temperature parameter must be >= 1, got {nu}")
    dims = [dim] if dim is not None else []
    if dim is None:
        d = DEFAULT_DIM
        while d <= MAX_DIM:
            dims.append(d)
            d *= 2
    for d in dims:
        if d < 2:
            raise ValueError("Fock dimension must be at least 2")
        probs, leakage = _single_mode(nu, r, alpha, d)
        if leakage <= leakage_tol:
            return probs, leakage
    raise FockTruncationError(f"leakage {leakage:.3e} exceeds {leakage_tol:.1e} at dim={dims[-1]}; increase the cutoff")


def convolve(p, q) -> np.ndarray:
    """Distribution of the sum of two independent counts."""
    return np.convolve(np.asarray(p, dtype=float), np.asarray(q, dtype=float))


def oracle_distribution(modes, dim: int | None = None, leakage_tol: float = LEAKAGE_TOL) -> PhotonDistribution:
    """Total photon-number distribution of a product of single-mode states.

    Args:
        modes: iterable of ``(nu, r, alpha)`` per mode.
        dim: Fock cutoff per mode; automatic when omitted.
    """
    total = np.array([1.0])
    size = None
    for nu, r, alpha in modes:
        probs, _ = single_mode_probs(nu, r, alpha, dim, leakage_tol)
        total = convolve(total, probs)
        size = probs.size if size is None else min(size, probs.size)
    # entries beyond the shortest per-mode block miss contributions
    if size is not None:
        total = total[:size]
    return PhotonDistribution(total, max(0.0, 1.0 - math.fsum(total)))


def modes_from_diagonal_state(state) -> list:
    """``(nu, r, alpha)`` per mode of a state with diagonal covariance."""
    cov = state.cov
    if np.max(np.abs(cov - np.diag(np.diag(cov)))) > 1e-12 * np.max(np.abs(cov)):
        raise ValueError("oracle needs a diagonal covariance matrix")
    g = np.diag(cov)
    out = []
    for j in range(state.modes):
        gq, gp = g[2 * j], g[2 * j + 1]
        nu = float(np.sqrt(gq * gp))
        r = float(0.25 * np.log(gq / gp))
        alpha = (state.disp[2 * j] + 1j * state.disp[2 * j + 1]) / np.sqrt(2)
        out.append((max(nu, 1.0), r, complex(alpha)))
    return out
