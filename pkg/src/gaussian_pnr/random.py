"""Random generators for states and normal parameters (tests and benchmarks)."""

from __future__ import annotations

import numpy as np

from .decompositions import NormalParameters
from .gaussian_core import GaussianState, make_squeezed_thermal, random_passive, random_symplectic


def random_normal_parameters(rng=None, max_modes: int = 3, log_lambda_max: float = 3.0, d_max: float = 3.0,
                             min_gap: float = 0.1, nu_max: float = 3.0, r_max: float = 1.5,
                             p_zero_d: float = 0.25, p_pure: float = 0.3, p_unsqueezed: float = 0.3,
                             max_tries: int = 1000) -> NormalParameters:
    """Valid normal parameters built from a random squeezed thermal product state.

    Distinct eigenvalues are at least ``min_gap`` apart in relative terms and
    lie in ``[e^-log_lambda_max, e^log_lambda_max]``; exact degeneracies come
    from unsqueezed modes and from equal modes.
    """
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        modes = int(rng.integers(1, max_modes + 1))
        nu = np.where(rng.random(modes) < p_pure, 1.0, rng.uniform(1.0, nu_max, modes))
        r = np.where(rng.random(modes) < p_unsqueezed, 0.0, rng.uniform(0.0, r_max, modes))
        spec = np.sort(np.concatenate([nu * np.exp(2 * r), nu * np.exp(-2 * r)]))[::-1]
        if np.any(np.abs(np.log(spec)) > log_lambda_max):
            continue
        lam, ks = np.unique(spec, return_counts=True)
        lam, ks = lam[::-1], ks[::-1]
        if lam.size > 1 and np.any(-np.diff(lam) < min_gap * lam[:-1]):
            continue
        ds = np.where(rng.random(lam.size) < p_zero_d, 0.0, rng.uniform(0.1, d_max, lam.size))
        return NormalParameters(lam, ks, ds)
    raise RuntimeError("could not draw well-separated normal parameters")


def random_physical_state(modes: int, rng=None, nu_max: float = 3.0, squeeze_scale: float = 0.4,
                          d_max: float = 2.0) -> GaussianState:
    """``A^T T A`` for thermal ``T`` and a random symplectic ``A``, with a random displacement."""
    rng = np.random.default_rng(rng)
    thermal = make_squeezed_thermal(rng.uniform(1.0, nu_max, modes), np.zeros(modes))
    a = random_symplectic(modes, rng, squeeze_scale)
    disp = rng.uniform(-d_max, d_max, 2 * modes)
    return GaussianState(a.T @ thermal.cov @ a, disp)


def random_pure_covariance(modes: int, rng=None, r_max: float = 1.5) -> np.ndarray:
    """``L^T Q^2 L`` for a random passive ``L`` and squeezers ``r_i <= r_max``."""
    rng = np.random.default_rng(rng)
    r = rng.uniform(0.0, r_max, modes)
    q2 = np.diag(np.exp(2 * np.column_stack([r, -r]).ravel()))
    ell = random_passive(modes, rng)
    return ell.T @ q2 @ ell
