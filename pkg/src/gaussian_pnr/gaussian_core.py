"""Gaussian states in the quadrature convention ``(q1, p1, ..., qS, pS)``.

The covariance matrix of the vacuum is the identity and the displacement
vector holds the mean quadratures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_RTOL = 1e-10
PHYSICAL_TOL = 1e-9


class UnphysicalStateError(ValueError):
    """Raised when parameters do not describe a physical Gaussian state."""


class NotSymplecticError(ValueError):
    """Raised when a matrix fails ``A^T J A = J``."""


def symplectic_form(modes: int) -> np.ndarray:
    """Block-diagonal symplectic form with ``S`` blocks ``[[0, 1], [-1, 0]]``."""
    if modes < 1:
        raise ValueError("number of modes must be positive")
    return np.kron(np.eye(modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symmetrize(cov, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Return ``(cov + cov^T) / 2`` if the asymmetry is within ``rtol``.

    Raises:
        ValueError: if ``cov`` is not square with even dimension, or is
            asymmetric beyond the relative tolerance.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
        raise ValueError(f"covariance must be square with even dimension, got {cov.shape}")
    scale = max(np.max(np.abs(cov)), 1e-300)
    if np.max(np.abs(cov - cov.T)) > rtol * scale:
        raise ValueError("covariance matrix is not symmetric")
    return 0.5 * (cov + cov.T)


def symplectic_eigenvalues(cov) -> np.ndarray:
    """Symplectic spectrum ``nu_1 >= ... >= nu_S`` of a positive definite matrix."""
    cov = np.asarray(cov, dtype=float)
    omega = symplectic_form(cov.shape[0] // 2)
    ev = np.abs(np.linalg.eigvals(1j * omega @ cov))
    ev = np.sort(ev)[::-1]
    # eigenvalues come in +/- pairs
    return 0.5 * (ev[0::2] + ev[1::2])


@dataclass(frozen=True)
class ValidationReport:
    symmetric: bool
    positive: bool
    physical: bool
    min_symplectic_eigenvalue: float
    messages: list = field(default_factory=list)

    def __bool__(self):
        return self.physical


def validate_state(cov, disp=None, tol: float = PHYSICAL_TOL) -> ValidationReport:
    """Check symmetry, positivity and the uncertainty principle ``nu_i >= 1``.

    Raises:
        ValueError: if shapes of ``cov`` and ``disp`` do not match.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
        raise ValueError(f"covariance must be square with even dimension, got {cov.shape}")
    if disp is not None and np.shape(disp) != (cov.shape[0],):
        raise ValueError(f"displacement must have length {cov.shape[0]}, got {np.shape(disp)}")
    messages = []
    scale = max(np.max(np.abs(cov)), 1e-300)
    symmetric = bool(np.max(np.abs(cov - cov.T)) <= SYMMETRY_RTOL * scale)
    if not symmetric:
        messages.append("covariance matrix is not symmetric")
    sym = 0.5 * (cov + cov.T)
    positive = bool(np.linalg.eigvalsh(sym)[0] > 0)
    if not positive:
        messages.append("covariance matrix is not positive definite")
        nu_min = float("nan")
    else:
        nu_min = float(symplectic_eigenvalues(sym)[-1])
    physical = symmetric and positive and nu_min >= 1 - tol
    if positive and not physical and symmetric:
        messages.append(f"uncertainty principle violated: min symplectic eigenvalue {nu_min:.6g} < 1")
    return ValidationReport(symmetric, positive, physical, nu_min, messages)


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Immutable Gaussian state: covariance ``cov`` and mean quadratures ``disp``."""

    cov: np.ndarray
    disp: np.ndarray = None

    def __post_init__(self):
        cov = symmetrize(self.cov)
        disp = np.zeros(cov.shape[0]) if self.disp is None else np.array(self.disp, dtype=float)
        if disp.shape != (cov.shape[0],):
            raise ValueError(f"displacement must have length {cov.shape[0]}, got {disp.shape}")
        cov.setflags(write=False)
        disp.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "disp", disp)

    @property
    def modes(self) -> int:
        return self.cov.shape[0] // 2

    def validate(self, tol: float = PHYSICAL_TOL) -> ValidationReport:
        return validate_state(self.cov, self.disp, tol)

    def to_dict(self) -> dict:
        return {"modes": self.modes, "cov": self.cov.tolist(), "disp": self.disp.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianState":
        disp = data.get("disp")
        state = cls(np.array(data["cov"], dtype=float), None if disp is None else np.array(disp, dtype=float))
        if "modes" in data and int(data["modes"]) != state.modes:
            raise ValueError(f"'modes' is {data['modes']} but covariance describes {state.modes} modes")
        return state


def vacuum(modes: int) -> GaussianState:
    return GaussianState(np.eye(2 * modes))


def make_squeezed_thermal(nu, r, disp=None) -> GaussianState:
    """Product state whose mode ``i`` has block ``diag(nu_i e^{2 r_i}, nu_i e^{-2 r_i})``.

    Raises:
        UnphysicalStateError: if any ``nu_i < 1``.
    """
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if nu.shape != r.shape:
        raise ValueError("nu and r must have equal length")
    if np.any(nu < 1):
        raise UnphysicalStateError(f"temperature parameters must be >= 1, got {nu.tolist()}")
    diag = np.empty(2 * nu.size)
    diag[0::2] = nu * np.exp(2 * r)
    diag[1::2] = nu * np.exp(-2 * r)
    return GaussianState(np.diag(diag), disp)


def symplectic_residual(mat) -> float:
    """``||A^T J A - J||`` (max-abs entry)."""
    mat = np.asarray(mat, dtype=float)
    omega = symplectic_form(mat.shape[0] // 2)
    return float(np.max(np.abs(mat.T @ omega @ mat - omega)))


def is_symplectic(mat, tol: float = 1e-10) -> bool:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
        return False
    return symplectic_residual(mat) <= tol * max(1.0, np.max(np.abs(mat)) ** 2)


def apply_symplectic(state: GaussianState, mat, tol: float = 1e-10) -> GaussianState:
    """Transform ``cov -> A^T cov A`` and ``disp -> A^T disp``.

    Raises:
        NotSymplecticError: if ``A`` is not symplectic within ``tol``.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.shape != state.cov.shape:
        raise ValueError(f"matrix shape {mat.shape} does not match state {state.cov.shape}")
    if not is_symplectic(mat, tol):
        raise NotSymplecticError(f"matrix is not symplectic: ||A^T J A - J|| = {symplectic_residual(mat):.3e}")
    return GaussianState(mat.T @ state.cov @ mat, mat.T @ state.disp)


def random_symplectic(modes: int, rng=None, scale: float = 1.0) -> np.ndarray:
    """``expm(J H)`` for a random symmetric ``H``."""
    from scipy.linalg import expm

    rng = np.random.default_rng(rng)
    h = rng.normal(scale=scale, size=(2 * modes, 2 * modes))
    h = 0.5 * (h + h.T)
    return expm(symplectic_form(modes) @ h)


def random_passive(modes: int, rng=None) -> np.ndarray:
    """Random orthogonal symplectic matrix from a Haar unitary ``U = X + iY``."""
    from scipy.stats import unitary_group

    rng = np.random.default_rng(rng)
    u = unitary_group.rvs(modes, random_state=rng) if modes > 1 else np.exp(2j * np.pi * rng.random()) * np.eye(1)
    x, y = u.real, u.imag
    out = np.empty((2 * modes, 2 * modes))
    # in the (q, p) interleaved ordering each 2x2 block is [[x, -y], [y, x]]
    out[0::2, 0::2] = x
    out[0::2, 1::2] = -y
    out[1::2, 0::2] = y
    out[1::2, 1::2] = x
    return out
