"""Spectral and symplectic structure of covariance matrices.

Normal parameters, Williamson and Euler (Bloch-Messiah) decompositions,
purity tests, squeezing spectra of pure states, validity of normal-parameter
families and their diagonal representatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import polar

from .gaussian_core import (
    GaussianState,
    NotSymplecticError,
    is_symplectic,
    symmetrize,
    symplectic_form,
    symplectic_residual,
)

CLUSTER_TOL = 1e-8
PAIRING_TOL = 1e-9


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True, eq=False)
class NormalParameters:
    """Family of triples ``(lambda_i, k_i, d_i)``, sorted by ``lambda`` descending.

    ``lambdas`` are the distinct covariance eigenvalues, ``ks`` their
    multiplicities and ``ds`` the norms of the displacement projected on each
    eigenspace. Structural checks only; physical validity is the job of
    :func:`validate_normal_parameters`.
    """

    lambdas: np.ndarray
    ks: np.ndarray
    ds: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        ks = np.atleast_1d(np.asarray(self.ks))
        ds = np.atleast_1d(np.asarray(self.ds, dtype=float))
        if not (lam.shape == ks.shape == ds.shape) or lam.ndim != 1 or lam.size == 0:
            raise ValueError("lambdas, ks and ds must be non-empty sequences of equal length")
        if np.any(ks != np.round(ks)) or np.any(ks < 1):
            raise ValueError(f"multiplicities must be positive integers, got {ks.tolist()}")
        order = np.argsort(-lam, kind="stable")
        lam, ks, ds = lam[order], ks[order].astype(int), ds[order]
        if np.any(np.diff(lam) == 0):
            raise ValueError("eigenvalues must be distinct; merge repeated ones into one multiplicity")
        for a in (lam, ks, ds):
            a.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "ds", ds)

    @classmethod
    def from_triples(cls, triples) -> "NormalParameters":
        lam, ks, ds = zip(*triples)
        return cls(lam, ks, ds)

    @property
    def triples(self) -> list:
        return [(float(l), int(k), float(d)) for l, k, d in zip(self.lambdas, self.ks, self.ds)]

    @property
    def modes(self) -> int:
        total = int(self.ks.sum())
        if total % 2:
            raise DomainError(f"multiplicities sum to {total}, which is odd")
        return total // 2

    @property
    def n_components(self) -> int:
        return self.lambdas.size

    @property
    def spectrum(self) -> np.ndarray:
        """Expanded non-ascending spectrum ``gamma_1 >= ... >= gamma_2S``."""
        return np.repeat(self.lambdas, self.ks)

    @property
    def primed(self) -> np.ndarray:
        """``1 / (lambda_i + 1)``, the eigenvalues of ``(cov + I)^-1``."""
        return 1.0 / (self.lambdas + 1.0)

    def __len__(self):
        return self.lambdas.size

    def __repr__(self):
        return f"NormalParameters({self.triples})"

    def to_dict(self) -> dict:
        return {
            "modes": self.modes,
            "triples": [{"lambda": l, "k": k, "d": d} for l, k, d in self.triples],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalParameters":
        triples = data["triples"]
        params = cls([t["lambda"] for t in triples], [t["k"] for t in triples], [t.get("d", 0.0) for t in triples])
        if "modes" in data and int(data["modes"]) != params.modes:
            raise ValueError(f"'modes' is {data['modes']} but multiplicities sum to {int(params.ks.sum())}")
        return params

    def allclose(self, other: "NormalParameters", rtol: float = 1e-8, atol: float = 1e-8) -> bool:
        """Equal ``k`` exactly, ``lambda`` to relative ``rtol`` and ``d`` to absolute ``atol``."""
        if len(self) != len(other) or np.any(self.ks != other.ks):
            return False
        return bool(
            np.all(np.abs(self.lambdas - other.lambdas) <= rtol * np.abs(other.lambdas))
            and np.all(np.abs(self.ds - other.ds) <= atol)
        )


def eigencluster(cov, cluster_tol: float = CLUSTER_TOL) -> list:
    """Group eigenvalues of a symmetric matrix into numerically degenerate clusters.

    Neighbouring sorted eigenvalues are linked when their gap is at most
    ``cluster_tol * max(1, |lambda|)``.

    Returns:
        list of ``(lambda, k, basis)`` tuples with ``lambda`` the cluster mean,
        ``k`` its size and ``basis`` a ``2S x k`` orthonormal eigenbasis, ordered
        by ``lambda`` descending.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {cov.shape}")
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    clusters = []
    start = 0
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[i - 1] - vals[i] > cluster_tol * max(1.0, abs(vals[i - 1])):
            clusters.append((float(vals[start:i].mean()), i - start, vecs[:, start:i]))
            start = i
    return clusters


def normal_parameters(state: GaussianState, cluster_tol: float = CLUSTER_TOL) -> NormalParameters:
    """Distinct eigenvalues, multiplicities and eigenspace displacement norms of a state."""
    clusters = eigencluster(state.cov, cluster_tol)
    lam = [c[0] for c in clusters]
    ks = [c[1] for c in clusters]
    ds = [float(np.linalg.norm(c[2].T @ state.disp)) for c in clusters]
    return NormalParameters(lam, ks, ds)


@dataclass(frozen=True, eq=False)
class WilliamsonDecomposition:
    """``cov = A^T T A`` with ``A`` symplectic and ``T = diag(nu_1, nu_1, ..., nu_S, nu_S)``."""

    A: np.ndarray
    nu: np.ndarray

    @property
    def T(self) -> np.ndarray:
        return np.diag(np.repeat(self.nu, 2))

    def reconstruct(self) -> np.ndarray:
        return self.A.T @ self.T @ self.A


def _sqrtm_spd(mat):
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(vals)) @ vecs.T


def williamson(cov) -> WilliamsonDecomposition:
    """Symplectic diagonalization of a symmetric positive definite matrix.

    Uses the antisymmetric matrix ``K = cov^{1/2} J cov^{1/2}``: the Hermitian
    matrix ``iK`` has eigenvalues ``+-nu_i`` and the real and imaginary parts of
    its ``+nu`` eigenvectors give an orthogonal ``O`` with ``O^T K O = T J``.
    Then ``A = T^{-1/2} O^T cov^{1/2}``.

    Raises:
        DomainError: if ``cov`` is not positive definite.
    """
    cov = symmetrize(cov)
    n = cov.shape[0] // 2
    if np.linalg.eigvalsh(cov)[0] <= 0:
        raise DomainError("Williamson decomposition needs a positive definite matrix")
    root = _sqrtm_spd(cov)
    k = root @ symplectic_form(n) @ root
    vals, vecs = np.linalg.eigh(1j * k)
    # eigh sorts ascending: the last n eigenvalues are +nu, largest last
    nu = vals[n:][::-1]
    pos = vecs[:, n:][:, ::-1]
    o = np.empty((2 * n, 2 * n))
    o[:, 0::2] = np.sqrt(2) * pos.real
    o[:, 1::2] = -np.sqrt(2) * pos.imag
    a = (o.T @ root) / np.sqrt(np.repeat(nu, 2))[:, None]
    return WilliamsonDecomposition(a, nu)


@dataclass(frozen=True, eq=False)
class EulerDecomposition:
    """``A = K Q L`` with ``K``, ``L`` orthogonal symplectic, ``Q = diag(e^r1, e^-r1, ...)``."""

    K: np.ndarray
    L: np.ndarray
    r: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return np.diag(np.exp(np.column_stack([self.r, -self.r]).ravel()))

    def reconstruct(self) -> np.ndarray:
        return self.K @ self.Q @ self.L


def _symplectic_basis_of(space, omega):
    """Orthonormal symplectic basis ``[v1, -J v1, v2, -J v2, ...]`` of a J-invariant subspace."""
    rows = []
    remaining = space
    while remaining.shape[1] >= 2:
        v = remaining[:, 0] / np.linalg.norm(remaining[:, 0])
        w = -omega @ v
        rows.extend([v, w])
        pair = np.column_stack([v, w])
        rest = remaining - pair @ (pair.T @ remaining)
        u, sv, _ = np.linalg.svd(rest, full_matrices=False)
        remaining = u[:, sv > 1e-6]
    return rows


def euler_decompose(mat, tol: float = 1e-10, degeneracy_tol: float = 1e-9) -> EulerDecomposition:
    """Bloch-Messiah decomposition of a symplectic matrix.

    The polar factorization ``A = W P`` gives an orthogonal symplectic ``W`` and
    a positive symplectic ``P = L^T Q L``. Rows of ``L`` pair each eigenvector
    ``v`` of ``P`` with eigenvalue ``e^r >= 1`` with ``-J v`` (eigenvalue
    ``e^-r``); the unit-eigenvalue subspace gets a symplectic Gram-Schmidt basis.

    Raises:
        NotSymplecticError: if ``A^T J A != J`` within ``tol``.
    """
    mat = np.asarray(mat, dtype=float)
    if not is_symplectic(mat, tol):
        raise NotSymplecticError(f"matrix is not symplectic: ||A^T J A - J|| = {symplectic_residual(mat):.3e}")
    n = mat.shape[0] // 2
    omega = symplectic_form(n)
    w, p = polar(mat, side="right")
    vals, vecs = np.linalg.eigh(0.5 * (p + p.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    logs = np.log(vals)
    big = logs > degeneracy_tol
    n_big = int(big.sum())
    rows = []
    r = []
    for j in range(n_big):
        v = vecs[:, j]
        rows.append((v, -omega @ v))
        r.append(logs[j])
    middle = np.abs(logs) <= degeneracy_tol
    if middle.any():
        basis = _symplectic_basis_of(vecs[:, middle], omega)
        for j in range(0, len(basis), 2):
            rows.append((basis[j], basis[j + 1]))
            r.append(0.0)
    if len(rows) != n:
        raise DomainError("could not pair the eigenvectors of the positive polar factor")
    lmat = np.array([x for pair in rows for x in pair])
    r = np.array(r)
    k = w @ lmat.T
    return EulerDecomposition(k, lmat, r)


@dataclass(frozen=True)
class PurityReport:
    pure: bool
    det_test: bool
    pairing_test: bool
    determinant: float
    max_pairing_deviation: float

    def __bool__(self):
        return self.pure

    @property
    def consistent(self) -> bool:
        return self.det_test == self.pairing_test


def pairing_products(spectrum) -> np.ndarray:
    """``gamma_j * gamma_{2S+1-j}`` for ``j = 1..S`` on a spectrum sorted non-ascending."""
    g = np.sort(np.asarray(spectrum, dtype=float))[::-1]
    s = g.size // 2
    return g[:s] * g[::-1][:s]


def is_pure(cov, tol: float = 1e-8) -> PurityReport:
    """Purity via two independent witnesses: ``det = 1`` and tight spectral pairing."""
    cov = symmetrize(cov)
    sign, logdet = np.linalg.slogdet(cov)
    det = sign * math.exp(logdet)
    dev = float(np.max(np.abs(pairing_products(np.linalg.eigvalsh(cov)) - 1.0)))
    det_ok = abs(det - 1.0) <= tol
    pair_ok = dev <= tol
    return PurityReport(det_ok and pair_ok, det_ok, pair_ok, float(det), dev)


def squeezing_spectrum_pure(params: NormalParameters, tol: float = 1e-8) -> np.ndarray:
    """Squeezing parameters ``ln(gamma_j) / 2`` for ``j = 1..S`` of a pure state.

    Raises:
        DomainError: if ``prod lambda_i^k_i != 1`` (the state is not pure).
    """
    logdet = float(np.dot(params.ks, np.log(params.lambdas)))
    if abs(logdet) > tol:
        raise DomainError(f"state is not pure: prod lambda_i^k_i = {math.exp(logdet):.12g} != 1")
    g = params.spectrum
    return 0.5 * np.log(g[: params.modes])


@dataclass(frozen=True)
class NormalParameterReport:
    positive: bool
    even: bool
    pairing: bool
    messages: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.positive and self.even and self.pairing

    def __bool__(self):
        return self.valid


def validate_normal_parameters(params: NormalParameters, tol: float = PAIRING_TOL) -> NormalParameterReport:
    """Check that a family of triples are the normal parameters of some Gaussian state.

    Conditions: every ``lambda_i > 0`` and ``d_i >= 0``; the multiplicities sum
    to an even number ``2S``; and ``gamma_j gamma_{2S-j+1} >= 1`` on the
    expanded spectrum.
    """
    messages = []
    positive = bool(np.all(params.lambdas > 0) and np.all(params.ds >= 0))
    if not positive:
        messages.append("eigenvalues must be positive and displacements nonnegative")
    total = int(params.ks.sum())
    even = total % 2 == 0
    if not even:
        messages.append(f"multiplicities sum to {total}, which is odd")
    pairing = False
    if positive and even:
        prods = pairing_products(params.spectrum)
        pairing = bool(np.all(prods >= 1 - tol))
        if not pairing:
            j = int(np.argmin(prods))
            messages.append(f"pairing condition fails at j={j + 1}: product {prods[j]:.6g} < 1")
    return NormalParameterReport(positive, even, pairing, messages)


def diagonal_representative(params: NormalParameters, tol: float = PAIRING_TOL) -> GaussianState:
    """Product of squeezed thermal modes with the given normal parameters.

    Mode ``j`` gets diagonal ``(gamma_j, gamma_{2S-j+1})``; each ``d_i`` is put
    on the first coordinate holding eigenvalue ``lambda_i``.

    Raises:
        DomainError: if the family is not valid.
    """
    report = validate_normal_parameters(params, tol)
    if not report:
        raise DomainError("invalid normal parameters: " + "; ".join(report.messages))
    g = params.spectrum
    s = params.modes
    diag = np.empty(2 * s)
    diag[0::2] = g[:s]
    diag[1::2] = g[::-1][:s]
    labels = np.repeat(np.arange(len(params)), params.ks)
    coord_label = np.empty(2 * s, dtype=int)
    coord_label[0::2] = labels[:s]
    coord_label[1::2] = labels[::-1][:s]
    disp = np.zeros(2 * s)
    for i, d in enumerate(params.ds):
        disp[np.flatnonzero(coord_label == i)[0]] = d
    return GaussianState(np.diag(diag), disp)


@dataclass(frozen=True, eq=False)
class Counterexample:
    """Two-mode covariance that no orthogonal symplectic matrix can diagonalize."""

    state: GaussianState
    g_plus: float
    g_minus: float
    temperatures: tuple
    squeezing: float

    @property
    def os_diagonal_spectrum(self) -> np.ndarray:
        """Spectrum an OS-diagonalizable state with the same temperature and squeezing would have."""
        u1, u2 = self.temperatures
        e = math.exp(2 * self.squeezing)
        return np.array([u1 * e, u1 / e, u2 * e, u2 / e])


def counterexample_state(tau: float, c: float, s: float, tol: float = 1e-12) -> Counterexample:
    """``cov = R^T Delta R`` with ``Delta = diag(1+2tau, 1+2tau, 1, 1)`` and the two-mode squeezer ``R``.

    Raises:
        ValueError: if ``c^2 - s^2 != 1`` or ``tau``/``s`` are negative.
    """
    if tau < 0 or s < 0 or c <= 0:
        raise ValueError("need tau >= 0, s >= 0 and c > 0")
    if abs(c * c - s * s - 1) > tol * max(1.0, c * c):
        raise ValueError(f"need c^2 - s^2 = 1, got {c * c - s * s!r}")
    delta = np.diag([1 + 2 * tau, 1 + 2 * tau, 1.0, 1.0])
    rmat = np.array(
        [
            [c, 0, s, 0],
            [0, c, 0, -s],
            [s, 0, c, 0],
            [0, -s, 0, c],
        ]
    )
    cov = rmat.T @ delta @ rmat
    a = (1 + tau) * (c * c + s * s)
    b = math.sqrt(4 * (1 + tau) ** 2 * c * c * s * s + tau * tau)
    return Counterexample(
        GaussianState(cov),
        a + b,
        a - b,
        (1 + 2 * tau, 1.0),
        0.5 * math.log((c + s) / (c - s)),
    )
