"""Recover normal parameters from a total photon-number distribution.

The log-derivative of the generating function is rational with poles of
order at most two, one per covariance eigenvalue. In the ``z`` variable of
``G(z)``::

    L(z) = -sum_i [ (k_i/2) / (z - z_i) + 2 d_i^2 l_i^2 / (z - z_i)^2 ],   z_i = -2 l_i

and in the variable ``w = 1/(1+z)`` of the probability generating function
``P(w) = sum p_n w^n`` the Taylor coefficients of ``P'/P`` are the exponential
sum ``sum_i [(k_i/2) c_i^(n+1) + 2 d_i^2 l_i^2 (n+1) c_i^n]`` with
``c_i = 1 - 2 l_i``. Both are handled by the same linear-prediction (Pade)
step. Fitting from probabilities uses the ``w`` form, which needs the
probabilities only, then refines ``(lambda_i, d_i)`` by nonlinear least
squares on the probabilities at fixed integer multiplicities.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np
from scipy.optimize import least_squares

from . import power_series as ps
from .decompositions import (
    CLUSTER_TOL,
    NormalParameters,
    normal_parameters,
    validate_normal_parameters,
)
from .gaussian_core import GaussianState
from .photon_stats import PhotonDistribution, pgf_coefficients

logger = logging.getLogger(__name__)


class PadeConditioningError(RuntimeError):
    """Raised when the linear-prediction system cannot be solved reliably."""


@dataclass(frozen=True)
class InversionConfig:
    """Settings for :func:`fit_normal_parameters` and :func:`pade_poles`.

    Attributes:
        max_components: upper bound on the number of distinct eigenvalues
            (default ``2S``).
        pade_order: largest denominator degree tried (default ``2 * max_components``).
        jmax: number of series coefficients used (default ``2 * pade_order + 4``).
        fit_tolerance: convergence threshold on ``max_n |p_model - p_n|``.
        max_iterations: function-evaluation budget factor for each refinement.
        pade_tol: relative singular-value level taken as numerical rank loss.
        merge_gap: poles whose eigenvalues differ by less than this relative
            gap are merged.
        search_budget: maximum number of local refinements in one fit.
        regularization: weight of a penalty on violations of the pairing
            condition ``gamma_j gamma_(2S+1-j) >= 1`` during refinement. The
            default 0 leaves the fit unconstrained; validity is checked on the
            result either way.
    """

    max_components: int | None = None
    pade_order: int | None = None
    jmax: int | None = None
    fit_tolerance: float = 1e-10
    max_iterations: int = 1000
    pade_tol: float = 1e-9
    merge_gap: float = 0.1
    search_budget: int = 40
    regularization: float = 0.0

    def resolved(self, modes: int | None = None) -> "InversionConfig":
        n_max = self.max_components or (2 * modes if modes else 6)
        if modes is not None and n_max > 2 * modes:
            raise ValueError(f"max_components={n_max} exceeds 2S={2 * modes}")
        order = self.pade_order or 2 * n_max
        jmax = self.jmax or 2 * order + 4
        if self.regularization < 0:
            raise ValueError(f"regularization must be nonnegative, got {self.regularization}")
        if order > jmax // 2:
            raise ValueError(f"pade_order={order} needs jmax >= {2 * order}, got {jmax}")
        return replace(self, max_components=n_max, pade_order=order, jmax=jmax)


@dataclass(frozen=True)
class Pole:
    """A pole of ``L(z)`` with its Laurent coefficients.

    ``first_order`` and ``second_order`` multiply ``1/(z - position)`` and
    ``1/(z - position)^2``.
    """

    position: float
    first_order: float
    second_order: float

    @property
    def primed(self) -> float:
        return -0.5 * self.position

    @property
    def eigenvalue(self) -> float:
        return 1.0 / self.primed - 1.0

    @property
    def multiplicity(self) -> int:
        return int(round(-2.0 * self.first_order))

    @property
    def displacement(self) -> float:
        d2 = -self.second_order / (2.0 * self.primed**2)
        return math.sqrt(max(d2, 0.0))

    def as_tuple(self) -> tuple:
        return (self.position, self.first_order, self.second_order)


@dataclass(frozen=True, eq=False)
class InversionResult:
    params: NormalParameters
    residual: float
    pole_report: list = field(default_factory=list)
    converged: bool = False

    def to_dict(self) -> dict:
        out = self.params.to_dict()
        out["residual"] = self.residual
        out["converged"] = self.converged
        out["pole_report"] = [
            {"position": p.position, "first_order": p.first_order, "second_order": p.second_order}
            for p in self.pole_report
        ]
        return out


# --- series from data ----------------------------------------------------------


def g_series_from_distribution(dist: PhotonDistribution, modes: int, jmax: int,
                               max_tail: float = 1e-10) -> ps.TruncatedSeries:
    """Taylor series of ``G(z)`` from probabilities.

    Coefficient ``j`` is ``(-1)^j <:n^j:> / j! = (-1)^j sum_n p_n C(n+S+j-1, j)``.

    Raises:
        ValueError: if the distribution's tail bound exceeds ``max_tail``.
    """
    if dist.tail_bound > max_tail:
        raise ValueError(f"tail bound {dist.tail_bound:.3e} exceeds {max_tail:.1e}")
    n = np.arange(dist.probs.size, dtype=float)
    weight = np.ones_like(n)
    out = np.empty(jmax + 1)
    for j in range(jmax + 1):
        if j:
            weight = weight * (n + modes + j - 1) / j
        out[j] = (-1) ** j * math.fsum(dist.probs * weight)
    return ps.TruncatedSeries(out)


def logderiv_series(g: ps.TruncatedSeries, tol: float = 1e-8) -> ps.TruncatedSeries:
    """Series of ``L(z) = G'(z) / G(z)``.

    Raises:
        ValueError: if ``G(0)`` differs from 1 by more than ``tol``.
    """
    if abs(g[0] - 1.0) > tol:
        raise ValueError(f"G(0) must be 1, got {g[0]!r}")
    return ps.series_log_derivative(g)


def pgf_logderiv_series(dist: PhotonDistribution, order: int | None = None) -> ps.TruncatedSeries:
    """Series of ``P'(w) / P(w)`` for the probability generating function."""
    probs = dist.probs if order is None else dist.probs[: order + 2]
    if probs.size < 2:
        raise ValueError("need at least two probabilities")
    return ps.series_log_derivative(ps.TruncatedSeries(probs))


# --- linear prediction -------------------------------------------------------------


def _scale_of(coeffs):
    nz = np.flatnonzero(np.abs(coeffs) > 0)
    if nz.size < 2:
        return 1.0
    a, b = nz[0], nz[-1]
    rate = (abs(coeffs[b]) / abs(coeffs[a])) ** (1.0 / (b - a))
    return 1.0 / rate if rate > 0 and np.isfinite(rate) else 1.0


def _prediction_roots(coeffs, max_degree, tol):
    """Bases ``rho_i`` of an exponential sum ``sum_i (A_i + B_i n) rho_i^n``.

    Picks the smallest degree ``m`` at which the linear-prediction matrix loses
    rank to relative level ``tol``; the bases are the roots of the
    null vector, read as a polynomial.
    """
    scale = _scale_of(coeffs)
    c = coeffs * scale ** np.arange(coeffs.size)
    best = None
    for m in range(1, max_degree + 1):
        rows = c.size - m
        if rows < m + 1:
            break
        mat = np.array([c[n - m : n + 1][::-1] for n in range(m, c.size)])
        _, sv, vt = np.linalg.svd(mat)
        if sv[0] == 0:
            raise PadeConditioningError("series is identically zero")
        ratio = sv[-1] / sv[0]
        if best is None or ratio < best[0]:
            best = (ratio, m, vt[-1])
        if ratio <= tol:
            best = (ratio, m, vt[-1])
            break
    if best is None:
        raise PadeConditioningError(f"{coeffs.size} coefficients are too few for a Pade fit")
    ratio, m, q = best
    if ratio > tol:
        logger.info("linear prediction did not reach rank loss (best ratio %.2e at degree %d)", ratio, m)
    roots = np.roots(q) / scale
    return roots, m, ratio


def _pencil_roots(coeffs, max_degree, tol):
    """Bases ``rho_i`` of an exponential sum ``sum_i (A_i + B_i n) rho_i^n``.

    Matrix-pencil form of the Pade denominator: the Hankel matrix of the
    coefficients is truncated to its numerical rank (singular values above
    ``tol`` relative, at most ``max_degree``) and the bases are the
    eigenvalues of the shift operator on the dominant right singular space.
    A double pole shows up as a close pair of bases.

    Returns:
        ``(roots, rank, ratio)`` where ``ratio`` is the first discarded
        relative singular value.
    """
    scale = _scale_of(coeffs)
    c = coeffs * scale ** np.arange(coeffs.size)
    n = c.size
    cols = n // 2 + 1
    if n - cols + 1 < 2 or cols < 2:
        raise PadeConditioningError(f"{coeffs.size} coefficients are too few for a Pade fit")
    hankel = np.array([c[i : i + cols] for i in range(n - cols + 1)])
    _, sv, vt = np.linalg.svd(hankel, full_matrices=False)
    if sv[0] == 0:
        raise PadeConditioningError("series is identically zero")
    rank = int(np.sum(sv > tol * sv[0]))
    rank = max(1, min(rank, max_degree, cols - 1))
    ratio = float(sv[rank] / sv[0]) if rank < sv.size else 0.0
    v = vt[:rank].T
    shift = np.linalg.lstsq(v[:-1], v[1:], rcond=None)[0]
    roots = np.linalg.eigvals(shift) / scale
    return roots, rank, ratio


def _merge_roots(roots, to_lambda, merge_gap):
    """Cluster roots whose eigenvalues are within ``merge_gap`` relative; return (rho, count)."""
    roots = roots[np.isfinite(roots)]
    # complex pairs are noise or split double poles; only near-real ones are kept
    roots = roots[np.abs(roots.imag) <= 0.05 * np.abs(roots)]
    lam = np.array([to_lambda(r.real) for r in roots])
    keep = np.isfinite(lam) & (lam > 0)
    roots, lam = roots[keep], lam[keep]
    order = np.argsort(-lam)
    roots, lam = roots[order], lam[order]
    groups = []
    for r, l in zip(roots, lam):
        if groups and abs(groups[-1][-1][1] - l) <= merge_gap * max(abs(l), abs(groups[-1][0][1])):
            groups[-1].append((r, l))
        else:
            groups.append([(r, l)])
    return [(float(np.mean([g[0].real for g in grp])), len(grp)) for grp in groups]


def _basis(rhos, n, with_delta=False):
    cols = []
    for rho in rhos:
        powers = rho**n
        cols.append(powers)
        cols.append((n + 1) * powers)
    if with_delta:
        cols.append((n == 0).astype(float))
    return np.column_stack(cols)


def _fit_amplitudes(coeffs, rhos, n, weights, with_delta=False):
    mat = _basis(rhos, n, with_delta) * weights[:, None]
    sol, *_ = np.linalg.lstsq(mat, coeffs * weights, rcond=None)
    return sol


def _refine(coeffs, rhos, amps, n, weights, with_delta, max_nfev):
    m = len(rhos)

    def resid(x):
        return (_basis(x[:m], n, with_delta) @ x[m:] - coeffs) * weights

    x0 = np.concatenate([rhos, amps])
    try:
        sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    except ValueError:
        return rhos, amps
    if np.sum(sol.fun**2) <= np.sum(resid(x0) ** 2):
        return sol.x[:m], sol.x[m:]
    return rhos, amps


def _exponential_sum_poles(coeffs, start, to_lambda, cfg, with_delta, pencil=False):
    """Shared Pade + refinement for both planes.

    Returns a list of ``(rho, A, B)`` and the constant picked up at ``n=0``.
    With ``pencil`` the bases come from the matrix pencil and are not
    refined: on noisy coefficients with close bases the pencil positions
    are more reliable than jointly refined ones. Otherwise linear prediction
    followed by a joint refinement gives the most accurate poles on exact
    coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=float)[: cfg.jmax + 1]
    find_roots = _pencil_roots if pencil else _prediction_roots
    roots, _, _ = find_roots(coeffs[start:], cfg.pade_order, cfg.pade_tol)
    merged = _merge_roots(roots, to_lambda, cfg.merge_gap)
    if not merged:
        raise PadeConditioningError("no admissible poles found")
    rhos = np.array([m[0] for m in merged])
    n = np.arange(coeffs.size)
    scale = _scale_of(coeffs[start:])
    weights = scale**n / max(np.max(np.abs(coeffs * scale**n)), 1e-300)
    amps = _fit_amplitudes(coeffs, rhos, n, weights, with_delta)
    if not pencil:
        rhos, amps = _refine(coeffs, rhos, amps, n, weights, with_delta, 20 * cfg.max_iterations)
    delta = float(amps[-1]) if with_delta else 0.0
    return [(float(r), float(amps[2 * i]), float(amps[2 * i + 1])) for i, r in enumerate(rhos)], delta


def _exact_prediction_poles(coeffs, max_degree, to_lambda, merge_gap):
    """Linear prediction and amplitudes in multiprecision arithmetic.

    Used for series whose coefficients are ``mpmath`` numbers. The rank test
    uses half the working digits as threshold, which separates true rank loss
    (left at the working precision) from faint but genuine terms. Nothing needs
    refinement afterwards: the null vector is exact to about the working
    precision, and a double root, whose two copies only agree to half of it,
    is replaced by their mean.

    Returns:
        A list of ``(rho, A, B)`` for ``sum_i (A_i + B_i (n+1)) rho_i^n``.
    """
    with mpmath.workdps(max(mpmath.mp.dps, ps.EXACT_DPS)):
        dps = mpmath.mp.dps
        tol = mpmath.mpf(10) ** (-(dps // 2))
        scale = mpmath.mpf(_scale_of(np.array([float(x) for x in coeffs])))
        c = [x * scale**n for n, x in enumerate(coeffs)]
        found = None
        for m in range(1, max_degree + 1):
            if len(c) - m < m + 1:
                break
            mat = mpmath.matrix([[c[n - j] for j in range(m + 1)] for n in range(m, len(c))])
            _, sv, v = mpmath.svd_r(mat, compute_uv=True)
            if sv[0] == 0:
                raise PadeConditioningError("series is identically zero")
            if sv[m] / sv[0] <= tol:
                found = [v[m, j] for j in range(m + 1)]
                break
        if found is None:
            raise PadeConditioningError(f"no rank loss within degree {max_degree} from {len(c)} coefficients")
        try:
            exact_roots = mpmath.polyroots(found, maxsteps=500, extraprec=2 * dps)
        except mpmath.libmp.NoConvergence as exc:
            raise PadeConditioningError("denominator roots did not converge") from exc
        roots = np.array([complex(r) for r in exact_roots])
        # clustering in double precision only decides which roots belong together
        groups = _merge_roots(roots, lambda rho: to_lambda(rho / float(scale)), merge_gap)
        if not groups:
            raise PadeConditioningError("no admissible poles found")
        centers = np.array([g[0] for g in groups])
        members = [[] for _ in groups]
        for r, rc in zip(exact_roots, roots):
            if abs(rc.imag) <= 0.05 * abs(rc):
                members[int(np.argmin(np.abs(centers - rc.real)))].append(r)
        rhos = [mpmath.re(mpmath.fsum(mem) / len(mem)) / scale for mem in members if mem]
        if not rhos:
            raise PadeConditioningError("no admissible poles found")
        basis = mpmath.matrix(len(coeffs), 2 * len(rhos))
        for n in range(len(coeffs)):
            for i, rho in enumerate(rhos):
                basis[n, 2 * i] = rho**n * scale**n
                basis[n, 2 * i + 1] = (n + 1) * rho**n * scale**n
        rhs = mpmath.matrix([x for x in c])
        amps, _ = mpmath.qr_solve(basis, rhs)
        return [(rho, amps[2 * i], amps[2 * i + 1]) for i, rho in enumerate(rhos)]


def pade_poles(series: ps.TruncatedSeries, config: InversionConfig | None = None, plane: str = "z") -> list:
    """Poles of ``L`` and their first- and second-order Laurent coefficients.

    Args:
        series: Taylor coefficients of ``L(z)`` (``plane="z"``) or of
            ``P'(w)/P(w)`` (``plane="w"``).
        plane: which variable the series is in. Poles are reported in ``z``
            either way, so the eigenvalue is ``lambda_i = 1/l_i - 1`` with
            ``l_i = -z_i/2``, ``k_i = round(-2 first_order)`` and
            ``d_i^2 = -second_order / (2 l_i^2)``.

    Raises:
        PadeConditioningError: if the coefficients cannot support the fit.
    """
    cfg = (config or InversionConfig()).resolved()
    if series.exact and plane == "z":
        coeffs = list(series.coeffs[: cfg.jmax + 1])
        comps = _exact_prediction_poles(coeffs, cfg.pade_order, lambda rho: _lambda_from_z(1.0 / rho), cfg.merge_gap)
        poles = []
        with mpmath.workdps(max(mpmath.mp.dps, ps.EXACT_DPS)):
            for rho, amp_a, amp_b in comps:
                z = 1 / rho
                poles.append(Pole(float(z), float(-amp_a * z), float(amp_b * z * z)))
        return sorted(poles, key=lambda p: p.position)
    coeffs = np.asarray(series.coeffs, dtype=float)
    if cfg.jmax + 1 > coeffs.size:
        cfg = replace(cfg, jmax=coeffs.size - 1, pade_order=min(cfg.pade_order, (coeffs.size - 1) // 2))
    if plane == "z":
        # L_n = sum (-a rho^(n+1) + b (n+1) rho^(n+2)) with rho = 1/z_i
        comps, _ = _exponential_sum_poles(coeffs, 0, lambda rho: _lambda_from_z(1.0 / rho), cfg, False)
        poles = []
        for rho, amp_a, amp_b in comps:
            z = 1.0 / rho
            poles.append(Pole(z, -amp_a * z, amp_b * z * z))
    elif plane == "w":
        comps, _ = _exponential_sum_poles(coeffs, 1, _lambda_from_c, cfg, True)
        poles = [_pole_from_w(rho, amp_a, amp_b) for rho, amp_a, amp_b in comps]
    else:
        raise ValueError(f"plane must be 'z' or 'w', got {plane!r}")
    return sorted(poles, key=lambda p: p.position)


def _lambda_from_z(z):
    lp = -0.5 * z
    return 1.0 / lp - 1.0 if lp > 0 else float("nan")


def _lambda_from_c(c):
    return (1.0 + c) / (1.0 - c) if -1.0 < c < 1.0 else float("nan")


def _pole_from_w(c, amp_a, amp_b):
    # R_n = (k/2) c^(n+1) + 2 d^2 l^2 (n+1) c^n
    k_half = amp_a / c if c != 0 else 0.0
    return Pole(c - 1.0, -k_half, -amp_b)


# --- least-squares refinement on probabilities ------------------------------------


def _unpack(theta, m, free_d):
    d2 = np.zeros(m)
    d2[free_d] = theta[m:]
    return np.exp(theta[:m]), d2


def _factor_coeffs(l, k, d2, nmax):
    """Coefficients of one PGF factor ``[2l/(1-cw)]^(k/2) exp(-d^2 l (1-w)/(1-cw))``.

    Up to the constant, the factor is the Laguerre generating function
    ``sum_n c^n L_n^(a)(-alpha/c) w^n`` with ``a = k/2 - 1`` and
    ``alpha = 2 d^2 l^2``, so ``q_n = c^n L_n^(a)`` obeys a three-term
    recurrence that stays finite at ``c = 0``.
    """
    c = 1.0 - 2.0 * l
    a = 0.5 * k - 1.0
    alpha = 2.0 * d2 * l * l
    c2 = c * c
    q = [0.0] * (nmax + 1)
    q[0] = 1.0
    if nmax >= 1:
        q[1] = (1.0 + a) * c + alpha
    for n in range(1, nmax):
        q[n + 1] = (((2 * n + 1 + a) * c + alpha) * q[n] - (n + a) * c2 * q[n - 1]) / (n + 1)
    return np.array(q) * ((2.0 * l) ** (0.5 * k) * math.exp(-d2 * l))


def _model(lam, d2, ks, nmax):
    out = np.zeros(nmax + 1)
    out[0] = 1.0
    for l, k, dd in zip(1.0 / (lam + 1.0), ks, d2):
        out = np.convolve(out, _factor_coeffs(float(l), int(k), float(dd), nmax))[: nmax + 1]
    return out


def _model_jacobian(lam, d2, ks, nmax):
    """Probabilities and their derivatives with respect to ``log lambda_i`` and ``d_i^2``.

    With ``c = 1 - 2l`` and ``r(w) = (1-w)/(1-cw)`` the log of each PGF factor
    has derivative ``(k/2) r / l - d^2 r^2`` in ``l`` and ``-l r`` in ``d^2``.
    """
    probs = _model(lam, d2, ks, nmax)
    n = np.arange(1, nmax + 1)
    d_log_lam, d_d2 = [], []
    for l, k, dd in zip(1.0 / (lam + 1.0), ks, d2):
        c = 1.0 - 2.0 * l
        r = np.empty(nmax + 1)
        r[0] = 1.0
        r[1:] = (c - 1.0) * c ** (n - 1)
        dl = (0.5 * k / l) * r - dd * np.convolve(r, r)[: nmax + 1]
        # d l / d log(lambda) = -l (1 - l)
        d_log_lam.append(np.convolve(probs, dl)[: nmax + 1] * (-l * (1.0 - l)))
        d_d2.append(np.convolve(probs, r)[: nmax + 1] * (-l))
    return probs, np.column_stack(d_log_lam), np.column_stack(d_d2)


# Rows are weighted by 1/sqrt(p_n + floor) so the small tail probabilities,
# which carry the largest eigenvalues, count in the fit.
_WEIGHT_FLOOR = 1e-15


def _pairing_penalty(log_lam, ks):
    """Violation of the pairing condition in log form and its gradient.

    Row ``j`` is ``max(0, -(log gamma_j + log gamma_{2S+1-j}))`` on the
    expanded non-ascending spectrum; it is linear in ``log lambda`` where
    active.
    """
    owner = np.repeat(np.argsort(-log_lam), np.asarray(ks)[np.argsort(-log_lam)])
    total = owner.size
    rows = np.zeros(total // 2)
    grad = np.zeros((total // 2, log_lam.size))
    for j in range(total // 2):
        a, b = owner[j], owner[total - 1 - j]
        gap = -(log_lam[a] + log_lam[b])
        if gap > 0:
            rows[j] = gap
            grad[j, a] -= 1.0
            grad[j, b] -= 1.0
    return rows, grad


def _least_squares_fit(p, ks, lam0, d0, free_d, cfg, fit_lam=True):
    """Weighted least squares over ``log lambda`` and the free ``d^2``.

    With ``fit_lam=False`` the eigenvalues stay at ``lam0`` and only the
    displacements move. Returns ``(lambda, d^2, max residual)``; ``d^2`` may
    come back slightly negative.
    """
    nmax = p.size - 1
    m = len(ks)
    row_w = 1.0 / np.sqrt(np.abs(p) + _WEIGHT_FLOOR)
    log_lam0 = np.log(np.clip(lam0, 1e-12, None))
    n_lam = m if fit_lam else 0

    def split(theta):
        log_lam = theta[:n_lam] if fit_lam else log_lam0
        return _unpack(np.concatenate([log_lam, theta[n_lam:]]), m, free_d)

    penalize = fit_lam and cfg.regularization > 0
    weight = math.sqrt(cfg.regularization) if penalize else 0.0

    def resid(theta):
        lam, d2 = split(theta)
        out = (_model(lam, d2, ks, nmax) - p) * row_w
        if penalize:
            rows, _ = _pairing_penalty(theta[:m], ks)
            out = np.concatenate([out, weight * rows])
        return out

    def jac(theta):
        lam, d2 = split(theta)
        _, j_lam, j_d2 = _model_jacobian(lam, d2, ks, nmax)
        cols = [j_lam] if fit_lam else []
        out = np.hstack(cols + [j_d2[:, free_d]]) * row_w[:, None]
        if penalize:
            _, grad = _pairing_penalty(theta[:m], ks)
            extra = np.zeros((grad.shape[0], out.shape[1]))
            extra[:, :m] = weight * grad
            out = np.vstack([out, extra])
        return out

    x0 = np.concatenate([log_lam0[:n_lam], np.asarray(d0, dtype=float)[free_d] ** 2])
    theta = x0
    if x0.size:
        with np.errstate(all="ignore"):
            try:
                sol = least_squares(resid, x0, jac=jac, method="trf", x_scale="jac",
                                    xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=cfg.max_iterations)
                theta = sol.x
            except (ValueError, FloatingPointError, OverflowError, np.linalg.LinAlgError):
                pass
    lam, d2 = split(theta)
    return lam, d2, _max_residual(p, lam, d2, ks)


def _max_residual(p, lam, d2, ks):
    residual = float(np.max(np.abs(_model(lam, d2, ks, p.size - 1) - p)))
    return residual if np.isfinite(residual) else float("inf")


def _fit_fixed_k(p, ks, lam0, d0, cfg, snap=0.05):
    """Refine ``(lambda, d)`` at fixed multiplicities.

    The fit runs over ``d^2`` without a sign constraint, since the model is
    analytic in ``d^2``. Near ``d = 0`` a small ``d^2`` is indistinguishable to
    first order from a shift of the eigenvalue, so components with fitted
    ``d^2`` below ``snap**2`` (negative ones included) are refit at exactly
    zero and kept there unless the residual clearly worsens. Any negative
    ``d^2`` left over is clamped to zero.

    Returns:
        ``(lambda, d, residual)`` with ``residual`` the maximum absolute
        probability error of the returned, physical, parameters.
    """
    m = len(ks)
    free = np.ones(m, dtype=bool)
    lam, d2, res = _least_squares_fit(p, ks, lam0, d0, free, cfg)
    while True:
        small = free & (d2 < snap * snap)
        if not small.any():
            break
        free = free & ~small
        lam_s, d2_s, res_s = _least_squares_fit(p, ks, lam, np.sqrt(np.where(free, d2, 0.0)), free, cfg)
        if res_s > max(2.0 * res, _ROUNDOFF):
            break
        lam, d2, res = lam_s, d2_s, res_s
    if np.any(d2 < 0):
        d2 = np.clip(d2, 0.0, None)
        res = _max_residual(p, lam, d2, ks)
    return lam, np.sqrt(d2), res


# residual treated as exact agreement; probabilities are computed to about 1e-16
_ROUNDOFF = 1e-14
# short refinement used to rank multiplicity assignments, and how many are then fully refined
_SCREEN_ITERATIONS = 40
_REFINED_STARTS = 4


def _pade_starts(p, modes, cfg):
    """Candidate eigenvalue sets from Pade at several series lengths.

    The log-derivative coefficients lose accuracy with growing order, while
    close poles need many of them, so a few lengths are tried. Only pole
    positions are trusted; displacements are rough guesses clipped to a sane
    range and multiplicities are left to the caller.

    Returns:
        A list of ``(poles, lambdas, ds)``.
    """
    starts, seen = [], set()
    available = p.size - 2
    lengths = sorted({min(n, available) for n in (cfg.jmax, 40, 64)})
    for length in lengths:
        if length < 3:
            continue
        series = pgf_logderiv_series(PhotonDistribution(p, 0.0), order=length)
        wcfg = replace(cfg, jmax=series.order, pade_order=min(cfg.pade_order, max(1, (series.order - 1) // 2)))
        try:
            comps, delta = _exponential_sum_poles(series.coeffs, 1, _lambda_from_c, wcfg, True, pencil=True)
        except (PadeConditioningError, np.linalg.LinAlgError, ValueError) as exc:
            logger.info("Pade start with %d coefficients failed: %s", length, exc)
            continue
        poles = [_pole_from_w(*c) for c in comps]
        found = [(pole.eigenvalue, pole.displacement) for pole in poles if pole.primed > 0]
        found = [(lam, d if np.isfinite(d) else 0.5) for lam, d in found if np.isfinite(lam) and lam > 0]
        # the least informative poles, nearest to vacuum, go first when there are too many
        found.sort(key=lambda c: -abs(math.log(c[0])))
        found = found[: min(2 * modes, cfg.max_components)]
        variants = [found]
        if len(found) < min(2 * modes, cfg.max_components) and all(abs(math.log(lam)) > 0.05 for lam, _ in found):
            variants.append(found + [(1.0, math.sqrt(max(2.0 * delta, 0.0)))])
        for comps_ in variants:
            if not comps_:
                continue
            key = tuple(sorted(round(math.log(lam), 2) for lam, _ in comps_))
            if key in seen:
                continue
            seen.add(key)
            lam = np.array([c[0] for c in comps_])
            d = np.clip([c[1] for c in comps_], 0.0, 3.0)
            starts.append((poles, lam, d))
    return starts


def _compositions(total, parts):
    """All tuples of ``parts`` positive integers summing to ``total``."""
    for cuts in itertools.combinations(range(1, total), parts - 1):
        edges = (0,) + cuts + (total,)
        yield tuple(b - a for a, b in zip(edges[:-1], edges[1:]))


def _moves(lam, ks, d, max_components):
    """Candidate starts one structural step away from a fitted state.

    Steps are: move one unit of multiplicity between components, split a
    component into two nearby eigenvalues, merge two neighbouring components
    and peel one unit off into a vacuum-like component at ``lambda = 1``.
    """
    m = len(ks)
    out = []
    for i, j in itertools.permutations(range(m), 2):
        if ks[i] > 1:
            new = list(ks)
            new[i] -= 1
            new[j] += 1
            out.append((lam, new, d))
    if m < max_components:
        for i in range(m):
            if ks[i] < 2:
                continue
            for f in (1.25, 1.0 / 1.25):
                lam_new = np.concatenate([lam, [lam[i] * f]])
                lam_new[i] /= f
                ks_new = list(ks) + [1]
                ks_new[i] -= 1
                out.append((lam_new, ks_new, np.concatenate([d, [0.0]])))
            if all(abs(math.log(x)) > 0.05 for x in lam):
                ks_new = list(ks) + [1]
                ks_new[i] -= 1
                out.append((np.concatenate([lam, [1.0]]), ks_new, np.concatenate([d, [0.0]])))
    order = np.argsort(-lam)
    for a, b in zip(order[:-1], order[1:]):
        keep = [x for x in range(m) if x not in (a, b)]
        lam_new = np.append(lam[keep], math.sqrt(lam[a] * lam[b]))
        ks_new = [ks[x] for x in keep] + [ks[a] + ks[b]]
        d_new = np.append(d[keep], math.hypot(d[a], d[b]))
        out.append((lam_new, ks_new, d_new))
    return out


def fit_normal_parameters(dist: PhotonDistribution, modes: int, config: InversionConfig | None = None) -> InversionResult:
    """Fit normal parameters to a total photon-number distribution.

    Pade on the ``w``-plane log-derivative gives pole positions and rounded
    multiplicities; ``(lambda_i, d_i)`` are then refined by least squares on
    the probabilities at fixed multiplicities. While the residual stays above
    round-off, structural neighbours of the best fit (multiplicity moves,
    splits, merges) are refined as well and the lowest residual wins. The
    number of local refinements is capped by ``config.search_budget``.

    Args:
        dist: the distribution to invert. Its probabilities should be exact
            up to ``nmax``; the tail beyond is ignored.
        modes: number of modes ``S``; the multiplicities sum to ``2S``.
        config: fit settings.

    Returns:
        An :class:`InversionResult`. ``converged`` is true when the maximum
        probability residual is at most ``config.fit_tolerance`` and the
        fitted parameters are physically valid.

    Raises:
        ValueError: if fewer than two probabilities are given.
    """
    cfg = (config or InversionConfig()).resolved(modes)
    p = np.asarray(dist.probs, dtype=float)
    if p.size < 2:
        # a single probability is only informative when nothing is left in the tail
        if p.size == 0 or dist.tail_bound > cfg.fit_tolerance:
            raise ValueError("need at least two probabilities")
        p = np.concatenate([p, np.zeros(2 - p.size)])

    starts = []
    if abs(p[0] - 1.0) > cfg.fit_tolerance:
        starts = _pade_starts(p, modes, cfg)
    if not starts:
        starts = [([], np.array([1.0]), np.array([0.0]))]

    tried = {}
    budget = [cfg.search_budget]

    def attempt(lam0, ks, d0, force=False):
        key = (tuple(ks), tuple(np.round(np.log(lam0), 1)))
        if not force:
            if key in tried or budget[0] <= 0:
                return None
            budget[0] -= 1
        lam, d, res = _fit_fixed_k(p, list(ks), np.asarray(lam0, float), np.asarray(d0, float), cfg)
        tried[key] = (res, lam, list(ks), d)
        return tried[key]

    # screen every multiplicity assignment of every start with a short run
    quick = replace(cfg, max_iterations=_SCREEN_ITERATIONS)
    screened = []
    for start_poles, lam0, d0 in starts:
        for ks in _compositions(2 * modes, lam0.size):
            # Pade displacement guesses are rough, so a start from d = 0 is screened too
            for d_init in (d0, np.zeros_like(d0)):
                free = np.ones(lam0.size, dtype=bool)
                # displacements first, at the Pade eigenvalues, then everything
                _, d2, _ = _least_squares_fit(p, list(ks), lam0, d_init, free, quick, fit_lam=False)
                d_init = np.sqrt(np.clip(d2, 0.0, None))
                lam, d2, res = _least_squares_fit(p, list(ks), lam0, d_init, free, quick)
                d = np.sqrt(np.clip(d2, 0.0, None))
                screened.append((res, lam, ks, d, start_poles))
    screened.sort(key=lambda c: c[0])

    best, poles = None, []
    for _, lam0, ks, d0, start_poles in screened[:_REFINED_STARTS]:
        cand = attempt(lam0, ks, d0)
        if cand is not None and (best is None or cand[0] < best[0]):
            best, poles = cand, start_poles
        if best[0] <= _ROUNDOFF:
            break

    improved = True
    while best[0] > _ROUNDOFF and improved and budget[0] > 0:
        improved = False
        for lam0, ks, d0 in _moves(best[1], best[2], best[3], cfg.max_components):
            cand = attempt(lam0, ks, d0)
            if cand is not None and cand[0] < best[0]:
                best, improved = cand, True
                if best[0] <= _ROUNDOFF:
                    break
    best = _merge_close(best, attempt, cfg.merge_gap)
    res, lam, ks, d = best
    params = _collapse(lam, ks, d, cfg.merge_gap * 1e-4)
    converged = bool(res <= cfg.fit_tolerance and validate_normal_parameters(params))
    return InversionResult(params, res, poles, converged)


def _merge_close(best, attempt, rel_gap):
    """Prefer fewer components when a merged fit is just as good.

    Two components a tiny distance apart can trade a shift in eigenvalue
    against a shift in displacement and mimic a single component almost
    exactly, so the search may end on such a split. Each pair of neighbours
    closer than ``rel_gap`` is merged and refitted; the merge is kept when the
    residual does not grow beyond round-off.
    """
    while True:
        res, lam, ks, d = best
        order = np.argsort(-lam)
        for a, b in zip(order[:-1], order[1:]):
            if abs(lam[a] - lam[b]) > rel_gap * min(lam[a], lam[b]):
                continue
            keep = [x for x in range(len(ks)) if x not in (a, b)]
            lam_new = np.append(lam[keep], (lam[a] * ks[a] + lam[b] * ks[b]) / (ks[a] + ks[b]))
            ks_new = [ks[x] for x in keep] + [ks[a] + ks[b]]
            d_new = np.append(d[keep], math.hypot(d[a], d[b]))
            cand = attempt(lam_new, ks_new, d_new, force=True)
            if cand[0] <= max(res, _ROUNDOFF):
                best = cand
                break
        else:
            return best


def _collapse(lam, ks, d, rel_gap):
    """Merge fitted components that landed on the same eigenvalue."""
    order = np.argsort(-lam)
    out = []
    for i in order:
        if out and abs(out[-1][0] - lam[i]) <= rel_gap * lam[i]:
            l0, k0, d0 = out[-1]
            out[-1] = ((l0 * k0 + lam[i] * ks[i]) / (k0 + ks[i]), k0 + ks[i], math.hypot(d0, d[i]))
        else:
            out.append((float(lam[i]), int(ks[i]), float(d[i])))
    return NormalParameters.from_triples(out)


def same_distribution(a: GaussianState, b: GaussianState, tol: float = 1e-8,
                      cluster_tol: float = CLUSTER_TOL) -> bool:
    """Whether two states give the same total photon-number distribution.

    Compares normal parameters: equal multiplicities, eigenvalues within
    relative ``tol`` and eigenspace displacements within absolute ``tol``.
    """
    if a.modes != b.modes:
        return False
    return normal_parameters(a, cluster_tol).allclose(normal_parameters(b, cluster_tol), rtol=tol, atol=tol)
