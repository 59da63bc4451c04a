"""Total photon-number statistics of a Gaussian state from its normal parameters.

The anti-normally ordered generating function ``G(z) = <:exp(-z n):>`` of a
Gaussian state factorizes over covariance eigenspaces::

    G(z) = prod_i [l_i / (l_i + z/2)]^(k_i/2) * exp(-z d_i^2 l_i / (2 (l_i + z/2)))

with ``l_i = 1 / (lambda_i + 1)``. The probability generating function follows
from ``sum_n p_n w^n = w^-S G((1 - w) / w)``; each eigenspace contributes a
factor analytic at ``w = 0``, so its Taylor coefficients are the exact
photon-number probabilities.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import power_series as ps
from .decompositions import DomainError, NormalParameters, validate_normal_parameters

logger = logging.getLogger(__name__)

TAIL_EPS = 1e-12
NMAX_CAP = ps.MAX_ORDER


class TruncationError(RuntimeError):
    """Raised when the requested tail mass cannot be reached below the order cap."""

    def __init__(self, message, achieved_tail):
        super().__init__(message)
        self.achieved_tail = achieved_tail


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Probabilities ``p_0 .. p_nmax`` of total photon counts.

    ``tail_bound`` bounds the mass ``1 - sum(p)`` beyond ``nmax``. Raw values
    are kept; tiny negative rounding noise is only clamped on serialization.
    """

    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty 1-d sequence")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_bound", float(self.tail_bound))

    @property
    def nmax(self) -> int:
        return self.probs.size - 1

    def __len__(self):
        return self.probs.size

    def __getitem__(self, n):
        return self.probs[n]

    def clamped(self) -> np.ndarray:
        return np.clip(self.probs, 0.0, None)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def to_dict(self) -> dict:
        return {"probs": self.clamped().tolist(), "tail_bound": self.tail_bound}

    @classmethod
    def from_dict(cls, data: dict) -> "PhotonDistribution":
        probs = np.asarray(data["probs"], dtype=float)
        tail = data.get("tail_bound")
        if tail is None:
            tail = max(0.0, 1.0 - math.fsum(probs))
        return cls(probs, tail)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "p_n"])
        for n, p in enumerate(self.clamped()):
            writer.writerow([n, repr(float(p))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Moments ``m_0 .. m_jmax`` in ``"antinormal"`` or ``"ordinary"`` ordering."""

    ordering: str
    values: np.ndarray
    modes: int
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.ordering not in ("antinormal", "ordinary"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def jmax(self) -> int:
        return self.values.size - 1

    def __getitem__(self, j):
        return self.values[j]


def _check_valid(params: NormalParameters):
    report = validate_normal_parameters(params)
    if not report:
        raise DomainError("invalid normal parameters: " + "; ".join(report.messages))


def g_closed(params: NormalParameters, z: float) -> float:
    """Closed form of ``G(z)``; defined for ``z > -2 min_i l_i``.

    Raises:
        DomainError: at or beyond the nearest pole.
    """
    lp = params.primed
    bound = -2.0 * lp.min()
    if not z > bound:
        raise DomainError(f"G(z) is defined for z > -2 min l_i = {bound!r}, got z={z!r}")
    half = lp + 0.5 * z
    log_g = np.sum(0.5 * params.ks * np.log(lp / half) - z * params.ds**2 * lp / (2 * half))
    return float(np.exp(log_g))


def _factor_w(lp: float, k: int, d: float, order: int) -> ps.TruncatedSeries:
    """PGF factor ``[2l / (1 - c w)]^(k/2) exp(-d^2 l (1 - w) / (1 - c w))`` with ``c = 1 - 2l``."""
    c = 1.0 - 2.0 * lp
    geo = ps.series_geometric(c, order)
    base = ps.series_pow_half_integer(geo, k) * (2.0 * lp) ** (0.5 * k)
    if d == 0:
        return base
    # (1 - w) / (1 - c w) = 1 - 2 l w / (1 - c w)
    expo = ps.TruncatedSeries(np.concatenate([[0.0], geo.coeffs[:-1]])) * (2.0 * d * d * lp * lp)
    expo = expo + (-d * d * lp)
    return base * ps.series_exp(expo)


def pgf_coefficients(primed, ks, ds, nmax: int) -> np.ndarray:
    """Unchecked PGF coefficients from ``l_i = 1/(lambda_i+1)``, ``k_i``, ``d_i``."""
    out = ps.constant(1.0, nmax)
    for lp, k, d in zip(primed, ks, ds):
        out = out * _factor_w(float(lp), int(k), float(d), nmax)
    return out.coeffs


def pgf_series(params: NormalParameters, nmax: int) -> ps.TruncatedSeries:
    """Coefficients of ``sum_n p_n w^n`` up to ``w^nmax``."""
    _check_valid(params)
    if nmax < 0:
        raise ValueError("nmax must be nonnegative")
    return ps.TruncatedSeries(pgf_coefficients(params.primed, params.ks, params.ds, nmax))


def photon_distribution(
    params: NormalParameters, nmax: int | None = None, tail_eps: float = TAIL_EPS, nmax_cap: int = NMAX_CAP
) -> PhotonDistribution:
    """Exact total photon-number distribution.

    With ``nmax`` given the first ``nmax + 1`` probabilities are returned.
    Otherwise ``nmax`` is the smallest count with ``1 - sum p_n <= tail_eps``.

    Raises:
        TruncationError: if the tail target is not met below ``nmax_cap``.
    """
    _check_valid(params)
    if nmax is not None:
        probs = pgf_series(params, nmax).coeffs
        return PhotonDistribution(probs, max(0.0, 1.0 - math.fsum(probs)))
    order = 32
    while True:
        order = min(order, nmax_cap)
        probs = pgf_series(params, order).coeffs
        tails = 1.0 - np.cumsum(probs)
        hit = np.flatnonzero(tails <= tail_eps)
        if hit.size:
            n = int(hit[0])
            probs = probs[: n + 1]
            return PhotonDistribution(probs, max(0.0, 1.0 - math.fsum(probs)))
        if order >= nmax_cap:
            tail = float(tails[-1])
            raise TruncationError(
                f"tail mass {tail:.3e} still above {tail_eps:.1e} at nmax={nmax_cap}", tail
            )
        order *= 2


def g_series(params: NormalParameters, jmax: int, exact: bool = False) -> ps.TruncatedSeries:
    """Taylor coefficients of ``G(z)`` about ``z = 0`` up to ``z^jmax``.

    Args:
        params: normal parameters.
        jmax: highest power kept.
        exact: compute with ``mpmath`` numbers at ``power_series.EXACT_DPS``
            digits. The parameters are taken as exact binary values, so the
            coefficients are correct far beyond double precision.
    """
    with mpmath.workdps(max(mpmath.mp.dps, ps.EXACT_DPS)):
        num = mpmath.mpf if exact else float
        out = ps.constant(num(1), jmax)
        for lp, k, d in zip(params.primed, params.ks, params.ds):
            lp, d = num(float(lp)), num(float(d))
            # l / (l + z/2) = 1 / (1 + z / (2 l))
            geo = ps.series_geometric(-1 / (2 * lp), jmax)
            term = ps.series_pow_half_integer(geo, int(k))
            if d:
                shifted = np.concatenate([[num(0)], geo.coeffs[:-1]]).astype(geo.coeffs.dtype)
                term = term * ps.series_exp(ps.TruncatedSeries(shifted) * (-d * d / 2))
            out = out * term
    return out


def antinormal_moments_from_params(params: NormalParameters, jmax: int) -> MomentVector:
    """``<:n^j:> = (-1)^j j! [z^j] G(z)`` for ``j = 0..jmax``."""
    _check_valid(params)
    g = g_series(params, jmax).coeffs
    j = np.arange(jmax + 1)
    fact = np.array([math.factorial(int(x)) for x in j], dtype=float)
    return MomentVector("antinormal", (-1.0) ** j * fact * g, params.modes)


def _rising(x, j):
    out = np.ones_like(x, dtype=float)
    for i in range(j):
        out = out * (x + i)
    return out


def antinormal_moments_from_distribution(dist: PhotonDistribution, modes: int, jmax: int) -> MomentVector:
    """``<:n^j:> = sum_n p_n (n+S)(n+S+1)...(n+S+j-1)``.

    A warning is attached when the neglected tail could change a moment by
    more than its relative size ``1e-8``.
    """
    n = np.arange(dist.probs.size, dtype=float)
    vals = np.empty(jmax + 1)
    warnings = []
    for j in range(jmax + 1):
        terms = dist.probs * _rising(n + modes, j)
        vals[j] = math.fsum(terms)
        tail_scale = dist.tail_bound * _rising(np.array([float(dist.nmax + 1 + modes)]), j)[0]
        if j and tail_scale > 1e-8 * abs(vals[j]):
            warnings.append(f"moment {j}: tail mass may contribute up to {tail_scale:.3e}")
    return MomentVector("antinormal", vals, modes, warnings)


def ordinary_moments(dist: PhotonDistribution, jmax: int, modes: int = 1) -> MomentVector:
    """``<n^j> = sum_n n^j p_n``."""
    n = np.arange(dist.probs.size, dtype=float)
    vals = [math.fsum(dist.probs * n**j) for j in range(jmax + 1)]
    return MomentVector("ordinary", vals, modes)


def _rising_poly(shift: int, j: int) -> list:
    """Integer coefficients (ascending in ``n``) of ``(n+shift)(n+shift+1)...(n+shift+j-1)``."""
    poly = [1]
    for i in range(j):
        a = shift + i
        new = [0] * (len(poly) + 1)
        for p, c in enumerate(poly):
            new[p] += a * c
            new[p + 1] += c
        poly = new
    return poly


def conversion_matrix(modes: int, jmax: int) -> np.ndarray:
    """Unit lower-triangular integer matrix ``C`` with ``antinormal = C @ ordinary``."""
    mat = np.zeros((jmax + 1, jmax + 1), dtype=object)
    for j in range(jmax + 1):
        for p, c in enumerate(_rising_poly(modes, j)):
            mat[j, p] = c
    return mat


def _unit_lower_inverse(mat) -> np.ndarray:
    size = mat.shape[0]
    inv = np.zeros((size, size), dtype=object)
    for col in range(size):
        inv[col, col] = 1
        for row in range(col + 1, size):
            inv[row, col] = -sum(mat[row, m] * inv[m, col] for m in range(col, row))
    return inv


def moment_convert(moments: MomentVector, target: str) -> MomentVector:
    """Convert between ordinary and anti-normally ordered moments.

    ``<:n^j:>`` is the expectation of a rising factorial of ``n + S``, so the
    two orderings are related by an exact unit-triangular integer matrix.
    """
    if target == moments.ordering:
        return moments
    if target not in ("antinormal", "ordinary"):
        raise ValueError(f"unknown ordering {target!r}")
    mat = conversion_matrix(moments.modes, moments.jmax)
    if target == "ordinary":
        mat = _unit_lower_inverse(mat)
    vals = [math.fsum(float(mat[j, m]) * moments.values[m] for m in range(j + 1)) for j in range(moments.jmax + 1)]
    return MomentVector(target, vals, moments.modes)


def sample_counts(dist: PhotonDistribution, n_samples: int, seed=None) -> np.ndarray:
    """I.i.d. photon counts by inverse CDF; the tail mass maps to ``nmax + 1``."""
    rng = np.random.default_rng(seed)
    p = dist.clamped()
    cdf = np.cumsum(p)
    total = cdf[-1] + max(dist.tail_bound, 0.0)
    u = rng.random(n_samples) * total
    return np.searchsorted(cdf, u, side="right")
