"""Formal power series truncated at a fixed order.

Coefficients are stored in ascending powers of the series variable. Every
operation keeps the order of its inputs and never reads beyond it.

Coefficients are floats by default. A series built from ``mpmath`` numbers
keeps them (as an object array) and every operation then runs at the current
``mpmath.mp.dps`` precision, which gives effectively exact coefficients for
steps that are ill-conditioned in double precision.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np

MAX_ORDER = 4096
# working precision (decimal digits) for series with mpmath coefficients
EXACT_DPS = 60


def _involves_exact(args):
    for x in args:
        if isinstance(x, mpmath.mpf) or (isinstance(x, TruncatedSeries) and x.exact):
            return True
    return False


def _exact_precision(func):
    """Run ``func`` at ``EXACT_DPS`` digits or more when an argument is multiprecision."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        if _involves_exact(args):
            with mpmath.workdps(max(mpmath.mp.dps, EXACT_DPS)):
                return func(*args, **kwargs)
        return func(*args, **kwargs)

    return wrapper


def _is_scalar(x):
    return np.isscalar(x) or isinstance(x, mpmath.mpf)


@dataclass(frozen=True, eq=False)
class TruncatedSeries:
    """Coefficients ``c_0 .. c_M`` of a power series known up to ``w**M``."""

    coeffs: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.coeffs)
        if raw.dtype == object and any(isinstance(x, mpmath.mpf) for x in raw.ravel()):
            c = np.array([mpmath.mpf(x) for x in raw.ravel()], dtype=object).reshape(raw.shape)
        else:
            c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d sequence")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def exact(self) -> bool:
        """Whether coefficients are multiprecision ``mpmath`` numbers."""
        return self.coeffs.dtype == object

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __len__(self):
        return self.coeffs.size

    def __getitem__(self, n):
        return self.coeffs[n]

    @_exact_precision
    def __add__(self, other):
        if _is_scalar(other):
            c = self.coeffs.copy()
            c[0] += other
            return TruncatedSeries(c)
        _check_orders(self, other)
        return TruncatedSeries(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    @_exact_precision
    def __mul__(self, other):
        if _is_scalar(other):
            return TruncatedSeries(self.coeffs * other)
        return series_mul(self, other)

    __rmul__ = __mul__

    def __call__(self, w):
        """Evaluate the truncated polynomial at ``w`` (Horner)."""
        acc = 0.0
        for c in self.coeffs[::-1]:
            acc = acc * w + c
        return acc

    def truncate(self, order: int) -> "TruncatedSeries":
        if order > self.order:
            raise ValueError(f"cannot extend a series of order {self.order} to {order}")
        return TruncatedSeries(self.coeffs[: order + 1])


def _zeros(n, exact=False):
    if exact:
        return np.array([mpmath.mpf(0)] * n, dtype=object)
    return np.zeros(n)


def _check_orders(a, b):
    if a.order != b.order:
        raise ValueError(f"order mismatch: {a.order} != {b.order}")


def constant(value: float, order: int) -> TruncatedSeries:
    c = _zeros(order + 1, isinstance(value, mpmath.mpf))
    c[0] = value
    return TruncatedSeries(c)


def monomial(coeff: float, power: int, order: int) -> TruncatedSeries:
    c = _zeros(order + 1, isinstance(coeff, mpmath.mpf))
    if power <= order:
        c[power] = coeff
    return TruncatedSeries(c)


@_exact_precision
def series_mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated at the common order."""
    _check_orders(a, b)
    m = a.order
    return TruncatedSeries(np.convolve(a.coeffs, b.coeffs)[: m + 1])


@_exact_precision
def series_pow(a: TruncatedSeries, k: int) -> TruncatedSeries:
    """Nonnegative integer power by repeated squaring."""
    if k < 0:
        raise ValueError("exponent must be nonnegative")
    result = constant(mpmath.mpf(1) if a.exact else 1.0, a.order)
    base = a
    while k:
        if k & 1:
            result = series_mul(result, base)
        k >>= 1
        if k:
            base = series_mul(base, base)
    return result


@_exact_precision
def series_geometric(c: float, order: int) -> TruncatedSeries:
    """Coefficients of ``1 / (1 - c w)``; an ``mpmath`` ratio gives an exact series."""
    if isinstance(c, mpmath.mpf):
        return TruncatedSeries(np.array([c**n for n in range(order + 1)], dtype=object))
    return TruncatedSeries(float(c) ** np.arange(order + 1))


@_exact_precision
def series_exp(a: TruncatedSeries) -> TruncatedSeries:
    """``exp(a(w))`` from the recurrence ``n b_n = sum_j j a_j b_{n-j}``."""
    m = a.order
    if not np.isfinite(float(a[0])):
        raise ValueError("constant term must be finite")
    ja = np.arange(m + 1) * a.coeffs
    b = _zeros(m + 1, a.exact)
    with np.errstate(over="raise", invalid="raise"):
        try:
            b[0] = mpmath.exp(a[0]) if a.exact else math.exp(a[0])
            for n in range(1, m + 1):
                b[n] = np.dot(ja[1 : n + 1], b[n - 1 :: -1]) / n
        except (OverflowError, FloatingPointError) as exc:
            raise OverflowError("series_exp: coefficient overflow") from exc
    return TruncatedSeries(b)


@_exact_precision
def series_log_derivative(a: TruncatedSeries) -> TruncatedSeries:
    """Coefficients of ``a'(w) / a(w)``; the result has order ``M - 1``."""
    if a[0] == 0:
        raise ZeroDivisionError("log-derivative needs a nonzero constant term")
    m = a.order
    if m == 0:
        return TruncatedSeries(_zeros(1, a.exact))
    da = np.arange(1, m + 1) * a.coeffs[1:]
    q = _zeros(m, a.exact)
    a0 = a[0]
    for n in range(m):
        q[n] = (da[n] - np.dot(a.coeffs[1 : n + 1], q[n - 1 :: -1][:n])) / a0
    return TruncatedSeries(q)


@_exact_precision
def series_log(a: TruncatedSeries) -> TruncatedSeries:
    """Principal ``log(a(w))`` for a positive constant term."""
    if a[0] <= 0:
        raise ValueError("series_log needs a positive constant term")
    q = series_log_derivative(a)
    c = _zeros(a.order + 1, a.exact)
    c[0] = mpmath.log(a[0]) if a.exact else math.log(a[0])
    c[1:] = q.coeffs / np.arange(1, a.order + 1)
    return TruncatedSeries(c)


@_exact_precision
def series_sqrt(a: TruncatedSeries) -> TruncatedSeries:
    """Square root with positive constant term."""
    if not a[0] > 0:
        raise ValueError("series_sqrt: constant term must be positive (branch choice)")
    m = a.order
    b = _zeros(m + 1, a.exact)
    b[0] = mpmath.sqrt(a[0]) if a.exact else math.sqrt(a[0])
    two_b0 = 2.0 * b[0]
    for n in range(1, m + 1):
        b[n] = (a[n] - np.dot(b[1:n], b[n - 1 : 0 : -1])) / two_b0
    return TruncatedSeries(b)


@_exact_precision
def series_pow_half_integer(a: TruncatedSeries, k: int) -> TruncatedSeries:
    """``a(w) ** (k / 2)`` for a positive integer ``k``."""
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    k = int(k)
    if not a[0] > 0:
        raise ValueError("half-integer power needs a positive constant term")
    whole = series_pow(a, k // 2)
    if k % 2:
        return series_mul(whole, series_sqrt(a))
    return whole
