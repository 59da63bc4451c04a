"""Estimator-style wrappers and input validation helpers.

The numerical work lives in the function modules; this layer gives it the
familiar ``fit`` / ``predict`` / ``transform`` / ``get_params`` surface so a
photon-number model can sit next to other estimators in a pipeline.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .decompositions import NormalParameters, normal_parameters, validate_normal_parameters
from .gaussian_core import GaussianState
from .inverse import InversionConfig, InversionResult, fit_normal_parameters
from .photon_stats import PhotonDistribution, photon_distribution


def check_distribution(dist, tol: float = 1e-8) -> PhotonDistribution:
    """Coerce ``dist`` to a :class:`PhotonDistribution` and check it.

    Args:
        dist: a ``PhotonDistribution``, a mapping with a ``"probs"`` entry or
            a 1-d sequence of probabilities.
        tol: slack allowed on negativity and on total mass.

    Returns:
        The validated distribution.

    Raises:
        ValueError: if entries are not finite, are negative beyond ``tol`` or
            sum to more than ``1 + tol``.
    """
    if isinstance(dist, PhotonDistribution):
        out = dist
    elif isinstance(dist, dict):
        out = PhotonDistribution.from_dict(dist)
    else:
        probs = np.asarray(dist, dtype=float)
        out = PhotonDistribution(probs, max(0.0, 1.0 - math.fsum(probs.ravel())))
    p = out.probs
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite")
    if p.min() < -tol:
        raise ValueError(f"negative probability {p.min():.3e}")
    total = math.fsum(p)
    if total > 1.0 + tol:
        raise ValueError(f"probabilities sum to {total!r} > 1")
    return out


def check_covariance(cov, tol: float = 1e-10) -> np.ndarray:
    """Return ``cov`` as a symmetric float array of even order.

    Raises:
        ValueError: if the matrix is not square, has odd order, is not finite
            or is not symmetric to relative ``tol``.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if cov.shape[0] == 0 or cov.shape[0] % 2:
        raise ValueError(f"covariance order must be even and positive, got {cov.shape[0]}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance has non-finite entries")
    if np.max(np.abs(cov - cov.T)) > tol * max(1.0, np.max(np.abs(cov))):
        raise ValueError("covariance is not symmetric")
    return 0.5 * (cov + cov.T)


def check_normal_parameters(params) -> NormalParameters:
    """Coerce ``params`` to :class:`NormalParameters` and require validity.

    Args:
        params: ``NormalParameters``, a mapping as produced by ``to_dict`` or
            a sequence of ``(lambda, k, d)`` triples.

    Raises:
        ValueError: if the family is not realized by any Gaussian state.
    """
    if isinstance(params, dict):
        params = NormalParameters.from_dict(params)
    elif not isinstance(params, NormalParameters):
        params = NormalParameters.from_triples(params)
    report = validate_normal_parameters(params)
    if not report:
        raise ValueError(f"invalid normal parameters: {report}")
    return params


class PhotonNumberModel(BaseEstimator, TransformerMixin):
    """Fit normal parameters to a measured total photon-number distribution.

    Args:
        modes: number of modes ``S`` of the underlying state.
        max_components: upper bound on distinct covariance eigenvalues.
        fit_tolerance: largest accepted probability residual.
        search_budget: cap on local refinements in one fit.
        nmax: length of predicted distributions; ``None`` uses the length of
            the fitted input.

    Attributes:
        params_: fitted :class:`NormalParameters`.
        result_: the full :class:`InversionResult`.
        converged_: whether the fit met ``fit_tolerance``.

    Example:
        >>> model = PhotonNumberModel(modes=1).fit(probs)  # doctest: +SKIP
        >>> model.predict()                                # doctest: +SKIP
    """

    def __init__(self, modes: int = 1, max_components: int | None = None, fit_tolerance: float = 1e-10,
                 search_budget: int = 40, nmax: int | None = None):
        self.modes = modes
        self.max_components = max_components
        self.fit_tolerance = fit_tolerance
        self.search_budget = search_budget
        self.nmax = nmax

    def _config(self) -> InversionConfig:
        return InversionConfig(max_components=self.max_components, fit_tolerance=self.fit_tolerance,
                               search_budget=self.search_budget)

    def fit(self, X, y=None):
        """Fit to the distribution ``X``; ``y`` is ignored."""
        if int(self.modes) < 1:
            raise ValueError(f"modes must be a positive integer, got {self.modes!r}")
        dist = check_distribution(X)
        result: InversionResult = fit_normal_parameters(dist, int(self.modes), self._config())
        self.result_ = result
        self.params_ = result.params
        self.converged_ = result.converged
        self.n_probs_ = dist.probs.size
        return self

    def predict(self, X=None) -> np.ndarray:
        """Probabilities implied by the fitted parameters.

        Args:
            X: optional distribution whose length sets ``nmax``.
        """
        check_is_fitted(self, "params_")
        if X is not None:
            n = check_distribution(X).probs.size
        else:
            n = self.nmax + 1 if self.nmax is not None else self.n_probs_
        return np.asarray(photon_distribution(self.params_, nmax=n - 1).probs)

    def transform(self, X) -> np.ndarray:
        """Fit ``X`` and return its normal parameters as an ``(m, 3)`` array of ``(lambda, k, d)``."""
        params = fit_normal_parameters(check_distribution(X), int(self.modes), self._config()).params
        return np.array(params.triples, dtype=float)

    def fit_transform(self, X, y=None, **fit_params) -> np.ndarray:
        """Fit ``X`` once and return the fitted normal parameters as ``transform`` does."""
        return np.array(self.fit(X).params_.triples, dtype=float)

    def score(self, X, y=None) -> float:
        """Negative maximum absolute deviation between ``X`` and the fitted model."""
        p = check_distribution(X).probs
        q = self.predict(p)
        return -float(np.max(np.abs(p - q)))


class NormalParameterExtractor(BaseEstimator, TransformerMixin):
    """Map Gaussian states to their normal parameters.

    Stateless: ``fit`` only checks its input. ``transform`` accepts a sequence
    of :class:`GaussianState` and returns a list of :class:`NormalParameters`.

    Args:
        cluster_tol: relative gap under which eigenvalues are merged.
    """

    def __init__(self, cluster_tol: float = 1e-8):
        self.cluster_tol = cluster_tol

    def fit(self, X, y=None):
        for state in X:
            if not isinstance(state, GaussianState):
                raise TypeError(f"expected GaussianState, got {type(state).__name__}")
            check_covariance(state.cov)
        self.fitted_ = True
        return self

    def transform(self, X) -> list:
        return [normal_parameters(state, self.cluster_tol) for state in X]
