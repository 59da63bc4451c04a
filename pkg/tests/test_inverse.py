import math

import numpy as np
import pytest

from gaussian_pnr import power_series as ps
from gaussian_pnr.decompositions import NormalParameters, counterexample_state, normal_parameters
from gaussian_pnr.gaussian_core import GaussianState, apply_symplectic, make_squeezed_thermal, random_passive
from gaussian_pnr.inverse import (
    InversionConfig,
    InversionResult,
    Pole,
    fit_normal_parameters,
    g_series_from_distribution,
    logderiv_series,
    pade_poles,
    pgf_logderiv_series,
    same_distribution,
)
from gaussian_pnr.photon_stats import PhotonDistribution, g_series, photon_distribution


def params(*triples):
    return NormalParameters.from_triples(list(triples))


VACUUM = params((1.0, 2, 0.0))
THERMAL3 = params((3.0, 2, 0.0))


def test_g_series_of_vacuum():
    g = g_series_from_distribution(PhotonDistribution(np.array([1.0]), 0.0), 1, 6)
    np.testing.assert_allclose(g.coeffs, [1, -1, 1, -1, 1, -1, 1])


def test_g_series_of_thermal_matches_closed_form():
    # nu = 3: G(z) = 1 / (1 + 2z)
    dist = photon_distribution(THERMAL3, nmax=200)
    g = g_series_from_distribution(dist, 1, 8)
    np.testing.assert_allclose(g.coeffs, (-2.0) ** np.arange(9), rtol=1e-10)


def test_g_series_from_distribution_matches_params():
    p = params((4.0, 1, 0.7), (1.5, 2, 0.0), (0.3, 1, 1.1))
    dist = photon_distribution(p, nmax=300)
    a = g_series_from_distribution(dist, 2, 10).coeffs
    b = g_series(p, 10).coeffs
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_g_series_rejects_heavy_tail():
    with pytest.raises(ValueError):
        g_series_from_distribution(PhotonDistribution(np.array([0.5, 0.2]), 0.3), 1, 4)


def test_logderiv_of_vacuum():
    # G = (1 + z)^-1 for one mode, so L(0) = -1
    L = logderiv_series(g_series(VACUUM, 6))
    assert L[0] == pytest.approx(-1.0)
    np.testing.assert_allclose(L.coeffs, [-((-1) ** j) for j in range(6)], atol=1e-14)


def test_logderiv_rejects_unnormalized():
    with pytest.raises(ValueError):
        logderiv_series(ps.TruncatedSeries([0.5, 1.0]))


def test_pgf_logderiv_needs_two_terms():
    with pytest.raises(ValueError):
        pgf_logderiv_series(PhotonDistribution(np.array([1.0]), 0.0))


def test_pade_thermal_exact():
    L = logderiv_series(g_series(THERMAL3, 12, exact=True))
    (pole,) = pade_poles(L, InversionConfig(max_components=1))
    assert pole.position == pytest.approx(-0.5, rel=1e-12)
    assert pole.multiplicity == 2
    assert pole.eigenvalue == pytest.approx(3.0, rel=1e-12)
    assert pole.displacement == pytest.approx(0.0, abs=1e-8)


def test_pade_vacuum_multimode():
    L = logderiv_series(g_series(params((1.0, 6, 0.0)), 12))
    (pole,) = pade_poles(L, InversionConfig(max_components=2))
    assert pole.position == pytest.approx(-1.0, rel=1e-10)
    assert pole.multiplicity == 6


def test_pade_coherent_recovers_displacement():
    d = 1.3
    L = logderiv_series(g_series(params((2.0, 2, d)), 16))
    (pole,) = pade_poles(L, InversionConfig(max_components=1))
    assert pole.eigenvalue == pytest.approx(2.0, rel=1e-8)
    assert pole.multiplicity == 2
    assert pole.displacement == pytest.approx(d, rel=1e-6)


def test_pade_two_components_float():
    p = params((4.0, 1, 0.5), (0.5, 3, 0.0))
    L = logderiv_series(g_series(p, 20))
    poles = pade_poles(L, InversionConfig(max_components=2))
    lams = sorted(pl.eigenvalue for pl in poles)
    np.testing.assert_allclose(lams, [0.5, 4.0], rtol=1e-6)
    assert sorted(pl.multiplicity for pl in poles) == [1, 3]


def test_pade_w_plane():
    p = params((3.0, 2, 0.8))
    dist = photon_distribution(p, nmax=40)
    poles = pade_poles(pgf_logderiv_series(dist, 20), InversionConfig(max_components=1), plane="w")
    assert len(poles) == 1
    assert poles[0].eigenvalue == pytest.approx(3.0, rel=1e-6)
    assert poles[0].displacement == pytest.approx(0.8, rel=1e-5)


def test_pade_rejects_plane():
    with pytest.raises(ValueError):
        pade_poles(ps.TruncatedSeries(np.ones(20)), plane="x")


def test_pole_tuple():
    pole = Pole(-0.5, -1.0, 0.0)
    assert pole.as_tuple() == (-0.5, -1.0, 0.0)
    assert pole.primed == pytest.approx(0.25)


def test_fit_vacuum():
    dist = photon_distribution(VACUUM)
    result = fit_normal_parameters(dist, 1)
    assert result.converged
    assert result.residual < 1e-12
    assert result.params.allclose(VACUUM, rtol=1e-6, atol=1e-6)


def test_fit_thermal():
    result = fit_normal_parameters(photon_distribution(THERMAL3, nmax=60), 1)
    assert result.converged
    assert result.params.allclose(THERMAL3, rtol=1e-6, atol=1e-6)


def test_fit_displaced_squeezed():
    truth = params((math.e**2, 1, math.sqrt(2)), (math.e**-2, 1, 0.0))
    result = fit_normal_parameters(photon_distribution(truth, nmax=60), 1)
    assert result.converged
    assert result.params.allclose(truth, rtol=1e-6, atol=1e-6)


def test_fit_counterexample_spectrum():
    cx = counterexample_state(1.0, math.cosh(1.0), math.sinh(1.0))
    truth = normal_parameters(cx.state)
    result = fit_normal_parameters(photon_distribution(truth, nmax=80), 2)
    assert result.converged
    lam = result.params.lambdas
    np.testing.assert_allclose(sorted(lam), sorted([cx.g_minus, cx.g_plus]), rtol=1e-6)
    assert list(result.params.ks) == [2, 2]


def test_fit_result_to_dict():
    result = fit_normal_parameters(photon_distribution(THERMAL3, nmax=60), 1)
    out = result.to_dict()
    assert out["converged"] is True
    assert {"residual", "pole_report"} <= set(out)
    assert isinstance(result, InversionResult)


def test_fit_reports_non_convergence():
    # one mode can never put all the mass on n = 1
    result = fit_normal_parameters(PhotonDistribution(np.array([0.0, 1.0]), 0.0), 1)
    assert not result.converged


def test_fit_rejects_empty():
    with pytest.raises(ValueError):
        fit_normal_parameters(PhotonDistribution(np.array([1.0]), 0.5), 1)


def test_config_resolution():
    cfg = InversionConfig().resolved(2)
    assert cfg.max_components == 4
    assert cfg.pade_order == 8
    assert cfg.jmax == 20
    with pytest.raises(ValueError):
        InversionConfig(max_components=5).resolved(2)
    with pytest.raises(ValueError):
        InversionConfig(regularization=-1.0).resolved(1)
    with pytest.raises(ValueError):
        InversionConfig(pade_order=10, jmax=8).resolved(3)


def test_regularized_fit_still_converges():
    truth = params((4.0, 1, 0.3), (0.25, 1, 0.0))
    cfg = InversionConfig(regularization=1e-3)
    result = fit_normal_parameters(photon_distribution(truth, nmax=60), 1, cfg)
    assert result.converged
    assert result.params.allclose(truth, rtol=1e-6, atol=1e-6)


def test_same_distribution_passive_rotation():
    rng = np.random.default_rng(3)
    state = make_squeezed_thermal([1.5, 2.0], [0.3, 0.1], [0.5, -0.2, 1.0, 0.0])
    rotated = apply_symplectic(state, random_passive(2, rng))
    assert same_distribution(state, rotated)


def test_same_distribution_differs():
    a = make_squeezed_thermal([1.5], [0.3])
    b = make_squeezed_thermal([1.5], [0.31])
    assert not same_distribution(a, b)
    assert not same_distribution(a, make_squeezed_thermal([1.5, 1.0], [0.3, 0.0]))


def test_same_distribution_thermal_vs_coherent_same_mean():
    # both have mean photon number 1 but spectra (3, 3) and (1, 1)
    thermal = make_squeezed_thermal([3.0], [0.0])
    coherent = GaussianState(np.eye(2), np.array([math.sqrt(2), 0.0]))
    assert photon_distribution(normal_parameters(thermal)).mean() == pytest.approx(1.0, rel=1e-9)
    assert photon_distribution(normal_parameters(coherent)).mean() == pytest.approx(1.0, rel=1e-9)
    assert not same_distribution(thermal, coherent)


def test_same_distribution_is_equivalence():
    rng = np.random.default_rng(11)
    a = make_squeezed_thermal([1.2, 1.0], [0.4, 0.2], [0.3, 0.1, 0.0, 0.7])
    b = apply_symplectic(a, random_passive(2, rng))
    c = apply_symplectic(b, random_passive(2, rng))
    assert same_distribution(a, a)
    assert same_distribution(a, b) and same_distribution(b, a)
    assert same_distribution(b, c) and same_distribution(a, c)


def test_same_distribution_counterexample_vs_diagonal():
    # same temperature and squeezing, different photon statistics
    cx = counterexample_state(0.5, math.cosh(0.6), math.sinh(0.6))
    r = cx.squeezing
    diag = make_squeezed_thermal(list(cx.temperatures), [r, r])
    assert not same_distribution(cx.state, diag)
    assert not same_distribution(cx.state, GaussianState(np.diag(cx.os_diagonal_spectrum)))
