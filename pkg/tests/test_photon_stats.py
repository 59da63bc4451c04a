import math

import numpy as np
import pytest

from gaussian_pnr.decompositions import DomainError, NormalParameters, normal_parameters
from gaussian_pnr.gaussian_core import apply_symplectic, random_passive
from gaussian_pnr.photon_stats import (
    MomentVector,
    PhotonDistribution,
    TruncationError,
    antinormal_moments_from_distribution,
    antinormal_moments_from_params,
    g_closed,
    g_series,
    moment_convert,
    ordinary_moments,
    pgf_series,
    photon_distribution,
    sample_counts,
)
from gaussian_pnr.random import random_normal_parameters, random_physical_state

VACUUM = NormalParameters.from_triples([(1.0, 2, 0.0)])


def thermal(nu, modes=1):
    return NormalParameters.from_triples([(nu, 2 * modes, 0.0)])


def coherent(d):
    return NormalParameters.from_triples([(1.0, 2, d)])


def squeezed_vacuum(r):
    return NormalParameters.from_triples([(math.exp(2 * r), 1, 0.0), (math.exp(-2 * r), 1, 0.0)])


def poisson(mu, n):
    return np.array([math.exp(-mu) * mu**k / math.factorial(k) for k in range(n + 1)])


# --- G(z) -----------------------------------------------------------------------------


def test_g_closed_is_one_at_zero():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert g_closed(random_normal_parameters(rng), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_g_closed_vacuum_at_one():
    assert g_closed(VACUUM, 1.0) == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("nu", [1.0, 3.0, 7.5])
@pytest.mark.parametrize("z", [-0.2, 0.3, 2.0])
def test_g_closed_thermal(nu, z):
    if z <= -2 / (nu + 1):
        pytest.skip("outside the domain")
    assert g_closed(thermal(nu), z) == pytest.approx(1 / (1 + z * (nu + 1) / 2), rel=1e-12)


def test_g_closed_rejects_pole():
    with pytest.raises(DomainError):
        g_closed(thermal(3.0), -0.5)


def test_g_series_matches_closed_form_inside_radius():
    params = NormalParameters.from_triples([(3.0, 1, 0.7), (0.5, 1, 0.2)])
    series = g_series(params, 60)
    # nearest pole at -2/(3+1) = -0.5
    for z in (-0.1, 0.05, 0.1):
        assert series(z) == pytest.approx(g_closed(params, z), rel=1e-12)


# --- probabilities ---------------------------------------------------------------------


def test_pgf_vacuum():
    np.testing.assert_array_equal(pgf_series(VACUUM, 5).coeffs, [1, 0, 0, 0, 0, 0])


def test_thermal_nu3_is_geometric():
    dist = photon_distribution(thermal(3.0), nmax=30)
    np.testing.assert_allclose(dist.probs, 0.5 ** (np.arange(31) + 1), atol=1e-15)


@pytest.mark.parametrize("d", [0.3, 1.0, 2.5])
def test_coherent_is_poisson(d):
    dist = photon_distribution(coherent(d), nmax=30)
    np.testing.assert_allclose(dist.probs, poisson(d * d / 2, 30), atol=1e-14)


@pytest.mark.parametrize("r", [0.2, 0.8, 1.5])
def test_squeezed_vacuum_closed_form(r):
    dist = photon_distribution(squeezed_vacuum(r), nmax=30)
    t = math.tanh(r)
    for n in range(31):
        if n % 2:
            assert abs(dist.probs[n]) <= 1e-15
        else:
            m = n // 2
            exact = math.factorial(2 * m) / (2**m * math.factorial(m)) ** 2 * t ** (2 * m) / math.cosh(r)
            assert dist.probs[n] == pytest.approx(exact, abs=1e-14)


def test_vacuum_distribution_is_point_mass():
    dist = photon_distribution(VACUUM)
    np.testing.assert_array_equal(dist.probs, [1.0])
    assert dist.tail_bound == 0.0


def test_normalization_and_tail_bound():
    rng = np.random.default_rng(1)
    for _ in range(50):
        dist = photon_distribution(random_normal_parameters(rng))
        assert math.fsum(dist.probs) + dist.tail_bound == pytest.approx(1.0, abs=1e-12)
        assert dist.tail_bound <= 1e-12
        assert dist.probs.min() >= -1e-14


def test_nmax_is_smallest_meeting_tail_target():
    dist = photon_distribution(thermal(3.0), tail_eps=1e-6)
    # tail after n is 2^-(n+1)
    assert dist.nmax == 19


def test_truncation_error_when_cap_too_small():
    with pytest.raises(TruncationError):
        photon_distribution(thermal(50.0), nmax_cap=16)


def test_invalid_params_rejected():
    with pytest.raises(DomainError):
        photon_distribution(NormalParameters.from_triples([(0.5, 2, 0.0)]))


def test_pgf_consistency_with_g_closed():
    rng = np.random.default_rng(2)
    for _ in range(30):
        params = random_normal_parameters(rng)
        dist = photon_distribution(params)
        for w in (0.1, 0.5):
            z = 1 / w - 1
            horner = np.polyval(dist.probs[::-1], w)
            assert horner == pytest.approx((1 + z) ** params.modes * g_closed(params, z), abs=1e-10)


def test_passive_invariance_of_distribution():
    rng = np.random.default_rng(3)
    for _ in range(20):
        modes = int(rng.integers(1, 4))
        state = random_physical_state(modes, rng)
        rotated = apply_symplectic(state, random_passive(modes, rng))
        a = photon_distribution(normal_parameters(state), nmax=40).probs
        b = photon_distribution(normal_parameters(rotated), nmax=40).probs
        np.testing.assert_allclose(a, b, atol=1e-11)


def test_distribution_serialization():
    dist = photon_distribution(thermal(3.0), nmax=3)
    back = PhotonDistribution.from_dict(dist.to_dict())
    np.testing.assert_array_equal(back.probs, dist.probs)
    assert back.tail_bound == dist.tail_bound
    lines = dist.to_csv().splitlines()
    assert lines[0] == "n,p_n" and lines[1] == "0,0.5" and len(lines) == 5


def test_serialization_clamps_negative_dust():
    dist = PhotonDistribution([1.0, -1e-17])
    assert dist.probs[1] < 0
    assert dist.to_dict()["probs"][1] == 0.0


# --- moments --------------------------------------------------------------------------------


def test_antinormal_moment_zero_is_one():
    rng = np.random.default_rng(4)
    for _ in range(10):
        assert antinormal_moments_from_params(random_normal_parameters(rng), 4)[0] == pytest.approx(1.0)


def test_antinormal_vacuum_first_moment():
    assert antinormal_moments_from_params(VACUUM, 1)[1] == pytest.approx(1.0)


@pytest.mark.parametrize("nu", [1.0, 3.0, 5.0])
def test_antinormal_thermal_moments(nu):
    m = antinormal_moments_from_params(thermal(nu), 6)
    expected = [math.factorial(j) * ((nu + 1) / 2) ** j for j in range(7)]
    np.testing.assert_allclose(m.values, expected, rtol=1e-12)


def test_antinormal_from_distribution_vacuum():
    m = antinormal_moments_from_distribution(photon_distribution(VACUUM), 1, 2)
    np.testing.assert_allclose(m.values, [1.0, 1.0, 2.0])


def test_antinormal_from_distribution_matches_params_for_thermal():
    # rising factorials of order 10 weight the tail heavily, so keep far more than the default nmax
    dist = photon_distribution(thermal(3.0), nmax=400)
    a = antinormal_moments_from_distribution(dist, 1, 10).values
    b = antinormal_moments_from_params(thermal(3.0), 10).values
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_antinormal_from_distribution_warns_on_heavy_tail():
    dist = photon_distribution(thermal(3.0), nmax=5)
    assert antinormal_moments_from_distribution(dist, 1, 3).warnings


def test_ordinary_moments_examples():
    np.testing.assert_array_equal(ordinary_moments(photon_distribution(VACUUM), 3).values, [1, 0, 0, 0])
    m = ordinary_moments(photon_distribution(thermal(3.0), tail_eps=1e-16), 1)
    assert m[1] == pytest.approx(1.0, rel=1e-12)
    mu = 2.0
    m = ordinary_moments(photon_distribution(coherent(2.0), tail_eps=1e-16), 2)
    assert m[1] == pytest.approx(mu, rel=1e-12) and m[2] == pytest.approx(mu * mu + mu, rel=1e-12)


def test_moment_convert_first_order_single_mode():
    ordinary = MomentVector("ordinary", [1.0, 2.5], 1)
    assert moment_convert(ordinary, "antinormal")[1] == pytest.approx(3.5)
    assert moment_convert(ordinary, "ordinary") is ordinary


def test_moment_convert_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(20):
        params = random_normal_parameters(rng)
        m = antinormal_moments_from_params(params, 8)
        back = moment_convert(moment_convert(m, "ordinary"), "antinormal")
        np.testing.assert_allclose(back.values, m.values, rtol=1e-10)


def test_moment_convert_is_exact_on_integers():
    # thermal nu=3, S=1: <n^j> of a geometric law with p = 1/2
    ordinary = MomentVector("ordinary", [1, 1, 3, 13, 75], 1)
    np.testing.assert_array_equal(moment_convert(ordinary, "antinormal").values, [1, 2, 8, 48, 384])


def test_moment_chain_distribution_vs_params():
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 20:
        params = random_normal_parameters(rng)
        if photon_distribution(params).mean() > 10:
            continue
        checked += 1
        # n^8 weights the tail, so the distribution runs far past the default nmax
        dist = photon_distribution(params, nmax=1500)
        a = ordinary_moments(dist, 8, params.modes).values
        b = moment_convert(antinormal_moments_from_params(params, 8), "ordinary").values
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


def test_moment_vector_rejects_unknown_ordering():
    with pytest.raises(ValueError):
        MomentVector("normal", [1.0], 1)


# --- sampling ---------------------------------------------------------------------------------


def test_sampling_point_mass():
    assert not sample_counts(photon_distribution(VACUUM), 100, seed=0).any()


def test_sampling_thermal_mean():
    counts = sample_counts(photon_distribution(thermal(3.0)), 1_000_000, seed=1)
    # geometric with mean 1 has variance 2
    assert abs(counts.mean() - 1.0) <= 5 * math.sqrt(2 / counts.size)


def test_sampling_is_deterministic():
    dist = photon_distribution(thermal(3.0))
    np.testing.assert_array_equal(sample_counts(dist, 500, seed=7), sample_counts(dist, 500, seed=7))


def test_sampling_tail_sentinel():
    dist = photon_distribution(thermal(3.0), nmax=0)
    counts = sample_counts(dist, 10_000, seed=2)
    assert set(np.unique(counts)) == {0, 1}
