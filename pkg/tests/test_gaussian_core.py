import numpy as np
import pytest

from gaussian_pnr.gaussian_core import (
    GaussianState,
    NotSymplecticError,
    UnphysicalStateError,
    apply_symplectic,
    is_symplectic,
    make_squeezed_thermal,
    random_passive,
    random_symplectic,
    symmetrize,
    symplectic_eigenvalues,
    symplectic_form,
    vacuum,
    validate_state,
)


def test_symplectic_form_one_mode():
    np.testing.assert_array_equal(symplectic_form(1), [[0, 1], [-1, 0]])


def test_symplectic_form_two_modes_is_block_diagonal():
    j = symplectic_form(2)
    np.testing.assert_array_equal(j[:2, :2], [[0, 1], [-1, 0]])
    np.testing.assert_array_equal(j[2:, 2:], [[0, 1], [-1, 0]])
    assert not j[:2, 2:].any() and not j[2:, :2].any()


@pytest.mark.parametrize("modes", [1, 2, 3, 5])
def test_symplectic_form_squares_to_minus_identity(modes):
    j = symplectic_form(modes)
    np.testing.assert_array_equal(j @ j, -np.eye(2 * modes))
    np.testing.assert_array_equal(j.T, -j)


def test_symplectic_form_rejects_zero_modes():
    with pytest.raises(ValueError):
        symplectic_form(0)


def test_vacuum_is_physical():
    report = validate_state(np.eye(2), np.zeros(2))
    assert report.physical and report.symmetric and report.positive
    assert report.min_symplectic_eigenvalue == pytest.approx(1.0)


def test_uncertainty_violating_diagonal_is_unphysical():
    # first mode has q and p variances 1 and 1/2
    report = validate_state(np.diag([1.0, 0.5, 4.0, 2.0]), np.array([0.3, 0.0, 0.0, -1.0]))
    assert not report.physical
    assert report.positive
    assert report.min_symplectic_eigenvalue < 1


def test_scalar_half_covariance_is_unphysical():
    report = validate_state(0.5 * np.eye(2), np.zeros(2))
    assert not report.physical
    assert report.min_symplectic_eigenvalue == pytest.approx(0.5)


def test_validate_state_shape_mismatch():
    with pytest.raises(ValueError):
        validate_state(np.eye(2), np.zeros(3))
    with pytest.raises(ValueError):
        validate_state(np.eye(3))


def test_non_positive_covariance_reported():
    report = validate_state(np.diag([1.0, -1.0]))
    assert not report.positive and not report.physical
    assert report.messages


def test_symmetrize_tolerates_roundoff_and_rejects_asymmetry():
    cov = np.array([[2.0, 0.1 + 1e-13], [0.1, 1.0]])
    out = symmetrize(cov)
    np.testing.assert_allclose(out, out.T, atol=0)
    with pytest.raises(ValueError):
        symmetrize(np.array([[2.0, 0.2], [0.1, 1.0]]))


def test_squeezed_thermal_vacuum():
    state = make_squeezed_thermal([1.0], [0.0])
    np.testing.assert_allclose(state.cov, np.eye(2))
    np.testing.assert_allclose(state.disp, np.zeros(2))


def test_squeezed_thermal_thermal_mode():
    state = make_squeezed_thermal([3.0], [0.0])
    np.testing.assert_allclose(state.cov, np.diag([3.0, 3.0]))
    # nu = 2 <n> + 1
    assert (symplectic_eigenvalues(state.cov)[0] - 1) / 2 == pytest.approx(1.0)


def test_squeezed_thermal_pure_squeezer():
    state = make_squeezed_thermal([1.0], [1.0])
    np.testing.assert_allclose(state.cov, np.diag([np.e**2, np.e**-2]))
    assert np.linalg.det(state.cov) == pytest.approx(1.0)


def test_squeezed_thermal_rejects_nu_below_one():
    with pytest.raises(UnphysicalStateError):
        make_squeezed_thermal([0.5], [0.0])


def test_squeezed_thermal_states_validate():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = int(rng.integers(1, 4))
        state = make_squeezed_thermal(rng.uniform(1, 5, s), rng.uniform(-1.5, 1.5, s), rng.normal(size=2 * s))
        assert state.validate().physical


def test_apply_identity():
    state = make_squeezed_thermal([2.0, 1.0], [0.3, 0.0], [1.0, 0.0, 0.0, 2.0])
    out = apply_symplectic(state, np.eye(4))
    np.testing.assert_allclose(out.cov, state.cov)
    np.testing.assert_allclose(out.disp, state.disp)


def test_passive_transformation_leaves_thermal_unchanged():
    o = random_passive(3, np.random.default_rng(0))
    thermal = GaussianState(2.5 * np.eye(6))
    np.testing.assert_allclose(apply_symplectic(thermal, o).cov, 2.5 * np.eye(6), atol=1e-12)


def test_single_mode_squeezer_on_vacuum():
    r = 0.7
    out = apply_symplectic(vacuum(1), np.diag([np.exp(r), np.exp(-r)]))
    np.testing.assert_allclose(out.cov, np.diag([np.exp(2 * r), np.exp(-2 * r)]))


def test_apply_rejects_non_symplectic():
    with pytest.raises(NotSymplecticError):
        apply_symplectic(vacuum(1), np.diag([2.0, 2.0]))


def test_random_symplectic_preserves_form():
    rng = np.random.default_rng(11)
    for modes in (1, 2, 3):
        for _ in range(10):
            a = random_symplectic(modes, rng, 0.5)
            j = symplectic_form(modes)
            assert np.max(np.abs(a.T @ j @ a - j)) <= 1e-10 * max(1.0, np.linalg.norm(a) ** 2)
            assert is_symplectic(a)


def test_random_passive_is_orthogonal_symplectic():
    rng = np.random.default_rng(5)
    for modes in (1, 2, 4):
        o = random_passive(modes, rng)
        np.testing.assert_allclose(o.T @ o, np.eye(2 * modes), atol=1e-12)
        assert is_symplectic(o)


def test_symplectic_conjugation_preserves_determinant_and_physicality():
    rng = np.random.default_rng(7)
    for _ in range(20):
        state = make_squeezed_thermal(rng.uniform(1, 3, 2), rng.uniform(0, 1, 2), rng.normal(size=4))
        a = random_symplectic(2, rng, 0.3)
        out = apply_symplectic(state, a)
        assert np.linalg.det(out.cov) == pytest.approx(np.linalg.det(state.cov), rel=1e-9)
        assert out.validate().physical
        np.testing.assert_allclose(symplectic_eigenvalues(out.cov), symplectic_eigenvalues(state.cov), rtol=1e-9)


def test_state_json_round_trip():
    state = make_squeezed_thermal([2.0], [0.4], [0.5, -0.25])
    data = state.to_dict()
    assert data["modes"] == 1
    back = GaussianState.from_dict(data)
    np.testing.assert_array_equal(back.cov, state.cov)
    np.testing.assert_array_equal(back.disp, state.disp)


def test_state_json_rejects_wrong_mode_count():
    with pytest.raises(ValueError):
        GaussianState.from_dict({"modes": 2, "cov": [[1, 0], [0, 1]]})


def test_state_is_immutable():
    state = vacuum(1)
    with pytest.raises(ValueError):
        state.cov[0, 0] = 2.0
