import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorentzcv.errors import GridError
from lorentzcv.grid import coordinate_rotation, inner_product, make_grid
from lorentzcv.observables import angular_spectrum, l_moments
from lorentzcv.operators import angular_momentum, expectation, number_std, position, momentum_std
from lorentzcv.states import (
    StateParams,
    angular_factor,
    coherent_state,
    default_extent,
    eigenfunction,
    gaussian_lambda_state,
    ideal_phase,
    lambda_correlation,
    load_lambda_state,
    make_lambda_state,
    regularized_eigenstate,
    save_lambda_state,
    superpose_lambda,
    vacuum,
)


def test_params_validation():
    with pytest.raises(ValueError):
        StateParams(1.0, 0.0)
    with pytest.raises(ValueError):
        StateParams(1.0, -1 + 1j)
    with pytest.raises(ValueError):
        StateParams(1.0, 1.0, "cartesian")
    with pytest.raises(ValueError):
        StateParams(float("nan"))
    StateParams(1.0, 1 + 2j)


@pytest.mark.parametrize("lam, q1, q2, expected", [
    (0, 1.0, 1.0, 2.0),
    (2, 1.0, 0.0, -1.0),  # arctan(+inf) = pi/2
    (1, 1.0, 1.0, 2 * np.exp(1j * np.pi / 4)),
])
def test_ideal_phase_values(lam, q1, q2, expected):
    assert abs(ideal_phase(lam, q1, q2) - expected) < 1e-12


def test_ideal_phase_origin_error():
    with pytest.raises(ValueError):
        ideal_phase(1, 0.0, 0.0)


@given(st.integers(-4, 4), st.floats(-5, 5), st.floats(-5, 5))
def test_even_lambda_antipodal_symmetry(half, q1, q2):
    if q1 == 0 and q2 == 0:
        return
    lam = 2 * half
    for branch in ("paper-arctan", "polar"):
        assert abs(ideal_phase(lam, q1, q2, branch) - ideal_phase(lam, -q1, -q2, branch)) < 1e-9 * (1 + q1 * q1 + q2 * q2)


def test_branches_agree_for_even_lambda():
    q1, q2 = np.meshgrid(np.linspace(-3, 3, 31), np.linspace(-3, 3, 31))
    assert np.allclose(angular_factor(4, q1, q2, "paper-arctan"), angular_factor(4, q1, q2, "polar"))


def test_midpoint_cut_convention():
    # on the paper-arctan cut the midpoint of exp(+-i pi/2 lam) is cos(pi lam / 2)
    v = angular_factor(1, np.array([1.0]), np.array([0.0]), "paper-arctan", cut="midpoint")
    assert abs(v[0]) < 1e-15
    v = angular_factor(1, np.array([1.0]), np.array([0.0]), "paper-arctan", cut="limit")
    assert abs(v[0] - 1j) < 1e-15


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0, 2.0])
def test_radial_second_moment(a):
    # Gaussian-moment oracle: int r^7 e^{-a r^2} dr / int r^5 e^{-a r^2} dr = 3/a
    psi = regularized_eigenstate(StateParams(0, a, "polar"), make_grid(512, default_extent(a)))
    q1, q2 = psi.coordinates()
    r2 = float(np.sum(np.abs(psi.amplitudes) ** 2 * (q1**2 + q2**2)) * psi.volume_element)
    assert abs(r2 - 3 / a) / (3 / a) < 5e-3


def test_continuum_normalization_constant(grid512):
    f = eigenfunction(StateParams(3, 1.0))
    amps = f(grid512.points[:, None], grid512.points[None, :])
    assert abs(np.sum(np.abs(amps) ** 2) * grid512.spacing**2 - 1) < 1e-3


def test_eigenstate_rejects_small_grid():
    with pytest.raises(GridError):
        regularized_eigenstate(StateParams(1, 0.5), make_grid(256, 8.0))
    with pytest.raises(GridError):
        regularized_eigenstate(StateParams(1, 1.0), make_grid(8, 8.0))


@pytest.mark.parametrize("lam", [0, 1, 2, 3, 5])
@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_operator_eigenvalue_polar(eigen, lam, a):
    psi = eigen(lam, a, "polar")
    assert abs(expectation(psi, angular_momentum()).real - lam) < 1e-2


@pytest.mark.parametrize("lam", [0, 2])
def test_operator_eigenvalue_arctan_even(eigen, lam):
    psi = eigen(lam, 1.0, "paper-arctan")
    assert abs(expectation(psi, angular_momentum()).real - lam) < 1e-2


def test_operator_gap_reported_for_odd_arctan_branch(eigen):
    op, ang = l_moments(eigen(3, 1.0, "paper-arctan"))
    assert abs(ang.mean - 3) < 1e-6
    assert op.gap["mean"] == pytest.approx(op.mean - ang.mean)
    assert op.gap["mean"] != 0


def test_lambda0_has_no_angular_momentum(eigen):
    assert abs(expectation(eigen(0), angular_momentum())) < 1e-6


@pytest.mark.parametrize("lam, other", [(1, 2), (2, 3), (0, 4), (3, 5)])
def test_orthogonality(eigen, lam, other):
    assert abs(inner_product(eigen(lam), eigen(other))) < 1e-3


@pytest.mark.parametrize("lam", [1, 3])
def test_density_rotational_symmetry(lam):
    psi = regularized_eigenstate(StateParams(lam, 1.0, "polar"), make_grid(256, 8.0))
    r = coordinate_rotation(psi, 0, 1, 0.61)
    assert np.max(np.abs(np.abs(r.amplitudes) ** 2 - np.abs(psi.amplitudes) ** 2)) < 1e-5


def test_coherent_state_moments(grid256):
    psi = coherent_state(2.0, grid256)
    assert abs(expectation(psi, number_std(0)).real - 4) < 1e-4
    assert abs(expectation(psi, position(0)).real - 2 * math.sqrt(2)) < 1e-4
    psi = coherent_state(0.5j, grid256)
    assert abs(expectation(psi, momentum_std(0)).real - math.sqrt(2) * 0.5) < 1e-4
    vac = coherent_state(0, grid256)
    assert abs(expectation(vac, number_std(0))) < 1e-6
    assert abs(expectation(vac, position(0))) < 1e-6


def test_coherent_state_rejects_large_alpha(grid256):
    with pytest.raises(GridError):
        coherent_state(2.5, grid256)


def test_vacuum_is_normalized(grid256):
    assert vacuum((grid256,) * 3).normalized


def test_uniform_lambda_state():
    s = make_lambda_state([-1, 0, 1], [1, 1, 1])
    assert np.allclose(s.probabilities, 1 / 3)
    with pytest.raises(ValueError):
        make_lambda_state([0, 1], [0, 0])
    with pytest.raises(ValueError):
        make_lambda_state([0, 1, 3], [1, 1, 1])
    with pytest.raises(ValueError):
        make_lambda_state([0, 1], [1, 1], "bell")
    with pytest.raises(ValueError):
        make_lambda_state([0, 1], [1, 1], "bell", zeta=float("inf"))


def test_bell_zero_shift_matches_entangled():
    f = gaussian_lambda_state(0.0, 1.0, structure="entangled")
    b = gaussian_lambda_state(0.0, 1.0, structure="bell", zeta=0.0)
    assert np.array_equal(f.weights, b.weights)
    assert np.array_equal(f.pair_eigenvalues(), b.pair_eigenvalues())


@pytest.mark.parametrize("width", [0.5, 1.0, 2.0])
def test_entangled_correlation_equals_variance(width):
    s = gaussian_lambda_state(1.0, width, structure="entangled")
    p = s.probabilities
    var = float(np.sum(p * s.nodes**2) - np.sum(p * s.nodes) ** 2)
    assert abs(lambda_correlation(s) - var) < 1e-6
    assert abs(var - width**2) < 1e-3


def test_lambda_state_file_roundtrip(tmp_path):
    s = gaussian_lambda_state(2.0, 0.5, structure="bell", zeta=0.25)
    save_lambda_state(s, tmp_path / "f.csv")
    text = (tmp_path / "f.csv").read_text()
    assert text.startswith("# structure=bell zeta=0.25\n")
    back = load_lambda_state(tmp_path / "f.csv")
    assert back.structure == "bell" and back.zeta == 0.25
    assert np.array_equal(back.nodes, s.nodes) and np.array_equal(back.weights, s.weights)


def test_superpose_single_node(grid512, eigen):
    s = make_lambda_state([3.0], [1.0])
    psi = superpose_lambda(s, 1.0, grid512, "polar")
    assert np.max(np.abs(psi.amplitudes - eigen(3).amplitudes)) < 1e-12


def test_superpose_gaussian_mean(grid512):
    s = gaussian_lambda_state(3.0, 0.5)
    psi = superpose_lambda(s, 1.0, grid512, "polar")
    assert abs(angular_spectrum(psi).mean - 3) < 0.05


def test_superpose_symmetric_weights(grid512):
    s = gaussian_lambda_state(0.0, 1.0)
    psi = superpose_lambda(s, 1.0, grid512, "polar")
    assert abs(angular_spectrum(psi).mean) < 1e-3


def test_superpose_rejects_structures(grid512):
    with pytest.raises(ValueError):
        superpose_lambda(gaussian_lambda_state(0.0, 1.0, structure="four-mode"), 1.0, grid512)
