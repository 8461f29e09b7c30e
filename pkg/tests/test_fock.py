import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorentzcv.errors import TruncationError
from lorentzcv.fock import (
    FockState,
    fock_expect,
    fock_expect_l,
    fock_rotation,
    fock_to_grid,
    grid_to_fock,
    hermite_functions,
    save_coefficients_csv,
)
from lorentzcv.grid import make_grid
from lorentzcv.operators import angular_momentum, expectation, number_quadrature
from lorentzcv.states import StateParams, coherent_state, regularized_eigenstate, vacuum


def test_hermite_orthonormal_to_64():
    g = make_grid(512, 16.0)
    h = hermite_functions(64, g.points)
    gram = h @ h.T * g.spacing
    assert np.max(np.abs(gram - np.eye(65))) < 1e-8


def test_hermite_low_orders_closed_form():
    q = np.linspace(-3, 3, 13)
    h = hermite_functions(2, q)
    g0 = np.pi**-0.25 * np.exp(-q * q / 2)
    assert np.allclose(h[0], g0)
    assert np.allclose(h[1], math.sqrt(2) * q * g0)
    assert np.allclose(h[2], (2 * q * q - 1) / math.sqrt(2) * g0)


def test_fock_state_validation():
    with pytest.raises(ValueError):
        FockState(np.ones((3, 3)))
    with pytest.raises(ValueError):
        FockState(np.ones((3, 4)) / math.sqrt(12))
    s = FockState(np.eye(3)[0].reshape(3))
    assert s.cutoff == 2 and s.modes == 1


def test_vacuum_projection(grid256):
    s = grid_to_fock(vacuum((grid256, grid256)), cutoff=16)
    expected = np.zeros((17, 17))
    expected[0, 0] = 1
    assert np.max(np.abs(s.coefficients - expected)) < 1e-6


def test_lambda0_decomposition(grid256):
    # r^2 e^{-r^2/2} / sqrt(2 pi) = h0 h0 / sqrt2 + (h2 h0 + h0 h2) / 2
    psi = regularized_eigenstate(StateParams(0, 1.0, "polar"), grid256)
    c = grid_to_fock(psi, cutoff=16).coefficients
    expected = np.zeros_like(c)
    expected[0, 0] = 1 / math.sqrt(2)
    expected[2, 0] = expected[0, 2] = 0.5
    assert np.max(np.abs(c - expected)) < 1e-4


def test_coherent_expansion(grid256):
    c = grid_to_fock(coherent_state(1.0, grid256), cutoff=24).coefficients
    n = np.arange(25)
    expected = np.array([math.exp(-0.5) / math.sqrt(math.factorial(k)) for k in n])
    assert np.max(np.abs(c - expected)) < 1e-4


def test_truncation_error():
    g = make_grid(256, 8.0)
    with pytest.raises(TruncationError) as info:
        grid_to_fock(coherent_state(1.8, g), cutoff=8)
    assert info.value.weight >= 1e-4


def test_fock_l_values(grid512, eigen):
    assert fock_expect_l(grid_to_fock(vacuum((grid512, grid512)), cutoff=8)) == 0
    s = grid_to_fock(eigen(2, 1.0, "polar"))
    assert abs(fock_expect_l(s) - 2) < 1e-3
    with pytest.raises(ValueError):
        fock_expect_l(grid_to_fock(vacuum(grid512), cutoff=4))


def _random_fock(rng, cutoff=6):
    c = rng.normal(size=(cutoff + 1,) * 2) + 1j * rng.normal(size=(cutoff + 1,) * 2)
    return FockState(c / np.linalg.norm(c))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_backend_agreement(seed):
    g = make_grid(128, 8.0)
    s = _random_fock(np.random.default_rng(seed))
    psi = fock_to_grid(s, g)
    L = angular_momentum()
    for op in (L, L * L, number_quadrature(0) + number_quadrature(1)):
        assert abs(expectation(psi, op) - fock_expect(s, op)) < 1e-3
    assert abs(expectation(psi, L).real - fock_expect_l(s)) < 1e-4
    back = grid_to_fock(psi, cutoff=12)
    assert np.max(np.abs(fock_to_grid(back, g).amplitudes - psi.amplitudes)) < 1e-4


@pytest.mark.parametrize("phi", [2 * np.pi, 4 * np.pi, 0.0])
def test_rotation_full_turn_is_identity(phi):
    s = _random_fock(np.random.default_rng(1))
    assert np.array_equal(fock_rotation(s, phi).coefficients, s.coefficients)


def test_rotation_vacuum_and_unitarity():
    vac = FockState(np.eye(5)[0][:, None] * np.eye(5)[0][None, :])
    assert np.array_equal(fock_rotation(vac, 1.234).coefficients, vac.coefficients)
    s = _random_fock(np.random.default_rng(2))
    r = fock_rotation(s, 0.77, modes=[1])
    assert abs(np.sum(np.abs(r.coefficients) ** 2) - 1) < 1e-14
    with pytest.raises(ValueError):
        fock_rotation(s, 0.5, modes=[2])


@pytest.mark.parametrize("lam", [0, 1, 2, 3])
@pytest.mark.parametrize("phi", [np.pi / 7, np.pi / 3])
def test_equal_angle_rotation_keeps_l(eigen, lam, phi):
    s = grid_to_fock(eigen(lam, 1.0, "polar"))
    assert abs(fock_expect_l(fock_rotation(s, phi)) - fock_expect_l(s)) < 1e-10


def test_coefficient_dump(tmp_path):
    s = FockState(np.array([[1, 0], [0, 1j]]) / math.sqrt(2))
    save_coefficients_csv(s, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "n1,n2,re,im" and len(lines) == 5
    assert lines[4].startswith("1,1,0.0,0.7071")
