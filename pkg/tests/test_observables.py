import json
import math

import numpy as np
import pytest
from scipy import stats

from lorentzcv.errors import GridError, SpectrumError
from lorentzcv.grid import make_grid
from lorentzcv.observables import (
    AngularSpectrum,
    MomentReport,
    angular_spectrum,
    energy_fit,
    l_moments,
    make_rng,
    mean_energy,
    sample_l,
)
from lorentzcv.states import StateParams, make_lambda_state, regularized_eigenstate, superpose_lambda, vacuum
from lorentzcv.transforms import LossParams, loss_channel_exact

# |c_m|^2 of exp(i arctan(q1/q2)) around a circle, from 1-D adaptive quadrature
ODD_ARCTAN_ORACLE = {
    -4: 0.016211389382774024,
    -3: 0.0,
    -2: 0.04503163717437232,
    -1: 0.0,
    0: 0.40528473456935116,
    1: 0.0,
    2: 0.40528473456935116,
    3: 0.0,
    4: 0.04503163717437232,
    6: 0.016211389382774024,
}

# <q1^2 + q2^2 - d1^2 - d2^2>, from 1-D radial quadrature: (lam, a) -> value
ENERGY_ORACLE = {(0, 1.0): 4.0, (3, 1.0): 8.5, (0, 0.5): 6.5, (2, 2.0): 7.5}


def test_spectrum_type_validation():
    with pytest.raises(ValueError):
        AngularSpectrum([0, 1], [1.0], 0.0)
    with pytest.raises(ValueError):
        AngularSpectrum([0, 1], [1.2, -0.2], 0.0)
    s = AngularSpectrum([-1, 0, 1], [0.25, 0.5, 0.25], 0.0)
    assert s.mean == 0 and s.second == 0.5
    assert s.probability(1) == 0.25 and s.probability(7) == 0.0
    t = AngularSpectrum([0, 1, 2], [0.5, 0.25, 0.25], 0.0)
    assert s.max_difference(t) == 0.25


def test_spectrum_csv(tmp_path):
    s = AngularSpectrum([2], [1.0], 0.0)
    s.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines() == ["m,probability", "2,1.0"]


@pytest.mark.parametrize("branch", ["paper-arctan", "polar"])
def test_lambda0_single_bin(eigen, branch):
    s = angular_spectrum(eigen(0, 1.0, branch))
    assert abs(s.probability(0) - 1) < 1e-4
    assert abs(s.probabilities.sum() + s.residual - 1) < 1e-6


@pytest.mark.parametrize("branch", ["paper-arctan", "polar"])
@pytest.mark.parametrize("method", ["analytic", "bicubic"])
def test_lambda2_single_bin(eigen, branch, method):
    s = angular_spectrum(eigen(2, 1.0, branch), method=method)
    assert abs(s.probability(2) - 1) < 1e-3


def test_odd_arctan_state_matches_quadrature(eigen):
    s = angular_spectrum(eigen(1, 1.0, "paper-arctan"))
    assert abs(s.mean - 1) < 1e-2
    for m, p in ODD_ARCTAN_ORACLE.items():
        assert abs(s.probability(m) - p) < 1e-3, m


def test_bicubic_matches_analytic_polar(eigen):
    psi = eigen(3)
    a = angular_spectrum(psi, method="analytic")
    b = angular_spectrum(psi, method="bicubic")
    assert a.max_difference(b) < 1e-5


def test_window_too_small_raises(grid512):
    # m = 8 lands in the bin half a period away from the window centre
    f = make_lambda_state([0.0, 8.0], [math.sqrt(0.7), math.sqrt(0.3)])
    psi = superpose_lambda(f, 1.0, grid512, "polar")
    with pytest.raises(SpectrumError):
        angular_spectrum(psi, n_angles=16)
    s = angular_spectrum(psi, n_angles=16, max_residual=None)
    assert abs(s.residual - 0.3) < 1e-3


def test_spectrum_rejects_single_mode(grid256):
    with pytest.raises(GridError):
        angular_spectrum(vacuum(grid256))


def test_three_mode_spectrum_traces_ancilla():
    g = make_grid(128, 8.0)
    psi = regularized_eigenstate(StateParams(2, 1.0, "polar"), g)
    out = loss_channel_exact(psi, LossParams(0.2))
    s = angular_spectrum(out)
    assert abs(s.mean - 2 * math.sqrt(1 - 0.04)) < 1e-4


@pytest.mark.parametrize("lam", [0, 2, 3])
def test_moments_both_methods(eigen, lam):
    op, ang = l_moments(eigen(lam))
    assert abs(op.mean - lam) < 1e-6 and abs(ang.mean - lam) < 1e-6
    assert abs(op.second - ang.second) < 1e-2
    assert op.gap == ang.gap
    assert op.method == "operator-grid" and ang.method == "angular-spectrum"


def test_moment_report(tmp_path):
    with pytest.raises(ValueError):
        MomentReport(2.0, 3.0, "operator-grid")
    r = MomentReport(1.0, 2.0, "angular-spectrum", {"mean": 0.0})
    assert r.delta == 1.0
    r.to_json(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert list(d) == ["mean", "second", "delta", "method", "gap", "residual"]


@pytest.mark.parametrize("lam, a", sorted(ENERGY_ORACLE))
def test_mean_energy(eigen, lam, a):
    rep = mean_energy(eigen(lam, a))
    assert abs(rep.energy - ENERGY_ORACLE[(lam, a)]) < 1e-6
    assert abs(rep.radial_second_moment - 3 / a) < 1e-6


def test_energy_positive_and_scaled(eigen):
    rep = mean_energy(eigen(0), omega=2.0)
    assert rep.energy == pytest.approx(8.0, abs=1e-6)


def test_energy_fit_separates_orders():
    a = np.array([0.25, 0.5, 1.0, 2.0])
    fit = energy_fit(a, 3 / a + a + 0.5)
    assert fit["leading_coefficient"] == pytest.approx(3.0)
    assert fit["constant"] == pytest.approx(0.5)
    assert fit["naive_slope"] < 2.9


def test_rng_is_counter_based():
    a = make_rng(7).random(5)
    assert np.array_equal(a, make_rng(7).random(5))
    assert not np.array_equal(a, make_rng(8).random(5))


def test_sampling_single_outcome(eigen):
    assert set(sample_l(eigen(2), 2000, seed=3)) == {2}


def test_sampling_determinism_and_errors(eigen):
    s = angular_spectrum(eigen(1, 1.0, "paper-arctan"))
    assert np.array_equal(sample_l(s, 1000, 5), sample_l(s, 1000, 5))
    with pytest.raises(ValueError):
        sample_l(s, 0, 1)


def test_sampling_mean_clt(eigen):
    s = angular_spectrum(eigen(3, 1.0, "paper-arctan"))
    x = sample_l(s, 100_000, 11)
    delta = math.sqrt(s.second - s.mean**2)
    assert abs(x.mean() - 3) < 3 * delta / math.sqrt(x.size)


def test_sampling_dkw_bound(eigen):
    s = angular_spectrum(eigen(1, 1.0, "paper-arctan"))
    n = 100_000
    x = np.sort(sample_l(s, n, 2))
    cdf = np.cumsum(s.probabilities) / s.probabilities.sum()
    emp = np.searchsorted(x, s.m_values, side="right") / n
    eps = math.sqrt(math.log(2 / 0.01) / (2 * n))
    assert np.max(np.abs(emp - cdf)) < eps
