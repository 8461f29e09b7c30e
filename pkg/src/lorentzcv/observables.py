"""Measurement layer: the L outcome distribution, its moments by two
independent routes, the mean energy, and seeded sampling."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GridError, SpectrumError
from .grid import GridState, norm_squared
from .operators import angular_momentum, expectation, number_quadrature, position

N_ANGLES = 256
MAX_RESIDUAL = 1e-4


@dataclass
class AngularSpectrum:
    """P(m) over the integer window, plus the weight the window missed."""

    m_values: np.ndarray
    probabilities: np.ndarray
    residual: float

    def __post_init__(self):
        self.m_values = np.asarray(self.m_values, dtype=int)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.m_values.shape != self.probabilities.shape:
            raise ValueError("m values and probabilities differ in length")
        if np.any(self.probabilities < 0):
            raise ValueError("probabilities must be nonnegative")

    @property
    def mean(self) -> float:
        return float(np.sum(self.m_values * self.probabilities) / np.sum(self.probabilities))

    @property
    def second(self) -> float:
        return float(np.sum(self.m_values**2 * self.probabilities) / np.sum(self.probabilities))

    def probability(self, m: int) -> float:
        idx = np.searchsorted(self.m_values, m)
        if idx < self.m_values.size and self.m_values[idx] == m:
            return float(self.probabilities[idx])
        return 0.0

    def max_difference(self, other: "AngularSpectrum") -> float:
        """Largest per-bin |P - P'| over the union of both windows."""
        ms = np.union1d(self.m_values, other.m_values)
        return float(max(abs(self.probability(m) - other.probability(m)) for m in ms))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "probability"])
            for m, p in zip(self.m_values, self.probabilities):
                w.writerow([int(m), repr(float(p))])


def _ring_samples_bicubic(amps2d, grid, q1, q2):
    coeffs = [ndimage.spline_filter(part, order=3, mode="grid-constant")
              for part in (amps2d.real, amps2d.imag)]
    idx = [grid.index_of(q1), grid.index_of(q2)]
    re, im = (ndimage.map_coordinates(c, idx, order=3, mode="grid-constant", prefilter=False)
              for c in coeffs)
    return re + 1j * im


def angular_spectrum(psi: GridState, n_angles: int = N_ANGLES, max_residual=MAX_RESIDUAL,
                     method: str = "auto") -> AngularSpectrum:
    """Outcome distribution of L on modes 0 and 1.

    The state is sampled on rings of radius j*dq at ``n_angles`` equally
    spaced angles (q1 = r sin t, q2 = r cos t), each ring is Fourier
    transformed in t, and |c_m(r)|^2 is integrated over r.  Samples come
    from the closed form when the state carries one (``method="auto"``) and
    from bicubic interpolation otherwise.  A third mode is traced out by
    summing the slice spectra.  ``max_residual=None`` skips the window check.
    """
    if psi.modes not in (2, 3):
        raise GridError("angular spectrum needs a two-mode state (optionally plus an ancilla)")
    g = psi.grids[0]
    if psi.grids[1] != g:
        raise GridError("angular spectrum needs identical grids on modes 0 and 1")
    if method == "auto":
        method = "analytic" if (psi.analytic is not None and psi.modes == 2) else "bicubic"
    radii = g.spacing * np.arange(1, int(g.extent / g.spacing) - 1)
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    q1 = radii[:, None] * np.sin(theta)[None, :]
    q2 = radii[:, None] * np.cos(theta)[None, :]
    ring_weight = 2 * np.pi * radii * g.spacing

    # g(r) = 2 pi r |c_m(r)|^2 has slope 2 pi |c_m(0)|^2 at the origin, and
    # only m = 0 survives there; adding the Euler-Maclaurin endpoint term
    # keeps the radial trapezoid sum fourth-order accurate
    origin = np.array([[0.0]])

    def power(samples, centre_value):
        c = np.fft.fft(samples, axis=1) / n_angles
        out = np.sum(ring_weight[:, None] * np.abs(c) ** 2, axis=0)
        out[0] += np.pi * g.spacing**2 / 6 * abs(complex(np.ravel(centre_value)[0])) ** 2
        return out

    if method == "analytic":
        if psi.analytic is None:
            raise ValueError("state carries no closed form")
        raw = power(psi.analytic(q1, q2, cut="midpoint"), psi.analytic(origin, origin))
    elif method == "bicubic":
        if psi.modes == 2:
            raw = power(_ring_samples_bicubic(psi.amplitudes, g, q1, q2),
                        _ring_samples_bicubic(psi.amplitudes, g, origin, origin))
        else:
            d3 = psi.grids[2].spacing
            raw = np.zeros(n_angles)
            for k in range(psi.grids[2].n):
                sl = psi.amplitudes[:, :, k]
                raw += d3 * power(_ring_samples_bicubic(sl, g, q1, q2),
                                  _ring_samples_bicubic(sl, g, origin, origin))
    else:
        raise ValueError(f"unknown spectrum method {method!r}")

    # fft bin k holds every m = k mod n_angles; centre the window on the
    # circular mean so heavy tails alias symmetrically, and drop the
    # ambiguous bin half a period away
    k = np.arange(n_angles)
    centre = int(np.round(np.angle(np.sum(raw * np.exp(2j * np.pi * k / n_angles)))
                          * n_angles / (2 * np.pi)))
    half = n_angles // 2 - 1
    m_values = np.arange(centre - half, centre + half + 1)
    probs = raw[m_values % n_angles] / norm_squared(psi)
    residual = 1.0 - float(np.sum(probs))
    if max_residual is not None and abs(residual) > max_residual:
        raise SpectrumError(f"angular window misses {residual:.3g} of the probability")
    return AngularSpectrum(m_values, probs, residual)


@dataclass
class MomentReport:
    mean: float
    second: float
    method: str
    gap: dict = field(default_factory=dict)
    residual: float = 0.0

    def __post_init__(self):
        if self.second < self.mean**2 - 1e-9:
            raise ValueError("second moment below mean squared")

    @property
    def delta(self) -> float:
        return math.sqrt(max(self.second - self.mean**2, 0.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta"] = self.delta
        return {k: d[k] for k in ("mean", "second", "delta", "method", "gap", "residual")}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def l_moments(psi: GridState, spectrum: AngularSpectrum | None = None, max_residual=MAX_RESIDUAL):
    """<L> and <L^2> by operator application and from the angular spectrum.

    Returns ``(operator_report, spectrum_report)``; both carry the gap.
    """
    L = angular_momentum(0, 1)
    nrm = norm_squared(psi)
    m1 = expectation(psi, L).real / nrm
    m2 = expectation(psi, L * L).real / nrm
    spec = spectrum if spectrum is not None else angular_spectrum(psi, max_residual=max_residual)
    gap = {"mean": m1 - spec.mean, "second": m2 - spec.second}
    op = MomentReport(m1, max(m2, m1 * m1), "operator-grid", dict(gap))
    ang = MomentReport(spec.mean, spec.second, "angular-spectrum", dict(gap), spec.residual)
    return op, ang


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    radial_second_moment: float


def mean_energy(psi: GridState, omega: float = 1.0, modes=(0, 1)) -> EnergyReport:
    """omega * sum_i <q_i^2 - d^2/dq_i^2>, plus <q_1^2 + q_2^2> on its own."""
    nrm = norm_squared(psi)
    e = sum(expectation(psi, number_quadrature(m)).real for m in modes) / nrm
    r2 = sum(expectation(psi, position(m) * position(m)).real for m in modes) / nrm
    return EnergyReport(omega * e, r2)


def energy_fit(a_values, energies) -> dict:
    """Slope of E against 1/a two ways.

    ``naive_slope`` is a straight-line fit in 1/a; ``leading_coefficient``
    is the 1/a coefficient of a least-squares fit on {1/a, 1, a}, which
    isolates the divergent part from the envelope's kinetic term.
    """
    a = np.asarray(a_values, dtype=float)
    e = np.asarray(energies, dtype=float)
    naive = np.polyfit(1 / a, e, 1)
    basis = np.column_stack([1 / a, np.ones_like(a), a])
    coef, *_ = np.linalg.lstsq(basis, e, rcond=None)
    return {"naive_slope": float(naive[0]), "naive_intercept": float(naive[1]),
            "leading_coefficient": float(coef[0]), "constant": float(coef[1]),
            "linear_in_a": float(coef[2])}


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator: the stream depends only on the seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def sample_l(source, n_samples: int, seed: int) -> np.ndarray:
    """Draw L outcomes from a state's (or a precomputed) angular spectrum."""
    if n_samples <= 0:
        raise ValueError("need at least one sample")
    spec = source if isinstance(source, AngularSpectrum) else angular_spectrum(source)
    cdf = np.cumsum(spec.probabilities)
    cdf /= cdf[-1]
    u = make_rng(seed).random(n_samples)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return spec.m_values[idx]
