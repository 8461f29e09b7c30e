"""Channel transformations: frame boost, clock rotation, photon loss, and the
generator evolution in the lambda representation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import GridError, SupportError, TruncationError
from .fock import DEFAULT_CUTOFF, DEFAULT_THRESHOLD, rotate_grid_axes
from .grid import Grid1D, GridState, coordinate_rotation, grid_weight_outside, inner_product, tensor
from .operators import OperatorSpec, apply_operator, beam_splitter_generator
from .states import LambdaState, vacuum

# three-mode grids above this many points do not fit comfortably in memory
MAX_LOSS_POINTS = 2**23
SUPPORT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BoostParams:
    """Dilation q -> mu q.  ``beta`` (v/c), if given, fixes mu = (1 - beta^2)^(1/4)."""

    mu: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.beta is not None:
            if not -1 < self.beta < 1:
                raise ValueError(f"beta must lie in (-1, 1), got {self.beta!r}")
            mu = (1.0 - self.beta**2) ** 0.25
            if self.mu is not None and abs(self.mu - mu) > 1e-12:
                raise ValueError("mu and beta disagree")
            object.__setattr__(self, "mu", mu)
        if self.mu is None or not self.mu > 0 or not np.isfinite(self.mu):
            raise ValueError(f"mu must be positive, got {self.mu!r}")


@dataclass(frozen=True)
class LossParams:
    """Beam splitter with reflected intensity fraction kappa^2."""

    kappa: float
    ancilla_grid: Optional[Grid1D] = None

    def __post_init__(self):
        if not 0 <= self.kappa < 1:
            raise ValueError(f"kappa must lie in [0, 1), got {self.kappa!r}")

    @property
    def angle(self) -> float:
        return math.asin(self.kappa)


# -- boost -------------------------------------------------------------------


def _dilated(f, mu, modes):
    scale = mu ** (-modes / 2)

    def g(*q, **kw):
        return scale * f(*(x / mu for x in q), **kw)

    return g


def _resample(amps, grids, mu):
    """Cubic-spline resampling of psi(q / mu) on the same grid."""
    offset = [(g.n / 2) * (1 - 1 / mu) for g in grids]
    kw = dict(matrix=np.eye(len(grids)) / mu, offset=offset, order=3, mode="grid-constant")
    out = ndimage.affine_transform(amps.real, **kw) + 1j * ndimage.affine_transform(amps.imag, **kw)
    return out * mu ** (-len(grids) / 2)


def lorentz_boost(psi: GridState, boost: BoostParams, method: str = "auto") -> GridState:
    """psi'(q) = mu^(-M/2) psi(q / mu) on every mode.

    ``method``: "analytic" re-evaluates the closed form carried by the state,
    "spline" resamples the grid with cubic splines, "auto" prefers analytic.
    """
    mu = float(boost.mu)
    if mu == 1.0:
        return psi.with_amplitudes(psi.amplitudes.copy(), psi.normalized, psi.analytic)
    if method == "auto":
        method = "analytic" if psi.analytic is not None else "spline"
    # the new grid samples the old state only inside |q| < Q / mu
    lost = grid_weight_outside(psi, [g.extent / mu for g in psi.grids])
    if lost > SUPPORT_TOLERANCE:
        raise SupportError(f"boost mu={mu:g} pushes {lost:.3g} of the weight off the grid")
    if method == "analytic":
        if psi.analytic is None:
            raise ValueError("state carries no closed form")
        f = _dilated(psi.analytic, mu, psi.modes)
        mesh = psi.coordinates()
        amps = f(*mesh)
        return psi.with_amplitudes(np.broadcast_to(amps, psi.amplitudes.shape).copy(), analytic=f)
    if method == "spline":
        return psi.with_amplitudes(_resample(psi.amplitudes, psi.grids, mu))
    raise ValueError(f"unknown boost method {method!r}")


def fit_envelope_width(psi: GridState) -> float:
    """Width parameter a of an eigenstate-family envelope, from <r^2> = 3/a."""
    if psi.modes != 2:
        raise ValueError("envelope fit expects a two-mode state")
    q1, q2 = psi.coordinates()
    weight = np.abs(psi.amplitudes) ** 2
    r2 = float(np.sum(weight * (q1 * q1 + q2 * q2)) / np.sum(weight))
    return 3.0 / r2


def width_exponent(a_before: float, a_after: float, mu: float) -> float:
    """Exponent e in a_after = a_before * (mu^2)^e."""
    return math.log(a_after / a_before) / math.log(mu * mu)


# -- clock rotation ------------------------------------------------------------


def clock_rotation(psi: GridState, phi: float, modes=(0, 1), cutoff: int = DEFAULT_CUTOFF,
                   threshold: float = DEFAULT_THRESHOLD):
    """Phase exp(-i n phi) on number level n of each selected mode.

    Returns ``(state, truncation_weight)``.  Raises TruncationError when the
    state leaks more than ``threshold`` past the cutoff.
    """
    modes = tuple(modes)
    for m in modes:
        if not 0 <= m < psi.modes:
            raise GridError(f"mode {m} out of range for a {psi.modes}-mode state")
    amps, weight = rotate_grid_axes(psi, phi, modes, cutoff)
    if weight >= threshold:
        raise TruncationError(f"state too energetic for cutoff {cutoff} (weight {weight:.3g})", weight)
    if np.mod(phi, 2 * np.pi) == 0.0:
        return psi.with_amplitudes(amps, psi.normalized, psi.analytic), weight
    return psi.with_amplitudes(amps), weight


# -- loss --------------------------------------------------------------------


def _with_ancilla(psi: GridState, loss: LossParams) -> GridState:
    if psi.modes != 2:
        raise GridError("the loss channel acts on a two-mode signal")
    anc = loss.ancilla_grid or psi.grids[0]
    if anc != psi.grids[0]:
        raise GridError("ancilla grid must match the signal grid")
    points = psi.amplitudes.size * anc.n
    if points > MAX_LOSS_POINTS:
        raise GridError(f"three-mode grid of {points} points is too large; use n <= 128")
    return tensor(psi, vacuum(anc))


def loss_channel_exact(psi: GridState, loss: LossParams, method: str = "shear") -> GridState:
    """Mix mode 0 with a vacuum ancilla (mode 2) on a beam splitter of reflectivity kappa^2."""
    joint = _with_ancilla(psi, loss)
    if loss.kappa == 0.0:
        return joint
    return coordinate_rotation(joint, 0, 2, loss.angle, method=method)


def loss_expectation_perturbative(psi: GridState, A: OperatorSpec, loss: LossParams,
                                  flip_sign: bool = False) -> float:
    """<A> after exp(i k B) to second order in k, with B the beam-splitter generator.

    <A> + k^2 <B A B> - (k^2/2) <B^2 A + A B^2> (plus the first-order
    commutator term, which vanishes for a vacuum ancilla).  ``flip_sign``
    flips the sign of the last term, which breaks unitarity (A = 1 no longer
    gives 1) and exists only to evaluate that variant.
    """
    k = loss.kappa
    if k > 0.3:
        raise ValueError(f"perturbative expansion needs kappa <= 0.3, got {k}")
    if not A.is_hermitian():
        raise ValueError("observable must be Hermitian")
    if A.max_mode > 1:
        raise ValueError("observable must act on the signal modes only")
    joint = _with_ancilla(psi, loss)
    base = inner_product(joint, apply_operator(joint, A)).real
    if k == 0.0:
        return float(base)
    B = beam_splitter_generator(0, 2)
    b1 = apply_operator(joint, B)
    b2 = apply_operator(b1, B)
    a0 = apply_operator(joint, A)
    sandwich = inner_product(b1, apply_operator(b1, A)).real
    anti = inner_product(b2, a0).real
    first = -2.0 * k * inner_product(a0, b1).imag
    sign = 1.0 if flip_sign else -1.0
    return float(base + first + k * k * sandwich + sign * k * k * anti)


# -- generator evolution -------------------------------------------------------


def generator_evolution(s: LambdaState, beta: float) -> LambdaState:
    """Apply exp(i beta L) to every mode pair: node phase exp(-i beta * total lambda)."""
    net = s.pair_eigenvalues().sum(axis=1)
    if beta == 0 or not np.any(net):
        weights = s.weights.copy()
    else:
        weights = s.weights * np.exp(-1j * beta * net)
    return LambdaState(s.nodes.copy(), weights, s.structure, s.zeta)
