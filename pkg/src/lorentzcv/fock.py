"""Truncated number-basis backend.

Independent of the grid machinery except for the projection in and out.
Ladder conventions: q = (a + a^dag)/sqrt2 and d/dq = (a - a^dag)/sqrt2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import TruncationError
from .grid import Grid1D, GridState
from .operators import D, Q, OperatorSpec

DEFAULT_CUTOFF = 64
DEFAULT_THRESHOLD = 1e-4
MAX_FOCK_MODES = 3


def hermite_functions(cutoff: int, q) -> np.ndarray:
    """Normalized Hermite functions h_0..h_cutoff at points q, shape (cutoff+1, len(q)).

    Uses h_{n+1} = sqrt(2/(n+1)) q h_n - sqrt(n/(n+1)) h_{n-1}, which never
    forms factorials or raw Hermite polynomials.
    """
    q = np.asarray(q, dtype=float)
    h = np.empty((cutoff + 1,) + q.shape)
    h[0] = np.pi**-0.25 * np.exp(-q * q / 2)
    if cutoff >= 1:
        h[1] = math.sqrt(2.0) * q * h[0]
    for n in range(1, cutoff):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * q * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


@dataclass
class FockState:
    """Coefficient tensor of shape (cutoff+1,)*modes.

    ``truncation_weight`` is the probability at the top two levels of any
    mode; ``lost_weight`` is what the projection did not capture at all.
    """

    coefficients: np.ndarray
    truncation_weight: float = 0.0
    lost_weight: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if not 1 <= c.ndim <= MAX_FOCK_MODES or len(set(c.shape)) != 1:
            raise ValueError(f"coefficients must be a cube with 1..{MAX_FOCK_MODES} axes, got {c.shape}")
        nrm = float(np.sum(np.abs(c) ** 2))
        if abs(nrm - 1.0) > 1e-8:
            raise ValueError(f"coefficients not normalized (norm^2 = {nrm:.12g})")
        self.coefficients = c

    @property
    def cutoff(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def modes(self) -> int:
        return self.coefficients.ndim


def top_level_weight(coefficients: np.ndarray) -> float:
    """Probability carried by levels cutoff-1 and cutoff of any mode."""
    n = coefficients.shape[0]
    mask = np.zeros(coefficients.shape, dtype=bool)
    for axis in range(coefficients.ndim):
        idx = [slice(None)] * coefficients.ndim
        idx[axis] = slice(max(n - 2, 0), n)
        mask[tuple(idx)] = True
    return float(np.sum(np.abs(coefficients[mask]) ** 2))


def _contract(amps, mats):
    """Apply one matrix per axis: out[i, j, ..] = sum M0[i, a] M1[j, b] .. amps[a, b, ..]."""
    out = amps
    for axis, m in enumerate(mats):
        out = np.moveaxis(np.tensordot(m, out, axes=([1], [axis])), 0, axis)
    return out


def _projectors(grids, cutoff):
    return [hermite_functions(cutoff, g.points) * g.spacing for g in grids]


def grid_to_fock(psi: GridState, cutoff: int = DEFAULT_CUTOFF,
                 threshold: float = DEFAULT_THRESHOLD) -> FockState:
    """Project onto products of Hermite functions by quadrature on the grid."""
    if psi.modes > MAX_FOCK_MODES:
        raise ValueError(f"the number basis supports at most {MAX_FOCK_MODES} modes")
    coeffs = _contract(psi.amplitudes, _projectors(psi.grids, cutoff))
    captured = float(np.sum(np.abs(coeffs) ** 2))
    norm = float(np.sum(np.abs(psi.amplitudes) ** 2) * psi.volume_element)
    lost = max(norm - captured, 0.0)
    top = top_level_weight(coeffs)
    worst = max(top, lost)
    if worst >= threshold:
        raise TruncationError(
            f"cutoff {cutoff} too low: top-level weight {top:.3g}, lost weight {lost:.3g}", worst)
    return FockState(coeffs / math.sqrt(captured), top, lost)


def fock_to_grid(s: FockState, grids) -> GridState:
    if isinstance(grids, Grid1D):
        grids = (grids,) * s.modes
    grids = tuple(grids)
    if len(grids) != s.modes:
        raise ValueError("need one grid per mode")
    mats = [hermite_functions(s.cutoff, g.points).T for g in grids]
    return GridState(grids, _contract(s.coefficients, mats))


def annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1)


def _factor_matrix(kind, cutoff):
    a = annihilation(cutoff)
    if kind == Q:
        return (a + a.T) / math.sqrt(2.0)
    return (a - a.T) / math.sqrt(2.0)


def fock_apply(s: FockState, op: OperatorSpec, pad: int | None = None) -> np.ndarray:
    """Apply ``op`` on a zero-padded copy so no term is clipped by the cutoff.

    Returns the padded result tensor (cutoff + pad + 1 per mode).
    """
    if op.max_mode >= s.modes:
        raise ValueError(f"operator touches mode {op.max_mode} of a {s.modes}-mode state")
    pad = op.degree if pad is None else pad
    size = s.cutoff + pad
    c = np.pad(s.coefficients, [(0, pad)] * s.modes)
    mats = {k: _factor_matrix(k, size) for k in (Q, D)}
    total = np.zeros_like(c)
    for coef, mono in op.terms:
        v = c
        for kind, mode in reversed(mono):
            v = np.moveaxis(np.tensordot(mats[kind], v, axes=([1], [mode])), 0, mode)
        total = total + coef * v
    return total


def fock_expect(s: FockState, op: OperatorSpec) -> complex:
    out = fock_apply(s, op)
    c = np.pad(s.coefficients, [(0, out.shape[0] - s.coefficients.shape[0])] * s.modes)
    return complex(np.sum(np.conj(c) * out))


def fock_expect_l(s: FockState, i: int = 0, j: int = 1) -> float:
    """<L> from L = i (a_i^dag a_j - a_i a_j^dag), i.e. -2 Im <a_i^dag a_j>."""
    if s.modes < 2:
        raise ValueError("L needs two modes")
    a = annihilation(s.cutoff)
    c = s.coefficients
    aj = np.moveaxis(np.tensordot(a, c, axes=([1], [j])), 0, j)
    ai = np.moveaxis(np.tensordot(a, c, axes=([1], [i])), 0, i)
    corr = np.sum(np.conj(ai) * aj)
    return float(-2.0 * corr.imag)


def fock_rotation(s: FockState, phi: float, modes=None) -> FockState:
    """Multiply level n of each selected mode by exp(-i n phi)."""
    modes = range(s.modes) if modes is None else modes
    phi = float(np.mod(phi, 2 * np.pi))
    c = s.coefficients.copy()
    if phi == 0.0:
        return FockState(c, s.truncation_weight, s.lost_weight)
    phase = np.exp(-1j * phi * np.arange(s.cutoff + 1))
    for m in modes:
        if not 0 <= m < s.modes:
            raise ValueError(f"mode {m} out of range")
        shape = [1] * s.modes
        shape[m] = s.cutoff + 1
        c = c * phase.reshape(shape)
    return FockState(c, s.truncation_weight, s.lost_weight)


def _padded_size(grid: Grid1D, cutoff: int) -> int:
    """Point count (same spacing) whose extent holds h_cutoff with a safe margin."""
    need = math.sqrt(2 * cutoff + 1) + 6.0
    n = grid.n
    while n * grid.spacing / 2 < need:
        n *= 2
    return n


def rotate_grid_axes(psi: GridState, phi: float, modes, cutoff: int = DEFAULT_CUTOFF):
    """Number-basis phase rotation of grid amplitudes, axis by axis.

    Each selected axis is zero-padded (same spacing) until the Hermite
    functions up to ``cutoff`` are orthonormal on it, rotated through the
    number basis, and cropped back.  Only the component inside the
    truncated space is rotated, so the map stays norm preserving.  Returns
    the new amplitudes and the largest leak: top-level weight, weight not
    captured by the basis, or total weight cropped off the original grid.
    """
    phi = float(np.mod(phi, 2 * np.pi))
    amps = psi.amplitudes
    worst = cropped_total = 0.0
    if phi == 0.0:
        return amps.copy(), worst
    phase = np.exp(-1j * phi * np.arange(cutoff + 1)) - 1.0
    for m in modes:
        g = psi.grids[m]
        big = _padded_size(g, cutoff)
        lo = (big - g.n) // 2
        pad = [(0, 0)] * amps.ndim
        pad[m] = (lo, big - g.n - lo)
        work = np.pad(amps, pad)
        q = -g.extent - lo * g.spacing + np.arange(big) * g.spacing
        h = hermite_functions(cutoff, q)
        other = psi.volume_element / g.spacing
        norm = float(np.sum(np.abs(work) ** 2)) * psi.volume_element
        c = np.moveaxis(np.tensordot(h * g.spacing, work, axes=([1], [m])), 0, m)
        shape = [1] * amps.ndim
        shape[m] = cutoff + 1
        captured = float(np.sum(np.abs(c) ** 2)) * other
        top = float(np.sum(np.abs(np.take(c, [cutoff - 1, cutoff], axis=m)) ** 2)) * other
        work = work + np.moveaxis(np.tensordot(h.T, c * phase.reshape(shape), axes=([1], [m])), 0, m)
        amps = np.take(work, np.arange(lo, lo + g.n), axis=m)
        cropped_total += norm - float(np.sum(np.abs(amps) ** 2)) * psi.volume_element
        worst = max(worst, top, norm - captured)
    return amps, max(worst, cropped_total)


def save_coefficients_csv(s: FockState, path) -> None:
    """One row per level tuple: n_1..n_M, re, im."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"n{i + 1}" for i in range(s.modes)] + ["re", "im"])
        for idx in np.ndindex(s.coefficients.shape):
            v = s.coefficients[idx]
            w.writerow(list(idx) + [repr(float(v.real)), repr(float(v.imag))])
