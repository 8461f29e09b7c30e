"""Uniform quadrature grids and multimode wavefunctions sampled on them.

Everything here is a pure function of its inputs.  Reductions go through
``numpy.sum`` over the row-major flattened array (pairwise summation in
index order), so results are bit-reproducible for a fixed grid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import GridError

MAX_MODES = 4
_MAGIC = b"LCVG"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Grid1D:
    """``n`` points on ``[-extent, extent)`` with spacing ``2*extent/n``."""

    n: int
    extent: float

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise GridError(f"point count must be a power of two >= 8, got {n!r}")
        if not np.isfinite(self.extent) or self.extent <= 0:
            raise GridError(f"extent must be positive, got {self.extent!r}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "extent", float(self.extent))

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def points(self) -> np.ndarray:
        return -self.extent + np.arange(self.n) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.spacing)

    def index_of(self, q):
        """Fractional array index of coordinate ``q``."""
        return (np.asarray(q) + self.extent) / self.spacing


def make_grid(n: int, extent: float) -> Grid1D:
    return Grid1D(n, extent)


@dataclass
class GridState:
    """An M-mode wavefunction sampled on the product of per-mode grids.

    ``amplitudes`` has shape ``(n_1, ..., n_M)`` (row-major in mode order).
    ``analytic``, when present, evaluates the same wavefunction at arbitrary
    coordinates (one array per mode, plus optional keywords such as
    ``cut``); transforms that know how to act on it exactly use it.
    """

    grids: tuple
    amplitudes: np.ndarray
    normalized: bool = False
    analytic: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.grids = tuple(self.grids)
        if not 1 <= len(self.grids) <= MAX_MODES:
            raise GridError(f"mode count must be in 1..{MAX_MODES}, got {len(self.grids)}")
        amps = np.asarray(self.amplitudes, dtype=complex)
        shape = tuple(g.n for g in self.grids)
        if amps.size != int(np.prod(shape)):
            raise GridError(f"expected {np.prod(shape)} amplitudes, got {amps.size}")
        amps = amps.reshape(shape)
        if not np.all(np.isfinite(amps)):
            raise GridError("amplitudes contain NaN or Inf")
        self.amplitudes = amps
        if self.normalized:
            nrm = norm_squared(self)
            if abs(nrm - 1.0) > 1e-9:
                raise GridError(f"state flagged normalized but has norm^2 {nrm:.12g}")

    @property
    def modes(self) -> int:
        return len(self.grids)

    @property
    def volume_element(self) -> float:
        return float(np.prod([g.spacing for g in self.grids]))

    def coordinates(self):
        """Per-mode coordinate arrays shaped to broadcast against ``amplitudes``."""
        out = []
        for i, g in enumerate(self.grids):
            shape = [1] * self.modes
            shape[i] = g.n
            out.append(g.points.reshape(shape))
        return out

    def with_amplitudes(self, amplitudes, normalized=False, analytic=None):
        return replace(self, amplitudes=amplitudes, normalized=normalized, analytic=analytic)


def _check_compatible(psi: GridState, phi: GridState):
    if psi.grids != phi.grids:
        raise GridError("states live on different grids")


def inner_product(psi: GridState, phi: GridState) -> complex:
    """Riemann sum of conj(psi) * phi over the product grid."""
    _check_compatible(psi, phi)
    return complex(np.sum(np.conj(psi.amplitudes) * phi.amplitudes) * psi.volume_element)


def norm_squared(psi: GridState) -> float:
    return float(np.sum(np.abs(psi.amplitudes) ** 2) * psi.volume_element)


def normalize(psi: GridState) -> GridState:
    nrm = norm_squared(psi)
    if not nrm > 0.0:
        raise GridError("cannot normalize a zero-norm state")
    if psi.normalized:
        return psi
    scale = 1.0 / np.sqrt(nrm)
    analytic = None
    if psi.analytic is not None:
        f = psi.analytic
        analytic = lambda *q, **kw: scale * f(*q, **kw)  # noqa: E731
    return psi.with_amplitudes(psi.amplitudes * scale, normalized=True, analytic=analytic)


def derivative_array(amps: np.ndarray, grid: Grid1D, axis: int, order: int) -> np.ndarray:
    """Fourier derivative of ``amps`` along ``axis`` (periodic extension)."""
    if order not in (1, 2):
        raise GridError(f"derivative order must be 1 or 2, got {order!r}")
    k = grid.wavenumbers
    if order == 1:
        mult = 1j * k
        # odd derivatives are ill-defined at the Nyquist frequency
        mult[grid.n // 2] = 0.0
    else:
        mult = -(k**2)
    shape = [1] * amps.ndim
    shape[axis] = grid.n
    spec = np.fft.fft(amps, axis=axis)
    return np.fft.ifft(spec * mult.reshape(shape), axis=axis)


def _check_mode(psi: GridState, mode: int):
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < psi.modes:
        raise GridError(f"mode {mode!r} out of range for a {psi.modes}-mode state")


def spectral_derivative(psi: GridState, mode: int, order: int = 1) -> GridState:
    _check_mode(psi, mode)
    out = derivative_array(psi.amplitudes, psi.grids[mode], mode, order)
    return psi.with_amplitudes(out)


# -- rotations -------------------------------------------------------------


def _quarter_turn(amps, grid: Grid1D, i, j, turns):
    """Exact rotation by ``turns`` * pi/2 in the (i, j) plane.

    Uses the periodic identification -q_k = q_{(n-k) mod n}.
    """
    flip = (-np.arange(grid.n)) % grid.n
    for _ in range(turns % 4):
        # psi'(qi, qj) = psi(-qj, qi)
        amps = np.swapaxes(amps, i, j)
        amps = np.take(amps, flip, axis=j)
    return amps


def _shear(amps, grid: Grid1D, axis, other, t):
    """Return f(q_axis + t * q_other) by a Fourier shift along ``axis``."""
    shape_k = [1] * amps.ndim
    shape_k[axis] = grid.n
    shape_x = [1] * amps.ndim
    shape_x[other] = grid.n
    k = grid.wavenumbers.reshape(shape_k)
    shift = t * grid.points.reshape(shape_x)
    return np.fft.ifft(np.fft.fft(amps, axis=axis) * np.exp(1j * k * shift), axis=axis)


def _rotate_shear(amps, grid, i, j, angle):
    turns = int(np.round(angle / (np.pi / 2)))
    rest = angle - turns * np.pi / 2
    amps = _quarter_turn(amps, grid, i, j, turns)
    if rest == 0.0:
        return amps
    # R(rest) = X(t) Y(s) X(t) with X shearing q_i and Y shearing q_j
    t = -np.tan(rest / 2)
    s = np.sin(rest)
    amps = _shear(amps, grid, i, j, t)
    amps = _shear(amps, grid, j, i, s)
    return _shear(amps, grid, i, j, t)


def _rotate_bicubic(amps, grid, i, j, angle):
    c, s = np.cos(angle), np.sin(angle)
    qi, qj = np.meshgrid(grid.points, grid.points, indexing="ij")
    src = [grid.index_of(qi * c - qj * s), grid.index_of(qi * s + qj * c)]
    moved = np.moveaxis(amps, (i, j), (0, 1))
    flat = moved.reshape(grid.n, grid.n, -1)
    out = np.empty_like(flat)
    for k in range(flat.shape[2]):
        sl = flat[:, :, k]
        out[:, :, k] = ndimage.map_coordinates(
            sl.real, src, order=3, mode="grid-constant"
        ) + 1j * ndimage.map_coordinates(sl.imag, src, order=3, mode="grid-constant")
    return np.moveaxis(out.reshape(moved.shape), (0, 1), (i, j))


def coordinate_rotation(
    psi: GridState, mode_i: int, mode_j: int, angle: float, method: str = "shear"
) -> GridState:
    """Rotate the wavefunction in the (q_i, q_j) plane.

    psi'(.., q_i, .., q_j, ..) = psi(.., q_i cos - q_j sin, .., q_i sin + q_j cos, ..)

    ``method="shear"`` factors the rotation into three Fourier shears and is
    unitary to machine precision; ``method="bicubic"`` resamples with cubic
    splines.
    """
    _check_mode(psi, mode_i)
    _check_mode(psi, mode_j)
    if mode_i == mode_j:
        raise GridError("rotation needs two distinct modes")
    grid = psi.grids[mode_i]
    if psi.grids[mode_j] != grid:
        raise GridError("rotation requires identical grids on both modes")
    if angle == 0.0:
        return psi.with_amplitudes(psi.amplitudes.copy(), normalized=psi.normalized)
    if method == "shear":
        out = _rotate_shear(psi.amplitudes, grid, mode_i, mode_j, float(angle))
    elif method == "bicubic":
        out = _rotate_bicubic(psi.amplitudes, grid, mode_i, mode_j, float(angle))
    else:
        raise ValueError(f"unknown rotation method {method!r}")
    return psi.with_amplitudes(out)


def tensor(psi: GridState, phi: GridState) -> GridState:
    """Product state psi(q_1..q_M) * phi(q_{M+1}..)."""
    amps = np.multiply.outer(psi.amplitudes, phi.amplitudes)
    return GridState(psi.grids + phi.grids, amps, normalized=False)


def grid_weight_outside(psi: GridState, limits: Sequence[float]) -> float:
    """Probability carried by points with |q_i| > limits[i] for some mode i."""
    mask = np.zeros(psi.amplitudes.shape, dtype=bool)
    for q, lim in zip(psi.coordinates(), limits):
        mask |= np.abs(q) > lim
    return float(np.sum(np.abs(psi.amplitudes[mask]) ** 2) * psi.volume_element)


# -- serialization ---------------------------------------------------------


def save_grid_state(psi: GridState, path) -> None:
    """Binary container: header, then little-endian interleaved (re, im) float64."""
    header = [_MAGIC, struct.pack("<III", _FORMAT_VERSION, psi.modes, int(psi.normalized))]
    for g in psi.grids:
        header.append(struct.pack("<Id", g.n, g.extent))
    data = np.ascontiguousarray(psi.amplitudes).astype("<c16").tobytes()
    Path(path).write_bytes(b"".join(header) + data)


def load_grid_state(path) -> GridState:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise GridError(f"{path}: not a grid-state file")
    version, modes, flag = struct.unpack_from("<III", raw, 4)
    if version != _FORMAT_VERSION:
        raise GridError(f"{path}: unsupported format version {version}")
    offset = 16
    grids = []
    for _ in range(modes):
        n, extent = struct.unpack_from("<Id", raw, offset)
        grids.append(Grid1D(n, extent))
        offset += 12
    amps = np.frombuffer(raw, dtype="<c16", offset=offset).astype(complex)
    # re-check normalization rather than trusting the flag blindly
    state = GridState(tuple(grids), amps, normalized=False)
    if flag:
        state.normalized = abs(norm_squared(state) - 1.0) <= 1e-9
    return state


def export_csv(psi: GridState, path) -> None:
    """One row per grid point: q_1..q_M, re, im."""
    mesh = np.meshgrid(*[g.points for g in psi.grids], indexing="ij")
    cols = [m.ravel() for m in mesh] + [psi.amplitudes.real.ravel(), psi.amplitudes.imag.ravel()]
    names = [f"q{i + 1}" for i in range(psi.modes)] + ["re", "im"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names),
               comments="", fmt="%.17g")
