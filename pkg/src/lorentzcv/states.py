"""State constructors: L-operator eigenstates, coherent baselines, and
lambda-representation superpositions (single, four-mode, entangled, Bell).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GridError
from .grid import Grid1D, GridState, normalize

BRANCHES = ("paper-arctan", "polar")
STRUCTURES = ("single", "four-mode", "entangled", "bell")

# the Gaussian envelope must decay to ~e^-32 before the grid edge
_EXTENT_FACTOR = 8.0
# clock rotations swap position and momentum tails; odd-lambda states have a
# cusp at the origin whose momentum tail needs the extra room
_ROTATED_EXTENT_FACTOR = 12.0


@dataclass(frozen=True)
class StateParams:
    lam: float
    a: complex = 1.0
    branch: str = "paper-arctan"

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise ValueError(f"lambda must be finite, got {self.lam!r}")
        if not complex(self.a).real > 0:
            raise ValueError(f"regularization needs Re a > 0, got {self.a!r}")
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got {self.branch!r}")


def required_extent(a) -> float:
    return _EXTENT_FACTOR / math.sqrt(complex(a).real)


def default_extent(a, mu: float = 1.0, rotated: bool = False) -> float:
    """Smallest extent >= 8 that holds the (boosted, clock-rotated) state."""
    a_eff = complex(a).real / max(mu, 1.0) ** 2
    ext = max(8.0, required_extent(a_eff))
    if rotated:
        ext = max(ext, _ROTATED_EXTENT_FACTOR / math.sqrt(a_eff))
    return ext


def _angle(q1, q2, branch):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if branch == "paper-arctan":
            # arctan(+-inf) = +-pi/2 on the q2 = 0 line
            return np.arctan(np.divide(q1, q2))
        return np.arctan2(q1, q2)


def ideal_phase(lam: float, q1: float, q2: float, branch: str = "paper-arctan") -> complex:
    """exp(i lam * angle) * (q1^2 + q2^2) at a single point (unnormalizable)."""
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}")
    if q1 == 0 and q2 == 0:
        raise ValueError("the ideal eigenstate phase is undefined at the origin")
    theta = float(_angle(np.float64(q1), np.float64(q2), branch))
    return complex(np.exp(1j * lam * theta) * (q1 * q1 + q2 * q2))


def angular_factor(lam, q1, q2, branch, cut="limit"):
    """exp(i lam * angle) on arrays.

    ``cut="limit"`` keeps the one-sided value on the branch cut (the
    arctan(+-inf) = +-pi/2 convention), so |psi| stays continuous on a grid.
    ``cut="midpoint"`` puts the average of the two one-sided values there,
    which is what a trapezoidal angle quadrature across a jump needs.
    The origin gets 1 (the radial factor vanishes there anyway).
    """
    if cut not in ("limit", "midpoint"):
        raise ValueError(f"unknown cut convention {cut!r}")
    q1, q2 = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
    theta = np.nan_to_num(_angle(q1, q2, branch))
    out = np.exp(1j * lam * theta)
    if cut == "midpoint":
        if branch == "paper-arctan":
            on_cut = (q2 == 0) & (q1 != 0)
            out = np.where(on_cut, np.cos(lam * np.pi / 2), out)
        else:
            on_cut = (q1 == 0) & (q2 < 0)
            out = np.where(on_cut, np.cos(lam * np.pi), out)
    return np.where((q1 == 0) & (q2 == 0), 1.0, out)


def eigenfunction(params: StateParams):
    """Continuum-normalized closed form of the regularized eigenstate.

    The returned callable takes ``(q1, q2, cut="limit")``.
    """
    a = complex(params.a)
    const = math.sqrt(a.real**3 / (2 * math.pi))

    def f(q1, q2, cut="limit"):
        r2 = q1 * q1 + q2 * q2
        return const * r2 * angular_factor(params.lam, q1, q2, params.branch, cut) * np.exp(-a * r2 / 2)

    return f


def _pair_grids(grids):
    if isinstance(grids, Grid1D):
        return (grids, grids)
    grids = tuple(grids)
    if len(grids) != 2:
        raise GridError("eigenstates need exactly two mode grids")
    return grids


def regularized_eigenstate(params: StateParams, grids) -> GridState:
    """Sample the regularized eigenstate on a two-mode grid and renormalize."""
    g1, g2 = _pair_grids(grids)
    need = required_extent(params.a)
    if min(g1.extent, g2.extent) < need * (1 - 1e-12):
        raise GridError(f"grid extent must be >= {need:.4g} for a = {params.a}")
    f = eigenfunction(params)
    amps = f(g1.points[:, None], g2.points[None, :])
    nrm = float(np.sum(np.abs(amps) ** 2) * g1.spacing * g2.spacing)
    if abs(nrm - 1.0) > 1e-2:
        raise GridError(f"grid too small or too coarse: discrete norm {nrm:.6f}")
    scale = 1.0 / math.sqrt(nrm)
    return GridState((g1, g2), amps * scale, normalized=True,
                     analytic=lambda q1, q2, **kw: scale * f(q1, q2, **kw))


def coherent_state(alpha: complex, grid: Grid1D) -> GridState:
    """Displaced vacuum with <q> = sqrt2 Re(alpha), <-i d/dq> = sqrt2 Im(alpha)."""
    alpha = complex(alpha)
    if abs(alpha) ** 2 > (grid.extent / 4) ** 2:
        raise GridError(f"|alpha| = {abs(alpha):.3g} does not fit a grid of extent {grid.extent}")
    q0, p0 = math.sqrt(2) * alpha.real, math.sqrt(2) * alpha.imag

    def f(q, **kw):
        return np.pi**-0.25 * np.exp(-((q - q0) ** 2) / 2 + 1j * p0 * q - 0.5j * p0 * q0)

    amps = f(grid.points)
    nrm = float(np.sum(np.abs(amps) ** 2) * grid.spacing)
    if abs(nrm - 1.0) > 1e-6:
        raise GridError(f"coherent state leaks off the grid (norm {nrm:.8f})")
    return normalize(GridState((grid,), amps, analytic=f))


def vacuum(grids) -> GridState:
    if isinstance(grids, Grid1D):
        grids = (grids,)
    grids = tuple(grids)
    amps = np.ones(())
    for g in grids:
        amps = np.multiply.outer(amps, np.pi**-0.25 * np.exp(-g.points**2 / 2))
    return normalize(GridState(grids, amps))


# -- lambda representation ---------------------------------------------------


@dataclass
class LambdaState:
    """Weights f(lambda) on a uniform lambda grid, with sum |f|^2 dlam = 1.

    For ``four-mode`` each node stands for |lam, -lam>; for ``entangled``
    it is |Phi_lam>_A |Phi_lam>_B; for ``bell`` it is |Phi_lam>_A
    |Phi_{lam+zeta}>_B.
    """

    nodes: np.ndarray
    weights: np.ndarray
    structure: str = "single"
    zeta: Optional[float] = None
    spacing: float = field(init=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=complex)
        if self.nodes.ndim != 1 or self.nodes.size == 0:
            raise ValueError("need a non-empty 1-D node list")
        if self.weights.shape != self.nodes.shape:
            raise ValueError("weights and nodes differ in length")
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if self.structure == "bell":
            if self.zeta is None or not np.isfinite(self.zeta):
                raise ValueError("bell structure needs a finite zeta")
        elif self.zeta is not None:
            raise ValueError("zeta is only meaningful for the bell structure")
        self.spacing = _uniform_spacing(self.nodes)
        nrm = float(np.sum(np.abs(self.weights) ** 2) * self.spacing)
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"weights not normalized (sum |f|^2 dlam = {nrm:.12g})")

    @property
    def probabilities(self) -> np.ndarray:
        """Per-node probability |f|^2 dlam."""
        return np.abs(self.weights) ** 2 * self.spacing

    def pair_eigenvalues(self) -> np.ndarray:
        """L eigenvalue of every mode pair, shape (nodes, pairs)."""
        lam = self.nodes
        if self.structure == "single":
            cols = [lam]
        elif self.structure == "four-mode":
            cols = [lam, -lam]
        elif self.structure == "entangled":
            cols = [lam, -lam, lam, -lam]
        else:
            cols = [lam, -lam, lam + self.zeta, -(lam + self.zeta)]
        return np.column_stack(cols)


def _uniform_spacing(nodes):
    if nodes.size == 1:
        return 1.0
    steps = np.diff(nodes)
    if np.any(steps <= 0):
        raise ValueError("nodes must be strictly increasing")
    if np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
        raise ValueError("nodes must be uniformly spaced")
    return float(np.mean(steps))


def make_lambda_state(nodes, weights, structure: str = "single", zeta=None) -> LambdaState:
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=complex)
    dlam = _uniform_spacing(nodes)
    nrm = float(np.sum(np.abs(weights) ** 2) * dlam)
    if not nrm > 0:
        raise ValueError("weights have zero norm")
    return LambdaState(nodes, weights / math.sqrt(nrm), structure, zeta)


def gaussian_lambda_state(center, width, spacing=None, span=5.0, structure="single", zeta=None):
    """Gaussian |f|^2 with standard deviation ``width``, nodes every width/8."""
    spacing = width / 8 if spacing is None else spacing
    half = math.ceil(span * width / spacing)
    nodes = center + spacing * np.arange(-half, half + 1)
    weights = np.exp(-((nodes - center) ** 2) / (4 * width**2))
    return make_lambda_state(nodes, weights, structure, zeta)


def lambda_correlation(state: LambdaState) -> float:
    """Covariance of Alice's and Bob's first-pair eigenvalues."""
    if state.structure not in ("entangled", "bell"):
        raise ValueError("correlation needs a two-party structure")
    ev = state.pair_eigenvalues()
    p = state.probabilities
    la, lb = ev[:, 0], ev[:, 2]
    return float(np.sum(p * la * lb) - np.sum(p * la) * np.sum(p * lb))


def superpose_lambda(state: LambdaState, a, grids, branch: str = "paper-arctan") -> GridState:
    """Sum_j f(lam_j) psi_{lam_j}^a dlam on the grid, then renormalize."""
    if state.structure != "single":
        raise ValueError("only single-structure states can be put on a grid")
    g1, g2 = _pair_grids(grids)
    need = required_extent(a)
    if min(g1.extent, g2.extent) < need * (1 - 1e-12):
        raise GridError(f"grid extent must be >= {need:.4g} for a = {a}")
    fs = [(w * state.spacing, eigenfunction(StateParams(lam, a, branch)))
          for lam, w in zip(state.nodes, state.weights)]

    def f(q1, q2, **kw):
        return sum(c * fn(q1, q2, **kw) for c, fn in fs)

    amps = f(g1.points[:, None], g2.points[None, :])
    return normalize(GridState((g1, g2), amps, analytic=f))


def save_lambda_state(state: LambdaState, path) -> None:
    with open(path, "w", newline="") as fh:
        zeta = "" if state.zeta is None else repr(float(state.zeta))
        fh.write(f"# structure={state.structure} zeta={zeta}\n")
        w = csv.writer(fh)
        w.writerow(["lambda", "re_weight", "im_weight"])
        for lam, f in zip(state.nodes, state.weights):
            w.writerow([repr(float(lam)), repr(float(f.real)), repr(float(f.imag))])


def load_lambda_state(path) -> LambdaState:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing structure header")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    rows = list(csv.DictReader(lines[1:]))
    nodes = [float(r["lambda"]) for r in rows]
    weights = [complex(float(r["re_weight"]), float(r["im_weight"])) for r in rows]
    zeta = float(meta["zeta"]) if meta.get("zeta") else None
    return LambdaState(np.array(nodes), np.array(weights), meta["structure"], zeta)
