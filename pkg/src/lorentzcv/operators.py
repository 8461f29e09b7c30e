"""Polynomial differential operators in the mode coordinates.

An operator is a sum of terms ``coef * f_1 f_2 ... f_k`` where each factor
is either multiplication by ``q_m`` or the derivative ``d/dq_m``.  Factors
act right to left, so ``q(0) * d(1)`` means "differentiate along mode 1,
then multiply by q_0".

Momentum follows the sign used for the L-operator eigenstates,
``p = i d/dq`` (hbar = 1).  ``momentum_std`` gives the textbook ``-i d/dq``
used for coherent-state baselines.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from numbers import Number

import numpy as np

from .errors import GridError
from .grid import GridState, derivative_array, inner_product

Q, D = "q", "d"


@dataclass(frozen=True)
class OperatorSpec:
    """Immutable sum of (coefficient, monomial) terms."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((complex(c), tuple((str(k), int(m)) for k, m in mono)) for c, mono in self.terms)
        if not terms:
            raise ValueError("an operator needs at least one term")
        for _, mono in terms:
            for kind, mode in mono:
                if kind not in (Q, D) or mode < 0:
                    raise ValueError(f"bad factor {(kind, mode)!r}")
        object.__setattr__(self, "terms", terms)

    # -- algebra ----------------------------------------------------------

    def __add__(self, other):
        other = _as_operator(other)
        return OperatorSpec(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return OperatorSpec(tuple((-c, m) for c, m in self.terms))

    def __sub__(self, other):
        return self + (-_as_operator(other))

    def __rsub__(self, other):
        return _as_operator(other) - self

    def __mul__(self, other):
        if isinstance(other, Number):
            return OperatorSpec(tuple((c * other, m) for c, m in self.terms))
        other = _as_operator(other)
        return OperatorSpec(tuple((c1 * c2, m1 + m2) for c1, m1 in self.terms for c2, m2 in other.terms))

    def __rmul__(self, other):
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    def __pow__(self, k: int):
        out = identity()
        for _ in range(k):
            out = out * self
        return out

    @property
    def max_mode(self) -> int:
        return max((m for _, mono in self.terms for _, m in mono), default=-1)

    @property
    def degree(self) -> int:
        return max(len(mono) for _, mono in self.terms)

    def adjoint(self) -> "OperatorSpec":
        """q is self-adjoint and d is anti-self-adjoint; order reverses."""
        out = []
        for c, mono in self.terms:
            sign = (-1) ** sum(1 for kind, _ in mono if kind == D)
            out.append((np.conj(c) * sign, tuple(reversed(mono))))
        return OperatorSpec(tuple(out))

    def normal_form(self, tol=1e-12) -> dict:
        """Canonical {((mode, n_q, n_d), ...): coef} with q's left of d's per mode."""
        acc = defaultdict(complex)
        for c, mono in self.terms:
            for key, coef in _normal_order_monomial(mono).items():
                acc[key] += c * coef
        return {k: v for k, v in acc.items() if abs(v) > tol}

    def is_hermitian(self, tol=1e-12) -> bool:
        diff = (self - self.adjoint()).normal_form(tol)
        return not diff


def _as_operator(x):
    if isinstance(x, OperatorSpec):
        return x
    if isinstance(x, Number):
        return OperatorSpec(((complex(x), ()),))
    raise TypeError(f"cannot combine OperatorSpec with {type(x).__name__}")


@lru_cache(maxsize=None)
def _normal_order_word(word: str) -> tuple:
    """Normal-order a single-mode word over {q, d} using d q = q d + 1.

    Returns a tuple of ((n_q, n_d), coef) pairs.
    """
    i = word.find(D + Q)
    if i < 0:
        return (((word.count(Q), word.count(D)), 1),)
    swapped = word[:i] + Q + D + word[i + 2:]
    dropped = word[:i] + word[i + 2:]
    acc = defaultdict(int)
    for key, c in _normal_order_word(swapped) + _normal_order_word(dropped):
        acc[key] += c
    return tuple((k, v) for k, v in acc.items() if v)


def _normal_order_monomial(mono) -> dict:
    words = defaultdict(str)
    for kind, mode in mono:
        words[mode] += kind
    result = {(): 1}
    for mode in sorted(words):
        nxt = {}
        for key, c in result.items():
            for (nq, nd), c2 in _normal_order_word(words[mode]):
                k = key + ((mode, nq, nd),) if (nq or nd) else key
                nxt[k] = nxt.get(k, 0) + c * c2
        result = nxt
    return result


# -- constructors ------------------------------------------------------------


def identity() -> OperatorSpec:
    return OperatorSpec(((1.0, ()),))


def position(mode: int) -> OperatorSpec:
    return OperatorSpec(((1.0, ((Q, mode),)),))


def derivative(mode: int) -> OperatorSpec:
    return OperatorSpec(((1.0, ((D, mode),)),))


def momentum(mode: int) -> OperatorSpec:
    """p = i d/dq."""
    return 1j * derivative(mode)


def momentum_std(mode: int) -> OperatorSpec:
    """p = -i d/dq."""
    return -1j * derivative(mode)


def angular_momentum(i: int = 0, j: int = 1) -> OperatorSpec:
    """L = q_i p_j - p_i q_j with p = i d/dq."""
    return position(i) * momentum(j) - momentum(i) * position(j)


def number_quadrature(mode: int) -> OperatorSpec:
    """q^2 - d^2 (equals 2 n + 1 in the usual number-operator convention)."""
    return position(mode) * position(mode) - derivative(mode) * derivative(mode)


def number_std(mode: int) -> OperatorSpec:
    """(q^2 + p^2 - 1) / 2."""
    return 0.5 * (number_quadrature(mode) - 1.0)


def beam_splitter_generator(signal: int = 0, ancilla: int = 2) -> OperatorSpec:
    """B = i q_a d_s - i q_s d_a; exp(i k B) rotates (q_s, q_a) by angle k."""
    return 1j * position(ancilla) * derivative(signal) - 1j * position(signal) * derivative(ancilla)


# -- evaluation on grids -----------------------------------------------------


def apply_operator(psi: GridState, op: OperatorSpec) -> GridState:
    """Apply ``op`` factor by factor: multiplications exact, derivatives spectral."""
    if op.max_mode >= psi.modes:
        raise GridError(f"operator touches mode {op.max_mode} of a {psi.modes}-mode state")
    coords = psi.coordinates()
    total = np.zeros_like(psi.amplitudes)
    for coef, mono in op.terms:
        v = psi.amplitudes
        for kind, mode in reversed(mono):
            if kind == Q:
                v = v * coords[mode]
            else:
                v = derivative_array(v, psi.grids[mode], mode, 1)
        total = total + coef * v
    return psi.with_amplitudes(total)


def expectation(psi: GridState, op: OperatorSpec) -> complex:
    """<psi| op |psi> on the grid."""
    return inner_product(psi, apply_operator(psi, op))
