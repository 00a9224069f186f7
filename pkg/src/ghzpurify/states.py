"""GHZ-basis labels and the diagonal state families the protocols act on.

An N-party qubit register has the 2^N orthonormal cat-basis states

    |k, s> = (|0, k> + (-1)^s |1, ~k>) / sqrt(2)

where k is the (N-1)-bit pattern held by parties 2..N, ~k is its bitwise
complement, and party 1 holds the explicit 0/1 qubit.  Label (0, 0) is the
distillation target |phi+> and (0, 1) is its sign-flipped partner |phi->
(the "pairing" state).  Mixed states that are diagonal in this basis stay
diagonal under every protocol step, so they are stored as plain weight
vectors indexed by the packed integer (k << 1) | s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "GhzLabel",
    "DiagonalState",
    "PureCatState",
    "BellDiagonalState",
    "n_labels",
    "fidelity",
    "make_werner",
    "make_binary_mixture",
    "make_zero_pairing",
    "mcnot_labels",
    "pauli_act",
]

# Tolerance for "weights form a probability vector".
WEIGHT_TOL = 1e-12


def n_labels(n_parties: int) -> int:
    """Number of cat-basis labels (= Hilbert space dimension) for N parties."""
    return 1 << n_parties


def _check_n_parties(n_parties: int) -> None:
    if not isinstance(n_parties, (int, np.integer)) or n_parties < 2:
        raise ValueError(f"need an integer party count >= 2, got {n_parties!r}")


class GhzLabel(NamedTuple):
    """Cat-basis index: (N-1)-bit branch pattern ``k`` and sign bit ``s``."""

    k: int
    s: int

    @property
    def index(self) -> int:
        """Packed array index, sign bit in the low position."""
        return (self.k << 1) | self.s

    @classmethod
    def from_index(cls, index: int) -> "GhzLabel":
        return cls(index >> 1, index & 1)


def _check_label(label: GhzLabel, n_parties: int) -> None:
    if label.s not in (0, 1):
        raise ValueError(f"sign bit must be 0 or 1, got {label.s}")
    if not 0 <= label.k < (1 << (n_parties - 1)):
        raise ValueError(
            f"branch pattern {label.k} does not fit in {n_parties - 1} bits"
        )


@dataclass(frozen=True)
class DiagonalState:
    """Mixed N-party state diagonal in the cat basis: one weight per label.

    Weights are validated (nonnegative, summing to one within 1e-12) and
    frozen, so instances are safe to share between threads.
    """

    n_parties: int
    weights: np.ndarray

    def __post_init__(self):
        _check_n_parties(self.n_parties)
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (n_labels(self.n_parties),):
            raise ValueError(
                f"expected {n_labels(self.n_parties)} weights for "
                f"{self.n_parties} parties, got shape {w.shape}"
            )
        if w.min() < -WEIGHT_TOL:
            raise ValueError(f"negative weight {w.min()}")
        np.clip(w, 0.0, None, out=w)
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def fidelity(self) -> float:
        """Overlap with the target cat state, i.e. the (0, 0) weight."""
        return float(self.weights[0])

    def weight(self, label: GhzLabel) -> float:
        _check_label(label, self.n_parties)
        return float(self.weights[label.index])


def fidelity(state: DiagonalState) -> float:
    """Weight of the target label (0, 0)."""
    return state.fidelity


@dataclass(frozen=True)
class PureCatState:
    """Pure superposition a|00..0> + b|11..1> with real amplitudes, a <= b."""

    n_parties: int
    a: float
    b: float

    def __post_init__(self):
        _check_n_parties(self.n_parties)
        if abs(self.a * self.a + self.b * self.b - 1.0) > WEIGHT_TOL:
            raise ValueError("amplitudes must satisfy a^2 + b^2 = 1")
        if self.a < 0 or self.a > self.b:
            raise ValueError("convention requires 0 <= a <= b")

    @classmethod
    def from_a(cls, n_parties: int, a: float) -> "PureCatState":
        return cls(n_parties, a, math.sqrt(max(0.0, 1.0 - a * a)))

    @property
    def fidelity(self) -> float:
        """Overlap with the target cat state: (a + b)^2 / 2."""
        return (self.a + self.b) ** 2 / 2.0


@dataclass(frozen=True)
class BellDiagonalState:
    """Two-qubit Bell-diagonal state; weights packed like a 2-party DiagonalState.

    Index order: phi+ (0), phi- (1), psi+ (2), psi- (3).
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (4,):
            raise ValueError(f"expected 4 weights, got shape {w.shape}")
        if w.min() < -WEIGHT_TOL:
            raise ValueError(f"negative weight {w.min()}")
        np.clip(w, 0.0, None, out=w)
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def fidelity(self) -> float:
        return float(self.weights[0])

    def as_diagonal(self) -> DiagonalState:
        return DiagonalState(2, self.weights)

    @classmethod
    def from_diagonal(cls, state: DiagonalState) -> "BellDiagonalState":
        if state.n_parties != 2:
            raise ValueError("only 2-party states are Bell diagonal")
        return cls(state.weights)


def make_werner(n_parties: int, x: float) -> DiagonalState:
    """Mixture x |phi+><phi+| + (1 - x)/2^N * identity.

    The resulting fidelity is x + (1 - x)/2^N.
    """
    _check_n_parties(n_parties)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"mixing parameter x must lie in [0, 1], got {x}")
    dim = n_labels(n_parties)
    w = np.full(dim, (1.0 - x) / dim)
    w[0] += x
    return DiagonalState(n_parties, w)


def make_binary_mixture(n_parties: int, f: float) -> DiagonalState:
    """Mixture of the target cat state (weight f) and its sign-flipped partner."""
    _check_n_parties(n_parties)
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {f}")
    w = np.zeros(n_labels(n_parties))
    w[0] = f
    w[1] = 1.0 - f
    return DiagonalState(n_parties, w)


def make_zero_pairing(n_parties: int, f: float) -> DiagonalState:
    """Target weight f, zero weight on the sign-flipped partner, rest uniform."""
    _check_n_parties(n_parties)
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {f}")
    dim = n_labels(n_parties)
    w = np.full(dim, (1.0 - f) / (dim - 2))
    w[0] = f
    w[1] = 0.0
    return DiagonalState(n_parties, w)


def mcnot_labels(
    control: GhzLabel, target: GhzLabel, n_parties: int | None = None
) -> tuple[GhzLabel, GhzLabel]:
    """Image of a cat-basis product label under the party-wise CNOT.

    Every party applies a CNOT from its qubit in the control copy to its
    qubit in the target copy.  The gate permutes cat-basis products:

        (k1, s1), (k2, s2)  ->  (k1, s1 ^ s2), (k1 ^ k2, s2)

    When ``n_parties`` is given both labels are range-checked against it.
    """
    if n_parties is not None:
        _check_label(control, n_parties)
        _check_label(target, n_parties)
    return (
        GhzLabel(control.k, control.s ^ target.s),
        GhzLabel(control.k ^ target.k, target.s),
    )


def pauli_act(label: GhzLabel, paulis: str) -> GhzLabel:
    """Image of a cat-basis label under a per-party Pauli string.

    Global phases are dropped; only the label matters for diagonal-state
    bookkeeping.  On party 1, X complements k and Z flips s; on party
    i > 1, X toggles that party's bit of k and Z flips s.  Y acts as X
    followed by Z on its party.
    """
    n = len(paulis)
    _check_n_parties(n)
    _check_label(label, n)
    k, s = label.k, label.s
    comp = (1 << (n - 1)) - 1
    for party, op in enumerate(paulis.upper()):
        if op == "I":
            continue
        if op not in "XYZ":
            raise ValueError(f"unknown Pauli {op!r} at position {party}")
        if op in "XY":
            if party == 0:
                k ^= comp
            else:
                k ^= 1 << (n - 1 - party)
        if op in "ZY":
            s ^= 1
    return GhzLabel(k, s)
