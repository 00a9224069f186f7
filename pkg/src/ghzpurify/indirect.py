"""Purification via Bell pairs: reduce an N-party state to two-particle
states, purify those with a standard recurrence (DEJMPS or BBPSSW), and
reassemble the cat state.

One final N-party state costs N-1 purified pairs, so the route's
efficiency is normalised by 1/(N-1) when compared against the direct
protocols.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import dense
from .dense import EnsembleAnnihilated
from .protocols import DIVERGENCE_WINDOW, Outcome
from .states import BellDiagonalState, DiagonalState

__all__ = [
    "VARIANTS",
    "two_particle_step",
    "PairTrace",
    "purify_pair",
    "IndirectTrace",
    "indirect_pipeline",
    "column_b_limit",
]

VARIANTS = ("dejmps", "bbpssw")


def two_particle_step(
    state: BellDiagonalState, variant: str = "dejmps"
) -> tuple[BellDiagonalState, float]:
    """One recurrence step of a two-particle purification protocol.

    DEJMPS conjugates both pairs by the +-pi/2 X rotations, whose only
    effect on Bell-diagonal weights is to swap phi- and psi-, then applies
    the bilateral CNOT with the equal-outcomes keep rule.  BBPSSW instead
    twirls the input to an equal-fidelity isotropic (Werner) pair first.
    Both are validated against the dense two-pair circuit in the tests.
    """
    w = state.weights
    if variant == "dejmps":
        v0, v1, v2, v3 = w[0], w[3], w[2], w[1]
    elif variant == "bbpssw":
        u = (1.0 - w[0]) / 3.0
        v0, v1, v2, v3 = w[0], u, u, u
    else:
        raise ValueError(f"unknown two-particle variant {variant!r}")
    out = np.array(
        [v0 * v0 + v1 * v1, 2.0 * v0 * v1, v2 * v2 + v3 * v3, 2.0 * v2 * v3]
    )
    keep = (v0 + v1) ** 2 + (v2 + v3) ** 2
    if keep < dense.PROB_CUTOFF:
        raise EnsembleAnnihilated("two-particle step kept no outcome")
    return BellDiagonalState(out / keep), float(keep)


@dataclass(frozen=True)
class PairTrace:
    """Iteration record of one purified pair."""

    initial: BellDiagonalState
    final: BellDiagonalState
    keep_probs: tuple[float, ...]
    outcome: Outcome

    @property
    def iterations(self) -> int:
        return len(self.keep_probs)

    @property
    def survival(self) -> float:
        p = 1.0
        for k in self.keep_probs:
            p *= k
        return p

    @property
    def efficiency(self) -> float:
        return self.survival / (2.0 ** self.iterations)


def purify_pair(
    pair: BellDiagonalState,
    accuracy: float = 1e-7,
    variant: str = "dejmps",
    max_iterations: int = 200,
) -> PairTrace:
    """Iterate the two-particle recurrence until 1 - fidelity < accuracy."""
    f0 = pair.fidelity
    cur = pair
    keeps: list[float] = []
    if 1.0 - f0 < accuracy:
        return PairTrace(pair, pair, (), Outcome.CONVERGED)
    f_prev = f0
    stall = 0
    outcome = Outcome.MAX_ITERATIONS
    for _ in range(max_iterations):
        try:
            cur, keep = two_particle_step(cur, variant)
        except EnsembleAnnihilated:
            outcome = Outcome.ANNIHILATED
            break
        keeps.append(keep)
        f = cur.fidelity
        if 1.0 - f < accuracy:
            outcome = Outcome.CONVERGED
            break
        if f <= f_prev and f < f0:
            stall += 1
            if stall >= DIVERGENCE_WINDOW:
                outcome = Outcome.DIVERGED
                break
        else:
            stall = 0
        f_prev = f
    return PairTrace(pair, cur, tuple(keeps), outcome)


@dataclass(frozen=True)
class IndirectTrace:
    """Full record of the reduce / purify pairs / reassemble pipeline.

    ``normalized_efficiency`` divides the bottleneck per-pair efficiency
    P_J / 2^J by N - 1; ``normalized_survival`` is the same with the 2^J
    factor dropped (both conventions are reported since the ensemble cost
    of an iteration can be argued either way).
    """

    n_parties: int
    variant: str
    accuracy: float
    reduced_pairs: tuple[BellDiagonalState, ...]
    pair_traces: tuple[PairTrace, ...]
    outcome: Outcome
    recombined_state: DiagonalState | None = None

    @property
    def recombined_fidelity(self) -> float | None:
        return None if self.recombined_state is None else self.recombined_state.fidelity

    @property
    def iterations(self) -> int:
        return max(t.iterations for t in self.pair_traces)

    @property
    def pair_efficiency(self) -> float:
        return min(t.efficiency for t in self.pair_traces)

    @property
    def pair_survival(self) -> float:
        return min(t.survival for t in self.pair_traces)

    @property
    def normalized_efficiency(self) -> float:
        return self.pair_efficiency / (self.n_parties - 1)

    @property
    def normalized_survival(self) -> float:
        return self.pair_survival / (self.n_parties - 1)


def indirect_pipeline(
    state: DiagonalState,
    accuracy: float = 1e-7,
    variant: str = "dejmps",
    max_iterations: int = 200,
) -> IndirectTrace:
    """Purify an N-party diagonal state through two-particle purification.

    The ensemble is split into N - 1 sub-ensembles; sub-ensemble i is
    reduced to the Bell pair shared by party 0 and party i, each pair is
    purified independently, and the purified pairs are merged back into an
    N-party state by party 0's CNOT cascade.  The pipeline reports
    ``Outcome.DIVERGED`` if any reduced pair fails to purify.
    """
    n = state.n_parties
    if n < 3:
        raise ValueError("the indirect route needs at least 3 parties")
    pairs = tuple(
        dense.chi_measure_reduce(state, keep_party=i) for i in range(1, n)
    )
    traces = tuple(
        purify_pair(p, accuracy=accuracy, variant=variant, max_iterations=max_iterations)
        for p in pairs
    )
    if any(t.outcome is not Outcome.CONVERGED for t in traces):
        return IndirectTrace(n, variant, accuracy, pairs, traces, Outcome.DIVERGED)
    rho = dense.embed_diagonal(traces[0].final.as_diagonal())
    for t in traces[1:]:
        rho = dense.attach_pair(rho, t.final)
    recombined, _ = dense.ghz_decompose(rho)
    return IndirectTrace(
        n, variant, accuracy, pairs, traces, Outcome.CONVERGED, recombined
    )


def column_b_limit(n_parties: int) -> Fraction:
    """Exact fidelity limit of the two-particle route for isotropic inputs.

    The reduced pair of an N-party isotropic state is purifiable exactly
    when its fidelity exceeds 1/2, which translates to
    (2^(N-1) + 1) / (3 * 2^(N-1)) on the N-party fidelity; the limit tends
    to 1/3 for large N.
    """
    if n_parties < 2:
        raise ValueError("need at least 2 parties")
    half = 2 ** (n_parties - 1)
    return Fraction(half + 1, 3 * half)
