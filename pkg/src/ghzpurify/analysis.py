"""Threshold search, channel models, closed-form checks and efficiency sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dense, indirect, protocols
from .protocols import Outcome, Schedule
from .states import (
    DiagonalState,
    make_binary_mixture,
    make_werner,
    make_zero_pairing,
    n_labels,
    pauli_act,
    GhzLabel,
)

__all__ = [
    "StateFamily",
    "ThresholdResult",
    "find_threshold",
    "find_indirect_threshold",
    "channel_global_depolarize",
    "channel_local_pauli",
    "make_perturbed_werner",
    "reduced_fidelity_formula",
    "SweepPoint",
    "efficiency_sweep",
    "default_grid",
    "map_deviation_report",
]

FAMILY_KINDS = ("werner", "binary", "zero-pairing", "perturbed-werner")


def werner_x_for_fidelity(n_parties: int, f: float) -> float:
    """Mixing parameter of the isotropic state with target fidelity f."""
    dim = n_labels(n_parties)
    x = (dim * f - 1.0) / (dim - 1.0)
    if x < -1e-12 or x > 1.0 + 1e-12:
        raise ValueError(
            f"no isotropic state with fidelity {f} for {n_parties} parties"
        )
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class StateFamily:
    """A one-parameter family f -> diagonal state with fidelity f."""

    kind: str
    n_parties: int
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family {self.kind!r}")

    def make(self, f: float) -> DiagonalState:
        n = self.n_parties
        if self.kind == "werner":
            return make_werner(n, werner_x_for_fidelity(n, f))
        if self.kind == "binary":
            return make_binary_mixture(n, f)
        if self.kind == "zero-pairing":
            return make_zero_pairing(n, f)
        return make_perturbed_werner(n, f, self.jitter, self.seed)

    @property
    def f_floor(self) -> float:
        """Smallest representable fidelity (the maximally mixed point)."""
        return 1.0 / n_labels(self.n_parties)

    @property
    def label(self) -> str:
        if self.kind == "perturbed-werner":
            return f"perturbed-werner(jitter={self.jitter},seed={self.seed})"
        return self.kind


@dataclass(frozen=True)
class ThresholdResult:
    """Bisection bracket around the smallest purifiable fidelity."""

    n_parties: int
    family: str
    schedule: str
    threshold: float
    bracket: float
    iterations_used: int
    route: str = "direct"


def _bisect_threshold(
    family: StateFamily,
    predicate,
    bracket_tolerance: float,
    schedule_label: str,
    route: str,
) -> ThresholdResult:
    lo = family.f_floor
    hi = 1.0 - 1e-9
    probes = 0
    if not predicate(hi):
        raise ValueError(
            f"family {family.label} does not purify even at fidelity {hi}; "
            "no threshold exists for this configuration"
        )
    probes += 1
    if predicate(lo):
        raise ValueError(
            f"family {family.label} already purifies at the domain floor {lo}"
        )
    probes += 1
    while hi - lo > 2.0 * bracket_tolerance:
        mid = 0.5 * (lo + hi)
        probes += 1
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    # Re-check the bracket on emission.
    if not predicate(hi) or predicate(lo):
        raise RuntimeError("threshold bracket failed its emission re-check")
    probes += 2
    return ThresholdResult(
        family.n_parties,
        family.label,
        schedule_label,
        0.5 * (lo + hi),
        0.5 * (hi - lo),
        probes,
        route,
    )


def find_threshold(
    family: StateFamily,
    schedule: Schedule | None = None,
    bracket_tolerance: float = 1e-4,
) -> ThresholdResult:
    """Bisect the fidelity axis on "iterate(...) converges".

    ``Outcome.MAX_ITERATIONS`` counts as non-convergent; widen the
    schedule's iteration cap to probe slow near-threshold dynamics.
    """
    if schedule is None:
        schedule = Schedule()

    def converges(f: float) -> bool:
        trace = protocols.iterate(family.make(f), schedule)
        return trace.outcome is Outcome.CONVERGED

    return _bisect_threshold(
        family, converges, bracket_tolerance, schedule.label, "direct"
    )


def find_indirect_threshold(
    family: StateFamily,
    accuracy: float = 1e-7,
    variant: str = "dejmps",
    bracket_tolerance: float = 1e-4,
    max_iterations: int = 200,
) -> ThresholdResult:
    """Bisect on "the two-particle pipeline purifies every reduced pair"."""

    def converges(f: float) -> bool:
        trace = indirect.indirect_pipeline(
            family.make(f), accuracy=accuracy, variant=variant,
            max_iterations=max_iterations,
        )
        return trace.outcome is Outcome.CONVERGED

    return _bisect_threshold(
        family, converges, bracket_tolerance, f"indirect-{variant}", "indirect"
    )


def channel_global_depolarize(n_parties: int, x: float) -> DiagonalState:
    """Channel that leaves the register alone with probability x and
    replaces it by the maximally mixed state otherwise: exactly the
    isotropic state of parameter x."""
    return make_werner(n_parties, x)


def channel_local_pauli(n_parties: int, p: float) -> DiagonalState:
    """Independent per-party depolarising noise on the target cat state.

    Each party suffers {I: 1 - 3p/4, X: p/4, Y: p/4, Z: p/4}; the output
    stays cat-basis diagonal, so the channel is pure label bookkeeping.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarising probability must lie in [0, 1], got {p}")
    dim = n_labels(n_parties)
    w = np.zeros(dim)
    w[0] = 1.0
    for party in range(n_parties):
        perms = []
        for op in "XYZ":
            paulis = "".join(op if i == party else "I" for i in range(n_parties))
            perm = np.array(
                [pauli_act(GhzLabel.from_index(l), paulis).index for l in range(dim)],
                dtype=np.int64,
            )
            perms.append(perm)
        # Single-party Pauli actions are involutions, so the permutation
        # is its own inverse.
        w = (1.0 - 0.75 * p) * w + 0.25 * p * (w[perms[0]] + w[perms[1]] + w[perms[2]])
    return DiagonalState(n_parties, w)


def make_perturbed_werner(
    n_parties: int, f: float, jitter: float, seed: int
) -> DiagonalState:
    """Isotropic-like state with jittered background weights, fidelity pinned.

    Each non-target weight is multiplied by (1 + u) with u drawn uniformly
    from [-jitter, +jitter], then the background is rescaled so the state
    stays normalised with fidelity exactly f.  Deterministic in ``seed``.
    """
    if not 0.0 <= jitter < 1.0:
        raise ValueError(f"jitter must lie in [0, 1), got {jitter}")
    base = make_werner(n_parties, werner_x_for_fidelity(n_parties, f))
    w = base.weights.copy()
    rng = np.random.default_rng(seed)
    rest = w[1:] * (1.0 + rng.uniform(-jitter, jitter, size=w.size - 1))
    total = rest.sum()
    if total > 0.0:
        rest *= (1.0 - f) / total
    w[1:] = rest
    w[0] = f
    return DiagonalState(n_parties, w)


_REDUCED_FIDELITY_COEFFS = {3: (1, 6, 7), 4: (1, 4, 5), 5: (7, 24, 31), 6: (5, 16, 21)}


def reduced_fidelity_formula(n_parties: int, f: float) -> float:
    """Fidelity of the pair left after reducing an isotropic N-party state.

    Closed forms for N = 3..6: (1+6f)/7, (1+4f)/5, (7+24f)/31, (5+16f)/21.
    Other party counts are computed through the dense reduction.
    """
    coeffs = _REDUCED_FIDELITY_COEFFS.get(n_parties)
    if coeffs is None:
        state = make_werner(n_parties, werner_x_for_fidelity(n_parties, f))
        return dense.chi_measure_reduce(state).fidelity
    a, b, c = coeffs
    return (a + b * f) / c


@dataclass(frozen=True)
class SweepPoint:
    """One grid point of the direct-versus-indirect efficiency comparison."""

    f: float
    direct_eff: float
    indirect_eff: float
    direct_iterations: int
    indirect_iterations: int
    direct_survival: float
    indirect_survival: float
    direct_converged: bool
    indirect_converged: bool


def default_grid() -> np.ndarray:
    """Fidelity grid 0.40 .. 1.00 in steps of 0.05."""
    return np.round(np.arange(0.40, 1.0 + 1e-9, 0.05), 10)


def efficiency_sweep(
    family: StateFamily,
    f_grid,
    schedule: Schedule | None = None,
    variant: str = "dejmps",
) -> list[SweepPoint]:
    """Tabulate direct and indirect normalised efficiencies over a grid.

    Both routes run at the schedule's accuracy.  Direct normalised
    efficiency is survival / 2^J; the indirect one is the per-pair
    efficiency divided by N - 1.  Non-convergent points carry NaN
    efficiencies rather than raising.
    """
    if schedule is None:
        schedule = Schedule()
    n = family.n_parties
    rows = []
    for f in f_grid:
        f = float(f)
        trace = protocols.iterate(family.make(f), schedule)
        direct_ok = trace.outcome is Outcome.CONVERGED
        itrace = indirect.indirect_pipeline(
            family.make(f), accuracy=schedule.accuracy,
            max_iterations=schedule.max_iterations, variant=variant,
        )
        indirect_ok = itrace.outcome is Outcome.CONVERGED
        rows.append(
            SweepPoint(
                f,
                trace.efficiency if direct_ok else math.nan,
                itrace.normalized_efficiency if indirect_ok else math.nan,
                trace.iterations,
                itrace.iterations,
                trace.survival if direct_ok else math.nan,
                itrace.normalized_survival if indirect_ok else math.nan,
                direct_ok,
                indirect_ok,
            )
        )
    return rows


def map_deviation_report(
    n_parties: int,
    samples: int,
    seed: int,
    tables: protocols.ProtocolTables | None = None,
) -> tuple[float, float, np.ndarray | None]:
    """Max deviation of the fast maps from the dense circuits on random states.

    Returns (max weight deviation, max keep-probability deviation, worst
    state weights).  Intended for party counts <= 4 where the dense runs
    stay cheap.
    """
    if n_parties > 4:
        raise ValueError("dense cross-checks are limited to N <= 4")
    if tables is None:
        tables = protocols.get_tables(n_parties)
    rng = np.random.default_rng(seed)
    dim = n_labels(n_parties)
    worst_w = 0.0
    worst_k = 0.0
    worst_state = None
    for _ in range(samples):
        w = rng.random(dim)
        w /= w.sum()
        state = DiagonalState(n_parties, w)
        for step, pmap in ((dense.Step.P1, tables.p1), (dense.Step.P2, tables.p2)):
            ref, kref, _ = dense.run_protocol_step_dense(state, step)
            raw, kfast = pmap.apply_raw(w)
            dev_w = float(np.abs(raw / kfast - ref.weights).max())
            dev_k = abs(kfast - kref)
            if dev_w > worst_w or dev_k > worst_k:
                worst_state = w
            worst_w = max(worst_w, dev_w)
            worst_k = max(worst_k, dev_k)
    return worst_w, worst_k, worst_state
