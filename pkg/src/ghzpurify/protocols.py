"""Fast protocol engine: exact quadratic maps on diagonal states plus the
iteration driver and efficiency bookkeeping.

Each recurrence step consumes two identical copies of the ensemble state.
Both steps send cat-basis product labels to cat-basis product labels, so on
diagonal states they act as quadratic maps  w' ~ T (w (x) w).  The
agreement step (P2) follows in closed form from the label algebra.  The
parity step (P1) is precomputed by simulating every pure label pair on the
dense two-copy register; the resulting table is accepted only after a
randomized diagonality self-test and the engine falls back to literal
dense simulation otherwise.
"""
from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, dense
from .dense import EnsembleAnnihilated, Step
from .states import DiagonalState, GhzLabel, mcnot_labels, n_labels

__all__ = [
    "Step",
    "Outcome",
    "Schedule",
    "StepRecord",
    "PurificationTrace",
    "PairMap",
    "ProtocolTables",
    "get_tables",
    "p1_map",
    "p2_map",
    "iterate",
    "run_pure_experiment",
    "efficiency",
]

# Consecutive non-improving steps below the initial fidelity before a run
# is declared divergent; near-threshold dynamics are slow, a single drop
# misclassifies.
DIVERGENCE_WINDOW = 20

_SELFTEST_MIXTURES = 50
_SELFTEST_RESIDUE_TOL = 1e-10
_SELFTEST_DEVIATION_TOL = 1e-9
_SELFTEST_SEED = 0x5EED
# Simulated pair weights below this are roundoff from dropped branches.
_TABLE_FLOOR = 1e-24


class Outcome(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    ANNIHILATED = "annihilated"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class Schedule:
    """Cyclic step sequence with the convergence accuracy and iteration cap."""

    steps: tuple[Step, ...] = (Step.P1, Step.P2)
    accuracy: float = 1e-7
    max_iterations: int = 200

    def __post_init__(self):
        if not self.steps:
            raise ValueError("schedule needs at least one step")
        if not 0.0 < self.accuracy < 1.0:
            raise ValueError(f"accuracy must lie in (0, 1), got {self.accuracy}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @classmethod
    def parse(cls, spec: str, accuracy: float = 1e-7, max_iterations: int = 200) -> "Schedule":
        """Parse "p1", "p2", "p1p2" or an explicit cycle like "p1,p1,p2"."""
        text = spec.strip().lower()
        if text == "p1p2":
            steps = (Step.P1, Step.P2)
        else:
            parts = text.split(",") if "," in text else [text]
            try:
                steps = tuple(Step(p.strip()) for p in parts)
            except ValueError:
                raise ValueError(f"unknown schedule {spec!r}") from None
        return cls(steps, accuracy, max_iterations)

    @property
    def label(self) -> str:
        if self.steps == (Step.P1, Step.P2):
            return "p1p2"
        return ",".join(s.value for s in self.steps)


@dataclass(frozen=True)
class StepRecord:
    kind: Step
    fidelity: float
    keep_prob: float


@dataclass(frozen=True)
class PurificationTrace:
    """Per-iteration record of one purification run."""

    n_parties: int
    schedule: Schedule
    initial_fidelity: float
    records: tuple[StepRecord, ...]
    outcome: Outcome
    final_state: DiagonalState | None = None
    final_operator: dense.DensityOperator | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def fidelity(self) -> float:
        return self.records[-1].fidelity if self.records else self.initial_fidelity

    @property
    def survival(self) -> float:
        """Cumulative keep probability, the product over all iterations."""
        p = 1.0
        for r in self.records:
            p *= r.keep_prob
        return p

    @property
    def efficiency(self) -> float:
        """survival / 2^iterations (each iteration halves the ensemble)."""
        return self.survival / (2.0 ** self.iterations)


def efficiency(trace: PurificationTrace) -> float:
    """Efficiency of a converged run; raises for any other outcome."""
    if trace.outcome is not Outcome.CONVERGED:
        raise ValueError(f"efficiency undefined for outcome {trace.outcome.value}")
    return trace.efficiency


@dataclass(frozen=True)
class PairMap:
    """Quadratic label-pair map in compressed form.

    ``keep_w[p]`` is the kept weight and ``out_idx[p]`` the output label of
    the ordered pair p = l1 * 2^N + l2.  ``dense_t`` holds the full
    (pairs x labels) tensor instead if any simulated pair spread over more
    than one output label (not expected; kept as a guard).
    """

    n_parties: int
    keep_w: np.ndarray
    out_idx: np.ndarray
    dense_t: np.ndarray | None = None

    def apply_raw(self, weights: np.ndarray) -> tuple[np.ndarray, float]:
        if self.dense_t is not None:
            kept = np.outer(weights, weights).ravel() @ self.dense_t
            return kept, float(kept.sum())
        return _kernels.pair_map(weights, self.keep_w, self.out_idx)


@dataclass(frozen=True)
class ProtocolTables:
    """Per-N pair maps plus the parity-step self-test verdict."""

    n_parties: int
    p1: PairMap
    p2: PairMap
    p1_fast_ok: bool
    p1_selftest_residue: float
    p1_selftest_deviation: float = 0.0


def _build_agreement_map(n: int) -> PairMap:
    # Closed form from the label algebra: the target copy of the pair
    # carries label (k1 ^ k2, s2) after the party-wise CNOT, and its z
    # outcomes are all equal exactly when k1 ^ k2 == 0 (then both the
    # all-0 and all-1 outcomes are kept, so the branch survives with
    # probability 1).  The kept control label is (k1, s1 ^ s2).
    dim = n_labels(n)
    keep_w = np.zeros(dim * dim)
    out_idx = np.zeros(dim * dim, dtype=np.int64)
    for i1 in range(dim):
        l1 = GhzLabel.from_index(i1)
        for i2 in range(dim):
            l2 = GhzLabel.from_index(i2)
            ctrl, tgt = mcnot_labels(l1, l2, n)
            if tgt.k == 0:
                p = i1 * dim + i2
                keep_w[p] = 1.0
                out_idx[p] = ctrl.index
    return PairMap(n, keep_w, out_idx)


def _hadamard_all(n: int) -> np.ndarray:
    h = np.array([[1.0]])
    single = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    for _ in range(n):
        h = np.kron(h, single)
    return h


def _build_parity_map(n: int) -> tuple[PairMap, np.ndarray]:
    """Simulate the parity step on every pure label pair.

    Returns the compressed map and the kept-branch amplitude array
    G[label, kept_outcome, pair] used by the diagonality self-test.
    """
    dim = n_labels(n)
    npairs = dim * dim
    n2 = 2 * n
    dim2 = 1 << n2
    basis = dense.ghz_basis(n)
    # Columns are the two-copy product vectors |l1> (x) |l2>.
    v = np.einsum("al,bm->ablm", basis, basis).reshape(dim2, npairs)
    hgate = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    for q in range(n2):
        left = 1 << q
        t = v.reshape(left, 2, -1, npairs)
        v = np.einsum("ab,lbrp->larp", hgate, t).reshape(dim2, npairs)
    x = np.arange(dim2)
    v = v[x ^ (x >> n)]
    # Split rows into (control index, target outcome); finish with the
    # control Hadamards and project onto the cat basis.
    v3 = v.reshape(dim, dim, npairs)
    y = np.tensordot(_hadamard_all(n), v3, axes=(1, 0))
    g = np.tensordot(basis.T, y, axes=(1, 0))
    kept = dense._parity_mask(dim)
    gk = np.ascontiguousarray(g[:, kept, :])
    t_raw = np.einsum("ltp,ltp->pl", gk, gk)
    keep_w = t_raw.sum(axis=1)
    out_idx = np.argmax(t_raw, axis=1).astype(np.int64)
    spread = keep_w - t_raw[np.arange(npairs), out_idx]
    if spread.max() > 1e-12:
        # Guard path: keep the full tensor if any pair is not concentrated
        # on a single output label.
        return PairMap(n, keep_w, out_idx, dense_t=t_raw), gk
    keep_w[keep_w < _TABLE_FLOOR] = 0.0
    out_idx[keep_w == 0.0] = 0
    return PairMap(n, keep_w, out_idx), gk


def _offdiag_residue(m: np.ndarray) -> float:
    off = m - np.diag(np.diag(m))
    return float(np.linalg.norm(off))


def _parity_selftest(n: int, pmap: PairMap, gk: np.ndarray) -> tuple[float, float]:
    """Randomized diagonality check of the simulated parity map.

    For each random mixture the averaged kept output is reconstructed from
    the branch amplitudes and its off-diagonal residue recorded; for small
    registers the literal dense circuit is run as well and compared against
    the fast map.
    """
    dim = n_labels(n)
    rng = np.random.default_rng(_SELFTEST_SEED + n)
    worst_residue = 0.0
    worst_dev = 0.0
    for _ in range(_SELFTEST_MIXTURES):
        w = rng.random(dim)
        w /= w.sum()
        wpair = np.outer(w, w).ravel()
        amp = (gk * np.sqrt(wpair)).reshape(dim, -1)
        m = amp @ amp.T
        keep = float(np.trace(m))
        worst_residue = max(worst_residue, _offdiag_residue(m / keep))
        raw, kfast = pmap.apply_raw(w)
        worst_dev = max(worst_dev, float(np.abs(raw / kfast - np.diag(m) / keep).max()))
        worst_dev = max(worst_dev, abs(kfast - keep))
        if n <= 4:
            diag, kdense, residue = dense.run_protocol_step_dense(
                DiagonalState(n, w), Step.P1
            )
            worst_residue = max(worst_residue, residue)
            worst_dev = max(worst_dev, float(np.abs(raw / kfast - diag.weights).max()))
            worst_dev = max(worst_dev, abs(kfast - kdense))
    return worst_residue, worst_dev


_TABLE_CACHE: dict[int, ProtocolTables] = {}
_TABLE_LOCK = threading.Lock()


def get_tables(n_parties: int) -> ProtocolTables:
    """Build (or fetch cached) pair maps for N parties."""
    with _TABLE_LOCK:
        tables = _TABLE_CACHE.get(n_parties)
        if tables is not None:
            return tables
        p2 = _build_agreement_map(n_parties)
        p1, gk = _build_parity_map(n_parties)
        residue, deviation = _parity_selftest(n_parties, p1, gk)
        ok = residue < _SELFTEST_RESIDUE_TOL and deviation < _SELFTEST_DEVIATION_TOL
        tables = ProtocolTables(n_parties, p1, p2, ok, residue, deviation)
        _TABLE_CACHE[n_parties] = tables
        return tables


def _normalise(n: int, raw: np.ndarray, keep: float) -> DiagonalState:
    if keep < dense.PROB_CUTOFF:
        raise EnsembleAnnihilated("step kept no outcome")
    return DiagonalState(n, raw / keep)


def p1_map(state: DiagonalState) -> tuple[DiagonalState, float]:
    """One parity step; falls back to the literal circuit if the
    simulated table failed its diagonality self-test."""
    tables = get_tables(state.n_parties)
    if not tables.p1_fast_ok:
        diag, keep, _ = dense.run_protocol_step_dense(state, Step.P1)
        return diag, keep
    raw, keep = tables.p1.apply_raw(state.weights)
    return _normalise(state.n_parties, raw, keep), float(keep)


def p2_map(state: DiagonalState) -> tuple[DiagonalState, float]:
    """One agreement step (always the exact closed form)."""
    tables = get_tables(state.n_parties)
    raw, keep = tables.p2.apply_raw(state.weights)
    return _normalise(state.n_parties, raw, keep), float(keep)


_STEP_FN = {Step.P1: p1_map, Step.P2: p2_map}


def iterate(state: DiagonalState, schedule: Schedule | None = None) -> PurificationTrace:
    """Run the schedule until convergence, divergence, annihilation or the cap.

    Convergence is 1 - fidelity < accuracy, checked after every step.
    Divergence is ``DIVERGENCE_WINDOW`` consecutive non-improving steps
    strictly below the initial fidelity.
    """
    if schedule is None:
        schedule = Schedule()
    f0 = state.fidelity
    records: list[StepRecord] = []
    if 1.0 - f0 < schedule.accuracy:
        return PurificationTrace(
            state.n_parties, schedule, f0, (), Outcome.CONVERGED, final_state=state
        )
    cur = state
    f_prev = f0
    stall = 0
    outcome = Outcome.MAX_ITERATIONS
    for j in range(schedule.max_iterations):
        kind = schedule.steps[j % len(schedule.steps)]
        try:
            cur, keep = _STEP_FN[kind](cur)
        except EnsembleAnnihilated:
            outcome = Outcome.ANNIHILATED
            break
        f = cur.fidelity
        records.append(StepRecord(kind, f, keep))
        if 1.0 - f < schedule.accuracy:
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
    return PurificationTrace(
        state.n_parties, schedule, f0, tuple(records), outcome, final_state=cur
    )


def run_pure_experiment(
    n_parties: int, a: float, schedule: Schedule | None = None
) -> PurificationTrace:
    """Purify an ensemble of the pure state a|00..0> + b|11..1> densely.

    The input is not cat-basis diagonal, so every step runs through the
    dense simulator; party counts above 6 are rejected.
    """
    if schedule is None:
        schedule = Schedule()
    if n_parties > 6:
        raise ValueError("dense-only pure-state runs are limited to N <= 6")
    if not 0.0 <= a <= 1.0 / math.sqrt(2.0) + 1e-12:
        raise ValueError(f"amplitude a must lie in [0, 1/sqrt(2)], got {a}")
    dim = n_labels(n_parties)
    psi = np.zeros(dim)
    psi[0] = a
    psi[dim - 1] = math.sqrt(max(0.0, 1.0 - a * a))
    rho = dense.DensityOperator.from_matrix(np.outer(psi, psi))
    target = dense.ghz_basis(n_parties)[:, 0]

    def fid(op: dense.DensityOperator) -> float:
        return float(target @ op.matrix @ target)

    f0 = fid(rho)
    records: list[StepRecord] = []
    if 1.0 - f0 < schedule.accuracy:
        return PurificationTrace(
            n_parties, schedule, f0, (), Outcome.CONVERGED, final_operator=rho
        )
    f_prev = f0
    stall = 0
    outcome = Outcome.MAX_ITERATIONS
    for j in range(schedule.max_iterations):
        kind = schedule.steps[j % len(schedule.steps)]
        try:
            rho, keep = dense.protocol_step(rho, kind)
        except EnsembleAnnihilated:
            outcome = Outcome.ANNIHILATED
            break
        f = fid(rho)
        records.append(StepRecord(kind, f, keep))
        if 1.0 - f < schedule.accuracy:
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
    return PurificationTrace(
        n_parties, schedule, f0, tuple(records), outcome, final_operator=rho
    )
