"""Dense density-operator simulator: reference semantics for every protocol step.

Executes the recurrence circuits literally, gate by projective measurement,
on explicit matrices.  Everything in scope (Hadamard, CNOT, z measurements,
X/Z sign factors) is a real map, so matrices are stored as float64; this
halves memory and keeps a two-copy six-party register (4096 x 4096) near
130 MB.  Qubit 0 is the most significant bit of the basis index, and party
i holds qubit i.

This module is the ground truth that the fast diagonal maps in
:mod:`ghzpurify.protocols` are checked against.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

from .states import BellDiagonalState, DiagonalState, n_labels

__all__ = [
    "Step",
    "DensityOperator",
    "MeasurementRecord",
    "EnsembleAnnihilated",
    "ghz_basis",
    "embed_diagonal",
    "ghz_decompose",
    "apply_hadamard",
    "apply_cnot",
    "apply_pauli_x",
    "apply_pauli_z",
    "measure_z",
    "partial_trace",
    "protocol_step",
    "run_protocol_step_dense",
    "chi_measure_reduce",
    "attach_pair",
    "recombine_ghz",
]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
# Branch probabilities below this are numerical noise and treated as zero.
PROB_CUTOFF = 1e-14
# Two-copy registers above this party count do not fit in memory.
MAX_TWO_COPY_PARTIES = 7

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


class Step(enum.Enum):
    """The two recurrence steps.

    P1: Hadamard on every qubit of both copies, party-wise CNOT from the
    control copy to the target copy, z measurement of all target qubits
    keeping even-parity outcomes, then Hadamard on the control qubits.

    P2: party-wise CNOT and z measurement of all target qubits keeping
    only the all-equal outcomes.
    """

    P1 = "p1"
    P2 = "p2"


class EnsembleAnnihilated(RuntimeError):
    """A protocol step kept no measurement outcome (keep probability zero)."""


@dataclass(frozen=True)
class DensityOperator:
    """Real dense density matrix on ``n_qubits`` qubits."""

    matrix: np.ndarray
    n_qubits: int

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "DensityOperator":
        m = np.array(matrix, dtype=np.float64)
        dim = m.shape[0]
        if m.ndim != 2 or m.shape[1] != dim or dim & (dim - 1):
            raise ValueError(f"expected a square power-of-two matrix, got {m.shape}")
        if np.abs(m - m.T).max() > HERMITICITY_TOL:
            raise ValueError("matrix is not symmetric within tolerance")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {np.trace(m)}, expected 1")
        m.setflags(write=False)
        return cls(m, dim.bit_length() - 1)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def _wrap(matrix: np.ndarray, n_qubits: int) -> DensityOperator:
    # Internal constructor for matrices produced by trace-preserving maps.
    matrix.setflags(write=False)
    return DensityOperator(matrix, n_qubits)


@dataclass(frozen=True)
class MeasurementRecord:
    """One z-measurement branch: outcome bits, Born probability, collapsed state."""

    outcome: str
    probability: float
    post_state: DensityOperator


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise ValueError(f"qubit index {q} out of range for {n} qubits")


def _apply_1q(m: np.ndarray, gate: np.ndarray, q: int, n: int) -> np.ndarray:
    """Conjugate by a real single-qubit gate using tensor reshapes."""
    d = 1 << n
    left = 1 << q
    t = m.reshape(left, 2, -1)
    t = np.einsum("ab,lbx->lax", gate, t)
    t = t.reshape(d, left, 2, -1)
    t = np.einsum("ab,clbx->clax", gate, t)
    return np.ascontiguousarray(t.reshape(d, d))


def _bitflip_perm(n: int, q: int) -> np.ndarray:
    return np.arange(1 << n) ^ (1 << (n - 1 - q))


def _cnot_perm(n: int, control: int, target: int) -> np.ndarray:
    x = np.arange(1 << n)
    cbit = (x >> (n - 1 - control)) & 1
    return x ^ (cbit << (n - 1 - target))


def apply_hadamard(rho: DensityOperator, qubit: int) -> DensityOperator:
    """Conjugate by a Hadamard on one qubit."""
    _check_qubit(qubit, rho.n_qubits)
    return _wrap(_apply_1q(rho.matrix, _H, qubit, rho.n_qubits), rho.n_qubits)


def apply_cnot(rho: DensityOperator, control: int, target: int) -> DensityOperator:
    """Conjugate by a CNOT between two qubits."""
    _check_qubit(control, rho.n_qubits)
    _check_qubit(target, rho.n_qubits)
    if control == target:
        raise ValueError("control and target must differ")
    perm = _cnot_perm(rho.n_qubits, control, target)
    return _wrap(rho.matrix[np.ix_(perm, perm)], rho.n_qubits)


def apply_pauli_x(rho: DensityOperator, qubit: int) -> DensityOperator:
    _check_qubit(qubit, rho.n_qubits)
    perm = _bitflip_perm(rho.n_qubits, qubit)
    return _wrap(rho.matrix[np.ix_(perm, perm)], rho.n_qubits)


def apply_pauli_z(rho: DensityOperator, qubit: int) -> DensityOperator:
    _check_qubit(qubit, rho.n_qubits)
    n = rho.n_qubits
    sign = 1.0 - 2.0 * ((np.arange(1 << n) >> (n - 1 - qubit)) & 1)
    return _wrap(rho.matrix * np.outer(sign, sign), n)


def measure_z(rho: DensityOperator, qubit_indices) -> list[MeasurementRecord]:
    """Measure the given qubits in the z basis.

    Returns one record per outcome bitstring with its Born probability and
    the renormalised collapsed state on the full register.  Outcomes with
    probability below ``PROB_CUTOFF`` are omitted.
    """
    n = rho.n_qubits
    idxs = list(qubit_indices)
    if len(set(idxs)) != len(idxs):
        raise ValueError("measured qubit indices must be distinct")
    for q in idxs:
        _check_qubit(q, n)
    d = 1 << n
    x = np.arange(d)
    diag = np.diag(rho.matrix)
    records = []
    for o in range(1 << len(idxs)):
        sel = np.ones(d, dtype=bool)
        for pos, q in enumerate(idxs):
            want = (o >> (len(idxs) - 1 - pos)) & 1
            sel &= ((x >> (n - 1 - q)) & 1) == want
        p = float(diag[sel].sum())
        if p < PROB_CUTOFF:
            continue
        post = np.zeros_like(rho.matrix)
        ix = np.ix_(sel, sel)
        post[ix] = rho.matrix[ix] / p
        records.append(MeasurementRecord(format(o, f"0{len(idxs)}b"), p, _wrap(post, n)))
    return records


def partial_trace(rho: DensityOperator, keep_indices) -> DensityOperator:
    """Reduced operator on the kept qubits (in ascending original order)."""
    n = rho.n_qubits
    keep = sorted(set(keep_indices))
    if not keep:
        raise ValueError("must keep at least one qubit")
    for q in keep:
        _check_qubit(q, n)
    drop = sorted(set(range(n)) - set(keep), reverse=True)
    m = rho.matrix
    cur = n
    for q in drop:
        left = 1 << q
        right = (1 << cur) >> (q + 1)
        t = m.reshape(left, 2, right, left, 2, right)
        m = np.einsum("aibcid->abcd", t).reshape(1 << (cur - 1), 1 << (cur - 1))
        cur -= 1
    return _wrap(np.ascontiguousarray(m), cur)


@functools.lru_cache(maxsize=None)
def ghz_basis(n_parties: int) -> np.ndarray:
    """Orthogonal matrix whose column (k << 1) | s is the cat-basis vector."""
    dim = n_labels(n_parties)
    half = dim >> 1
    comp = half - 1
    b = np.zeros((dim, dim))
    amp = 1.0 / np.sqrt(2.0)
    for k in range(half):
        for s in (0, 1):
            col = (k << 1) | s
            b[k, col] = amp
            b[half + (k ^ comp), col] = -amp if s else amp
    b.setflags(write=False)
    return b


def embed_diagonal(state: DiagonalState) -> DensityOperator:
    """Computational-basis matrix of a cat-basis diagonal state."""
    b = ghz_basis(state.n_parties)
    return _wrap((b * state.weights) @ b.T, state.n_parties)


def ghz_decompose(rho: DensityOperator) -> tuple[DiagonalState, float]:
    """Cat-basis diagonal weights plus the Frobenius norm of the remainder.

    The residue is the off-diagonal Frobenius norm in the cat basis; it is
    zero exactly when the operator is diagonal there.
    """
    b = ghz_basis(rho.n_qubits)
    m = b.T @ rho.matrix @ b
    w = np.diag(m).copy()
    off = m - np.diag(w)
    residue = float(np.linalg.norm(off))
    w[(w < 0.0) & (w > -HERMITICITY_TOL)] = 0.0
    return DiagonalState(rho.n_qubits, w / w.sum()), residue


def _parity_mask(dim: int) -> np.ndarray:
    x = np.arange(dim)
    parity = np.zeros(dim, dtype=np.int64)
    while x.any():
        parity ^= x & 1
        x >>= 1
    return parity == 0


def protocol_step(rho: DensityOperator, step: Step) -> tuple[DensityOperator, float]:
    """One recurrence step consuming two copies of ``rho``, run gate by gate.

    Builds rho (x) rho on a 2N-qubit register (controls first, targets
    second), applies the step circuit, measures every target qubit in z,
    and averages the kept branches into a single renormalised ensemble
    state on the control copy.

    Returns the kept state and the total keep probability.

    Raises
    ------
    EnsembleAnnihilated
        If no outcome satisfies the keep rule.
    """
    n = rho.n_qubits
    if n > MAX_TWO_COPY_PARTIES:
        raise ValueError(
            f"two-copy dense simulation refused above N={MAX_TWO_COPY_PARTIES} "
            f"parties (got N={n}); use the fast diagonal maps instead"
        )
    n2 = 2 * n
    m = np.kron(rho.matrix, rho.matrix)
    if step is Step.P1:
        for q in range(n2):
            m = _apply_1q(m, _H, q, n2)
    # Party-wise CNOT, control copy -> target copy, fused into one
    # permutation: the target block of the index is XORed with the control
    # block.
    x = np.arange(1 << n2)
    perm = x ^ (x >> n)
    m = m[np.ix_(perm, perm)]
    dim = 1 << n
    blocks = np.einsum("atbt->tab", m.reshape(dim, dim, dim, dim))
    if step is Step.P1:
        kept = _parity_mask(dim)
    else:
        kept = np.zeros(dim, dtype=bool)
        kept[0] = True
        kept[dim - 1] = True
    out = blocks[kept].sum(axis=0)
    keep = float(np.trace(out))
    if keep < PROB_CUTOFF:
        raise EnsembleAnnihilated(f"step {step.value} kept no outcome")
    out = out / keep
    if step is Step.P1:
        for q in range(n):
            out = _apply_1q(out, _H, q, n)
    return _wrap(out, n), keep


def run_protocol_step_dense(
    state: DiagonalState, step: Step
) -> tuple[DiagonalState, float, float]:
    """Literal-circuit protocol step on a diagonal state.

    Returns the cat-diagonal part of the averaged kept state, the keep
    probability, and the off-diagonal residue of that state.
    """
    out, keep = protocol_step(embed_diagonal(state), step)
    diag, residue = ghz_decompose(out)
    return diag, keep, residue


def _project_out_qubit(m: np.ndarray, n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Both z-projection blocks of qubit ``q``, with the qubit removed."""
    left = 1 << q
    right = (1 << n) >> (q + 1)
    half = 1 << (n - 1)
    t = m.reshape(left, 2, right, left, 2, right)
    b0 = t[:, 0, :, :, 0, :].reshape(half, half)
    b1 = t[:, 1, :, :, 1, :].reshape(half, half)
    return b0, b1


def chi_measure_reduce(
    state: DiagonalState,
    measured_party: int | None = None,
    keep_party: int | None = None,
) -> BellDiagonalState:
    """Reduce an N-party diagonal state to a Bell-diagonal pair.

    Every party except party 0 and one partner measures its qubit in the
    (|0> +- |1>)/sqrt(2) basis; each "-" outcome is compensated by a sign
    flip (Z) on party 0, after which the measured qubit is traced out.
    Repeats until two parties remain and returns the surviving pair's
    Bell-diagonal weights.

    ``measured_party`` names the first party measured; ``keep_party``
    names the surviving partner (default: the lowest-index party that is
    not measured first).
    """
    n = state.n_parties
    if n < 3:
        raise ValueError("reduction needs at least 3 parties")
    if keep_party is None:
        if measured_party is None:
            keep_party = 1
        else:
            keep_party = 1 if measured_party != 1 else 2
    if not 1 <= keep_party < n:
        raise ValueError(f"keep_party {keep_party} out of range")
    measured = [p for p in range(1, n) if p != keep_party]
    if measured_party is not None:
        if measured_party not in measured:
            raise ValueError(
                f"measured_party {measured_party} is not a measurable party"
            )
        measured.remove(measured_party)
        measured.insert(0, measured_party)
    m = embed_diagonal(state).matrix
    parties = list(range(n))
    for party in measured:
        nq = len(parties)
        q = parties.index(party)
        m = _apply_1q(m, _H, q, nq)
        b0, b1 = _project_out_qubit(m, nq, q)
        # "-" outcome: sign flip on party 0, which stays at qubit 0.
        nq -= 1
        sign = 1.0 - 2.0 * ((np.arange(1 << nq) >> (nq - 1)) & 1)
        m = b0 + b1 * np.outer(sign, sign)
        parties.remove(party)
    diag, residue = ghz_decompose(_wrap(np.ascontiguousarray(m), 2))
    if residue > 1e-9:
        raise RuntimeError(f"reduction left unexpected coherence ({residue})")
    return BellDiagonalState(diag.weights)


def attach_pair(rho: DensityOperator, pair: BellDiagonalState) -> DensityOperator:
    """CNOT-merge a Bell pair held by party 0 and a new party onto ``rho``.

    Party 0 applies a CNOT from its qubit of ``rho`` to its qubit of the
    pair, measures the latter in z, and the new party flips its qubit when
    the outcome is 1.  The measured qubit is traced out, so the register
    grows by one qubit (the new party, appended last).
    """
    n = rho.n_qubits
    pm = embed_diagonal(pair.as_diagonal()).matrix
    m = np.kron(rho.matrix, pm)
    nq = n + 2
    perm = _cnot_perm(nq, 0, n)
    m = m[np.ix_(perm, perm)]
    b0, b1 = _project_out_qubit(m, nq, n)
    # Outcome 1: bit flip on the new party, now the last qubit.
    flip = np.arange(1 << (nq - 1)) ^ 1
    m = b0 + b1[np.ix_(flip, flip)]
    return _wrap(np.ascontiguousarray(m), n + 1)


def recombine_ghz(pair_ab: BellDiagonalState, pair_ac: BellDiagonalState) -> DiagonalState:
    """Merge two Bell pairs sharing party 0 into a three-party diagonal state."""
    out = attach_pair(embed_diagonal(pair_ab.as_diagonal()), pair_ac)
    diag, _ = ghz_decompose(out)
    return diag
