"""Distillation toolkit for N-party cat-state (GHZ-class) entanglement.

Two multilateral recurrence steps (a parity step P1 and an agreement step
P2) act on states diagonal in the N-party cat basis.  The package provides
exact fast maps for both steps, a dense density-operator simulator that
runs the same circuits literally as ground truth, an indirect route that
reduces an N-party state to Bell pairs, purifies them (DEJMPS or BBPSSW)
and reassembles the cat state, plus threshold-search and efficiency
tooling with a command-line interface.
"""
from .states import (
    BellDiagonalState,
    DiagonalState,
    GhzLabel,
    PureCatState,
    fidelity,
    make_binary_mixture,
    make_werner,
    make_zero_pairing,
    mcnot_labels,
    n_labels,
    pauli_act,
)
from .dense import (
    DensityOperator,
    EnsembleAnnihilated,
    MeasurementRecord,
    Step,
    chi_measure_reduce,
    embed_diagonal,
    ghz_decompose,
    recombine_ghz,
    run_protocol_step_dense,
)
from .protocols import (
    Outcome,
    PurificationTrace,
    Schedule,
    efficiency,
    get_tables,
    iterate,
    p1_map,
    p2_map,
    run_pure_experiment,
)
from .indirect import (
    IndirectTrace,
    column_b_limit,
    indirect_pipeline,
    two_particle_step,
)
from .analysis import (
    StateFamily,
    ThresholdResult,
    channel_global_depolarize,
    channel_local_pauli,
    efficiency_sweep,
    find_indirect_threshold,
    find_threshold,
    make_perturbed_werner,
    reduced_fidelity_formula,
)

__version__ = "0.1.0"
