"""Finite-volume strong topological invariants via spectral localizers.

Pipeline: build a tight-binding model on a finite window (`operators`,
`lattice`), optionally disorder and spectrally flatten it, pair it with a
position-space Dirac operator (`dirac`, `clifford`), and read the index off
the localizer's matrix structure (`localizer`, `linalg`): half-signature for
the integer classes, normalized Pfaffian sign for AII in two dimensions.
`experiments` drives ensembles, offset checks, interfaces, and convergence
scans; `cli` exposes them as a command line.
"""

from .clifford import CliffordRep, build_clifford_rep, clifford_vector, symmetry_ops
from .dirac import DiracData, WindowExhausted, ball_projection, commutator_norm, d0_values, dirac_matrix
from .lattice import OffsetError, Pattern, Region, build_cubic_window, check_offset, load_pattern_csv, sites_in_ball
from .linalg import (
    GapFloorError,
    SingularPfaffianError,
    StructuredMatrix,
    StructureError,
    inertia,
    ldl_inertia,
    pfaffian_sign,
    symmetric_unitary_sqrt,
)
from .localizer import (
    AdmissibleParams,
    IndexUndefinedError,
    IndexValue,
    LocalizerConfig,
    LocalizerMatrix,
    admissible_params,
    assemble_even,
    assemble_odd,
    assemble_skew_aii,
    evaluate_index,
    export_localizer,
    localizer_gap_check,
)
from .operators import (
    BlockOperator,
    DisorderSpec,
    FlattenedHamiltonian,
    SymmetryData,
    SymmetryViolation,
    ZeroModeError,
    apply_disorder,
    build_model,
    decay_diagnostic,
    spectral_flatten,
    standard_symmetry_ops,
    verify_symmetry,
)
from .experiments import (
    InterfaceSpec,
    ResultTable,
    SweepSpec,
    convergence_study,
    derive_seed,
    interface_probe,
    offset_invariance,
    run_point,
    sweep,
    wilson_interval,
)

__version__ = "0.1.0"
