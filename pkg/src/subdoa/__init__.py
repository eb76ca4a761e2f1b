"""Single-snapshot DOA estimation with non-coherent sub-arrays.

A large antenna array split into sub-arrays with unsynchronized local
oscillators observes one snapshot.  The estimators here recover source
directions by lifting the unknown (signal, phase) pair into a jointly
row-sparse and low-rank matrix, solving a convex relaxation, and either
reading the spectrum off the solution directly or first re-aligning the
sub-arrays with the recovered phase shifts.  Reference implementations of
a sparsity-only variant and a smoothed non-coherent MUSIC, plus a Monte
Carlo harness and CLI, round out the package.
"""

__version__ = "0.1.0"

from .array_model import (ArrayGeometry, GridManifold, Scenario, Snapshot,
                          SnapshotTruth, build_grid_manifold, default_grid,
                          generate_snapshot, make_ula, steering_vector)
from .baselines import MusicOptions, run_music, run_sparsity_only, smoothed_covariance
from .errors import (ConfigurationError, DegenerateSolution, PhaseUndetermined,
                     SubdoaError, UnsupportedGeometry)
from .harness import (METHODS, RmseCell, RmseReport, SweepConfig, TrialRecord,
                      rmse, run_sweep, write_aggregate_csv, write_trials_csv)
from .pipeline import (PhaseEstimate, Rank1Factors, SpectrumEstimate,
                       estimate_phases, noise_budget, phase_correct, pick_peaks,
                       pick_peaks_threshold, rank1_factorize, run_proposed1,
                       run_proposed2)
from .solver import (L1Solution, LiftedProblem, LiftedSolution, SolverDiagnostics,
                     SolverOptions, lifted_objective, project_residual_ball,
                     prox_nuclear, prox_row_group, solve_l1, solve_lifted)

__all__ = [
    "__version__",
    "ArrayGeometry", "GridManifold", "Scenario", "Snapshot", "SnapshotTruth",
    "build_grid_manifold", "default_grid", "generate_snapshot", "make_ula",
    "steering_vector",
    "MusicOptions", "run_music", "run_sparsity_only", "smoothed_covariance",
    "ConfigurationError", "DegenerateSolution", "PhaseUndetermined",
    "SubdoaError", "UnsupportedGeometry",
    "METHODS", "RmseCell", "RmseReport", "SweepConfig", "TrialRecord",
    "rmse", "run_sweep", "write_aggregate_csv", "write_trials_csv",
    "PhaseEstimate", "Rank1Factors", "SpectrumEstimate", "estimate_phases",
    "noise_budget", "phase_correct", "pick_peaks", "pick_peaks_threshold",
    "rank1_factorize", "run_proposed1", "run_proposed2",
    "L1Solution", "LiftedProblem", "LiftedSolution", "SolverDiagnostics",
    "SolverOptions", "lifted_objective", "project_residual_ball", "prox_nuclear",
    "prox_row_group", "solve_l1", "solve_lifted",
]
