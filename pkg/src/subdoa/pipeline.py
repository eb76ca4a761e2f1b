"""End-to-end estimators built on the lifted solver.

Two strategies share the same first stage (solve the lifted program, take
the best rank-1 factorization):

* the direct route reads the spectrum off the sparse factor;
* the phase-correction route reads per-sub-array phase shifts off the other
  factor, re-aligns the raw observations into one coherent full-array
  vector, and runs a plain constrained-l1 recovery on it.

Both report a ``SpectrumEstimate`` whose peaks are the DOA estimates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .array_model import GridManifold, Snapshot
from .errors import ConfigurationError, DegenerateSolution, PhaseUndetermined
from .solver import (LiftedProblem, LiftedSolution, SolverDiagnostics,
                     SolverOptions, solve_l1, solve_lifted)

__all__ = [
    "Rank1Factors",
    "PhaseEstimate",
    "SpectrumEstimate",
    "noise_budget",
    "rank1_factorize",
    "estimate_phases",
    "phase_correct",
    "pick_peaks",
    "pick_peaks_threshold",
    "run_proposed1",
    "run_proposed2",
    "solve_lifted_stage",
    "proposed1_from_solution",
    "proposed2_from_solution",
]


@dataclass(frozen=True)
class Rank1Factors:
    """Best rank-1 factorization Z ~ s_hat * alpha_hat^H of a lifted solution."""

    s_hat: np.ndarray      # length N: leading singular value times left vector
    alpha_hat: np.ndarray  # length L: leading right singular vector, unit norm
    sigma1: float
    energy_ratio: float    # sigma1^2 over the total squared singular values


@dataclass(frozen=True)
class PhaseEstimate:
    """Per-sub-array phase shifts, mean-centered, each in (-pi, pi]."""

    phases: np.ndarray


@dataclass(frozen=True)
class SpectrumEstimate:
    """A grid spectrum plus its selected peaks.

    ``peaks`` holds (angle_deg, magnitude) pairs sorted by angle; at most
    ``requested_peaks`` of them, fewer when the spectrum has too few local
    maxima (``shortfall`` is then set).
    """

    grid_degrees: np.ndarray
    magnitudes: np.ndarray
    peaks: tuple
    method_tag: str
    requested_peaks: Optional[int] = None
    diagnostics: Optional[SolverDiagnostics] = None

    @property
    def peak_angles(self) -> np.ndarray:
        return np.array([a for a, _ in self.peaks])

    @property
    def shortfall(self) -> bool:
        return self.requested_peaks is not None and len(self.peaks) < self.requested_peaks

    def to_csv(self, path) -> None:
        """Write (angle, magnitude) rows with full double precision."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["angle_deg", "magnitude"])
            for a, m in zip(self.grid_degrees, self.magnitudes):
                writer.writerow([repr(float(a)), repr(float(m))])


def noise_budget(C: float, num_elements: int, sigma2: float) -> float:
    """Constraint radius squared used by every program: C * M * sigma^2."""
    if C <= 0:
        raise ConfigurationError("C must be positive")
    if sigma2 < 0:
        raise ConfigurationError("sigma2 must be >= 0")
    return C * num_elements * sigma2


def rank1_factorize(Z_hat: np.ndarray) -> Rank1Factors:
    """SVD-based best rank-1 approximation factors of a solver output."""
    Z = np.asarray(Z_hat)
    if not np.any(Z):
        raise DegenerateSolution("solution matrix is all-zero; no sources recoverable")
    U, s, Vh = np.linalg.svd(Z, full_matrices=False)
    total = float(np.sum(s ** 2))
    return Rank1Factors(
        s_hat=s[0] * U[:, 0],
        alpha_hat=Vh[0, :].conj(),
        sigma1=float(s[0]),
        energy_ratio=float(s[0] ** 2 / total),
    )


def _wrap_phase(x: np.ndarray) -> np.ndarray:
    w = np.mod(np.asarray(x) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def estimate_phases(factors: Rank1Factors) -> PhaseEstimate:
    """Phase shifts from the unit-modulus factor: angle of each entry.

    Only pairwise differences are identifiable, so the mean is removed to
    make the output canonical.  Entries of magnitude below 1e-12 have no
    meaningful angle and raise ``PhaseUndetermined``.
    """
    alpha = np.asarray(factors.alpha_hat)
    small = np.abs(alpha) < 1e-12
    if np.any(small):
        bad = int(np.flatnonzero(small)[0])
        raise PhaseUndetermined(f"sub-array {bad} weight is numerically zero")
    raw = np.angle(alpha)
    return PhaseEstimate(phases=_wrap_phase(raw - raw.mean()))


def phase_correct(snapshot: Snapshot, phases: PhaseEstimate) -> np.ndarray:
    """Stack exp(+j*phi_hat_l) * x_l into one full-array observation vector."""
    obs = snapshot.observations
    ph = np.asarray(phases.phases, dtype=float)
    if ph.shape != (len(obs),):
        raise ConfigurationError(
            f"{ph.shape[0]} phases for {len(obs)} sub-arrays")
    return np.concatenate([np.exp(1j * ph[l]) * x for l, x in enumerate(obs)])


def _plateau_maxima(mags: np.ndarray):
    """Indices of local maxima; a plateau counts once, at its first bin."""
    n = mags.shape[0]
    out = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and mags[j + 1] == mags[i]:
            j += 1
        left = mags[i - 1] if i > 0 else -np.inf
        right = mags[j + 1] if j + 1 < n else -np.inf
        if mags[i] > left and mags[i] > right:
            out.append(i)
        i = j + 1
    return out


def pick_peaks(magnitudes: Sequence[float], grid_degrees: Sequence[float],
               q: int):
    """Top-``q`` local maxima by magnitude, returned sorted by angle.

    Fewer than ``q`` pairs come back when the spectrum has fewer local
    maxima; callers detect the shortfall from the length.
    """
    if q < 1:
        raise ConfigurationError("q must be >= 1")
    mags = np.asarray(magnitudes, dtype=float)
    grid = np.asarray(grid_degrees, dtype=float)
    if mags.shape != grid.shape:
        raise ConfigurationError("magnitudes and grid lengths differ")
    idx = _plateau_maxima(mags)
    idx.sort(key=lambda i: (-mags[i], i))
    chosen = sorted(idx[:q])
    return [(float(grid[i]), float(mags[i])) for i in chosen]


def pick_peaks_threshold(magnitudes: Sequence[float], grid_degrees: Sequence[float],
                         ratio: float = 0.3):
    """All local maxima at least ``ratio`` times the global maximum.

    The source-count-free variant: the caller does not supply q.
    """
    if not 0 < ratio <= 1:
        raise ConfigurationError("ratio must lie in (0, 1]")
    mags = np.asarray(magnitudes, dtype=float)
    grid = np.asarray(grid_degrees, dtype=float)
    if mags.shape != grid.shape:
        raise ConfigurationError("magnitudes and grid lengths differ")
    floor = ratio * mags.max()
    idx = [i for i in _plateau_maxima(mags) if mags[i] >= floor]
    return [(float(grid[i]), float(mags[i])) for i in sorted(idx)]


# ---------------------------------------------------------------------------
# staged composition (the Monte Carlo harness reuses the lifted stage)


def solve_lifted_stage(snapshot: Snapshot, manifold: GridManifold, mu: float,
                       C: float, sigma2: float,
                       opts: Optional[SolverOptions] = None) -> LiftedSolution:
    """Solve the lifted program for a snapshot with an explicit budget."""
    budget = noise_budget(C, manifold.stacked.shape[0], sigma2)
    problem = LiftedProblem(manifold=manifold, observations=snapshot.observations,
                            mu=mu, noise_budget=budget)
    return solve_lifted(problem, opts)


def proposed1_from_solution(solution: LiftedSolution, manifold: GridManifold,
                            q: int) -> SpectrumEstimate:
    factors = rank1_factorize(solution.Z_hat)
    mags = np.abs(factors.s_hat)
    return SpectrumEstimate(
        grid_degrees=manifold.grid_degrees,
        magnitudes=mags,
        peaks=tuple(pick_peaks(mags, manifold.grid_degrees, q)),
        method_tag="Proposed1",
        requested_peaks=q,
        diagnostics=solution.diagnostics,
    )


def proposed2_from_solution(solution: LiftedSolution, snapshot: Snapshot,
                            manifold: GridManifold, C: float, sigma2: float,
                            q: int,
                            opts: Optional[SolverOptions] = None) -> SpectrumEstimate:
    factors = rank1_factorize(solution.Z_hat)
    phases = estimate_phases(factors)
    corrected = phase_correct(snapshot, phases)
    budget = noise_budget(C, manifold.stacked.shape[0], sigma2)
    result = solve_l1(manifold.stacked, corrected, budget, opts)
    mags = np.abs(result.s_hat)
    return SpectrumEstimate(
        grid_degrees=manifold.grid_degrees,
        magnitudes=mags,
        peaks=tuple(pick_peaks(mags, manifold.grid_degrees, q)),
        method_tag="Proposed2",
        requested_peaks=q,
        diagnostics=result.diagnostics,
    )


def run_proposed1(snapshot: Snapshot, manifold: GridManifold, mu: float,
                  C: float, sigma2: float, q: int,
                  opts: Optional[SolverOptions] = None) -> SpectrumEstimate:
    """Lifted solve -> rank-1 factors -> spectrum |s_hat| -> peaks."""
    solution = solve_lifted_stage(snapshot, manifold, mu, C, sigma2, opts)
    return proposed1_from_solution(solution, manifold, q)


def run_proposed2(snapshot: Snapshot, manifold: GridManifold, mu: float,
                  C: float, sigma2: float, q: int,
                  opts: Optional[SolverOptions] = None) -> SpectrumEstimate:
    """Lifted solve -> phase shifts -> corrected full-array l1 recovery -> peaks."""
    solution = solve_lifted_stage(snapshot, manifold, mu, C, sigma2, opts)
    return proposed2_from_solution(solution, snapshot, manifold, C, sigma2, q, opts)
