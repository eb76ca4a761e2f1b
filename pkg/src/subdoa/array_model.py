"""Array geometry, steering vectors, grid manifolds, and snapshot synthesis.

The receiving array is a collection of elements at known positions, split
into L contiguous sub-arrays.  Each sub-array is internally coherent but
carries an unknown phase offset relative to the others, so a synthesized
observation applies one random phase factor per sub-array.  All positions
are stored in units of the carrier wavelength, which removes the wavelength
from every downstream formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ArrayGeometry",
    "Scenario",
    "Snapshot",
    "SnapshotTruth",
    "GridManifold",
    "steering_vector",
    "make_ula",
    "build_grid_manifold",
    "default_grid",
    "generate_snapshot",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions, element patterns, and the sub-array partition.

    Parameters
    ----------
    positions : (M, 2) array
        Element (x, y) coordinates in wavelengths.
    partition_sizes : tuple of int
        Number of elements in each of the L contiguous sub-arrays;
        must sum to M with every size >= 1.
    pattern : callable, optional
        ``pattern(theta_deg) -> (M,) array`` of per-element gains.
        ``None`` means omnidirectional (all gains 1).
    """

    positions: np.ndarray
    partition_sizes: tuple
    pattern: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ConfigurationError(
                f"positions must have shape (M, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ConfigurationError("positions must be finite")
        sizes = tuple(int(s) for s in self.partition_sizes)
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise ConfigurationError(f"every sub-array needs >= 1 element, got {sizes}")
        if sum(sizes) != pos.shape[0]:
            raise ConfigurationError(
                f"partition {sizes} sums to {sum(sizes)} but there are "
                f"{pos.shape[0]} elements")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "partition_sizes", sizes)

    @property
    def num_elements(self) -> int:
        return self.positions.shape[0]

    @property
    def num_subarrays(self) -> int:
        return len(self.partition_sizes)

    @property
    def subarray_slices(self) -> tuple:
        """Contiguous index ranges, one slice per sub-array."""
        offsets = np.concatenate([[0], np.cumsum(self.partition_sizes)])
        return tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:]))

    def element_gains(self, theta_deg: float) -> np.ndarray:
        if self.pattern is None:
            return np.ones(self.num_elements)
        g = np.asarray(self.pattern(theta_deg), dtype=float)
        if g.shape != (self.num_elements,):
            raise ConfigurationError(
                f"pattern must return shape ({self.num_elements},), got {g.shape}")
        return g


def make_ula(num_elements: int, spacing_wavelengths: float,
             partition_sizes: Sequence[int]) -> ArrayGeometry:
    """Uniform linear array on the x-axis, centered at the origin.

    The phase reference sits in the middle of the whole array, so positions
    are symmetric about x = 0 and y is identically zero.
    """
    if spacing_wavelengths <= 0:
        raise ConfigurationError("spacing must be positive")
    if sum(int(s) for s in partition_sizes) != num_elements:
        raise ConfigurationError(
            f"partition {tuple(partition_sizes)} does not sum to {num_elements} elements")
    x = (np.arange(num_elements) - (num_elements - 1) / 2.0) * spacing_wavelengths
    positions = np.column_stack([x, np.zeros(num_elements)])
    return ArrayGeometry(positions=positions, partition_sizes=tuple(partition_sizes))


def _check_angle(theta_deg: float) -> float:
    theta = float(theta_deg)
    if not -90.0 < theta < 90.0:
        raise ConfigurationError(f"angle {theta} deg outside (-90, 90)")
    return theta


def steering_vector(geometry: ArrayGeometry, ell: int, theta_deg: float) -> np.ndarray:
    """Complex response of sub-array ``ell`` to a unit plane wave from ``theta_deg``.

    Element i responds with ``g_i(theta) * exp(j*2*pi*(x_i*sin(theta) + y_i*cos(theta)))``
    where (x_i, y_i) are in wavelengths.  Angles are measured from boresight.
    """
    theta = _check_angle(theta_deg)
    if not 0 <= ell < geometry.num_subarrays:
        raise IndexError(f"sub-array index {ell} out of range [0, {geometry.num_subarrays})")
    sl = geometry.subarray_slices[ell]
    th = np.deg2rad(theta)
    pos = geometry.positions[sl]
    phase = 2.0 * np.pi * (pos[:, 0] * np.sin(th) + pos[:, 1] * np.cos(th))
    return geometry.element_gains(theta)[sl] * np.exp(1j * phase)


def _full_steering(geometry: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Steering vector of the entire M-element array (all sub-arrays stacked)."""
    theta = _check_angle(theta_deg)
    th = np.deg2rad(theta)
    pos = geometry.positions
    phase = 2.0 * np.pi * (pos[:, 0] * np.sin(th) + pos[:, 1] * np.cos(th))
    return geometry.element_gains(theta) * np.exp(1j * phase)


@dataclass(frozen=True)
class GridManifold:
    """Dictionary matrices over a DOA grid.

    ``per_subarray[l]`` has shape (M_l, N) with column n equal to the
    sub-array's steering vector at ``grid_degrees[n]``; ``stacked`` is their
    row-concatenation in partition order, shape (M, N).
    """

    grid_degrees: np.ndarray
    per_subarray: tuple
    stacked: np.ndarray

    @property
    def size(self) -> int:
        return self.grid_degrees.shape[0]


def build_grid_manifold(geometry: ArrayGeometry,
                        grid_degrees: Sequence[float]) -> GridManifold:
    """Evaluate all sub-array steering vectors over a strictly increasing grid."""
    grid = np.asarray(grid_degrees, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("grid is empty")
    if grid.ndim != 1 or (grid.size > 1 and not np.all(np.diff(grid) > 0)):
        raise ConfigurationError("grid must be a strictly increasing 1-D sequence")
    if grid[0] <= -90.0 or grid[-1] >= 90.0:
        raise ConfigurationError("grid must lie strictly inside (-90, 90) degrees")
    stacked = np.stack([_full_steering(geometry, t) for t in grid], axis=1)
    per = tuple(stacked[sl, :] for sl in geometry.subarray_slices)
    return GridManifold(grid_degrees=grid, per_subarray=per, stacked=stacked)


def default_grid(start_deg: float = -60.0, stop_deg: float = 60.0,
                 step_deg: float = 0.5) -> np.ndarray:
    """Uniform DOA grid including both endpoints (241 points by default)."""
    n = int(round((stop_deg - start_deg) / step_deg)) + 1
    grid = np.linspace(start_deg, stop_deg, n)
    if not np.isclose(grid[1] - grid[0], step_deg):
        raise ConfigurationError(
            f"step {step_deg} does not evenly divide [{start_deg}, {stop_deg}]")
    return grid


@dataclass(frozen=True)
class Scenario:
    """Source constellation plus noise and phase configuration.

    SNR convention: per-source signal power divided by the per-element noise
    variance, with the source powers normally all equal to 1.  The noise
    variance is derived as ``mean(source_powers) * 10**(-snr_db/10)``;
    ``snr_db=inf`` gives a noiseless scenario.
    """

    geometry: ArrayGeometry
    source_doas: tuple
    source_powers: tuple
    snr_db: float = np.inf
    phases: Optional[tuple] = None  # None -> drawn uniform over [0, 2*pi)

    def __post_init__(self):
        doas = tuple(float(a) for a in self.source_doas)
        if len(doas) < 1:
            raise ConfigurationError("need at least one source")
        for a in doas:
            _check_angle(a)
        powers = tuple(float(p) for p in self.source_powers)
        if len(powers) != len(doas):
            raise ConfigurationError(
                f"{len(powers)} powers given for {len(doas)} sources")
        if any(p <= 0 for p in powers):
            raise ConfigurationError("source powers must be positive")
        if self.phases is not None:
            ph = tuple(float(v) for v in self.phases)
            if len(ph) != self.geometry.num_subarrays:
                raise ConfigurationError(
                    f"{len(ph)} phases given for {self.geometry.num_subarrays} sub-arrays")
            object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "source_doas", doas)
        object.__setattr__(self, "source_powers", powers)

    @property
    def num_sources(self) -> int:
        return len(self.source_doas)

    @property
    def noise_variance(self) -> float:
        if np.isinf(self.snr_db):
            return 0.0
        return float(np.mean(self.source_powers)) * 10.0 ** (-self.snr_db / 10.0)


@dataclass(frozen=True)
class SnapshotTruth:
    """Ground truth retained for evaluation only."""
    doas_deg: tuple
    amplitudes: np.ndarray   # drawn source amplitudes, length Q
    phases: np.ndarray       # per-sub-array phase offsets, length L


@dataclass(frozen=True)
class Snapshot:
    """One simultaneous observation: L complex vectors, one per sub-array."""
    observations: tuple
    truth: Optional[SnapshotTruth] = None

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate(self.observations)


def _complex_normal(rng, size, variance=1.0):
    # circular complex Gaussian: independent real/imag, each with variance/2
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def generate_snapshot(scenario: Scenario, seed) -> Snapshot:
    """Synthesize one snapshot: x_l = exp(-j*phi_l) * (A_l(theta) s + n_l).

    Source amplitudes are circular complex Gaussian with the scenario powers,
    phases are uniform over [0, 2*pi) unless fixed in the scenario, and noise
    is circular complex Gaussian with the derived variance per element.  The
    noise is drawn in each sub-array's local-oscillator frame (inside the
    phase factor); its distribution is unchanged by the unit-modulus rotation,
    and outer products x_l x_l^H are then exactly independent of the phases.
    Deterministic given the seed.  Draw order: amplitudes, phases, noise.
    """
    rng = np.random.default_rng(seed)
    geom = scenario.geometry
    L = geom.num_subarrays
    q = scenario.num_sources
    amps = _complex_normal(rng, q) * np.sqrt(np.asarray(scenario.source_powers))
    if scenario.phases is None:
        phases = rng.uniform(0.0, 2.0 * np.pi, L)
    else:
        phases = np.asarray(scenario.phases, dtype=float)
    sigma2 = scenario.noise_variance
    obs = []
    for ell in range(L):
        steer = np.stack(
            [steering_vector(geom, ell, a) for a in scenario.source_doas], axis=1)
        coherent = steer @ amps
        if sigma2 > 0:
            coherent = coherent + _complex_normal(rng, coherent.shape[0], sigma2)
        obs.append(np.exp(-1j * phases[ell]) * coherent)
    truth = SnapshotTruth(doas_deg=scenario.source_doas, amplitudes=amps, phases=phases)
    return Snapshot(observations=tuple(obs), truth=truth)
