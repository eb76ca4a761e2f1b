"""Reference estimators: sparsity-only recovery and non-coherent MUSIC.

The sparsity-only method drops the low-rank term from the lifted program
(mu = 0) and reads the spectrum off the dominant left singular vector, in
the style of sparse self-calibration methods.

The MUSIC variant treats the L sub-array observations as L snapshots of one
common sub-array, which is valid because the sub-arrays are congruent ULAs
and the unknown phase factors cancel inside the outer products.  Spatial
smoothing over sliding sub-apertures plus forward-backward averaging
restores enough covariance rank for a single-snapshot-per-sub-array setting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .array_model import ArrayGeometry, GridManifold, Snapshot
from .errors import ConfigurationError, UnsupportedGeometry
from .pipeline import SpectrumEstimate, pick_peaks, rank1_factorize, solve_lifted_stage
from .solver import SolverOptions

__all__ = [
    "MusicOptions",
    "run_sparsity_only",
    "smoothed_covariance",
    "run_music",
]

_SPECTRUM_FLOOR = 1e-12  # cap for 1/x when the projection is numerically zero


@dataclass(frozen=True)
class MusicOptions:
    """Assumed source count and smoothing controls.

    ``smoothing_length`` is the sliding sub-aperture size inside each
    sub-array; the noise subspace is nonempty only when q < smoothing_length.
    """

    q: int
    smoothing_length: int = 4
    forward_backward: bool = True

    def __post_init__(self):
        if self.q < 1:
            raise ConfigurationError("q must be >= 1")
        if self.smoothing_length < 1:
            raise ConfigurationError("smoothing_length must be >= 1")
        if self.q >= self.smoothing_length:
            raise ConfigurationError(
                f"q={self.q} requires smoothing_length > q for a nonempty "
                f"noise subspace (got {self.smoothing_length})")


def run_sparsity_only(snapshot: Snapshot, manifold: GridManifold, C: float,
                      sigma2: float, q: int,
                      opts: Optional[SolverOptions] = None) -> SpectrumEstimate:
    """mu = 0 lifted solve -> SVD -> |dominant left singular vector| -> peaks."""
    solution = solve_lifted_stage(snapshot, manifold, 0.0, C, sigma2, opts)
    factors = rank1_factorize(solution.Z_hat)
    mags = np.abs(factors.s_hat) / factors.sigma1
    return SpectrumEstimate(
        grid_degrees=manifold.grid_degrees,
        magnitudes=mags,
        peaks=tuple(pick_peaks(mags, manifold.grid_degrees, q)),
        method_tag="SparsityOnly",
        requested_peaks=q,
        diagnostics=solution.diagnostics,
    )


def _common_ula_spacing(geometry: ArrayGeometry) -> float:
    """Spacing (wavelengths) of the sub-array layout all sub-arrays must share."""
    if geometry.pattern is not None:
        raise UnsupportedGeometry("MUSIC baseline requires omnidirectional elements")
    sizes = set(geometry.partition_sizes)
    if len(sizes) != 1:
        raise UnsupportedGeometry(
            f"sub-arrays differ in size: {geometry.partition_sizes}")
    if np.any(geometry.positions[:, 1] != 0.0):
        raise UnsupportedGeometry("MUSIC baseline requires a linear array (y = 0)")
    spacing = None
    for sl in geometry.subarray_slices:
        x = geometry.positions[sl, 0]
        d = np.diff(x)
        if x.shape[0] > 1 and not np.allclose(d, d[0], rtol=1e-12, atol=1e-12):
            raise UnsupportedGeometry("sub-array elements are not uniformly spaced")
        d0 = float(d[0]) if x.shape[0] > 1 else 0.0
        if spacing is None:
            spacing = d0
        elif not np.isclose(spacing, d0, rtol=1e-12, atol=1e-12):
            raise UnsupportedGeometry("sub-arrays have unequal element spacing")
    return spacing if spacing is not None else 0.0


def smoothed_covariance(snapshot: Snapshot, geometry: ArrayGeometry,
                        opts: MusicOptions) -> np.ndarray:
    """Spatially smoothed covariance over all sub-arrays' sliding windows.

    Averages w w^H over every length-``smoothing_length`` window of every
    sub-array, then adds the exchange-conjugate counterpart when
    forward-backward averaging is on.  Hermitian PSD by construction.
    """
    _common_ula_spacing(geometry)
    m = opts.smoothing_length
    sizes = geometry.partition_sizes
    if m > sizes[0]:
        raise ConfigurationError(
            f"smoothing_length {m} exceeds sub-array size {sizes[0]}")
    R = np.zeros((m, m), dtype=complex)
    count = 0
    for x in snapshot.observations:
        for k in range(x.shape[0] - m + 1):
            w = x[k:k + m]
            R += np.outer(w, w.conj())
            count += 1
    R /= count
    if opts.forward_backward:
        R = 0.5 * (R + np.flip(R).conj())
    return 0.5 * (R + R.conj().T)


def run_music(snapshot: Snapshot, geometry: ArrayGeometry,
              grid_degrees: Sequence[float], opts: MusicOptions) -> SpectrumEstimate:
    """Noise-subspace spectrum over the grid from the smoothed covariance."""
    spacing = _common_ula_spacing(geometry)
    R = smoothed_covariance(snapshot, geometry, opts)
    m = opts.smoothing_length
    eigvals, eigvecs = np.linalg.eigh(R)  # ascending
    noise = eigvecs[:, : m - opts.q]
    grid = np.asarray(grid_degrees, dtype=float)
    k = np.arange(m)
    steer = np.exp(2j * np.pi * spacing * np.outer(k, np.sin(np.deg2rad(grid))))
    denom = np.sum(np.abs(noise.conj().T @ steer) ** 2, axis=0)
    mags = 1.0 / np.maximum(denom, _SPECTRUM_FLOOR)
    return SpectrumEstimate(
        grid_degrees=grid,
        magnitudes=mags,
        peaks=tuple(pick_peaks(mags, grid, opts.q)),
        method_tag="MUSIC",
        requested_peaks=opts.q,
    )
