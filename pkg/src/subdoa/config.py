"""TOML experiment configuration: scenario, grid, solver, and sweep blocks.

Schema (all angles in degrees)::

    [geometry]            # required
    elements = 24
    spacing = 0.5         # wavelengths
    subarrays = [6, 6, 6, 6]

    [sources]             # required
    angles_deg = [0.0, 15.0]
    powers = [1.0, 1.0]   # optional, default all 1

    [noise]               # optional; used by single-snapshot commands
    snr_db = 20.0

    [phases]              # optional, default random
    mode = "random"       # or "fixed"
    values = [0.0, 1.5, 3.0, 4.5]   # required when mode = "fixed"

    [grid]                # optional
    start_deg = -60.0
    stop_deg = 60.0
    step_deg = 0.5

    [solver]              # optional
    mu = 1.0
    C = 2.0
    max_iterations = 5000
    penalty = 1.0
    primal_tol = 1e-6
    dual_tol = 1e-6
    feasibility_tol = 1e-4
    relaxation = 1.7

    [music]               # optional
    smoothing_length = 4
    forward_backward = true

    [sweep]               # required by the sweep command
    snr_grid_db = [0, 5, 10, 15, 20, 25, 30]
    n_trials = 250
    methods = ["Proposed1", "Proposed2", "SparsityOnly", "MUSIC"]
    base_seed = 1234
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .array_model import Scenario, default_grid, make_ula
from .errors import ConfigurationError
from .harness import SweepConfig
from .solver import SolverOptions

__all__ = ["ExperimentConfig", "load_config", "config_digest", "packaged_config_path"]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    grid_degrees: np.ndarray
    mu: float
    C: float
    solver_opts: SolverOptions
    music_smoothing_length: int
    music_forward_backward: bool
    sweep: Optional[SweepConfig]
    source_path: Optional[str] = None


def _section(data, name, required):
    block = data.get(name)
    if block is None:
        if required:
            raise ConfigurationError(f"config is missing the [{name}] section")
        return {}
    if not isinstance(block, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    return block


def _get(block, section, key, default=None, required=False):
    if key in block:
        return block[key]
    if required:
        raise ConfigurationError(f"config is missing required field {section}.{key}")
    return default


def load_config(path, snr_override=None, trials_override=None,
                methods_override=None, grid_step_override=None) -> ExperimentConfig:
    """Parse and validate a TOML experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from exc

    geo = _section(data, "geometry", required=True)
    geometry = make_ula(
        num_elements=int(_get(geo, "geometry", "elements", required=True)),
        spacing_wavelengths=float(_get(geo, "geometry", "spacing", required=True)),
        partition_sizes=[int(s) for s in _get(geo, "geometry", "subarrays", required=True)],
    )

    src = _section(data, "sources", required=True)
    angles = [float(a) for a in _get(src, "sources", "angles_deg", required=True)]
    powers = _get(src, "sources", "powers", default=[1.0] * len(angles))
    powers = [float(p) for p in powers]

    noise = _section(data, "noise", required=False)
    snr_db = float(_get(noise, "noise", "snr_db", default=np.inf))
    if snr_override is not None:
        snr_db = float(snr_override)

    ph = _section(data, "phases", required=False)
    mode = _get(ph, "phases", "mode", default="random")
    if mode == "random":
        phases = None
    elif mode == "fixed":
        values = _get(ph, "phases", "values", required=True)
        phases = tuple(float(v) for v in values)
    else:
        raise ConfigurationError(
            f"phases.mode must be 'random' or 'fixed', got {mode!r}")

    scenario = Scenario(geometry=geometry, source_doas=tuple(angles),
                        source_powers=tuple(powers), snr_db=snr_db, phases=phases)

    gr = _section(data, "grid", required=False)
    step = float(_get(gr, "grid", "step_deg", default=0.5))
    if grid_step_override is not None:
        step = float(grid_step_override)
    grid = default_grid(
        start_deg=float(_get(gr, "grid", "start_deg", default=-60.0)),
        stop_deg=float(_get(gr, "grid", "stop_deg", default=60.0)),
        step_deg=step,
    )

    sv = _section(data, "solver", required=False)
    mu = float(_get(sv, "solver", "mu", default=1.0))
    C = float(_get(sv, "solver", "C", default=2.0))
    opt_kwargs = {}
    valid = {f.name for f in fields(SolverOptions)}
    for key, value in sv.items():
        if key in ("mu", "C"):
            continue
        if key not in valid:
            raise ConfigurationError(f"unknown solver option solver.{key}")
        opt_kwargs[key] = type(getattr(SolverOptions(), key))(value)
    solver_opts = SolverOptions(**opt_kwargs)

    mus = _section(data, "music", required=False)
    smoothing = int(_get(mus, "music", "smoothing_length", default=4))
    fb = bool(_get(mus, "music", "forward_backward", default=True))

    sweep = None
    if "sweep" in data:
        sw = _section(data, "sweep", required=False)
        methods = _get(sw, "sweep", "methods",
                       default=["Proposed1", "Proposed2", "SparsityOnly", "MUSIC"])
        if methods_override is not None:
            methods = list(methods_override)
        n_trials = int(_get(sw, "sweep", "n_trials", required=True))
        if trials_override is not None:
            n_trials = int(trials_override)
        sweep = SweepConfig(
            scenario=scenario,
            grid_degrees=grid,
            snr_grid_db=tuple(float(s) for s in _get(sw, "sweep", "snr_grid_db", required=True)),
            n_trials=n_trials,
            methods=tuple(methods),
            base_seed=int(_get(sw, "sweep", "base_seed", default=0)),
            mu=mu,
            C=C,
            solver_opts=solver_opts,
            music_smoothing_length=smoothing,
            music_forward_backward=fb,
        )

    return ExperimentConfig(
        scenario=scenario, grid_degrees=grid, mu=mu, C=C, solver_opts=solver_opts,
        music_smoothing_length=smoothing, music_forward_backward=fb, sweep=sweep,
        source_path=str(path),
    )


def config_digest(path) -> str:
    """SHA-256 of the raw config bytes, for the run manifest."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def packaged_config_path(name: str) -> Optional[Path]:
    """Resolve a config shipped inside the package (fig1.toml, fig2.toml, ...)."""
    candidate = Path(__file__).parent / "configs" / name
    return candidate if candidate.exists() else None
