"""Mixed local/nonlocal dispersal in a bounded niche.

A particle either walks (uniform step in a ball of radius h^s) or jumps
(power-law step), and re-enters the niche immediately when it leaves. Its
density follows ∂_t U = αΔU − β(−Δ)^s U with a classical and a nonlocal
Neumann condition. The package provides the kernels and samplers, particle
ensembles, a finite-volume solver and residual checks for the identities that
tie them together.
"""

from .config import ConfigError, RunConfig, parse_config, serialize
from .geometry import Disk, Domain, GeometryError, Halfspace, Interval, Rectangle
from .kernels import (
    EffectiveCoefficients,
    ProcessParams,
    combined_density,
    jump_density,
    jump_reentry,
    jump_reentry_weight,
    pi_measure_density,
    sample_jump_step,
    sample_power_law_radius,
    sample_walk_step,
    walk_density,
)
from .lattice import GridField, Lattice, make_lattice
from .particles import (
    HistogramEstimate,
    ParticleEnsemble,
    SimConfig,
    estimate_density,
    make_histogram_grid,
    run_ensemble,
    run_phantom_process,
    step_particle,
)
from .pde import (
    OperatorAssembly,
    StabilityError,
    classical_laplacian,
    extend_exterior,
    extend_exterior_punched,
    fractional_laplacian,
    make_operator,
    point_mass,
    solve,
    step_time,
)
from .rng import CounterRNG
from .validation import (
    HalfspaceConstants,
    ResidualEntry,
    ResidualReport,
    check_jump_normalization,
    check_neumann_local,
    check_neumann_nonlocal,
    check_pi_normalization,
    check_walk_normalization,
    compare_particle_pde,
    compute_c_o,
    compute_c_star,
)

__all__ = [
    "ConfigError",
    "CounterRNG",
    "Disk",
    "Domain",
    "EffectiveCoefficients",
    "GeometryError",
    "GridField",
    "Halfspace",
    "HalfspaceConstants",
    "HistogramEstimate",
    "Interval",
    "Lattice",
    "OperatorAssembly",
    "ParticleEnsemble",
    "ProcessParams",
    "Rectangle",
    "ResidualEntry",
    "ResidualReport",
    "RunConfig",
    "SimConfig",
    "StabilityError",
    "check_jump_normalization",
    "check_neumann_local",
    "check_neumann_nonlocal",
    "check_pi_normalization",
    "check_walk_normalization",
    "classical_laplacian",
    "combined_density",
    "compare_particle_pde",
    "compute_c_o",
    "compute_c_star",
    "estimate_density",
    "extend_exterior",
    "extend_exterior_punched",
    "fractional_laplacian",
    "jump_density",
    "jump_reentry",
    "jump_reentry_weight",
    "make_histogram_grid",
    "make_lattice",
    "make_operator",
    "parse_config",
    "pi_measure_density",
    "point_mass",
    "run_ensemble",
    "run_phantom_process",
    "sample_jump_step",
    "sample_power_law_radius",
    "sample_walk_step",
    "serialize",
    "solve",
    "step_particle",
    "step_time",
    "walk_density",
]
