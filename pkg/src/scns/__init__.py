"""Regularized stochastic chemotaxis-fluid solver and its verification
harness.

The package is organized bottom-up: grids and fields, stencil operators,
the continuous model's coefficient functions, noise sampling, the time
stepper, pathwise diagnostics, the Monte Carlo ensemble driver, and the
config/serialization/CLI layer on top.
"""

from .errors import (
    AssumptionViolation,
    CflViolation,
    ChecksumMismatch,
    ConfigInvalid,
    InsufficientPaths,
    MissingIncrements,
    MissingNoiseRecord,
    NegativeDensity,
    ParseError,
    PathFailure,
    PeriodicDomain,
    SchemaMismatch,
    ScnsError,
    WindowTooShort,
)
from .grid import (
    Grid,
    ScalarField,
    VectorField,
    build_grid,
    inner,
    inner_vector,
    integrate,
    l2_norm_vector,
    lp_norm,
    scalar_field,
    vector_field,
    zero_vector_field,
)
from .operators import (
    OperatorWorkspace,
    advect_conservative,
    advect_values,
    divergence,
    divergence_values,
    gradient,
    gradient_values,
    laplacian,
    laplacian_values,
    leray_project,
    mollify,
)
from .model import (
    Kinetics,
    ModelParams,
    NoiseCoefficients,
    apply_g,
    buoyancy,
    chemotactic_flux,
    consumption,
    h_eps,
    h_eps_prime,
    jump_G,
    jump_K,
    make_noise_coefficients,
    psi_values,
    rho_values,
    validate_kinetics,
    velocity_basis,
)
from .noise import (
    JumpSpec,
    NoiseDraw,
    RngStream,
    make_noise_draw,
    sample_jumps,
    sample_wiener,
    small_jump_compensator,
)
from .stepper import (
    RunResult,
    State,
    StepConfig,
    StepReceipt,
    TrajectoryWindow,
    cfl_number,
    run,
    step,
    weak_form_residual,
    zero_noise_draw,
)
from .diagnostics import (
    FIELD_NAMES,
    DiagnosticsRecord,
    EnergyAuditReport,
    EnergyConstants,
    aux_bounds,
    dissipation,
    energy_inequality_audit,
    entropy_energy,
    entropy_identity_residual,
    entropy_identity_terms,
    entropy_part,
    fit_energy_constant,
    grad_psi_energy,
    kinetic_energy,
    make_record,
    martingale_increment,
    ms_boundary_ratio,
)
from .ensemble import (
    EnsembleResult,
    MartingaleReport,
    canonical_record_times,
    martingale_test,
    moment_bound_report,
    run_ensemble,
)
from .config import Config, Setup, build_setup, parse_config, render
from .recio import (
    Snapshot,
    read_record_file,
    read_records,
    read_snapshot,
    write_record_file,
    write_records,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
