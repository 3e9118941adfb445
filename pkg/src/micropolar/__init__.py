"""Pseudo-spectral micropolar fluid solver with decay diagnostics."""

from .spectral import (
    Grid,
    SpectralField,
    SobolevSeminorm,
    make_grid,
    field_from_coeffs,
    field_from_physical,
    to_physical,
    zero_field,
    leray_project,
    divergence,
    curl,
    laplacian,
    sobolev_seminorm,
    dealias,
    inner_product,
    save_field,
    load_field,
)
from .dynamics import (
    FluidParams,
    MicropolarState,
    LinearModeMatrix,
    SimConfig,
    SimulationResult,
    BlowUpError,
    linear_mode_matrix,
    mode_matrices,
    nonlinear_rhs,
    step,
    simulate,
)
from .diagnostics import (
    NormSeries,
    DecayHypothesis,
    BoundConstants,
    BOUND_CONSTANTS,
    epsilon_field,
    epsilon_residual,
    energy_check,
    fit_decay_exponent,
    monotonicity_onset,
    t_doublestar_bound_3d,
    smallness_margin,
    sync_report,
    validity_window,
)
from .initdata import (
    SpectrumEnvelope,
    decay_character_data,
    taylor_green,
    random_solenoidal,
    linear_oracle_evolve,
    reduced_mode_matrix,
)

__version__ = "0.1.0"
