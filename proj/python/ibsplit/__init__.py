"""Spectral solvers and decoupling diagnostics for the improved Boussinesq equation."""

from ._core import (
    BlowUpError,
    BlownUpFieldError,
    NonzeroMeanError,
    RegimeViolationError,
    SnapshotFormatError,
    defining_residual,
    derivative,
    fit_loglog_slope,
    grid_points,
    helmholtz_inverse,
    ib_solve,
    model_solve,
    normalize_config,
    residual_model,
    run_decoupling_study,
    run_residual_study,
    sobolev_norm,
    split_initial_data,
)

__version__ = "0.1.0"
