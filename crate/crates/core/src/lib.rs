//! Solvers and analysis tools for the one-dimensional fractional Burgers
//! equation on a periodic domain,
//!
//! ```text
//! ∂_t u + ½ ∂_x u² + ν(-Δ)^α u = ρ dW/dt,   x ∈ [0, 2π),
//! ```
//!
//! with an optional colored-in-space additive noise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod deterministic;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod io;
mod linalg;
pub mod spectral;
pub mod stats;
pub mod stochastic;

pub use blowup::{
    estimate_t_star, fit_window, limit_blowup_alpha_zero, limit_blowup_inviscid, sliding_estimate,
    BlowupFit, BlowupGuess, Quantity, WindowPlan, FIT_SPACING, NOISY_FIT_SPACING,
};
pub use deterministic::{
    imex_step, maybe_refine, run_deterministic, DiagnosticRecord, SolverConfig, Termination,
    TimeScheme, Trajectory,
};
pub use diagnostics::{enstrophy, strip_fit, StripFit};
pub use ensemble::{
    run_ensemble, summarize, EnsembleResult, EnsembleSettings, EnsembleSummary, RunManifest,
};
pub use error::{Error, Result};
pub use io::{
    export_figures_data, parse_config, read_outcomes, serialize_config, write_outcomes, RunMode,
    RunSettings, RunSpec,
};
pub use spectral::{
    forward_transform, fractional_laplacian, inverse_transform, nonlinear_term, GridSpec,
    SpectralField,
};
pub use stats::{
    bootstrap_ci, histogram_pdf, jensen_check, joint_pdf, moments, powerlaw_fit, running_errors,
    Bins, MomentSet, OutcomeSample, Statistic,
};
pub use stochastic::{run_realization, srk_step, NoiseParams};
