//! Error laboratory: exact (Itô-isometry) and Monte Carlo evaluation of
//! the discretization errors, log-log rate fitting and bootstrap
//! confidence intervals.
//!
//! Squared-moment convention: every exact evaluator returns E‖·‖²; square
//! roots are taken only in reports, which avoids precision loss near zero.

mod exact;
mod fit;
mod mc;

pub use exact::{
    consistency_moment_exact, modeling_error_exact, modeling_error_split,
    timedisc_error_exact, timedisc_errors_exact, ModelingErrorSplit,
};
pub use fit::{
    bootstrap_matrix_max, bootstrap_mean, fit_rate, ConvergenceStudy, McMoment, RateReport,
};
pub use mc::{
    det_fem_study, fulldisc_error_mc, semidiscrete_error_mc, timedisc_vs_fulldisc_mc,
    DetFemStudyReport, FullDiscretizationReport, McConfig, PathComparisonReport,
    SemidiscreteReport,
};

/// How an error quantity is evaluated. Exact covariance evaluation is only
/// available for spectral-vs-spectral quantities; anything touching the
/// Galerkin space goes through Monte Carlo with common random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    ExactCovariance,
    MonteCarlo { replicates: usize, bootstrap_resamples: usize },
}

/// Full-precision decimal formatting (17 significant digits): parses back
/// to the identical f64, so downstream fits are exact.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Theoretical spatial convergence exponent ν(r,d) of the stochastic
/// schemes: (4−d)/3 for r = 2, (4−d)/2 for r = 3, 4.
pub fn spatial_rate_exponent(degree: usize, dim: usize) -> f64 {
    let d = dim as f64;
    match degree {
        2 => (4.0 - d) / 3.0,
        3 | 4 => (4.0 - d) / 2.0,
        _ => panic!("degree must be 2, 3 or 4"),
    }
}

/// Deterministic spatial exponent ν̃(r,θ) ∈ {2θ, 4θ, 5θ}.
pub fn deterministic_rate_exponent(degree: usize, theta: f64) -> f64 {
    match degree {
        2 => 2.0 * theta,
        3 => 4.0 * theta,
        4 => 5.0 * theta,
        _ => panic!("degree must be 2, 3 or 4"),
    }
}

/// Regularity index ξ̃(r,θ) ∈ {3θ−2, 4θ−2, 5θ−2} required of the initial
/// datum for the ν̃(r,θ) rate.
pub fn deterministic_regularity_index(degree: usize, theta: f64) -> f64 {
    match degree {
        2 => 3.0 * theta - 2.0,
        3 => 4.0 * theta - 2.0,
        4 => 5.0 * theta - 2.0,
        _ => panic!("degree must be 2, 3 or 4"),
    }
}
