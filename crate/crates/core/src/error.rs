use std::path::PathBuf;

use crate::rectangle::IterationTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidSpec(String),

    #[error("declared bounds violated at t={t}, x={x}: value {value} outside [{inf}, {sup}]")]
    BoundsViolation {
        t: f64,
        x: f64,
        value: f64,
        inf: f64,
        sup: f64,
    },

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("iteration did not converge after {} steps (last change {change:e})", trace.iterations)]
    NotConverged {
        trace: Box<IterationTrace>,
        change: f64,
        reason: String,
    },

    #[error("linear system for the rectangle is not uniquely solvable (det_bar={det_bar:e}, det_lo={det_lo:e})")]
    NonUniqueSystem { det_bar: f64, det_lo: f64 },

    #[error("all six coefficients must be constant")]
    NotConstantCoefficients,

    #[error("chemotaxis sensitivities must vanish (chi1={chi1}, chi2={chi2})")]
    ChemotaxisNotZero { chi1: f64, chi2: f64 },

    #[error("coefficients must be space independent")]
    NotSpaceIndependent,

    #[error("integration unstable at t={t}: {reason}")]
    StepUnstable { t: f64, reason: String },

    #[error("pullback solutions disagree by {deviation:e} (tolerance {tol:e}); increase the pullback horizon")]
    PullbackNotConverged { deviation: f64, tol: f64 },

    #[error("non-positive component at sample {index}")]
    NonPositiveComponent { index: usize },

    #[error("elliptic problem is singular (lambda={0})")]
    SingularSystem(f64),

    #[error("advective CFL violated: courant number {courant} > 0.5")]
    CflViolated { courant: f64 },

    #[error("paired runs do not share grid and save times: {0}")]
    GridMismatch(String),

    #[error("config file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
