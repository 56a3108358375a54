use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("advection CFL violated (courant number {courant:.3} > 0.9); use dt <= {max_dt:.3e}")]
    Cfl { courant: f64, max_dt: f64 },

    #[error("unnormalized mass underflow at t={time}: log mass {log_mass:.3} (potential too strong for the horizon)")]
    MassUnderflow { time: f64, log_mass: f64 },

    #[error("value transform underflow at t={time}: w floored at {floor:e} on {count} nodes after logging")]
    ValueUnderflow { time: f64, floor: f64, count: usize },

    #[error("{what} did not converge after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
        residuals: Vec<f64>,
    },

    #[error("self-normalized estimator degenerate at step {step}: all weights underflow (max A = {max_a:.3})")]
    EstimatorDegenerate { step: usize, max_a: f64 },

    #[error("no surviving particle at t={time}; conditional estimate undefined")]
    ConditioningOnNull { time: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss:.4e} above 10x initial {initial:.4e}")]
    TrainingDiverged { iteration: usize, loss: f64, initial: f64 },

    #[error("malformed policy file: {0}")]
    PolicyFormat(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
