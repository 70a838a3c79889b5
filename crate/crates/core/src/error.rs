use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: String,
    },
    #[error("leg jacobian |dL/dθ| = {jacobian:.3e} m/rad is below the singularity guard at θ = {theta}")]
    Singularity { theta: f64, jacobian: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("integration failed at t = {t:.4} s: {reason}")]
    Integration { t: f64, reason: String },
    #[error("malformed trial: {0}")]
    TrialMalformed(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
