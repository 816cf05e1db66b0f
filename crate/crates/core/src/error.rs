use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("field escaped the computation window at {plane}")]
    FieldEscape { plane: &'static str },
    #[error("unstable configuration: {0}")]
    UnstableConfiguration(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid loss budget: {0}")]
    InvalidLossBudget(String),
    #[error("degenerate mode: field carries no energy")]
    DegenerateMode,
    #[error("no pixel above threshold {threshold} DN")]
    SpotNotFound { threshold: f64 },
    #[error("rays are parallel (|sin(gamma1 + gamma2)| = {0:e})")]
    DegenerateRays(f64),
    #[error("inconsistent angles: estimated z = {0} m")]
    InconsistentAngles(f64),
    #[error("empty scope: baseline {baseline} m >= coverage width {width} m")]
    EmptyScope { baseline: f64, width: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("nothing to plot: {0}")]
    EmptyPlot(String),
    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    /// Process exit code: 2 configuration, 3 numerical/convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Domain(_)
            | Error::Toml(_)
            | Error::EmptyScope { .. }
            | Error::InvalidLossBudget(_) => 2,
            Error::Io(_)
            | Error::Csv(_)
            | Error::Parse { .. }
            | Error::EmptyPlot(_)
            | Error::Plot(_) => 4,
            _ => 3,
        }
    }
}
