use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix {which} is asymmetric (relative asymmetry {asymmetry:e})")]
    Asymmetric { which: String, asymmetry: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("distance {distance} m is below the minimum {min_distance} m")]
    DistanceTooSmall { distance: f64, min_distance: f64 },
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("receive vector of device {device}, stream {stream} is zero")]
    ZeroReceiveVector { device: usize, stream: usize },
    #[error("device {device} offloads with zero rate")]
    ZeroRate { device: usize },
    #[error("device {device} is not in the offloading set")]
    NotOffloading { device: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamformingError {
    #[error("offloading set is empty")]
    EmptyOffloadSet,
    #[error("delay constraints admit no transmit design (devices {devices:?})")]
    InnerInfeasible { devices: Vec<usize> },
    #[error("log argument {value:e} is not positive for device {device}, stream {stream}")]
    DomainViolation {
        device: usize,
        stream: usize,
        value: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("brute force supports at most 12 devices, got {0}")]
    TooLarge(usize),
    #[error("no decision vector admits a delay-feasible configuration")]
    NoFeasibleConfiguration,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("malformed results file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
