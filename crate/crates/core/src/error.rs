use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("radiation boundary needs a propagating channel, got energy {0}")]
    NoPropagatingChannel(f64),
    #[error("energy {lambda} sits on the channel threshold j^2 = {threshold}")]
    ChannelThreshold { lambda: f64, threshold: f64 },
    #[error("potential does not decay at the box edge: |V| = {value:e}")]
    PotentialNotDecaying { value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("perturbation element `{0}` is not real-valued")]
    NonRealPerturbation(String),
    #[error("matrix is singular at pivot {pivot}")]
    SingularMatrix { pivot: usize },
    #[error("no edge-localized eigenvalue in ({lo}, {hi})")]
    EmbeddedNotFound { lo: f64, hi: f64 },
    #[error("localized eigenvalue {other} lies within the isolation radius of {lambda0}")]
    WindowNotIsolated { lambda0: f64, other: f64 },
    #[error("eigen-solver failed: {0}")]
    EigenSolver(String),
    #[error("energy {lambda} outside the working window ({lo}, {hi})")]
    OutsideWindow { lambda: f64, lo: f64, hi: f64 },
    #[error("epsilon extrapolation diverged (last two estimates differ by {gap:e})")]
    ExtrapolationDiverged { gap: f64 },
    #[error("probe set is rank deficient (rank {rank} of {count})")]
    ProbeDeficient { rank: usize, count: usize },
    #[error("density images collapse: rank {rank} < required {required}")]
    RankCollapse { rank: usize, required: usize },
    #[error("rank deficient: rank {rank} < expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("eigenvalue left the window: {lambda}")]
    LeftWindow { lambda: f64 },
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("phi_0 - u vanishes at grid point {index}")]
    ZeroDivisor { index: usize },
    #[error("u is not orthogonal to the eigenspace (overlap {overlap:e})")]
    NotOrthogonal { overlap: f64 },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidModel(_) => "InvalidModel",
            Error::NoPropagatingChannel(_) => "NoPropagatingChannel",
            Error::ChannelThreshold { .. } => "ChannelThreshold",
            Error::PotentialNotDecaying { .. } => "PotentialNotDecaying",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonRealPerturbation(_) => "NonRealPerturbation",
            Error::SingularMatrix { .. } => "SolveFailure",
            Error::EmbeddedNotFound { .. } => "EmbeddedNotFound",
            Error::WindowNotIsolated { .. } => "WindowNotIsolated",
            Error::EigenSolver(_) => "EigenSolver",
            Error::OutsideWindow { .. } => "OutsideWindow",
            Error::ExtrapolationDiverged { .. } => "ExtrapolationDiverged",
            Error::ProbeDeficient { .. } => "ProbeDeficient",
            Error::RankCollapse { .. } => "RankCollapse",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::LeftWindow { .. } => "LeftWindow",
            Error::SupportViolation(_) => "SupportViolation",
            Error::ZeroDivisor { .. } => "ZeroDivisor",
            Error::NotOrthogonal { .. } => "NotOrthogonal",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
