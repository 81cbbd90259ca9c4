use thiserror::Error;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: malformed model, invalid window, unknown option.
    Config,
    /// A numerical procedure did not reach its stated accuracy.
    Convergence,
    /// A physical invariant that must hold was violated.
    Physics,
    /// Filesystem or serialization failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hamiltonian is not Hermitian: |H - H^dag| = {deviation:.3e} at entry ({row}, {col})")]
    NonHermitian { deviation: f64, row: usize, col: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("channel index {index} out of range for {count} channel(s)")]
    ChannelIndex { index: usize, count: usize },

    #[error("channel {index} has non-integer weight {weight}; the jump engine needs integer charges")]
    NonIntegerWeight { index: usize, weight: f64 },

    #[error("channel {index} is monitored but has zero weight; flag it unmonitored instead")]
    ZeroWeight { index: usize },

    #[error("invalid charge window: {0}")]
    InvalidWindow(String),

    #[error("invalid charge grid: {0}")]
    InvalidGrid(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("steady state is not unique: Liouvillian kernel has dimension {dim}")]
    DegenerateKernel { dim: usize },

    #[error("ill-conditioned inversion (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("Drazin identity `{identity}` violated: residual {residual:.3e}")]
    DrazinCheck { identity: &'static str, residual: f64 },

    #[error("generator decomposition check failed: residual {residual:.3e}")]
    DecompositionCheck { residual: f64 },

    #[error("quantum correction has imaginary residue {residue:.3e}")]
    ImaginaryResidue { residue: f64 },

    #[error("tail not converged: G(T) = {survival:.3e} at T = {horizon}{}", match required_horizon {
        Some(t) => format!("; a horizon of about {t:.4} is required"),
        None => "; survival is not decaying".to_string(),
    })]
    TailNotConverged {
        survival: f64,
        horizon: f64,
        required_horizon: Option<f64>,
    },

    #[error("exponential action failed: {0}")]
    Convergence(String),

    #[error("singular block encountered during factorization at cell {cell}")]
    SingularBlock { cell: usize },

    #[error("window auto-sizing exceeded the limit of {limit} cells")]
    WindowLimit { limit: usize },

    #[error("negative probability {value:.3e} in cell {cell}")]
    NegativeProbability { cell: i64, value: f64 },

    #[error("time step too large: dt * rate = {product:.3} (limit {limit})")]
    StepTooLarge { product: f64, limit: f64 },

    #[error("conditional state norm collapsed in trajectory {trajectory}")]
    NormCollapse { trajectory: u64 },

    #[error("positivity repairs in {repairs} of {steps} steps (trajectory {trajectory})")]
    PositivityRepairs { trajectory: u64, repairs: u64, steps: u64 },

    #[error("ensemble has no absorbed trajectories")]
    EmptyEnsemble,

    #[error("physics assertion failed: {0}")]
    Physics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Convergence(_)
            | Error::TailNotConverged { .. }
            | Error::IllConditioned { .. }
            | Error::SingularBlock { .. }
            | Error::WindowLimit { .. }
            | Error::NegativeProbability { .. }
            | Error::NormCollapse { .. }
            | Error::PositivityRepairs { .. } => ErrorKind::Convergence,
            Error::DrazinCheck { .. }
            | Error::DecompositionCheck { .. }
            | Error::ImaginaryResidue { .. }
            | Error::Physics(_) => ErrorKind::Physics,
            Error::Io(_) | Error::Csv(_) => ErrorKind::Io,
            _ => ErrorKind::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
