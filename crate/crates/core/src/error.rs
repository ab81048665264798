use alloc::string::String;
use core::fmt;

/// Errors raised by the solvers and checks in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input component lies outside the environment's input box.
    InputOutOfBounds {
        /// Input dimension.
        dim: usize,
        /// Offending value.
        value: f64,
        /// Symmetric bound `H` for that dimension.
        bound: f64,
    },
    /// The Riccati iteration did not reach its fixed point.
    DareDiverged {
        /// Iterations performed before giving up.
        iterations: usize,
    },
    /// Value iteration hit its sweep limit.
    NotConverged {
        /// Sweeps performed.
        sweeps: usize,
        /// Sup-norm change of the last sweep.
        residual: f64,
    },
    /// Policy evaluation blew past the divergence threshold.
    PolicyUnstable {
        /// Sweeps performed before divergence was detected.
        sweeps: usize,
    },
    /// A rank beyond the input-set size was requested.
    RankOutOfRange {
        /// Requested rank (1 = best).
        rank: usize,
        /// Number of inputs available.
        size: usize,
    },
    /// Two fields that must describe the same problem do not.
    MetadataMismatch(String),
    /// No grid node lies outside the exclusion ball.
    EmptyNodeSet,
    /// A precondition on an argument does not hold.
    InvalidArgument(String),
    /// A matrix required to be positive definite is not.
    NotPositiveDefinite {
        /// Smallest eigenvalue found.
        min_eigenvalue: f64,
    },
    /// Vector or matrix dimensions disagree.
    DimensionMismatch {
        /// Expected length.
        expected: usize,
        /// Length received.
        got: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InputOutOfBounds { dim, value, bound } => {
                write!(f, "input {dim} = {value} outside [-{bound}, {bound}]")
            }
            Error::DareDiverged { iterations } => {
                write!(
                    f,
                    "Riccati iteration diverged after {iterations} iterations"
                )
            }
            Error::NotConverged { sweeps, residual } => {
                write!(
                    f,
                    "not converged after {sweeps} sweeps (residual {residual:e})"
                )
            }
            Error::PolicyUnstable { sweeps } => {
                write!(f, "policy evaluation diverged after {sweeps} sweeps")
            }
            Error::RankOutOfRange { rank, size } => {
                write!(f, "rank {rank} out of range for {size} inputs")
            }
            Error::MetadataMismatch(what) => write!(f, "field metadata mismatch: {what}"),
            Error::EmptyNodeSet => write!(f, "no grid node outside the exclusion radius"),
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            Error::NotPositiveDefinite { min_eigenvalue } => {
                write!(
                    f,
                    "matrix not positive definite (min eigenvalue {min_eigenvalue:e})"
                )
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for Error {}

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
