use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by model construction, solvers, and file handling.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions of an input do not line up with what an operation needs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value that must be finite (and where required, nonnegative) is not.
    #[error("non-finite value at flat index {index} in {context}")]
    NonFinite { index: usize, context: String },

    /// An index sequence that must be a bijection on 0..n is not one.
    #[error("invalid permutation: {0}")]
    Permutation(String),

    /// A group count that does not divide the channel count it is applied to.
    #[error("group count {groups} does not divide {channels} {axis} channels")]
    GroupMismatch {
        groups: usize,
        channels: usize,
        axis: &'static str,
    },

    /// A caller-supplied parameter is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No group configuration can satisfy the requested budget.
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    /// An exhaustive enumeration would exceed its configured cap.
    #[error("enumeration needs {required} objective evaluations, above the cap of {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    /// An I/O failure, tagged with the path involved.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file whose contents do not match the expected format.
    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    /// A versioned file written by a newer or unknown revision of the tools.
    #[error("unsupported format version {found} (this build reads version {supported})")]
    FormatVersion { found: u32, supported: u32 },
}

impl Error {
    /// Process exit status used by the command-line tool: 2 for budget
    /// infeasibility and enumeration caps, 1 for every other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleBudget(_) | Error::EnumerationCap { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
