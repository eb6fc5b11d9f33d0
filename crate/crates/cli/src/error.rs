//! Exit-code contract: 0 success, 1 configuration or environment failure,
//! 2 the run completed its setup but failed its numerical bar. The split
//! lets automation distinguish "ran, result bad" from "never ran".

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration, failed model assumptions, or an
    /// unusable output location.
    #[error("{0}")]
    Config(String),
    /// Artifact write failure after a successful computation.
    #[error("{0}")]
    Artifact(String),
    /// The computation ran and missed its own bar: non-convergence, an
    /// aborted evolution, a failed invariant check.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Artifact(_) => 1,
            CliError::Failed(_) => 2,
        }
    }
}
