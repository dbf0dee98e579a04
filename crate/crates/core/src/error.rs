use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration blew up at t = {time} (state non-finite or beyond the admissible bound)")]
    IntegrationBlowup { time: f64 },

    #[error("rank deficient system in {context}: {hint}")]
    Rank { context: String, hint: String },

    #[error(
        "no convergence in {context} after {iterations} iterations (objective trace: {trace:?})"
    )]
    Convergence {
        context: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error(
        "test aborted: {failed} of {total} bootstrap replicates failed (first error: {first})"
    )]
    TestAborted {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn rank(context: impl Into<String>, hint: impl Into<String>) -> Self {
        Error::Rank {
            context: context.into(),
            hint: hint.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
