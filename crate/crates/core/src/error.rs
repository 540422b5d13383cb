use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("sampling context does not match scheme: {0}")]
    ContextMismatch(&'static str),

    #[error("empty minibatch for within-batch sampling")]
    EmptyBatch,

    #[error("excluding the positive label leaves no sampling mass")]
    NoMassAfterExclusion,

    #[error("weight undefined: q[{label}] = 0 for a scheme that divides by it")]
    ZeroProposalMass { label: usize },

    #[error("weighting scheme is missing {0}")]
    MissingParameter(&'static str),

    #[error("positive label {0} has nonzero sampling mass and nonzero weight")]
    PositiveNotExcluded(usize),

    #[error("weights depend on the number of negatives; no m-independent eta exists")]
    MDependentWeights,

    #[error("sampling distribution has no mass where rho * loss > 0 (label {0})")]
    SupportMismatch(usize),

    #[error("unknown name {kind}: {name:?}")]
    UnknownName { kind: &'static str, name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at step {step}{}: loss is {loss}", epoch.map(|e| format!(" (epoch {e})")).unwrap_or_default())]
    Diverged { epoch: Option<usize>, step: u64, loss: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
