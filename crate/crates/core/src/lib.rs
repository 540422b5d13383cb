//! Negative sampling for large-output classification.
//!
//! The crate covers the full path from a label marginal to a trained scorer:
//!
//! * [`label_stats`]: label marginals, long-tail profiles, head/torso/tail slices.
//! * [`sampler`]: alias-table sampling of negatives from uniform, within-batch,
//!   model-based or custom distributions.
//! * [`weighting`]: weights on sampled negatives and the pairwise margins
//!   `rho = m * w * q` they induce.
//! * [`losses`]: softmax, decoupled, margin and sampled losses with gradients.
//! * [`implicit`]: closed-form expectation, variance and upper bound of the
//!   sampled losses, plus the catalog of common `(q, w)` combinations.
//! * [`variance_opt`]: the sampling distribution minimizing the variance of the
//!   sampled decoupled loss.
//! * [`harness`]: synthetic long-tail data, SGD training and sliced metrics.
//! * [`verify`]: Monte-Carlo and enumeration checks of the closed forms.

pub mod error;
pub mod harness;
pub mod implicit;
pub mod label_stats;
pub mod losses;
pub mod manifest;
pub mod numeric;
pub mod rng;
pub mod sampler;
pub mod variance_opt;
pub mod verify;
pub mod weighting;

pub use error::{Error, Result};
pub use label_stats::{make_profile, slice_labels, ImbalanceProfile, LabelDistribution, LabelSlices, ProfileKind};
pub use losses::{LossOp, LossSpec, MarginLoss, MarginLossPair, WeightedNegatives};
pub use sampler::{build_alias, draw_negatives, AliasTable, NegativeSample, SamplerKind, SamplingContext, SamplingScheme};
pub use weighting::{rho_of, weight, MarginMatrix, MarginPreset, WeightContext, WeightKind, WeightSpec, WeightingScheme};
