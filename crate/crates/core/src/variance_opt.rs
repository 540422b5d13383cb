//! Minimum-variance sampling for the sampled decoupled loss.
//!
//! With margin-targeting weights `w = rho / (m q)`, the variance of the
//! sampled decoupled loss is `(1/m) [sum_j a_j^2 / q_j - (sum_j a_j)^2]` with
//! `a_j = rho_yj * varphi(-f_j)`, minimized by `q ∝ a`. Evaluating `q*` needs
//! every label's loss, so this is an analysis tool and not used for training.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::label_stats::LabelDistribution;
use crate::losses::MarginLossPair;
use crate::numeric::stable_sum;
use crate::weighting::MarginMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceProfile {
    /// `None` when every `rho * varphi` term is zero.
    #[serde(skip)]
    pub q_star: Option<LabelDistribution>,
    pub achieved_variance: f64,
    /// The scorer already has zero loss on every negative.
    pub degenerate: bool,
}

/// `a_j = rho_yj * varphi(-f_j)` for `j != y`, zero at `y`.
pub fn contributions(y: usize, f: &[f64], rho: &MarginMatrix, pair: &MarginLossPair) -> Vec<f64> {
    (0..f.len()).map(|j| if j == y { 0.0 } else { rho.rho(y, j) * pair.varphi.value(-f[j]) }).collect()
}

pub fn optimal_q(y: usize, f: &[f64], rho: &MarginMatrix, pair: &MarginLossPair, m: usize) -> Result<VarianceProfile> {
    let a = contributions(y, f, rho, pair);
    if let Some(j) = a.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!("rho * loss for label {j} is {}", a[j])));
    }
    let total = stable_sum(a.iter().copied());
    if total == 0.0 {
        return Ok(VarianceProfile { q_star: None, achieved_variance: 0.0, degenerate: true });
    }
    let q_star = LabelDistribution::from_weights(&a)?;
    let achieved_variance = variance_from_contributions(&a, q_star.probs(), m)?;
    Ok(VarianceProfile { q_star: Some(q_star), achieved_variance, degenerate: false })
}

/// Variance of the sampled decoupled loss under `q` with weights `rho / (m q)`.
pub fn variance_under(q: &LabelDistribution, y: usize, f: &[f64], rho: &MarginMatrix, m: usize, pair: &MarginLossPair) -> Result<f64> {
    if q.len() != f.len() {
        return Err(Error::Dimension(format!("q has {} labels, logits {}", q.len(), f.len())));
    }
    variance_from_contributions(&contributions(y, f, rho, pair), q.probs(), m)
}

/// `(1/m) sum_{q_j > 0} q_j (a_j / q_j - S)^2`, which equals
/// `(1/m) [sum a_j^2 / q_j - S^2]` when `q` covers the support of `a`.
fn variance_from_contributions(a: &[f64], q: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if let Some(j) = (0..a.len()).find(|&j| a[j] > 0.0 && q[j] == 0.0) {
        return Err(Error::SupportMismatch(j));
    }
    let total = stable_sum(a.iter().copied());
    let sum = stable_sum((0..a.len()).filter(|&j| q[j] > 0.0).map(|j| q[j] * (a[j] / q[j] - total).powi(2)));
    Ok(sum / m as f64)
}
