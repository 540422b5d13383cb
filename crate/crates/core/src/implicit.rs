//! What a `(q, w)` scheme optimizes in expectation.
//!
//! For the sampled decoupled loss the expectation and variance over
//! `N ~ q^m` are exact. For the sampled softmax only an upper bound is
//! available (Jensen), equal to the margin loss with `rho = m * w * q`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::label_stats::LabelDistribution;
use crate::losses::{margin_ce_row, MarginLossPair};
use crate::numeric::stable_sum;
use crate::sampler::{Proposal, SamplerKind, SamplingContext, SamplingScheme};
use crate::weighting::{WeightContext, WeightKind, WeightingScheme};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicitLossReport {
    /// Exact expectation (decoupled) or upper bound (softmax).
    pub expected_or_bound: f64,
    /// Exact variance for the decoupled loss; leading-order (delta-method)
    /// variance `sigma^2 / (m mu^2)` for the softmax bound.
    pub variance: f64,
    pub is_exact: bool,
    /// `rho[y][y']` for every label, zero at `y` and wherever `q` is zero.
    pub rho_used: Vec<f64>,
}

fn check_positive(y: usize, f: &[f64], q: &LabelDistribution, scheme: &WeightingScheme, m: usize, ctx: &WeightContext<'_>) -> Result<()> {
    if f.len() != q.len() {
        return Err(Error::Dimension(format!("{} logits for {} labels", f.len(), q.len())));
    }
    if y >= q.len() {
        return Err(Error::LabelOutOfRange { label: y, num_labels: q.len() });
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if q.prob(y) > 0.0 && scheme.weight(y, y, q, m, ctx)? != 0.0 {
        return Err(Error::PositiveNotExcluded(y));
    }
    Ok(())
}

/// Per-label `(w, rho)` on the support of `q`, excluding the positive.
fn weights_and_margins(y: usize, q: &LabelDistribution, scheme: &WeightingScheme, m: usize, ctx: &WeightContext<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut w = vec![0.0; q.len()];
    let mut rho = vec![0.0; q.len()];
    for j in (0..q.len()).filter(|&j| j != y && q.prob(j) > 0.0) {
        w[j] = scheme.weight(y, j, q, m, ctx)?;
        rho[j] = m as f64 * w[j] * q.prob(j);
    }
    Ok((w, rho))
}

/// Exact mean and variance of the sampled decoupled loss over `N ~ q^m`.
///
/// Requires `q[y] = 0`, or a scheme that gives the positive zero weight.
pub fn implicit_decoupled(
    y: usize,
    f: &[f64],
    q: &LabelDistribution,
    scheme: &WeightingScheme,
    ctx: &WeightContext<'_>,
    m: usize,
    pair: &MarginLossPair,
) -> Result<ImplicitLossReport> {
    check_positive(y, f, q, scheme, m, ctx)?;
    let (w, rho) = weights_and_margins(y, q, scheme, m, ctx)?;
    let neg_loss: Vec<f64> = f.iter().map(|&v| pair.varphi.value(-v)).collect();
    let first = stable_sum((0..q.len()).map(|j| rho[j] * neg_loss[j]));
    let second = stable_sum((0..q.len()).map(|j| w[j] * rho[j] * neg_loss[j] * neg_loss[j]));
    let variance = (second - first * first / m as f64).max(0.0);
    Ok(ImplicitLossReport { expected_or_bound: pair.phi.value(f[y]) + first, variance, is_exact: true, rho_used: rho })
}

/// Upper bound `log[1 + sum rho_yy' exp(f_y' - f_y)]` on the expected sampled softmax.
pub fn implicit_softmax_bound(y: usize, f: &[f64], q: &LabelDistribution, scheme: &WeightingScheme, ctx: &WeightContext<'_>, m: usize) -> Result<ImplicitLossReport> {
    check_positive(y, f, q, scheme, m, ctx)?;
    let (w, rho) = weights_and_margins(y, q, scheme, m, ctx)?;
    let eta: Vec<f64> = w.iter().map(|w| w * m as f64).collect();
    let cq = convergence_quantities_shifted(y, f, q, &eta, f[y]);
    Ok(ImplicitLossReport {
        expected_or_bound: margin_ce_row(y, f, &rho),
        variance: cq.sigma_sq / (m as f64 * cq.mu * cq.mu),
        is_exact: false,
        rho_used: rho,
    })
}

/// Quantities governing how fast the sampled softmax approaches its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceQuantities {
    /// `e^{f_y} + E_q[eta e^{f_y'}]`
    pub mu: f64,
    /// `V_q[eta e^{f_y'}]`
    pub sigma_sq: f64,
    pub eta: Vec<f64>,
}

impl ConvergenceQuantities {
    /// `sigma^2 / mu^2`, the asymptotic `m * MSE` of the sampled loss around its bound.
    pub fn inverse_snr(&self) -> f64 {
        self.sigma_sq / (self.mu * self.mu)
    }
}

fn convergence_quantities_shifted(y: usize, f: &[f64], q: &LabelDistribution, eta: &[f64], shift: f64) -> ConvergenceQuantities {
    let support: Vec<usize> = (0..q.len()).filter(|&j| j != y && q.prob(j) > 0.0).collect();
    let value = |j: usize| eta[j] * (f[j] - shift).exp();
    let mean = stable_sum(support.iter().map(|&j| q.prob(j) * value(j)));
    let sigma_sq = stable_sum(support.iter().map(|&j| q.prob(j) * (value(j) - mean).powi(2)));
    ConvergenceQuantities { mu: (f[y] - shift).exp() + mean, sigma_sq, eta: eta.to_vec() }
}

/// `mu` and `sigma^2` for the given m-independent weights `eta = m * w`.
pub fn convergence_quantities(y: usize, f: &[f64], q: &LabelDistribution, eta: &[f64]) -> Result<ConvergenceQuantities> {
    if f.len() != q.len() || eta.len() != q.len() {
        return Err(Error::Dimension("logits, q and eta must have one entry per label".into()));
    }
    if q.prob(y) > 0.0 && eta[y] != 0.0 {
        return Err(Error::PositiveNotExcluded(y));
    }
    if let Some(j) = (0..q.len()).find(|&j| q.prob(j) > 0.0 && !(eta[j].is_finite() && eta[j] >= 0.0)) {
        return Err(Error::InvalidArgument(format!("eta[{j}] = {}", eta[j])));
    }
    Ok(convergence_quantities_shifted(y, f, q, eta, 0.0))
}

/// `eta = m * w` for every label on the support of `q` (zero elsewhere).
pub fn eta_vector(y: usize, q: &LabelDistribution, scheme: &WeightingScheme, ctx: &WeightContext<'_>) -> Result<Vec<f64>> {
    (0..q.len()).map(|j| if j == y || q.prob(j) == 0.0 { Ok(0.0) } else { scheme.eta(y, j, q, ctx) }).collect()
}

/// How the positive label is kept out of the negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QConvention {
    /// `q[y] = 0`, the remaining mass renormalized over the other `L - 1` labels.
    Exclusive,
    /// `q` covers all `L` labels and the positive gets weight 0.
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Softmax,
    Decoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogSampler {
    Uniform,
    WithinBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogWeight {
    Constant,
    Importance,
    Relative,
    Tail,
}

impl LossFamily {
    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Softmax => "softmax",
            LossFamily::Decoupled => "decoupled",
        }
    }
}

impl CatalogSampler {
    pub fn name(self) -> &'static str {
        match self {
            CatalogSampler::Uniform => "uniform",
            CatalogSampler::WithinBatch => "within_batch",
        }
    }
}

impl CatalogWeight {
    pub fn name(self) -> &'static str {
        match self {
            CatalogWeight::Constant => "constant",
            CatalogWeight::Importance => "importance",
            CatalogWeight::Relative => "relative",
            CatalogWeight::Tail => "tail",
        }
    }
}

/// Which labels a row's implicit loss favours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Unbiased,
    /// Negatives rescaled uniformly; no head/tail preference.
    Scaled,
    HeadBenefiting,
    TailBenefiting,
}

impl Effect {
    pub fn name(self) -> &'static str {
        match self {
            Effect::Unbiased => "unbiased",
            Effect::Scaled => "scaled",
            Effect::HeadBenefiting => "head-benefiting",
            Effect::TailBenefiting => "tail-benefiting",
        }
    }
}

/// One `(family, sampler, weight)` combination with its closed-form margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CatalogRow {
    pub family: LossFamily,
    pub sampler: CatalogSampler,
    pub weight: CatalogWeight,
    pub effect: Effect,
    pub comment: &'static str,
}

impl CatalogRow {
    /// Symbolic form of `rho[y][y']` under a convention.
    pub fn rho_pattern(&self, convention: QConvention) -> &'static str {
        use CatalogSampler::*;
        use CatalogWeight::*;
        match (self.sampler, self.weight, convention) {
            (_, Importance, _) => "1",
            (_, Tail, _) => "pi_y' / pi_y",
            (Uniform, Constant, QConvention::Exclusive) => "1 / (L - 1)",
            (Uniform, Constant, QConvention::Inclusive) => "1 / L",
            (Uniform, Relative, _) => "m / L",
            (WithinBatch, Constant, QConvention::Exclusive) => "pi_y' / (1 - pi_y)",
            (WithinBatch, Constant, QConvention::Inclusive) => "pi_y'",
            (WithinBatch, Relative, _) => "m * pi_y",
        }
    }

    /// Closed-form `rho[y][y']` for `y' != y`.
    pub fn rho(&self, y: usize, y_neg: usize, pi: &LabelDistribution, m: usize, convention: QConvention) -> f64 {
        use CatalogSampler::*;
        use CatalogWeight::*;
        let l = pi.len() as f64;
        let m = m as f64;
        match (self.sampler, self.weight, convention) {
            (_, Importance, _) => 1.0,
            (_, Tail, _) => pi.prob(y_neg) / pi.prob(y),
            (Uniform, Constant, QConvention::Exclusive) => 1.0 / (l - 1.0),
            (Uniform, Constant, QConvention::Inclusive) => 1.0 / l,
            (Uniform, Relative, _) => m / l,
            (WithinBatch, Constant, QConvention::Exclusive) => pi.prob(y_neg) / (1.0 - pi.prob(y)),
            (WithinBatch, Constant, QConvention::Inclusive) => pi.prob(y_neg),
            (WithinBatch, Relative, _) => m * pi.prob(y),
        }
    }

    /// Implicit loss from the closed-form margins. Decoupled rows need `pair`.
    pub fn evaluate(&self, y: usize, f: &[f64], pi: &LabelDistribution, m: usize, convention: QConvention, pair: Option<&MarginLossPair>) -> Result<f64> {
        let row: Vec<f64> = (0..pi.len()).map(|j| if j == y { 0.0 } else { self.rho(y, j, pi, m, convention) }).collect();
        match self.family {
            LossFamily::Softmax => Ok(margin_ce_row(y, f, &row)),
            LossFamily::Decoupled => {
                let pair = pair.ok_or(Error::MissingParameter("margin loss pair"))?;
                Ok(pair.phi.value(f[y]) + stable_sum(row.iter().zip(f).map(|(r, &v)| r * pair.varphi.value(-v))))
            }
        }
    }

    /// The sampler and weighting this row describes, realized for positive `y`.
    /// Within-batch sampling is represented by its expectation `q = pi`.
    pub fn scheme(&self, y: usize, pi: &LabelDistribution, convention: QConvention) -> Result<(Proposal, WeightingScheme)> {
        let kind = match self.sampler {
            CatalogSampler::Uniform => SamplerKind::Uniform,
            CatalogSampler::WithinBatch => SamplerKind::Custom(pi.clone()),
        };
        let exclusive = convention == QConvention::Exclusive;
        let proposal = SamplingScheme::new(kind).with_exclusion(exclusive).realize(pi.len(), SamplingContext::None, y)?;
        let weighting = match self.weight {
            CatalogWeight::Constant => WeightingScheme::constant(),
            CatalogWeight::Importance => WeightingScheme::importance(),
            CatalogWeight::Relative => WeightingScheme::relative(),
            CatalogWeight::Tail => WeightingScheme::tail(pi.clone()),
        }
        .with_zero_positive(!exclusive);
        Ok((proposal, weighting))
    }

    /// Implicit loss computed through the generic lemma-based operations.
    pub fn evaluate_generic(&self, y: usize, f: &[f64], pi: &LabelDistribution, m: usize, convention: QConvention, pair: Option<&MarginLossPair>) -> Result<f64> {
        let (proposal, weighting) = self.scheme(y, pi, convention)?;
        let ctx = WeightContext::with_positive_mass(proposal.positive_mass);
        match self.family {
            LossFamily::Softmax => Ok(implicit_softmax_bound(y, f, &proposal.q, &weighting, &ctx, m)?.expected_or_bound),
            LossFamily::Decoupled => {
                let pair = pair.ok_or(Error::MissingParameter("margin loss pair"))?;
                Ok(implicit_decoupled(y, f, &proposal.q, &weighting, &ctx, m, pair)?.expected_or_bound)
            }
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.family.name(), self.sampler.name(), self.weight.name())
    }

    pub fn weight_kind(&self) -> WeightKind {
        match self.weight {
            CatalogWeight::Constant => WeightKind::Constant,
            CatalogWeight::Importance => WeightKind::Importance,
            CatalogWeight::Relative => WeightKind::Relative,
            CatalogWeight::Tail => WeightKind::Tail,
        }
    }
}

/// All sixteen rows: eight for the sampled softmax, eight for the decoupled loss.
pub fn catalog() -> Vec<CatalogRow> {
    use CatalogSampler::*;
    use CatalogWeight::*;
    use Effect::*;
    let softmax = [
        (Uniform, Constant, Scaled, "softmax with downweighted negatives"),
        (Uniform, Importance, Unbiased, "softmax cross-entropy"),
        (Uniform, Relative, Scaled, "softmax with downweighted negatives"),
        (Uniform, Tail, TailBenefiting, "logit-adjusted loss"),
        (WithinBatch, Constant, TailBenefiting, "equalised loss"),
        (WithinBatch, Importance, Unbiased, "softmax cross-entropy"),
        (WithinBatch, Relative, HeadBenefiting, "softmax with upweighted head labels"),
        (WithinBatch, Tail, TailBenefiting, "logit-adjusted loss"),
    ];
    let decoupled = [
        (Uniform, Constant, Scaled, "scaled decoupled loss"),
        (Uniform, Importance, Unbiased, "decoupled loss"),
        (Uniform, Relative, Scaled, "scaled decoupled loss"),
        (Uniform, Tail, TailBenefiting, "tail-heavy loss"),
        (WithinBatch, Constant, TailBenefiting, "tail-heavy loss"),
        (WithinBatch, Importance, Unbiased, "decoupled loss"),
        (WithinBatch, Relative, HeadBenefiting, "head-heavy loss"),
        (WithinBatch, Tail, TailBenefiting, "tail-heavy loss"),
    ];
    softmax
        .into_iter()
        .map(|r| (LossFamily::Softmax, r))
        .chain(decoupled.into_iter().map(|r| (LossFamily::Decoupled, r)))
        .map(|(family, (sampler, weight, effect, comment))| CatalogRow { family, sampler, weight, effect, comment })
        .collect()
}

/// Looks up a row by names, e.g. `("within_batch", "tail", "softmax")`.
pub fn catalog_implicit(sampler: &str, weight: &str, family: &str) -> Result<CatalogRow> {
    let sampler = match sampler {
        "uniform" => CatalogSampler::Uniform,
        "within_batch" => CatalogSampler::WithinBatch,
        other => return Err(Error::UnknownName { kind: "catalog sampler", name: other.into() }),
    };
    let weight = match weight {
        "constant" => CatalogWeight::Constant,
        "importance" => CatalogWeight::Importance,
        "relative" => CatalogWeight::Relative,
        "tail" => CatalogWeight::Tail,
        other => return Err(Error::UnknownName { kind: "catalog weight", name: other.into() }),
    };
    let family = match family {
        "softmax" => LossFamily::Softmax,
        "decoupled" => LossFamily::Decoupled,
        other => return Err(Error::UnknownName { kind: "catalog family", name: other.into() }),
    };
    Ok(catalog().into_iter().find(|r| r.sampler == sampler && r.weight == weight && r.family == family).expect("catalog covers every combination"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{decoupled_loss, softmax_ce, LossOp, WeightedNegatives};
    use crate::weighting::MarginMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, l: usize, y: usize) -> (Vec<f64>, LabelDistribution) {
        let f: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut w: Vec<f64> = (0..l).map(|_| rng.gen_range(0.05..1.0)).collect();
        w[y] = 0.0;
        (f, LabelDistribution::from_weights(&w).unwrap())
    }

    /// Enumerates all `(L-1)^m` tuples of negatives and returns the exact mean and variance.
    fn enumerate_decoupled(y: usize, f: &[f64], q: &LabelDistribution, scheme: &WeightingScheme, m: usize, pair: &MarginLossPair) -> (f64, f64) {
        let support: Vec<usize> = (0..q.len()).filter(|&j| q.prob(j) > 0.0).collect();
        let mut idx = vec![0usize; m];
        let (mut e1, mut e2) = (0.0, 0.0);
        loop {
            let labels: Vec<usize> = idx.iter().map(|&i| support[i]).collect();
            let p: f64 = labels.iter().map(|&j| q.prob(j)).product();
            let weights = labels.iter().map(|&j| scheme.weight(y, j, q, m, &WeightContext::default()).unwrap()).collect();
            let wn = WeightedNegatives { labels, weights };
            let v = LossOp::SampledDecoupled(&wn, pair).value(y, f);
            e1 += p * v;
            e2 += p * v * v;
            let mut k = 0;
            loop {
                if k == m {
                    return (e1, e2 - e1 * e1);
                }
                idx[k] += 1;
                if idx[k] < support.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn decoupled_matches_enumeration_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pair = MarginLossPair::softplus();
        for _ in 0..20 {
            let (f, q) = random_instance(&mut rng, 3, 0);
            for scheme in [WeightingScheme::constant(), WeightingScheme::importance(), WeightingScheme::tail(LabelDistribution::from_weights(&[0.5, 0.3, 0.2]).unwrap())] {
                let r = implicit_decoupled(0, &f, &q, &scheme, &WeightContext::default(), 2, &pair).unwrap();
                let (mean, var) = enumerate_decoupled(0, &f, &q, &scheme, 2, &pair);
                assert!((r.expected_or_bound - mean).abs() <= 1e-12, "{} vs {}", r.expected_or_bound, mean);
                assert!((r.variance - var).abs() <= 1e-12, "{} vs {}", r.variance, var);
                assert!(r.is_exact);
            }
        }
    }

    #[test]
    fn importance_weights_recover_full_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pair = MarginLossPair::hinge();
        for _ in 0..20 {
            let (f, q) = random_instance(&mut rng, 6, 2);
            let ctx = WeightContext::default();
            let d = implicit_decoupled(2, &f, &q, &WeightingScheme::importance(), &ctx, 4, &pair).unwrap();
            assert!((d.expected_or_bound - decoupled_loss(2, &f, &pair)).abs() < 1e-12);
            let s = implicit_softmax_bound(2, &f, &q, &WeightingScheme::importance(), &ctx, 4).unwrap();
            assert!((s.expected_or_bound - softmax_ce(2, &f)).abs() < 1e-12);
            assert!(!s.is_exact);
        }
    }

    #[test]
    fn separated_scores_have_zero_variance() {
        let q = LabelDistribution::from_weights(&[0.0, 1.0, 2.0]).unwrap();
        let r = implicit_decoupled(0, &[3.0, -5.0, -4.0], &q, &WeightingScheme::constant(), &WeightContext::default(), 3, &MarginLossPair::hinge()).unwrap();
        assert_eq!(r.variance, 0.0);
        assert_eq!(r.expected_or_bound, 0.0);
    }

    #[test]
    fn rejects_positive_in_support() {
        let q = LabelDistribution::uniform(3).unwrap();
        let err = implicit_softmax_bound(0, &[0.0; 3], &q, &WeightingScheme::constant(), &WeightContext::default(), 2);
        assert!(matches!(err, Err(Error::PositiveNotExcluded(0))));
        let ok = implicit_softmax_bound(0, &[0.0; 3], &q, &WeightingScheme::constant().with_zero_positive(true), &WeightContext::default(), 2);
        assert!(ok.is_ok());
    }

    #[test]
    fn within_batch_constant_is_equalised() {
        let pi = LabelDistribution::new(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        let f = [0.3, -0.2, 0.9, 0.1];
        let q = SamplingScheme::new(SamplerKind::Custom(pi.clone())).with_exclusion(false).realize_q(4, SamplingContext::None, 1).unwrap();
        let r = implicit_softmax_bound(1, &f, &q, &WeightingScheme::constant().with_zero_positive(true), &WeightContext::default(), 8).unwrap();
        let want = (1.0 + [0usize, 2, 3].iter().map(|&j| pi.prob(j) * (f[j] - f[1]).exp()).sum::<f64>()).ln();
        assert!((r.expected_or_bound - want).abs() < 1e-14);
    }

    #[test]
    fn bound_equals_margin_ce() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let (f, q) = random_instance(&mut rng, 7, 3);
            let rho: Vec<f64> = (0..49).map(|_| rng.gen_range(0.0..4.0)).collect();
            let margins = MarginMatrix::dense(7, rho).unwrap();
            let scheme = WeightingScheme::target_margin(margins.clone());
            let r = implicit_softmax_bound(3, &f, &q, &scheme, &WeightContext::default(), 5).unwrap();
            let want = crate::losses::margin_ce(3, &f, &margins);
            assert!((r.expected_or_bound - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn convergence_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let (f, q) = random_instance(&mut rng, 8, 0);
            let eta = eta_vector(0, &q, &WeightingScheme::importance(), &WeightContext::default()).unwrap();
            let cq = convergence_quantities(0, &f, &q, &eta).unwrap();
            let partition: f64 = f.iter().map(|v| v.exp()).sum();
            assert!((cq.mu - partition).abs() <= 1e-12 * partition);

            // direct summation over labels
            let e: f64 = (1..8).map(|j| q.prob(j) * eta[j] * f[j].exp()).sum();
            let e2: f64 = (1..8).map(|j| q.prob(j) * (eta[j] * f[j].exp()).powi(2)).sum();
            assert!((cq.sigma_sq - (e2 - e * e)).abs() <= 1e-12 * e2.max(1.0));
        }
        let q = LabelDistribution::point_mass(3, 2).unwrap();
        let cq = convergence_quantities(0, &[0.1, 0.2, 0.3], &q, &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(cq.sigma_sq, 0.0);
    }

    #[test]
    fn catalog_has_sixteen_distinct_rows() {
        let rows = catalog();
        assert_eq!(rows.len(), 16);
        let mut labels: Vec<String> = rows.iter().map(|r| r.label()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 16);
        assert!(catalog_implicit("uniform", "nope", "softmax").is_err());
    }

    #[test]
    fn catalog_reference_rows() {
        let pi = LabelDistribution::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let tail = catalog_implicit("within_batch", "tail", "softmax").unwrap();
        assert!((tail.rho(3, 0, &pi, 5, QConvention::Exclusive) - 4.0).abs() < 1e-15);
        let rel = catalog_implicit("within_batch", "relative", "softmax").unwrap();
        assert!((rel.rho(1, 0, &pi, 5, QConvention::Exclusive) - 1.5).abs() < 1e-15);
        assert_eq!(rel.effect, Effect::HeadBenefiting);
        let imp = catalog_implicit("uniform", "importance", "softmax").unwrap();
        assert_eq!(imp.rho(1, 0, &pi, 5, QConvention::Exclusive), 1.0);
        assert_eq!(imp.effect, Effect::Unbiased);
        assert_eq!(catalog_implicit("within_batch", "constant", "softmax").unwrap().effect, Effect::TailBenefiting);
    }

    #[test]
    fn catalog_agrees_with_generic_under_both_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let pair = MarginLossPair::softplus();
        for row in catalog() {
            for convention in [QConvention::Exclusive, QConvention::Inclusive] {
                for _ in 0..10 {
                    let l = rng.gen_range(2..10);
                    let y = rng.gen_range(0..l);
                    let pi = LabelDistribution::from_weights(&(0..l).map(|_| rng.gen_range(0.05..1.0)).collect::<Vec<_>>()).unwrap();
                    let f: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let m = rng.gen_range(1..20);
                    let a = row.evaluate(y, &f, &pi, m, convention, Some(&pair)).unwrap();
                    let b = row.evaluate_generic(y, &f, &pi, m, convention, Some(&pair)).unwrap();
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} {:?}: {a} vs {b}", row.label(), convention);
                }
            }
        }
    }
}
