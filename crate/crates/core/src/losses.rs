//! Full, margin and sampled losses over a logit vector, with analytic gradients.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::label_stats::LabelDistribution;
use crate::numeric::{logsumexp, sigmoid, softplus, stable_sum};
use crate::sampler::NegativeSample;
use crate::weighting::{MarginMatrix, MarginPreset, WeightContext, WeightingScheme};

/// Binary margin loss `v -> loss`, evaluated on a signed score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginLoss {
    /// `max(0, 1 - v)`
    Hinge,
    /// `log(1 + e^-v)`
    Softplus,
    /// `max(0, 1 - v)^2`
    SquaredHinge,
    /// `max(0, -v - margin)^2`. Applied to `v = -s` this is `max(0, s - margin)^2`,
    /// the negative half of the cosine contrastive loss.
    CosineNegative { margin: f64 },
}

impl MarginLoss {
    pub fn value(self, v: f64) -> f64 {
        match self {
            MarginLoss::Hinge => (1.0 - v).max(0.0),
            MarginLoss::Softplus => softplus(-v),
            MarginLoss::SquaredHinge => (1.0 - v).max(0.0).powi(2),
            MarginLoss::CosineNegative { margin } => (-v - margin).max(0.0).powi(2),
        }
    }

    /// Derivative in `v`; the right derivative at kinks.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            MarginLoss::Hinge => {
                if v < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            MarginLoss::Softplus => -sigmoid(-v),
            MarginLoss::SquaredHinge => -2.0 * (1.0 - v).max(0.0),
            MarginLoss::CosineNegative { margin } => {
                if -v - margin > 0.0 {
                    -2.0 * (-v - margin)
                } else {
                    0.0
                }
            }
        }
    }

    /// Where the derivative is discontinuous, if anywhere.
    pub fn kink(self) -> Option<f64> {
        match self {
            MarginLoss::Hinge => Some(1.0),
            MarginLoss::Softplus | MarginLoss::SquaredHinge => None,
            MarginLoss::CosineNegative { margin } => Some(-margin),
        }
    }
}

/// `phi` scores the positive, `varphi` the negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginLossPair {
    pub phi: MarginLoss,
    pub varphi: MarginLoss,
}

impl MarginLossPair {
    pub fn hinge() -> Self {
        Self { phi: MarginLoss::Hinge, varphi: MarginLoss::Hinge }
    }

    pub fn softplus() -> Self {
        Self { phi: MarginLoss::Softplus, varphi: MarginLoss::Softplus }
    }

    pub fn squared_hinge() -> Self {
        Self { phi: MarginLoss::SquaredHinge, varphi: MarginLoss::SquaredHinge }
    }

    /// `(1 - s)^2` on the positive and `max(0, s - margin)^2` on negatives, for cosine scores `s`.
    pub fn cosine_contrastive(margin: f64) -> Self {
        Self { phi: MarginLoss::SquaredHinge, varphi: MarginLoss::CosineNegative { margin } }
    }

    pub fn is_cosine(&self) -> bool {
        matches!(self.varphi, MarginLoss::CosineNegative { .. })
    }

    pub fn name(&self) -> &'static str {
        match (self.phi, self.varphi) {
            (MarginLoss::Hinge, MarginLoss::Hinge) => "hinge",
            (MarginLoss::Softplus, MarginLoss::Softplus) => "softplus",
            (MarginLoss::SquaredHinge, MarginLoss::SquaredHinge) => "squared_hinge",
            (_, MarginLoss::CosineNegative { .. }) => "cosine_contrastive",
            _ => "custom",
        }
    }
}

impl FromStr for MarginLossPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hinge" => Ok(Self::hinge()),
            "softplus" | "logistic" => Ok(Self::softplus()),
            "squared_hinge" => Ok(Self::squared_hinge()),
            "cosine_contrastive" | "cosine" => Ok(Self::cosine_contrastive(0.0)),
            other => Err(Error::UnknownName { kind: "margin loss pair", name: other.into() }),
        }
    }
}

/// Sampled negatives with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNegatives {
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

impl WeightedNegatives {
    /// Weights each drawn label with `scheme`, using `m = neg.len()` and the
    /// drawn probabilities in `neg.probs` as `q[y']`.
    pub fn from_sample(y: usize, neg: &NegativeSample, scheme: &WeightingScheme, ctx: &WeightContext<'_>) -> Result<Self> {
        let m = neg.len();
        let q_pos = ctx.positive_mass.unwrap_or(0.0);
        let weights = neg
            .labels
            .iter()
            .zip(&neg.probs)
            .map(|(&label, &q)| scheme.weight_from(y, label, q, q_pos, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels: neg.labels.clone(), weights })
    }

    /// Same as [`Self::from_sample`] but reads `q[y']` from a full distribution.
    pub fn from_distribution(y: usize, neg: &NegativeSample, scheme: &WeightingScheme, q: &LabelDistribution, ctx: &WeightContext<'_>) -> Result<Self> {
        let m = neg.len();
        let weights = neg.labels.iter().map(|&label| scheme.weight(y, label, q, m, ctx)).collect::<Result<Vec<_>>>()?;
        Ok(Self { labels: neg.labels.clone(), weights })
    }
}

/// Softmax cross-entropy `-f_y + log sum exp(f)`, evaluated as a log-sum-exp of
/// `f - f_y` so that tiny losses keep their relative precision.
pub fn softmax_ce(y: usize, f: &[f64]) -> f64 {
    log_one_plus_weighted(y, f, (0..f.len()).filter(|&j| j != y).map(|j| (j, 1.0)), None)
}

/// `-f_y + log sum exp(f)` taken literally.
pub fn softmax_ce_logsumexp(y: usize, f: &[f64]) -> f64 {
    logsumexp(f) - f[y]
}

/// `log[1 + sum_{y' != y} exp(f_y' - f_y)]`, the pairwise form of the same loss.
pub fn softmax_ce_pairwise(y: usize, f: &[f64]) -> f64 {
    let terms: Vec<f64> = std::iter::once(0.0)
        .chain(f.iter().enumerate().filter(|(j, _)| *j != y).map(|(_, &v)| v - f[y]))
        .collect();
    logsumexp(&terms)
}

/// `phi(f_y) + sum_{y' != y} varphi(-f_y')`.
pub fn decoupled_loss(y: usize, f: &[f64], pair: &MarginLossPair) -> f64 {
    pair.phi.value(f[y]) + stable_sum(f.iter().enumerate().filter(|(j, _)| *j != y).map(|(_, &v)| pair.varphi.value(-v)))
}

/// `log[1 + sum_{y' != y} rho_yy' exp(f_y' - f_y)]`.
pub fn margin_ce(y: usize, f: &[f64], rho: &MarginMatrix) -> f64 {
    LossOp::MarginCe(rho).value(y, f)
}

/// Margin loss from an explicit row of margins `rho[y][.]` (the entry at `y` is ignored).
pub fn margin_ce_row(y: usize, f: &[f64], row: &[f64]) -> f64 {
    log_one_plus_weighted(y, f, row.iter().copied().enumerate().filter(|(j, _)| *j != y), None)
}

/// Weighted sampled softmax: `log[1 + sum_{y' in N} w_yy' exp(f_y' - f_y)]`.
pub fn sampled_softmax_ce(y: usize, f: &[f64], neg: &NegativeSample, scheme: &WeightingScheme, q: &LabelDistribution, ctx: &WeightContext<'_>) -> Result<f64> {
    let wn = WeightedNegatives::from_distribution(y, neg, scheme, q, ctx)?;
    Ok(LossOp::SampledSoftmax(&wn).value(y, f))
}

/// Weighted sampled decoupled loss: `phi(f_y) + sum_{y' in N} w_yy' varphi(-f_y')`.
pub fn sampled_decoupled(y: usize, f: &[f64], neg: &NegativeSample, scheme: &WeightingScheme, q: &LabelDistribution, ctx: &WeightContext<'_>, pair: &MarginLossPair) -> Result<f64> {
    let wn = WeightedNegatives::from_distribution(y, neg, scheme, q, ctx)?;
    Ok(LossOp::SampledDecoupled(&wn, pair).value(y, f))
}

/// Rewrites the weighted sampled softmax as an unweighted one on shifted logits
/// `f_y' + ln w_yy'`. Labels with zero weight are dropped.
pub fn corrected_logits(f: &[f64], negatives: &WeightedNegatives) -> Vec<(usize, f64)> {
    negatives
        .labels
        .iter()
        .zip(&negatives.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&label, &w)| (label, f[label] + w.ln()))
        .collect()
}

/// Unweighted sampled softmax over already-corrected negative logits.
pub fn softmax_over_corrected(y: usize, f: &[f64], corrected: &[(usize, f64)]) -> f64 {
    let terms: Vec<f64> = std::iter::once(0.0).chain(corrected.iter().map(|(_, v)| v - f[y])).collect();
    logsumexp(&terms)
}

/// One of the supported loss families, bound to its parameters.
#[derive(Debug, Clone, Copy)]
pub enum LossOp<'a> {
    SoftmaxCe,
    Decoupled(&'a MarginLossPair),
    MarginCe(&'a MarginMatrix),
    SampledSoftmax(&'a WeightedNegatives),
    SampledDecoupled(&'a WeightedNegatives, &'a MarginLossPair),
}

impl<'a> LossOp<'a> {
    pub fn value(&self, y: usize, f: &[f64]) -> f64 {
        match self {
            LossOp::SoftmaxCe => softmax_ce(y, f),
            LossOp::Decoupled(pair) => decoupled_loss(y, f, pair),
            _ => self.value_and_grad(y, f, None),
        }
    }

    pub fn grad(&self, y: usize, f: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; f.len()];
        self.value_and_grad(y, f, Some(&mut g));
        g
    }

    /// Loss value; when `grad` is given, the gradient is *added* into it.
    pub fn value_and_grad(&self, y: usize, f: &[f64], grad: Option<&mut [f64]>) -> f64 {
        match self {
            LossOp::SoftmaxCe => {
                if let Some(g) = grad {
                    let lse = logsumexp(f);
                    for (gj, &fj) in g.iter_mut().zip(f) {
                        *gj += (fj - lse).exp();
                    }
                    g[y] -= 1.0;
                }
                softmax_ce(y, f)
            }
            LossOp::Decoupled(pair) => {
                if let Some(g) = grad {
                    for (j, &fj) in f.iter().enumerate() {
                        g[j] += if j == y { pair.phi.derivative(fj) } else { -pair.varphi.derivative(-fj) };
                    }
                }
                decoupled_loss(y, f, pair)
            }
            LossOp::MarginCe(rho) => {
                let pairs = (0..f.len()).filter(|&j| j != y).map(|j| (j, rho.rho(y, j)));
                log_one_plus_weighted(y, f, pairs, grad)
            }
            LossOp::SampledSoftmax(neg) => {
                let pairs = neg.labels.iter().copied().zip(neg.weights.iter().copied());
                log_one_plus_weighted(y, f, pairs, grad)
            }
            LossOp::SampledDecoupled(neg, pair) => {
                if let Some(g) = grad {
                    g[y] += pair.phi.derivative(f[y]);
                    for (&j, &w) in neg.labels.iter().zip(&neg.weights) {
                        g[j] -= w * pair.varphi.derivative(-f[j]);
                    }
                }
                pair.phi.value(f[y]) + stable_sum(neg.labels.iter().zip(&neg.weights).map(|(&j, &w)| w * pair.varphi.value(-f[j])))
            }
        }
    }
}

/// `log[1 + sum_j c_j exp(f_j - f_y)]` as a log-sum-exp over `{0} ∪ {ln c_j + f_j - f_y}`.
fn log_one_plus_weighted<I: Iterator<Item = (usize, f64)>>(y: usize, f: &[f64], pairs: I, grad: Option<&mut [f64]>) -> f64 {
    let (labels, terms): (Vec<usize>, Vec<f64>) = pairs.filter(|(_, c)| *c > 0.0).map(|(j, c)| (j, c.ln() + f[j] - f[y])).unzip();
    let max = terms.iter().copied().fold(0.0f64, f64::max);
    let value = if max == 0.0 {
        stable_sum(terms.iter().map(|t| t.exp())).ln_1p()
    } else {
        max + ((-max).exp() + stable_sum(terms.iter().map(|t| (t - max).exp()))).ln()
    };
    if let Some(g) = grad {
        for (&j, &t) in labels.iter().zip(&terms) {
            let p = (t - value).exp();
            g[j] += p;
            g[y] -= p;
        }
    }
    value
}

/// Loss family selection as written in config files:
/// `softmax_ce | decoupled:<pair> | margin_ce:<preset> | sampled_softmax | sampled_decoupled:<pair>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    SoftmaxCe,
    Decoupled(MarginLossPair),
    MarginCe(MarginPreset),
    SampledSoftmax,
    SampledDecoupled(MarginLossPair),
}

impl LossSpec {
    pub fn is_sampled(&self) -> bool {
        matches!(self, LossSpec::SampledSoftmax | LossSpec::SampledDecoupled(_))
    }

    pub fn pair(&self) -> Option<&MarginLossPair> {
        match self {
            LossSpec::Decoupled(p) | LossSpec::SampledDecoupled(p) => Some(p),
            _ => None,
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let unknown = || Error::UnknownName { kind: "loss", name: s.into() };
        match (head, arg) {
            ("softmax_ce", None) => Ok(LossSpec::SoftmaxCe),
            ("sampled_softmax", None) => Ok(LossSpec::SampledSoftmax),
            ("decoupled", Some(p)) => Ok(LossSpec::Decoupled(p.parse()?)),
            ("sampled_decoupled", Some(p)) => Ok(LossSpec::SampledDecoupled(p.parse()?)),
            ("margin_ce", Some(p)) => Ok(LossSpec::MarginCe(p.parse()?)),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::SoftmaxCe => f.write_str("softmax_ce"),
            LossSpec::SampledSoftmax => f.write_str("sampled_softmax"),
            LossSpec::Decoupled(p) => write!(f, "decoupled:{}", p.name()),
            LossSpec::SampledDecoupled(p) => write!(f, "sampled_decoupled:{}", p.name()),
            LossSpec::MarginCe(p) => write!(f, "margin_ce:{}", p.name()),
        }
    }
}
