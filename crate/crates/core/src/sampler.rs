//! Negative-label samplers.
//!
//! Draws are i.i.d. with replacement. Categorical draws go through a Vose
//! alias table, so each draw costs one uniform index plus one coin flip.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label_stats::LabelDistribution;
use crate::numeric::softmax;

/// Vose alias table over `L` labels.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
    source: Vec<f64>,
}

impl AliasTable {
    pub fn new(dist: &LabelDistribution) -> Result<Self> {
        Self::from_probs(dist.probs())
    }

    /// Builds a table from raw probabilities (renormalized internally).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("no labels".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("NaN or negative mass".into()));
        }
        let total: f64 = crate::numeric::stable_sum(probs.iter().copied());
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("zero total mass".into()));
        }
        let source: Vec<f64> = probs.iter().map(|p| p / total).collect();

        let mut scaled: Vec<f64> = source.iter().map(|p| p * n as f64).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);

        while let (Some(s), Some(&g)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = g;
            scaled[g] = (scaled[g] + scaled[s]) - 1.0;
            if scaled[g] < 1.0 {
                large.pop();
                small.push(g);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in large.into_iter().chain(small) {
            prob[i] = if source[i] > 0.0 { 1.0 } else { 0.0 };
        }
        Ok(Self { prob, alias, source })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn alias(&self) -> &[usize] {
        &self.alias
    }

    /// Normalized source probabilities the table was built from.
    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Exact distribution induced by the table, recomputed from `prob` and `alias`.
    pub fn induced_probs(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut out = vec![0.0; self.len()];
        for (i, (&p, &a)) in self.prob.iter().zip(&self.alias).enumerate() {
            out[i] += p / n;
            out[a] += (1.0 - p) / n;
        }
        out
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Rejection-samples from the table conditioned on `label != excluded`.
    ///
    /// The caller must ensure the excluded label does not carry all the mass.
    #[inline]
    pub fn sample_excluding<R: Rng + ?Sized>(&self, rng: &mut R, excluded: usize) -> usize {
        loop {
            let label = self.sample(rng);
            if label != excluded {
                return label;
            }
        }
    }

    /// Draws `m` negatives. With `exclude = Some(y)` the reported probabilities
    /// are those of the source conditioned on `label != y`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, m: usize, exclude: Option<usize>) -> Result<NegativeSample> {
        if m == 0 {
            return Err(Error::InvalidArgument("need at least one negative".into()));
        }
        let scale = match exclude {
            Some(y) => {
                let rest = 1.0 - self.source[y];
                if !(rest > 0.0) || self.source.iter().enumerate().all(|(i, &p)| i == y || p == 0.0) {
                    return Err(Error::NoMassAfterExclusion);
                }
                1.0 / rest
            }
            None => 1.0,
        };
        let mut labels = Vec::with_capacity(m);
        let mut probs = Vec::with_capacity(m);
        for _ in 0..m {
            let label = match exclude {
                Some(y) => self.sample_excluding(rng, y),
                None => self.sample(rng),
            };
            labels.push(label);
            probs.push(self.source[label] * scale);
        }
        Ok(NegativeSample { labels, probs })
    }
}

pub fn build_alias(dist: &LabelDistribution) -> Result<AliasTable> {
    AliasTable::new(dist)
}

/// A multiset of sampled negative labels with their sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub labels: Vec<usize>,
    pub probs: Vec<f64>,
}

impl NegativeSample {
    /// Builds a sample from labels and a sampling distribution.
    pub fn from_labels(labels: Vec<usize>, q: &LabelDistribution) -> Self {
        let probs = labels.iter().map(|&l| q.prob(l)).collect();
        Self { labels, probs }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `m` i.i.d. negatives from `q`. Identical arguments give identical samples.
pub fn draw_negatives(q: &LabelDistribution, m: usize, seed: u64) -> Result<NegativeSample> {
    let table = AliasTable::new(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    table.draw(&mut rng, m, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WithinBatchMode {
    /// Draw i.i.d. from the empirical label frequency of the minibatch.
    #[default]
    Frequency,
    /// Use the distinct labels present in the minibatch as the negative set.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind {
    Uniform,
    WithinBatch(WithinBatchMode),
    ModelBased,
    Custom(LabelDistribution),
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::WithinBatch(WithinBatchMode::Frequency) => "within_batch",
            SamplerKind::WithinBatch(WithinBatchMode::Literal) => "within_batch_literal",
            SamplerKind::ModelBased => "model_based",
            SamplerKind::Custom(_) => "custom",
        }
    }

    /// Parses `uniform | within_batch | within_batch_literal | model_based`.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim() {
            "uniform" | "unif" => Ok(SamplerKind::Uniform),
            "within_batch" | "within" => Ok(SamplerKind::WithinBatch(WithinBatchMode::Frequency)),
            "within_batch_literal" => Ok(SamplerKind::WithinBatch(WithinBatchMode::Literal)),
            "model_based" | "model" => Ok(SamplerKind::ModelBased),
            other => Err(Error::UnknownName { kind: "sampler", name: other.into() }),
        }
    }
}

/// What a sampler needs to know about the current step.
#[derive(Debug, Clone, Copy)]
pub enum SamplingContext<'a> {
    None,
    Batch(&'a [usize]),
    Logits(&'a [f64]),
}

/// A realized sampling distribution for one positive label.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// The distribution negatives are drawn from (zero at the positive when excluded).
    pub q: LabelDistribution,
    /// Mass of the positive label before exclusion; relative weights use it.
    pub positive_mass: f64,
}

/// Conditional distribution over negatives plus how the positive label is handled.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingScheme {
    pub kind: SamplerKind,
    /// Remove the positive from the sampling domain. When false, callers
    /// are expected to zero the positive's weight instead.
    pub exclude_positive: bool,
}

impl SamplingScheme {
    pub fn new(kind: SamplerKind) -> Self {
        Self { kind, exclude_positive: true }
    }

    pub fn uniform() -> Self {
        Self::new(SamplerKind::Uniform)
    }

    pub fn within_batch() -> Self {
        Self::new(SamplerKind::WithinBatch(WithinBatchMode::Frequency))
    }

    pub fn model_based() -> Self {
        Self::new(SamplerKind::ModelBased)
    }

    pub fn with_exclusion(mut self, exclude_positive: bool) -> Self {
        self.exclude_positive = exclude_positive;
        self
    }

    /// The sampling distribution before positive exclusion.
    pub fn base_q(&self, num_labels: usize, context: SamplingContext<'_>) -> Result<LabelDistribution> {
        match (&self.kind, context) {
            (SamplerKind::Uniform, _) => LabelDistribution::uniform(num_labels),
            (SamplerKind::WithinBatch(_), SamplingContext::Batch(batch)) => {
                if batch.is_empty() {
                    return Err(Error::EmptyBatch);
                }
                let mut counts = vec![0u64; num_labels];
                for &label in batch {
                    if label >= num_labels {
                        return Err(Error::LabelOutOfRange { label, num_labels });
                    }
                    counts[label] += 1;
                }
                LabelDistribution::from_counts(counts)
            }
            (SamplerKind::WithinBatch(_), _) => Err(Error::ContextMismatch("within-batch sampling needs batch labels")),
            (SamplerKind::ModelBased, SamplingContext::Logits(logits)) => {
                if logits.len() != num_labels {
                    return Err(Error::Dimension(format!("{} logits for {num_labels} labels", logits.len())));
                }
                LabelDistribution::from_weights(&softmax(logits))
            }
            (SamplerKind::ModelBased, _) => Err(Error::ContextMismatch("model-based sampling needs logits")),
            (SamplerKind::Custom(dist), _) => {
                if dist.len() != num_labels {
                    return Err(Error::Dimension(format!("custom q has {} labels, expected {num_labels}", dist.len())));
                }
                Ok(dist.clone())
            }
        }
    }

    pub fn realize(&self, num_labels: usize, context: SamplingContext<'_>, positive: usize) -> Result<Proposal> {
        if positive >= num_labels {
            return Err(Error::LabelOutOfRange { label: positive, num_labels });
        }
        let base = self.base_q(num_labels, context)?;
        let positive_mass = base.prob(positive);
        let q = if self.exclude_positive { base.excluding(positive)? } else { base };
        Ok(Proposal { q, positive_mass })
    }

    pub fn realize_q(&self, num_labels: usize, context: SamplingContext<'_>, positive: usize) -> Result<LabelDistribution> {
        Ok(self.realize(num_labels, context, positive)?.q)
    }
}

/// Distinct labels of a minibatch as a negative set, with their batch frequencies
/// (renormalized after excluding the positive, if requested).
pub fn literal_batch_negatives(batch: &[usize], num_labels: usize, positive: usize, exclude_positive: bool) -> Result<NegativeSample> {
    let scheme = SamplingScheme::new(SamplerKind::WithinBatch(WithinBatchMode::Literal)).with_exclusion(exclude_positive);
    let q = scheme.realize_q(num_labels, SamplingContext::Batch(batch), positive)?;
    let mut labels: Vec<usize> = batch.to_vec();
    labels.sort_unstable();
    labels.dedup();
    labels.retain(|&l| q.prob(l) > 0.0);
    Ok(NegativeSample::from_labels(labels, &q))
}
