//! Minibatch SGD with momentum under any loss, sampler and weighting.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::label_stats::LabelDistribution;
use crate::losses::{LossOp, LossSpec, WeightedNegatives};
use crate::rng;
use crate::sampler::{AliasTable, NegativeSample, SamplerKind, SamplingContext, SamplingScheme, WithinBatchMode};
use crate::weighting::{MarginMatrix, WeightContext, WeightSpec, WeightingScheme};

use super::data::{epoch_order, SyntheticDataset};
use super::model::{Forward, Model, ModelKind};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub loss: LossSpec,
    pub sampler: SamplerKind,
    /// Remove the positive from the sampling domain; otherwise it may be drawn
    /// and gets weight zero.
    pub exclude_positive: bool,
    pub weighting: WeightSpec,
    pub m: usize,
    /// Which `q` within-batch weights are computed from.
    pub weight_q: WeightQ,
    /// Use every negative exactly once (with `q` uniform over them) instead of sampling.
    pub enumerate_negatives: bool,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Linear,
            loss: LossSpec::SampledSoftmax,
            sampler: SamplerKind::WithinBatch(WithinBatchMode::Frequency),
            exclude_positive: true,
            weighting: "constant".parse().expect("valid weighting"),
            m: 32,
            weight_q: WeightQ::Marginal,
            enumerate_negatives: false,
            lr: 0.1,
            momentum: 0.9,
            epochs: 50,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_labels: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.loss.is_sampled() && !self.enumerate_negatives {
            if self.m == 0 {
                return bad("sampled losses need m >= 1".into());
            }
            if self.sampler == SamplerKind::WithinBatch(WithinBatchMode::Literal) && self.batch_size < self.m {
                return bad(format!("literal within-batch sampling needs batch size >= m ({} < {})", self.batch_size, self.m));
            }
        }
        if let SamplerKind::Custom(q) = &self.sampler {
            if q.len() != num_labels {
                return bad(format!("custom q has {} labels, data has {num_labels}", q.len()));
            }
        }
        Ok(())
    }

    fn cosine(&self) -> bool {
        self.loss.pair().is_some_and(|p| p.is_cosine())
    }
}

/// Within-batch negatives are drawn from the current batch, whose label
/// frequencies average to the training marginal. Weights can use either.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightQ {
    /// The batch frequencies the negatives were actually drawn from.
    Batch,
    /// The training label marginal, i.e. the expected within-batch distribution.
    #[default]
    Marginal,
}

impl std::str::FromStr for WeightQ {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "batch" => Ok(WeightQ::Batch),
            "marginal" => Ok(WeightQ::Marginal),
            other => Err(Error::UnknownName { kind: "weight_q", name: other.into() }),
        }
    }
}

impl std::fmt::Display for WeightQ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightQ::Batch => "batch",
            WeightQ::Marginal => "marginal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: Model,
    pub trace: Vec<EpochTrace>,
}

/// Owns the model and optimizer state; [`Trainer::step`] applies one update.
#[derive(Debug, Clone)]
pub struct Trainer<'d> {
    pub config: TrainConfig,
    pub model: Model,
    data: &'d SyntheticDataset,
    velocity: Vec<f64>,
    grad: Vec<f64>,
    weighting: WeightingScheme,
    margins: Option<MarginMatrix>,
    sampling: SamplingScheme,
    /// Alias table for batch-independent samplers, built once.
    fixed_table: Option<(LabelDistribution, AliasTable)>,
    /// Training marginal, for within-batch weights under [`WeightQ::Marginal`].
    marginal: LabelDistribution,
    steps: u64,
}

struct Scratch {
    fwd: Forward,
    labels: Vec<usize>,
    local_f: Vec<f64>,
    local_g: Vec<f64>,
    rep_grad: Vec<f64>,
    all_scores: Vec<f64>,
}

impl<'d> Trainer<'d> {
    pub fn new(config: TrainConfig, data: &'d SyntheticDataset) -> Result<Self> {
        config.validate(data.num_labels)?;
        let model = Model::new(config.model, data.dim, data.num_labels, config.cosine(), config.seed)?;
        let pi = data.train_prior()?;
        let weighting = config.weighting.bind(&pi).with_zero_positive(!config.exclude_positive);
        let margins = match config.loss {
            LossSpec::MarginCe(preset) => Some(MarginMatrix::from_preset(preset, &pi)),
            _ => None,
        };
        let sampling = SamplingScheme::new(config.sampler.clone()).with_exclusion(config.exclude_positive);
        let fixed_table = match &config.sampler {
            SamplerKind::Uniform | SamplerKind::Custom(_) if config.loss.is_sampled() => {
                let q = sampling.base_q(data.num_labels, SamplingContext::None)?;
                let table = AliasTable::new(&q)?;
                Some((q, table))
            }
            _ => None,
        };
        let n = model.params.len();
        Ok(Self { config, model, data, velocity: vec![0.0; n], grad: vec![0.0; n], weighting, margins, sampling, fixed_table, marginal: pi, steps: 0 })
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// One momentum-SGD step on the examples `batch` (indices into the dataset).
    /// Returns the mean loss over the batch before the update.
    pub fn step(&mut self, batch: &[usize]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let data = self.data;
        let l = data.num_labels;
        let batch_labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        let mut rng = rng::stream(self.config.seed, "train.negatives", self.steps);

        // within-batch frequency q is shared by the whole batch
        let batch_table = match (&self.config.sampler, self.config.loss.is_sampled() && !self.config.enumerate_negatives) {
            (SamplerKind::WithinBatch(WithinBatchMode::Frequency), true) => {
                let q = self.sampling.base_q(l, SamplingContext::Batch(&batch_labels))?;
                let table = AliasTable::new(&q)?;
                Some((q, table))
            }
            _ => None,
        };

        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut s = Scratch { fwd: Forward::default(), labels: Vec::new(), local_f: Vec::new(), local_g: Vec::new(), rep_grad: Vec::new(), all_scores: vec![0.0; l] };
        let mut total = 0.0;
        for (&i, &y) in batch.iter().zip(&batch_labels) {
            let x = data.row(i);
            self.model.forward(x, &mut s.fwd);
            let loss = if self.config.loss.is_sampled() {
                let (neg, positive_mass) = self.negatives(y, &batch_labels, batch_table.as_ref(), &mut s, &mut rng)?;
                let ctx = WeightContext { positive_mass: Some(positive_mass), instance: None };
                let wn = WeightedNegatives::from_sample(y, &neg, &self.weighting, &ctx)?;
                // local problem: index 0 is the positive, 1..=m the draws
                s.labels.clear();
                s.labels.push(y);
                s.labels.extend_from_slice(&wn.labels);
                let local = WeightedNegatives { labels: (1..s.labels.len()).collect(), weights: wn.weights };
                s.local_f.clear();
                for &j in &s.labels {
                    s.local_f.push(self.model.score(&s.fwd, j));
                }
                s.local_g.clear();
                s.local_g.resize(s.labels.len(), 0.0);
                let op = match &self.config.loss {
                    LossSpec::SampledSoftmax => LossOp::SampledSoftmax(&local),
                    LossSpec::SampledDecoupled(pair) => LossOp::SampledDecoupled(&local, pair),
                    _ => unreachable!("checked is_sampled"),
                };
                op.value_and_grad(0, &s.local_f, Some(&mut s.local_g))
            } else {
                s.labels.clear();
                s.labels.extend(0..l);
                s.local_f.clear();
                for j in 0..l {
                    s.local_f.push(self.model.score(&s.fwd, j));
                }
                s.local_g.clear();
                s.local_g.resize(l, 0.0);
                let op = match &self.config.loss {
                    LossSpec::SoftmaxCe => LossOp::SoftmaxCe,
                    LossSpec::Decoupled(pair) => LossOp::Decoupled(pair),
                    LossSpec::MarginCe(_) => LossOp::MarginCe(self.margins.as_ref().expect("margins bound in new")),
                    _ => unreachable!("checked is_sampled"),
                };
                op.value_and_grad(y, &s.local_f, Some(&mut s.local_g))
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch: None, step: self.steps, loss });
            }
            total += loss;
            self.model.backward(x, &s.fwd, &s.labels, &s.local_g, &mut self.grad, &mut s.rep_grad);
        }

        let scale = 1.0 / batch.len() as f64;
        let lr = self.config.lr;
        let mu = self.config.momentum;
        for ((p, v), g) in self.model.params.iter_mut().zip(&mut self.velocity).zip(&self.grad) {
            *v = mu * *v + g * scale;
            *p -= lr * *v;
        }
        if self.model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch: None, step: self.steps, loss: f64::NAN });
        }
        self.steps += 1;
        Ok(total * scale)
    }

    /// Negatives for one example plus the positive's mass before exclusion.
    fn negatives(
        &self,
        y: usize,
        batch_labels: &[usize],
        batch_table: Option<&(LabelDistribution, AliasTable)>,
        s: &mut Scratch,
        rng: &mut rng::StreamRng,
    ) -> Result<(NegativeSample, f64)> {
        let l = self.data.num_labels;
        let exclude = self.config.exclude_positive.then_some(y);
        if self.config.enumerate_negatives {
            let labels: Vec<usize> = (0..l).filter(|&j| j != y).collect();
            let p = 1.0 / (l - 1) as f64;
            let probs = vec![p; labels.len()];
            return Ok((NegativeSample { labels, probs }, 1.0 / l as f64));
        }
        let draw = |q: &LabelDistribution, table: &AliasTable, rng: &mut rng::StreamRng| -> Result<(NegativeSample, f64)> {
            let pos = q.prob(y);
            match table.draw(rng, self.config.m, exclude) {
                Ok(neg) => Ok((neg, pos)),
                // every sampleable label is the positive: nothing to contrast against
                Err(Error::NoMassAfterExclusion) => Ok((NegativeSample { labels: Vec::new(), probs: Vec::new() }, pos)),
                Err(e) => Err(e),
            }
        };
        match &self.config.sampler {
            SamplerKind::Uniform | SamplerKind::Custom(_) => {
                let (q, table) = self.fixed_table.as_ref().expect("fixed table built in new");
                draw(q, table, rng)
            }
            SamplerKind::WithinBatch(WithinBatchMode::Frequency) => {
                let (q, table) = batch_table.expect("batch table built per step");
                draw(q, table, rng).map(|out| self.reweight_within_batch(y, out))
            }
            SamplerKind::WithinBatch(WithinBatchMode::Literal) => {
                let pos = batch_labels.iter().filter(|&&b| b == y).count() as f64 / batch_labels.len() as f64;
                let out = match crate::sampler::literal_batch_negatives(batch_labels, l, y, self.config.exclude_positive) {
                    Ok(neg) => (neg, pos),
                    Err(Error::NoMassAfterExclusion) => (NegativeSample { labels: Vec::new(), probs: Vec::new() }, pos),
                    Err(e) => return Err(e),
                };
                Ok(self.reweight_within_batch(y, out))
            }
            SamplerKind::ModelBased => {
                for (j, o) in s.all_scores.iter_mut().enumerate() {
                    *o = self.model.score(&s.fwd, j);
                }
                let q = self.sampling.base_q(l, SamplingContext::Logits(&s.all_scores))?;
                let table = AliasTable::new(&q)?;
                draw(&q, &table, rng)
            }
        }
    }

    /// Swaps batch frequencies for the training marginal when configured.
    fn reweight_within_batch(&self, y: usize, (mut neg, pos): (NegativeSample, f64)) -> (NegativeSample, f64) {
        if self.config.weight_q == WeightQ::Batch {
            return (neg, pos);
        }
        let pi_y = self.marginal.prob(y);
        let scale = if self.config.exclude_positive { 1.0 / (1.0 - pi_y) } else { 1.0 };
        for (p, &j) in neg.probs.iter_mut().zip(&neg.labels) {
            *p = self.marginal.prob(j) * scale;
        }
        (neg, pi_y)
    }

    /// One pass over the shuffled training set; returns the mean batch loss.
    pub fn epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut shuffle = rng::stream(self.config.seed, "train.shuffle", epoch as u64);
        let order = epoch_order(&self.data.train_idx, &mut shuffle);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            sum += self.step(batch).map_err(|e| match e {
                Error::Diverged { step, loss, .. } => Error::Diverged { epoch: Some(epoch), step, loss },
                other => other,
            })?;
            batches += 1;
        }
        Ok(sum / batches as f64)
    }
}

/// Trains for `config.epochs` epochs.
pub fn train(config: &TrainConfig, data: &SyntheticDataset) -> Result<TrainResult> {
    let mut trainer = Trainer::new(config.clone(), data)?;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let train_loss = trainer.epoch(epoch)?;
        trace.push(EpochTrace { epoch, train_loss });
    }
    Ok(TrainResult { model: trainer.model, trace })
}
