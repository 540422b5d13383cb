//! Gaussian-mixture classification data with a long-tailed training label marginal.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_stats::{make_profile, slice_labels_with, ImbalanceProfile, LabelDistribution, LabelSlices, ProfileKind, SliceThresholds};
use crate::rng;
use crate::sampler::AliasTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub profile: ImbalanceProfile,
    pub dim: usize,
    pub train_size: usize,
    /// Test examples per class; the test set is label-balanced.
    pub test_per_class: usize,
    /// Standard deviation of the isotropic noise, as a total norm: each
    /// coordinate gets `noise_scale / sqrt(dim)`.
    pub noise_scale: f64,
    pub seed: u64,
    pub thresholds: SliceThresholds,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            profile: ImbalanceProfile::new(ProfileKind::Step, 100, 100.0),
            dim: 64,
            train_size: 20_000,
            test_per_class: 50,
            noise_scale: 1.0,
            seed: 0,
            thresholds: SliceThresholds::default(),
        }
    }
}

/// Features are stored row-major; `train_idx` and `test_idx` index into them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dim: usize,
    pub num_labels: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// `L x dim`, unit-norm rows.
    pub class_means: Vec<f64>,
    pub noise_scale: f64,
    /// The profile marginal labels were drawn from.
    pub prior: LabelDistribution,
    pub thresholds: SliceThresholds,
}

impl SyntheticDataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_mean(&self, label: usize) -> &[f64] {
        &self.class_means[label * self.dim..(label + 1) * self.dim]
    }

    pub fn train_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_labels];
        for &i in &self.train_idx {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Empirical training marginal, with counts attached.
    pub fn train_prior(&self) -> Result<LabelDistribution> {
        LabelDistribution::from_counts(self.train_counts())
    }

    pub fn slices(&self) -> LabelSlices {
        slice_labels_with(&self.train_counts(), self.thresholds)
    }
}

/// Generates a dataset with default test size and slicing thresholds.
pub fn generate(profile: ImbalanceProfile, dim: usize, train_size: usize, noise_scale: f64, seed: u64) -> Result<SyntheticDataset> {
    generate_with(&DataConfig { profile, dim, train_size, noise_scale, seed, ..DataConfig::default() })
}

pub fn generate_with(config: &DataConfig) -> Result<SyntheticDataset> {
    let l = config.profile.num_labels;
    let d = config.dim;
    if d < 2 {
        return Err(Error::InvalidArgument(format!("feature dimension must be >= 2, got {d}")));
    }
    if config.train_size < l {
        return Err(Error::InvalidArgument(format!("train size {} is below the number of labels {l}", config.train_size)));
    }
    if config.test_per_class == 0 {
        return Err(Error::InvalidArgument("the balanced test set needs at least one example per class".into()));
    }
    if !(config.noise_scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise scale {}", config.noise_scale)));
    }
    let prior = make_profile(&config.profile)?;

    let mut mean_rng = rng::stream(config.seed, "data.means", 0);
    let mut class_means = Vec::with_capacity(l * d);
    for _ in 0..l {
        let v: Vec<f64> = loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut mean_rng)).collect();
            if v.iter().any(|x: &f64| *x != 0.0) {
                break v;
            }
        };
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        class_means.extend(v.iter().map(|x| x / norm));
    }

    let mut label_rng = rng::stream(config.seed, "data.labels", 0);
    let table = AliasTable::new(&prior)?;
    let mut labels: Vec<usize> = (0..config.train_size).map(|_| table.sample(&mut label_rng)).collect();
    let n_train = labels.len();
    labels.extend((0..l).flat_map(|y| std::iter::repeat(y).take(config.test_per_class)));

    let mut noise_rng = rng::stream(config.seed, "data.noise", 0);
    let sd = config.noise_scale / (d as f64).sqrt();
    let mut features = Vec::with_capacity(labels.len() * d);
    for &y in &labels {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            features.push(class_means[y * d + k] + sd * z);
        }
    }

    Ok(SyntheticDataset {
        dim: d,
        num_labels: l,
        features,
        train_idx: (0..n_train).collect(),
        test_idx: (n_train..labels.len()).collect(),
        labels,
        class_means,
        noise_scale: config.noise_scale,
        prior,
        thresholds: config.thresholds,
    })
}

/// Shuffled order of the training indices for one epoch.
pub(crate) fn epoch_order<R: Rng>(train_idx: &[usize], rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order = train_idx.to_vec();
    order.shuffle(rng);
    order
}
