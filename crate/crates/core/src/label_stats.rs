//! Label marginals, long-tail profiles and head/torso/tail slicing.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stable_sum;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector over `L` labels, optionally backed by integer counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
    counts: Option<Vec<u64>>,
}

impl LabelDistribution {
    /// Wraps an already-normalized probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no labels".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        let total = stable_sum(probs.iter().copied());
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { probs, counts: None })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {i} is {w}")));
        }
        let total = stable_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("weights have zero total mass".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// Empirical distribution of integer counts; the counts are kept.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("counts are all zero".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let mut dist = Self::new(probs)?;
        dist.counts = Some(counts);
        Ok(dist)
    }

    pub fn uniform(num_labels: usize) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidDistribution("no labels".into()));
        }
        Ok(Self { probs: vec![1.0 / num_labels as f64; num_labels], counts: None })
    }

    pub fn point_mass(num_labels: usize, label: usize) -> Result<Self> {
        if label >= num_labels {
            return Err(Error::LabelOutOfRange { label, num_labels });
        }
        let mut probs = vec![0.0; num_labels];
        probs[label] = 1.0;
        Ok(Self { probs, counts: None })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, label: usize) -> f64 {
        self.probs[label]
    }

    /// Zeroes `label` and renormalizes the remaining mass.
    pub fn excluding(&self, label: usize) -> Result<Self> {
        if label >= self.len() {
            return Err(Error::LabelOutOfRange { label, num_labels: self.len() });
        }
        let rest = 1.0 - self.probs[label];
        let mut weights = self.probs.clone();
        weights[label] = 0.0;
        if !(rest > 0.0) || weights.iter().all(|&w| w == 0.0) {
            return Err(Error::NoMassAfterExclusion);
        }
        Self::from_weights(&weights)
    }

    /// Writes a single `prob` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "prob")?;
        for p in &self.probs {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "prob" {
            return Err(Error::InvalidDistribution("missing `prob` header".into()));
        }
        let mut probs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let p = line
                .parse::<f64>()
                .map_err(|e| Error::InvalidDistribution(format!("row {}: {e}", i + 1)))?;
            probs.push(p);
        }
        Self::new(probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Exp,
    Step,
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" => Ok(Self::Exp),
            "step" => Ok(Self::Step),
            _ => Err(Error::UnknownName { kind: "profile", name: s.into() }),
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exp => "exp",
            Self::Step => "step",
        })
    }
}

/// A long-tail label profile with a given `max pi / min pi` ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub kind: ProfileKind,
    pub num_labels: usize,
    pub imbalance_ratio: f64,
}

impl ImbalanceProfile {
    pub fn new(kind: ProfileKind, num_labels: usize, imbalance_ratio: f64) -> Self {
        Self { kind, num_labels, imbalance_ratio }
    }
}

/// Builds the label marginal for a profile.
///
/// `Exp` decays geometrically, `pi_y ∝ r^(-y/(L-1))` for zero-based `y`.
/// `Step` gives the first `ceil(L/2)` labels weight `r` and the rest weight 1.
pub fn make_profile(profile: &ImbalanceProfile) -> Result<LabelDistribution> {
    let l = profile.num_labels;
    let r = profile.imbalance_ratio;
    if l < 2 {
        return Err(Error::InvalidProfile(format!("need at least 2 labels, got {l}")));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::InvalidProfile(format!("imbalance ratio must be >= 1, got {r}")));
    }
    let weights: Vec<f64> = match profile.kind {
        ProfileKind::Exp => {
            let denom = (l - 1) as f64;
            (0..l).map(|y| r.powf(-(y as f64) / denom)).collect()
        }
        ProfileKind::Step => {
            let head = l.div_ceil(2);
            (0..l).map(|y| if y < head { r } else { 1.0 }).collect()
        }
    };
    LabelDistribution::from_weights(&weights)
}

/// Training-count thresholds separating head, torso and tail labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceThresholds {
    pub hi: u64,
    pub lo: u64,
}

impl Default for SliceThresholds {
    fn default() -> Self {
        Self { hi: 100, lo: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    Head,
    Torso,
    Tail,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::Head, Slice::Torso, Slice::Tail];

    pub fn name(self) -> &'static str {
        match self {
            Slice::Head => "head",
            Slice::Torso => "torso",
            Slice::Tail => "tail",
        }
    }
}

/// Partition of the label set by training-sample count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSlices {
    pub head: Vec<usize>,
    pub torso: Vec<usize>,
    pub tail: Vec<usize>,
    pub thresholds: SliceThresholds,
}

impl LabelSlices {
    pub fn get(&self, slice: Slice) -> &[usize] {
        match slice {
            Slice::Head => &self.head,
            Slice::Torso => &self.torso,
            Slice::Tail => &self.tail,
        }
    }

    pub fn slice_of(&self, label: usize) -> Option<Slice> {
        Slice::ALL.into_iter().find(|s| self.get(*s).contains(&label))
    }

    pub fn num_labels(&self) -> usize {
        self.head.len() + self.torso.len() + self.tail.len()
    }
}

pub fn slice_labels(counts: &[u64]) -> LabelSlices {
    slice_labels_with(counts, SliceThresholds::default())
}

pub fn slice_labels_with(counts: &[u64], thresholds: SliceThresholds) -> LabelSlices {
    let mut slices = LabelSlices { head: Vec::new(), torso: Vec::new(), tail: Vec::new(), thresholds };
    for (label, &c) in counts.iter().enumerate() {
        if c >= thresholds.hi {
            slices.head.push(label);
        } else if c >= thresholds.lo {
            slices.torso.push(label);
        } else {
            slices.tail.push(label);
        }
    }
    slices
}
