//! Balanced error and top-k recall, overall and per label slice.

use serde::Serialize;

use crate::label_stats::{LabelSlices, Slice};

use super::data::SyntheticDataset;
use super::model::Scorer;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceMetrics {
    /// Mean of the per-class error rates over classes with test examples.
    pub balanced_error: f64,
    #[serde(rename = "recall@1")]
    pub recall_at_1: f64,
    #[serde(rename = "recall@5")]
    pub recall_at_5: f64,
    pub num_classes: usize,
    pub num_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlicedMetrics {
    pub overall: SliceMetrics,
    /// `None` when the slice has no labels with test examples.
    pub head: Option<SliceMetrics>,
    pub torso: Option<SliceMetrics>,
    pub tail: Option<SliceMetrics>,
    /// `NaN` for classes without test examples.
    pub per_class_error: Vec<f64>,
}

impl SlicedMetrics {
    pub fn slice(&self, slice: Slice) -> Option<&SliceMetrics> {
        match slice {
            Slice::Head => self.head.as_ref(),
            Slice::Torso => self.torso.as_ref(),
            Slice::Tail => self.tail.as_ref(),
        }
    }

    /// `(name, metrics)` for overall and every present slice, in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, &SliceMetrics)> {
        let mut rows = vec![("overall", &self.overall)];
        for s in Slice::ALL {
            if let Some(m) = self.slice(s) {
                rows.push((s.name(), m));
            }
        }
        rows
    }
}

/// 0-based rank of the true label; ties go to the lower label index, which
/// matches an argmax that returns the first maximum.
pub fn rank_of(scores: &[f64], label: usize) -> usize {
    let s = scores[label];
    scores.iter().enumerate().filter(|&(j, &v)| v > s || (v == s && j < label)).count()
}

/// Metrics on the dataset's balanced test split.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, data: &SyntheticDataset, slices: &LabelSlices) -> SlicedMetrics {
    evaluate_on(scorer, data, &data.test_idx, slices)
}

/// Metrics on an arbitrary subset of examples.
pub fn evaluate_on<S: Scorer + ?Sized>(scorer: &S, data: &SyntheticDataset, indices: &[usize], slices: &LabelSlices) -> SlicedMetrics {
    let l = data.num_labels;
    let mut seen = vec![0usize; l];
    let mut wrong = vec![0usize; l];
    let mut in_top5 = vec![0usize; l];
    let mut scores = vec![0.0; l];
    for &i in indices {
        let y = data.labels[i];
        scorer.scores_into(data.row(i), &mut scores);
        let rank = rank_of(&scores, y);
        seen[y] += 1;
        if rank > 0 {
            wrong[y] += 1;
        }
        if rank < 5 {
            in_top5[y] += 1;
        }
    }
    let per_class_error: Vec<f64> = (0..l).map(|y| if seen[y] == 0 { f64::NAN } else { wrong[y] as f64 / seen[y] as f64 }).collect();
    let summarize = |labels: &mut dyn Iterator<Item = usize>| -> Option<SliceMetrics> {
        let labels: Vec<usize> = labels.filter(|&y| seen[y] > 0).collect();
        if labels.is_empty() {
            return None;
        }
        let n: usize = labels.iter().map(|&y| seen[y]).sum();
        Some(SliceMetrics {
            balanced_error: labels.iter().map(|&y| per_class_error[y]).sum::<f64>() / labels.len() as f64,
            recall_at_1: labels.iter().map(|&y| seen[y] - wrong[y]).sum::<usize>() as f64 / n as f64,
            recall_at_5: labels.iter().map(|&y| in_top5[y]).sum::<usize>() as f64 / n as f64,
            num_classes: labels.len(),
            num_examples: n,
        })
    };
    let overall = summarize(&mut (0..l)).unwrap_or(SliceMetrics { balanced_error: f64::NAN, recall_at_1: f64::NAN, recall_at_5: f64::NAN, num_classes: 0, num_examples: 0 });
    SlicedMetrics {
        overall,
        head: summarize(&mut slices.head.iter().copied()),
        torso: summarize(&mut slices.torso.iter().copied()),
        tail: summarize(&mut slices.tail.iter().copied()),
        per_class_error,
    }
}
