//! Shallow scorers: a linear layer or one ReLU hidden layer, optionally cosine-normalized.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Anything that produces one score per label for a feature vector.
pub trait Scorer {
    fn num_labels(&self) -> usize;
    fn scores_into(&self, x: &[f64], out: &mut [f64]);

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_labels()];
        self.scores_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Linear,
    OneHiddenLayer(usize),
}

impl FromStr for ModelKind {
    type Err = Error;

    /// `linear` or `hidden:<width>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "linear" {
            return Ok(ModelKind::Linear);
        }
        if let Some(w) = s.strip_prefix("hidden:") {
            if let Ok(width) = w.parse::<usize>() {
                if width > 0 {
                    return Ok(ModelKind::OneHiddenLayer(width));
                }
            }
        }
        Err(Error::UnknownName { kind: "model", name: s.into() })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Linear => f.write_str("linear"),
            ModelKind::OneHiddenLayer(w) => write!(f, "hidden:{w}"),
        }
    }
}

/// Parameters live in one flat vector:
/// `[W (L x r), b (L), W1 (width x d), b1 (width)]` where `r` is the
/// representation size (`d` for the linear model, `width` otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub dim: usize,
    pub num_labels: usize,
    /// Score with cosine similarity between unit-normalized representation and class weights.
    pub cosine: bool,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone, Default)]
pub struct Forward {
    pub pre: Vec<f64>,
    pub rep: Vec<f64>,
    pub rep_norm: f64,
}

const NORM_FLOOR: f64 = 1e-12;

impl Model {
    /// Linear non-cosine models start at zero. Hidden layers (and cosine class
    /// weights, which cannot be normalized at zero) get `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(kind: ModelKind, dim: usize, num_labels: usize, cosine: bool, seed: u64) -> Result<Self> {
        if dim == 0 || num_labels < 2 {
            return Err(Error::Dimension(format!("model needs dim >= 1 and >= 2 labels, got {dim} and {num_labels}")));
        }
        let mut model = Self { kind, dim, num_labels, cosine, params: Vec::new() };
        let r = model.rep_dim();
        let width = model.width();
        model.params = vec![0.0; num_labels * r + num_labels + width * dim + width];
        let mut init = rng::stream(seed, "model.init", 0);
        if cosine {
            let bound = 1.0 / (r as f64).sqrt();
            for p in &mut model.params[..num_labels * r] {
                *p = init.gen_range(-bound..bound);
            }
        }
        if width > 0 {
            let bound = 1.0 / (dim as f64).sqrt();
            let start = model.hidden_offset();
            for p in &mut model.params[start..] {
                *p = init.gen_range(-bound..bound);
            }
            if !cosine {
                let bound = 1.0 / (width as f64).sqrt();
                for p in &mut model.params[..num_labels * r] {
                    *p = init.gen_range(-bound..bound);
                }
            }
        }
        Ok(model)
    }

    fn width(&self) -> usize {
        match self.kind {
            ModelKind::Linear => 0,
            ModelKind::OneHiddenLayer(w) => w,
        }
    }

    pub fn rep_dim(&self) -> usize {
        match self.kind {
            ModelKind::Linear => self.dim,
            ModelKind::OneHiddenLayer(w) => w,
        }
    }

    fn bias_offset(&self) -> usize {
        self.num_labels * self.rep_dim()
    }

    fn hidden_offset(&self) -> usize {
        self.bias_offset() + self.num_labels
    }

    pub fn forward(&self, x: &[f64], fwd: &mut Forward) {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            ModelKind::Linear => {
                fwd.pre.clear();
                fwd.rep.clear();
                fwd.rep.extend_from_slice(x);
            }
            ModelKind::OneHiddenLayer(width) => {
                let w1 = &self.params[self.hidden_offset()..self.hidden_offset() + width * self.dim];
                let b1 = &self.params[self.hidden_offset() + width * self.dim..];
                fwd.pre.clear();
                fwd.pre.extend((0..width).map(|k| dot(&w1[k * self.dim..(k + 1) * self.dim], x) + b1[k]));
                fwd.rep.clear();
                fwd.rep.extend(fwd.pre.iter().map(|&z| z.max(0.0)));
            }
        }
        fwd.rep_norm = if self.cosine { dot(&fwd.rep, &fwd.rep).sqrt() } else { 1.0 };
    }

    fn class_row(&self, label: usize) -> &[f64] {
        let r = self.rep_dim();
        &self.params[label * r..(label + 1) * r]
    }

    /// Score of one label given a forward pass.
    pub fn score(&self, fwd: &Forward, label: usize) -> f64 {
        let w = self.class_row(label);
        if self.cosine {
            let wn = dot(w, w).sqrt();
            if wn < NORM_FLOOR || fwd.rep_norm < NORM_FLOOR {
                return 0.0;
            }
            dot(w, &fwd.rep) / (wn * fwd.rep_norm)
        } else {
            dot(w, &fwd.rep) + self.params[self.bias_offset() + label]
        }
    }

    /// Adds `sum_k g_k * d score(labels[k]) / d params` into `grad`.
    /// `rep_grad` is scratch space of length `rep_dim`.
    pub fn backward(&self, x: &[f64], fwd: &Forward, labels: &[usize], score_grads: &[f64], grad: &mut [f64], rep_grad: &mut Vec<f64>) {
        let r = self.rep_dim();
        let needs_rep_grad = self.width() > 0;
        rep_grad.clear();
        rep_grad.resize(r, 0.0);
        for (&label, &g) in labels.iter().zip(score_grads) {
            if g == 0.0 {
                continue;
            }
            let w_start = label * r;
            if self.cosine {
                let w = &self.params[w_start..w_start + r];
                let wn = dot(w, w).sqrt();
                if wn < NORM_FLOOR || fwd.rep_norm < NORM_FLOOR {
                    continue;
                }
                let s = dot(w, &fwd.rep) / (wn * fwd.rep_norm);
                for k in 0..r {
                    let w_hat = w[k] / wn;
                    let r_hat = fwd.rep[k] / fwd.rep_norm;
                    grad[w_start + k] += g * (r_hat - s * w_hat) / wn;
                    if needs_rep_grad {
                        rep_grad[k] += g * (w_hat - s * r_hat) / fwd.rep_norm;
                    }
                }
            } else {
                for k in 0..r {
                    grad[w_start + k] += g * fwd.rep[k];
                }
                if needs_rep_grad {
                    let w = &self.params[w_start..w_start + r];
                    for k in 0..r {
                        rep_grad[k] += g * w[k];
                    }
                }
                grad[self.bias_offset() + label] += g;
            }
        }
        if let ModelKind::OneHiddenLayer(width) = self.kind {
            let off = self.hidden_offset();
            for k in 0..width {
                if fwd.pre[k] <= 0.0 || rep_grad[k] == 0.0 {
                    continue;
                }
                let dz = rep_grad[k];
                let row = off + k * self.dim;
                for (gk, &xk) in grad[row..row + self.dim].iter_mut().zip(x) {
                    *gk += dz * xk;
                }
                grad[off + width * self.dim + k] += dz;
            }
        }
    }
}

impl Scorer for Model {
    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        let mut fwd = Forward::default();
        self.forward(x, &mut fwd);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.score(&fwd, j);
        }
    }
}

/// Scores labels by negative squared distance to their class means.
#[derive(Debug, Clone)]
pub struct NearestMean<'a> {
    pub means: &'a [f64],
    pub dim: usize,
}

impl Scorer for NearestMean<'_> {
    fn num_labels(&self) -> usize {
        self.means.len() / self.dim
    }

    fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mu = &self.means[j * self.dim..(j + 1) * self.dim];
            *o = -mu.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
