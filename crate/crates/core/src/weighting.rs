//! Weights on sampled negatives and the pairwise margins they induce.
//!
//! A `(q, w)` pair induces margins `rho[y][y'] = m * w[y][y'] * q[y']`.
//! Choosing `w = rho / (m * q)` makes any sampler target a given margin matrix.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::label_stats::LabelDistribution;

/// Monotone map used by the equalised margin preset.
#[derive(Clone)]
pub struct MarginTransform(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl MarginTransform {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self(Arc::new(f))
    }

    pub fn identity() -> Self {
        Self::new(|p| p)
    }

    pub fn apply(&self, p: f64) -> f64 {
        (self.0)(p)
    }
}

impl fmt::Debug for MarginTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MarginTransform(..)")
    }
}

/// Named margin presets built from a label marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginPreset {
    Unit,
    Adaptive,
    Equalised,
    LogitAdjusted,
}

impl MarginPreset {
    pub fn name(self) -> &'static str {
        match self {
            MarginPreset::Unit => "unit",
            MarginPreset::Adaptive => "adaptive",
            MarginPreset::Equalised => "equalised",
            MarginPreset::LogitAdjusted => "logit_adjusted",
        }
    }
}

impl FromStr for MarginPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit" => Ok(Self::Unit),
            "adaptive" => Ok(Self::Adaptive),
            "equalised" | "equalized" => Ok(Self::Equalised),
            "logit_adjusted" | "logit" => Ok(Self::LogitAdjusted),
            other => Err(Error::UnknownName { kind: "margin preset", name: other.into() }),
        }
    }
}

/// Pairwise label margins `rho[y][y'] >= 0`.
#[derive(Debug, Clone)]
pub enum MarginMatrix {
    /// `rho = 1`: plain softmax cross-entropy.
    Unit,
    Constant(f64),
    /// `rho[y][y'] = (min_z pi_z / pi_y)^(1/4)`, i.e. `pi_y^(-1/4)` scaled into `(0, 1]`.
    Adaptive { pi: Vec<f64>, min_pi: f64 },
    /// `rho[y][y'] = F(pi_y')`.
    Equalised { pi: Vec<f64>, transform: MarginTransform },
    /// `rho[y][y'] = pi_y' / pi_y`.
    LogitAdjusted { pi: Vec<f64> },
    /// Row-major `L x L` table.
    Dense { num_labels: usize, values: Vec<f64> },
}

impl MarginMatrix {
    pub fn from_preset(preset: MarginPreset, pi: &LabelDistribution) -> Self {
        match preset {
            MarginPreset::Unit => MarginMatrix::Unit,
            MarginPreset::Adaptive => Self::adaptive(pi),
            MarginPreset::Equalised => Self::equalised(pi, MarginTransform::identity()),
            MarginPreset::LogitAdjusted => Self::logit_adjusted(pi),
        }
    }

    pub fn adaptive(pi: &LabelDistribution) -> Self {
        let min_pi = pi.probs().iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
        MarginMatrix::Adaptive { pi: pi.probs().to_vec(), min_pi }
    }

    pub fn equalised(pi: &LabelDistribution, transform: MarginTransform) -> Self {
        MarginMatrix::Equalised { pi: pi.probs().to_vec(), transform }
    }

    pub fn logit_adjusted(pi: &LabelDistribution) -> Self {
        MarginMatrix::LogitAdjusted { pi: pi.probs().to_vec() }
    }

    pub fn dense(num_labels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_labels * num_labels {
            return Err(Error::Dimension(format!("{} margins for {num_labels} labels", values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("margins must be finite and nonnegative".into()));
        }
        Ok(MarginMatrix::Dense { num_labels, values })
    }

    /// `rho[y][y']`. Presets that divide by `pi_y` return `inf` when `pi_y = 0`.
    pub fn rho(&self, y: usize, y_neg: usize) -> f64 {
        match self {
            MarginMatrix::Unit => 1.0,
            MarginMatrix::Constant(c) => *c,
            MarginMatrix::Adaptive { pi, min_pi } => (min_pi / pi[y]).powf(0.25),
            MarginMatrix::Equalised { pi, transform } => transform.apply(pi[y_neg]),
            MarginMatrix::LogitAdjusted { pi } => pi[y_neg] / pi[y],
            MarginMatrix::Dense { num_labels, values } => values[y * num_labels + y_neg],
        }
    }

    /// The row `rho[y][.]`, with the diagonal entry set to zero.
    pub fn row(&self, y: usize, num_labels: usize) -> Vec<f64> {
        (0..num_labels).map(|j| if j == y { 0.0 } else { self.rho(y, j) }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKind {
    Constant,
    Importance,
    Relative,
    Tail,
    TargetMargin,
}

/// Per-call inputs beyond `(y, y', q, m)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeightContext<'a> {
    /// Mass of the positive under the sampler before it was excluded.
    /// Relative weighting uses this in place of `q[y]`, which is zero after exclusion.
    pub positive_mass: Option<f64>,
    /// Opaque per-instance data for instance-dependent schemes.
    pub instance: Option<&'a [f64]>,
}

impl<'a> WeightContext<'a> {
    pub fn with_positive_mass(positive_mass: f64) -> Self {
        Self { positive_mass: Some(positive_mass), instance: None }
    }
}

/// A rule assigning weights `w[y][y']` to sampled negatives.
#[derive(Debug, Clone)]
pub struct WeightingScheme {
    pub kind: WeightKind,
    pub pi: Option<LabelDistribution>,
    pub rho: Option<MarginMatrix>,
    /// Give the positive label weight 0 if it is ever drawn.
    pub zero_positive: bool,
}

impl WeightingScheme {
    fn bare(kind: WeightKind) -> Self {
        Self { kind, pi: None, rho: None, zero_positive: false }
    }

    pub fn constant() -> Self {
        Self::bare(WeightKind::Constant)
    }

    pub fn importance() -> Self {
        Self::bare(WeightKind::Importance)
    }

    pub fn relative() -> Self {
        Self::bare(WeightKind::Relative)
    }

    /// `w = pi_y' / (m q_y' pi_y)`, which targets logit-adjusted margins.
    pub fn tail(pi: LabelDistribution) -> Self {
        Self { pi: Some(pi), ..Self::bare(WeightKind::Tail) }
    }

    /// `w = rho_yy' / (m q_y')`.
    pub fn target_margin(rho: MarginMatrix) -> Self {
        Self { rho: Some(rho), ..Self::bare(WeightKind::TargetMargin) }
    }

    pub fn with_zero_positive(mut self, zero_positive: bool) -> Self {
        self.zero_positive = zero_positive;
        self
    }

    pub fn name(&self) -> String {
        match self.kind {
            WeightKind::Constant => "constant".into(),
            WeightKind::Importance => "importance".into(),
            WeightKind::Relative => "relative".into(),
            WeightKind::Tail => "tail".into(),
            WeightKind::TargetMargin => "target_margin".into(),
        }
    }

    fn pi(&self) -> Result<&LabelDistribution> {
        self.pi.as_ref().ok_or(Error::MissingParameter("label marginal pi"))
    }

    fn margins(&self) -> Result<&MarginMatrix> {
        self.rho.as_ref().ok_or(Error::MissingParameter("margin matrix rho"))
    }

    /// Weight from the scalar inputs: `q_neg = q[y']`, `q_pos` is the positive's
    /// reference mass (used by relative weighting only).
    pub fn weight_from(&self, y: usize, y_neg: usize, q_neg: f64, q_pos: f64, m: usize) -> Result<f64> {
        if self.zero_positive && y == y_neg {
            return Ok(0.0);
        }
        if m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        let m = m as f64;
        let needs_q = !matches!(self.kind, WeightKind::Constant);
        if needs_q && !(q_neg > 0.0) {
            return Err(Error::ZeroProposalMass { label: y_neg });
        }
        let w = match self.kind {
            WeightKind::Constant => 1.0 / m,
            WeightKind::Importance => 1.0 / (m * q_neg),
            WeightKind::Relative => q_pos / q_neg,
            WeightKind::Tail => {
                let pi = self.pi()?;
                pi.prob(y_neg) / (m * q_neg * pi.prob(y))
            }
            WeightKind::TargetMargin => self.margins()?.rho(y, y_neg) / (m * q_neg),
        };
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidArgument(format!("weight for ({y}, {y_neg}) is {w}")));
        }
        Ok(w)
    }

    pub fn weight(&self, y: usize, y_neg: usize, q: &LabelDistribution, m: usize, ctx: &WeightContext<'_>) -> Result<f64> {
        let q_pos = ctx.positive_mass.unwrap_or_else(|| q.prob(y));
        self.weight_from(y, y_neg, q.prob(y_neg), q_pos, m)
    }

    /// The m-independent part `eta = m * w`, where it exists.
    pub fn eta(&self, y: usize, y_neg: usize, q: &LabelDistribution, ctx: &WeightContext<'_>) -> Result<f64> {
        if self.kind == WeightKind::Relative {
            return Err(Error::MDependentWeights);
        }
        if self.kind == WeightKind::Constant && !(self.zero_positive && y == y_neg) {
            return Ok(1.0);
        }
        Ok(self.weight(y, y_neg, q, 1, ctx)?)
    }
}

/// Free-function form of [`WeightingScheme::weight`].
pub fn weight(scheme: &WeightingScheme, y: usize, y_neg: usize, q: &LabelDistribution, m: usize, ctx: &WeightContext<'_>) -> Result<f64> {
    scheme.weight(y, y_neg, q, m, ctx)
}

/// Induced margin `m * w[y][y'] * q[y']`.
pub fn rho_of(q: &LabelDistribution, scheme: &WeightingScheme, y: usize, y_neg: usize, m: usize, ctx: &WeightContext<'_>) -> Result<f64> {
    Ok(m as f64 * scheme.weight(y, y_neg, q, m, ctx)? * q.prob(y_neg))
}

/// Induced margins for every `y' != y`; labels with `q[y'] = 0` get 0.
pub fn induced_margins(q: &LabelDistribution, scheme: &WeightingScheme, y: usize, m: usize, ctx: &WeightContext<'_>) -> Result<Vec<f64>> {
    (0..q.len())
        .map(|j| if j == y || q.prob(j) == 0.0 { Ok(0.0) } else { rho_of(q, scheme, y, j, m, ctx) })
        .collect()
}

/// Unbound weighting choice as written in config files:
/// `constant | importance | relative | tail | target_margin:<preset>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub preset: Option<MarginPreset>,
}

impl WeightSpec {
    /// Attaches the label marginal needed by `tail` and margin presets.
    pub fn bind(&self, pi: &LabelDistribution) -> WeightingScheme {
        match self.kind {
            WeightKind::Constant => WeightingScheme::constant(),
            WeightKind::Importance => WeightingScheme::importance(),
            WeightKind::Relative => WeightingScheme::relative(),
            WeightKind::Tail => WeightingScheme::tail(pi.clone()),
            WeightKind::TargetMargin => {
                let preset = self.preset.unwrap_or(MarginPreset::Unit);
                WeightingScheme::target_margin(MarginMatrix::from_preset(preset, pi))
            }
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let kind = match head {
            "constant" => WeightKind::Constant,
            "importance" => WeightKind::Importance,
            "relative" => WeightKind::Relative,
            "tail" => WeightKind::Tail,
            "target_margin" => WeightKind::TargetMargin,
            _ => return Err(Error::UnknownName { kind: "weighting", name: s.into() }),
        };
        let preset = match (kind, tail) {
            (WeightKind::TargetMargin, Some(p)) => Some(p.parse()?),
            (WeightKind::TargetMargin, None) => {
                return Err(Error::UnknownName { kind: "weighting (target_margin needs :<preset>)", name: s.into() })
            }
            (_, Some(_)) => return Err(Error::UnknownName { kind: "weighting", name: s.into() }),
            (_, None) => None,
        };
        Ok(Self { kind, preset })
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            WeightKind::Constant => "constant",
            WeightKind::Importance => "importance",
            WeightKind::Relative => "relative",
            WeightKind::Tail => "tail",
            WeightKind::TargetMargin => "target_margin",
        };
        match self.preset {
            Some(p) => write!(f, "{base}:{}", p.name()),
            None => f.write_str(base),
        }
    }
}
