//! Monte-Carlo and enumeration checks of the closed-form results.
//!
//! Every check produces [`CheckRow`]s comparing a closed form with an
//! independent estimate. Random instances come from seed-derived streams, so a
//! report is reproducible from `(suite, trials, seed)` alone.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::implicit::{convergence_quantities, eta_vector, implicit_decoupled, implicit_softmax_bound};
use crate::label_stats::LabelDistribution;
use crate::losses::{margin_ce_row, LossOp, MarginLoss, MarginLossPair, WeightedNegatives};
use crate::numeric::softmax;
use crate::rng::{self, StreamRng};
use crate::sampler::AliasTable;
use crate::variance_opt::{optimal_q, variance_under};
use crate::weighting::{MarginMatrix, WeightContext, WeightingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma1,
    Lemma2,
    Theorem1,
    Prop1,
    VarianceOpt,
    Gradients,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [Suite::Lemma1, Suite::Lemma2, Suite::Theorem1, Suite::Prop1, Suite::VarianceOpt, Suite::Gradients];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Theorem1 => "theorem1",
            Suite::Prop1 => "prop1",
            Suite::VarianceOpt => "variance_opt",
            Suite::Gradients => "gradients",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| Error::UnknownName { kind: "suite", name: s.into() })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Monte-Carlo trials per estimate.
    pub trials: usize,
    pub seed: u64,
    /// Overrides each suite's default instance count.
    pub instances: Option<usize>,
    /// Sample sizes for the convergence-rate check.
    pub rate_ms: Vec<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { trials: 10_000, seed: 0, instances: None, rate_ms: vec![512, 1024, 2048] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check_name: String,
    pub instance_id: usize,
    pub statistic: String,
    pub closed_form: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(check: &str, instance_id: usize, statistic: &str, closed_form: f64, estimate: f64, stderr: f64, pass: bool) -> Self {
        Self { check_name: check.into(), instance_id, statistic: statistic.into(), closed_form, estimate, stderr, pass }
    }
}

pub const REPORT_HEADER: &str = "check_name,instance_id,statistic,closed_form,estimate,stderr,pass";

pub fn write_csv<W: Write>(rows: &[CheckRow], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{:e},{:e},{:e},{}", r.check_name, r.instance_id, r.statistic, r.closed_form, r.estimate, r.stderr, r.pass)?;
    }
    Ok(())
}

pub fn write_json<W: Write>(rows: &[CheckRow], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

pub fn all_pass(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    match suite {
        Suite::Lemma1 => lemma1(opts),
        Suite::Lemma2 => lemma2(opts),
        Suite::Theorem1 => theorem1(opts),
        Suite::Prop1 => prop1(opts),
        Suite::VarianceOpt => variance_opt(opts),
        Suite::Gradients => gradients(opts),
        Suite::All => {
            let mut rows = Vec::new();
            for s in Suite::EACH {
                rows.extend(run(s, opts)?);
            }
            Ok(rows)
        }
    }
}

fn instance_rng(opts: &VerifyOptions, suite: &str, instance: usize) -> StreamRng {
    rng::stream(opts.seed, suite, instance as u64)
}

/// Random distribution over `l` labels, zero at `y`, every other entry >= 0.02 / l.
fn random_q_excluding(rng: &mut StreamRng, l: usize, y: usize) -> LabelDistribution {
    let w: Vec<f64> = (0..l).map(|j| if j == y { 0.0 } else { rng.gen_range(0.02..1.0) }).collect();
    LabelDistribution::from_weights(&w).expect("positive weights")
}

fn random_pi(rng: &mut StreamRng, l: usize) -> LabelDistribution {
    let w: Vec<f64> = (0..l).map(|_| rng.gen_range(0.02..1.0)).collect();
    LabelDistribution::from_weights(&w).expect("positive weights")
}

fn random_logits(rng: &mut StreamRng, l: usize, scale: f64) -> Vec<f64> {
    (0..l).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// One of the weighting rules, with whatever parameters it needs.
fn random_scheme(rng: &mut StreamRng, l: usize, which: usize) -> (WeightingScheme, Option<f64>) {
    match which % 5 {
        0 => (WeightingScheme::constant(), None),
        1 => (WeightingScheme::importance(), None),
        2 => (WeightingScheme::relative(), Some(rng.gen_range(0.01..0.5))),
        3 => (WeightingScheme::tail(random_pi(rng, l)), None),
        _ => {
            let values = (0..l * l).map(|_| rng.gen_range(0.1..3.0)).collect();
            (WeightingScheme::target_margin(MarginMatrix::dense(l, values).expect("square")), None)
        }
    }
}

fn ctx_for(positive_mass: Option<f64>) -> WeightContext<'static> {
    WeightContext { positive_mass, instance: None }
}

/// Exact mean and variance of the sampled decoupled loss by enumerating
/// every ordered draw of `m` negatives.
fn enumerate_decoupled(y: usize, f: &[f64], q: &LabelDistribution, per_label: &[f64], m: usize, pair: &MarginLossPair) -> (f64, f64) {
    let support: Vec<usize> = (0..q.len()).filter(|&j| q.prob(j) > 0.0).collect();
    let k = support.len();
    let mut outcomes = Vec::with_capacity(k.pow(m as u32));
    let mut idx = vec![0usize; m];
    loop {
        let mut p = 1.0;
        let mut loss = pair.phi.value(f[y]);
        for &i in &idx {
            let j = support[i];
            p *= q.prob(j);
            loss += per_label[j];
        }
        outcomes.push((p, loss));
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == m {
                let mean: f64 = outcomes.iter().map(|(p, v)| p * v).sum();
                let var: f64 = outcomes.iter().map(|(p, v)| p * (v - mean) * (v - mean)).sum();
                return (mean, var);
            }
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn lemma1(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let n = opts.instances.unwrap_or(200);
    let rows: Vec<Vec<CheckRow>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<CheckRow>> {
            let mut r = instance_rng(opts, "verify.lemma1", i);
            let l = r.gen_range(2..=5);
            let m = r.gen_range(1..=3);
            let y = r.gen_range(0..l);
            let f = random_logits(&mut r, l, 3.0);
            let q = random_q_excluding(&mut r, l, y);
            let (scheme, pos) = random_scheme(&mut r, l, i);
            let pair = if i % 2 == 0 { MarginLossPair::hinge() } else { MarginLossPair::softplus() };
            let ctx = ctx_for(pos);
            let report = implicit_decoupled(y, &f, &q, &scheme, &ctx, m, &pair)?;
            let per_label: Vec<f64> = (0..l)
                .map(|j| if q.prob(j) > 0.0 { scheme.weight(y, j, &q, m, &ctx).map(|w| w * pair.varphi.value(-f[j])) } else { Ok(0.0) })
                .collect::<Result<_>>()?;
            let (mean, var) = enumerate_decoupled(y, &f, &q, &per_label, m, &pair);
            let tol = 1e-10;
            Ok(vec![
                CheckRow::new("lemma1", i, "mean", report.expected_or_bound, mean, 0.0, (report.expected_or_bound - mean).abs() <= tol),
                CheckRow::new("lemma1", i, "variance", report.variance, var, 0.0, (report.variance - var).abs() <= tol),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Mean and standard error of `trials` draws of `sample(rng)`, split into
/// independently seeded chunks.
fn monte_carlo<F>(opts: &VerifyOptions, purpose: &str, instance: usize, trials: usize, sample: F) -> (f64, f64)
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    const CHUNK: usize = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let (sum, sumsq, count) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(opts.seed, purpose, ((instance as u64) << 32) | c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            let (mut s, mut ss) = (0.0, 0.0);
            for _ in 0..n {
                let v = sample(&mut r);
                s += v;
                ss += v * v;
            }
            (s, ss, n)
        })
        .reduce(|| (0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = count as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// `log(1 + sum_k c[N_k])` for `m` draws from `table`, where `c[j] = w_j exp(f_j - f_y)`.
fn sampled_softmax_draw(r: &mut StreamRng, table: &AliasTable, c: &[f64], m: usize) -> f64 {
    let mut s = 0.0;
    for _ in 0..m {
        s += c[table.sample(r)];
    }
    s.ln_1p()
}

fn lemma2(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let n = opts.instances.unwrap_or(100);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = instance_rng(opts, "verify.lemma2", i);
        let l = r.gen_range(2..=32);
        let m = r.gen_range(1..=8);
        let y = r.gen_range(0..l);
        let f = random_logits(&mut r, l, 2.0);
        // every fourth instance is the equality case: model-based q with importance weights
        let equality = i % 4 == 3;
        let (q, scheme, pos) = if equality {
            let p = softmax(&f);
            (LabelDistribution::from_weights(&p)?.excluding(y)?, WeightingScheme::importance(), None)
        } else {
            let q = random_q_excluding(&mut r, l, y);
            let (s, pos) = random_scheme(&mut r, l, i);
            (q, s, pos)
        };
        let ctx = ctx_for(pos);
        let bound = implicit_softmax_bound(y, &f, &q, &scheme, &ctx, m)?.expected_or_bound;
        let c: Vec<f64> = (0..l)
            .map(|j| if q.prob(j) > 0.0 { scheme.weight(y, j, &q, m, &ctx).map(|w| w * (f[j] - f[y]).exp()) } else { Ok(0.0) })
            .collect::<Result<_>>()?;
        let table = AliasTable::new(&q)?;
        let (mean, se) = monte_carlo(opts, "verify.lemma2.mc", i, opts.trials, |r| sampled_softmax_draw(r, &table, &c, m));
        let slack = 3.0 * se + 1e-12 * bound.abs().max(1.0);
        if equality {
            rows.push(CheckRow::new("lemma2", i, "equality", bound, mean, se, (mean - bound).abs() <= slack));
        } else {
            rows.push(CheckRow::new("lemma2", i, "upper_bound", bound, mean, se, mean <= bound + slack));
        }
    }
    Ok(rows)
}

fn theorem1(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let n = opts.instances.unwrap_or(20);
    let mut rows = Vec::new();
    for i in 0..n {
        let mut r = instance_rng(opts, "verify.theorem1", i);
        let l = r.gen_range(20..=100);
        let y = r.gen_range(0..l);
        let f = random_logits(&mut r, l, 1.5);
        let q = random_q_excluding(&mut r, l, y);
        let scheme = match i % 3 {
            0 => WeightingScheme::importance(),
            1 => WeightingScheme::constant(),
            _ => WeightingScheme::tail(random_pi(&mut r, l)),
        };
        let ctx = WeightContext::default();
        let eta = eta_vector(y, &q, &scheme, &ctx)?;
        let cq = convergence_quantities(y, &f, &q, &eta)?;
        let table = AliasTable::new(&q)?;
        // work relative to exp(f_y) so the draw is log(1 + mean of eta exp(f - f_y))
        let c: Vec<f64> = (0..l).map(|j| eta[j] * (f[j] - f[y]).exp()).collect();
        let mut stats = Vec::new();
        for &m in &opts.rate_ms {
            let target = implicit_softmax_bound(y, &f, &q, &scheme, &ctx, m)?.expected_or_bound;
            let inv_m = 1.0 / m as f64;
            let (mse, se) = monte_carlo(opts, "verify.theorem1.mc", i * 16 + stats.len(), opts.trials, |r| {
                let mut s = 0.0;
                for _ in 0..m {
                    s += c[table.sample(r)];
                }
                let d = (s * inv_m).ln_1p() - target;
                d * d
            });
            let scale = m as f64 / cq.inverse_snr();
            let stat = mse * scale;
            stats.push(stat);
            rows.push(CheckRow::new("theorem1", i, &format!("m*mse*mu^2/sigma^2@m={m}"), 1.0, stat, se * scale, (0.75..=1.25).contains(&stat)));
        }
        if stats.len() > 1 {
            let lo = stats.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spread = (hi - lo) / lo;
            rows.push(CheckRow::new("theorem1", i, "relative_spread_across_m", 0.0, spread, 0.0, spread < 0.25));
        }
    }
    Ok(rows)
}

fn prop1(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let n = opts.instances.unwrap_or(1000);
    (0..n)
        .map(|i| {
            let mut r = instance_rng(opts, "verify.prop1", i);
            let l = r.gen_range(2..=20);
            let m = r.gen_range(1..=64);
            let y = r.gen_range(0..l);
            let f = random_logits(&mut r, l, 5.0);
            let q = random_q_excluding(&mut r, l, y);
            let values: Vec<f64> = (0..l * l).map(|_| r.gen_range(0.01..10.0)).collect();
            let rho = MarginMatrix::dense(l, values)?;
            let scheme = WeightingScheme::target_margin(rho.clone());
            let bound = implicit_softmax_bound(y, &f, &q, &scheme, &WeightContext::default(), m)?.expected_or_bound;
            let target = margin_ce_row(y, &f, &rho.row(y, l));
            let pass = (bound - target).abs() <= 1e-12 * target.abs().max(1.0);
            Ok(CheckRow::new("prop1", i, "bound_vs_margin_ce", target, bound, 0.0, pass))
        })
        .collect()
}

/// All points of the probability simplex over `k` entries with step `1/steps`.
fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Slack allowed when comparing against the (analytically zero) variance at `q*`.
fn variance_slack(a_total: f64) -> f64 {
    1e-13 * a_total * a_total
}

fn variance_opt(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let n = opts.instances.unwrap_or(10);
    let pair = MarginLossPair::softplus();
    let mut rows = Vec::new();
    for i in 0..n {
        // L = 4 against every grid point of the simplex on the three negatives
        let mut r = instance_rng(opts, "verify.variance_opt.grid", i);
        let (l, y) = (4, r.gen_range(0..4));
        let f = random_logits(&mut r, l, 2.0);
        let rho = MarginMatrix::dense(l, (0..l * l).map(|_| r.gen_range(0.1..3.0)).collect())?;
        let m = r.gen_range(1..=8);
        let best = optimal_q(y, &f, &rho, &pair, m)?;
        let q_star = best.q_star.as_ref().expect("softplus losses are positive");
        let v_star = variance_under(q_star, y, &f, &rho, m, &pair)?;
        let total: f64 = crate::variance_opt::contributions(y, &f, &rho, &pair).iter().sum();
        let mut worst_gap = f64::INFINITY;
        let mut comparisons = 0usize;
        let mut pass = true;
        for point in simplex_grid(l - 1, 20) {
            if point.iter().any(|&p| p == 0.0) {
                // softplus keeps every contribution positive, so q must cover all negatives
                continue;
            }
            let mut probs = vec![0.0; l];
            let mut it = point.into_iter();
            for (j, p) in probs.iter_mut().enumerate() {
                if j != y {
                    *p = it.next().expect("grid point per negative");
                }
            }
            let q = LabelDistribution::from_weights(&probs)?;
            let v = variance_under(&q, y, &f, &rho, m, &pair)?;
            comparisons += 1;
            worst_gap = worst_gap.min(v - v_star);
            pass &= v_star <= v + variance_slack(total);
        }
        rows.push(CheckRow::new("variance_opt", i, &format!("grid_L4_min_gap_over_{comparisons}"), v_star, v_star + worst_gap, 0.0, pass));

        // L = 32 against random q
        let mut r = instance_rng(opts, "verify.variance_opt.random", i);
        let (l, y) = (32, r.gen_range(0..32));
        let f = random_logits(&mut r, l, 2.0);
        let rho = MarginMatrix::dense(l, (0..l * l).map(|_| r.gen_range(0.1..3.0)).collect())?;
        let m = r.gen_range(1..=32);
        let best = optimal_q(y, &f, &rho, &pair, m)?;
        let v_star = variance_under(best.q_star.as_ref().expect("positive losses"), y, &f, &rho, m, &pair)?;
        let total: f64 = crate::variance_opt::contributions(y, &f, &rho, &pair).iter().sum();
        let draws = 10_000 / n.max(1);
        let mut worst_gap = f64::INFINITY;
        let mut pass = true;
        for _ in 0..draws {
            let q = random_q_excluding(&mut r, l, y);
            let v = variance_under(&q, y, &f, &rho, m, &pair)?;
            worst_gap = worst_gap.min(v - v_star);
            pass &= v_star <= v + variance_slack(total);
        }
        rows.push(CheckRow::new("variance_opt", i, &format!("random_L32_min_gap_over_{draws}"), v_star, v_star + worst_gap, 0.0, pass));
    }
    Ok(rows)
}

/// Loss families whose gradients are checked.
fn gradient_families() -> Vec<(&'static str, MarginLossPair)> {
    vec![
        ("softmax_ce", MarginLossPair::softplus()),
        ("margin_ce", MarginLossPair::softplus()),
        ("sampled_softmax", MarginLossPair::softplus()),
        ("decoupled_hinge", MarginLossPair::hinge()),
        ("decoupled_softplus", MarginLossPair::softplus()),
        ("decoupled_squared_hinge", MarginLossPair::squared_hinge()),
        ("decoupled_cosine", MarginLossPair::cosine_contrastive(0.3)),
        ("sampled_decoupled_hinge", MarginLossPair::hinge()),
        ("sampled_decoupled_softplus", MarginLossPair::softplus()),
        ("sampled_decoupled_cosine", MarginLossPair::cosine_contrastive(0.3)),
    ]
}

fn near_kink(loss: MarginLoss, v: f64) -> bool {
    loss.kink().is_some_and(|k| (v - k).abs() < 1e-3)
}

/// `||g - fd|| / max(||g||, ||fd||)`, zero when both vanish.
pub fn relative_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn central_difference<F: Fn(&[f64]) -> f64>(value: F, f: &[f64], h: f64) -> Vec<f64> {
    let mut x = f.to_vec();
    (0..f.len())
        .map(|j| {
            let orig = x[j];
            x[j] = orig + h;
            let plus = value(&x);
            x[j] = orig - h;
            let minus = value(&x);
            x[j] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

fn gradients(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let n = opts.instances.unwrap_or(100);
    let mut rows = Vec::new();
    for (fi, (family, pair)) in gradient_families().into_iter().enumerate() {
        let mut r = instance_rng(opts, "verify.gradients", fi);
        let mut done = 0;
        while done < n {
            let l = r.gen_range(2..=12);
            let y = r.gen_range(0..l);
            let cosine = pair.is_cosine();
            let f: Vec<f64> = if cosine { (0..l).map(|_| r.gen_range(-1.0..1.0)).collect() } else { random_logits(&mut r, l, 3.0) };
            let m = r.gen_range(1..=6);
            let labels: Vec<usize> = (0..m).map(|_| r.gen_range(0..l)).collect();
            let weights: Vec<f64> = (0..m).map(|_| r.gen_range(0.05..2.0)).collect();
            let wn = WeightedNegatives { labels, weights };
            let rho = MarginMatrix::dense(l, (0..l * l).map(|_| r.gen_range(0.1..3.0)).collect())?;
            let op = match family {
                "softmax_ce" => LossOp::SoftmaxCe,
                "margin_ce" => LossOp::MarginCe(&rho),
                "sampled_softmax" => LossOp::SampledSoftmax(&wn),
                f if f.starts_with("sampled_decoupled") => LossOp::SampledDecoupled(&wn, &pair),
                _ => LossOp::Decoupled(&pair),
            };
            if family.contains("decoupled") {
                let kinked = near_kink(pair.phi, f[y]) || f.iter().enumerate().any(|(j, &v)| j != y && near_kink(pair.varphi, -v));
                if kinked {
                    continue;
                }
            }
            let g = op.grad(y, &f);
            let fd = central_difference(|x| op.value(y, x), &f, 1e-6);
            let err = relative_gradient_error(&g, &fd);
            rows.push(CheckRow::new(&format!("gradients.{family}"), done, "relative_error", 0.0, err, 0.0, err <= 1e-5));
            done += 1;
        }
    }
    Ok(rows)
}
