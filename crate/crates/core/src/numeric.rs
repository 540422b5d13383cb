//! Small numerical helpers shared across modules.

/// Neumaier-compensated sum.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `log(sum(exp(x)))` with max-shift. Returns `-inf` for an empty input.
pub fn logsumexp(values: &[f64]) -> f64 {
    let (arg, max) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    // The argmax contributes exactly 1; ln_1p keeps precision when the rest is tiny.
    let rest = stable_sum(values.iter().enumerate().filter(|(i, _)| *i != arg).map(|(_, v)| (v - max).exp()));
    max + rest.ln_1p()
}

/// Softmax with max-shift.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean and unbiased sample variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = stable_sum(values.iter().copied()) / n;
    let var = if values.len() > 1 {
        stable_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}
