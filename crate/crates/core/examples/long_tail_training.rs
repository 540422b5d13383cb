// Trains a linear scorer on synthetic long-tail data with within-batch
// negatives under three weightings and reports head and tail balanced error.
//
// A short run; `negsample sweep` covers the full benchmark.

use negsample::harness::{evaluate, generate_with, train, DataConfig, TrainConfig};
use negsample::SamplerKind;

pub struct SchemeResult {
    pub weighting: String,
    pub head_error: f64,
    pub tail_error: f64,
}

pub fn run_example() -> negsample::Result<Vec<SchemeResult>> {
    let data = generate_with(&DataConfig { train_size: 10_000, seed: 1, ..DataConfig::default() })?;
    let slices = data.slices();
    let mut out = Vec::new();
    println!("{:<10} {:>10} {:>10}", "weighting", "head err", "tail err");
    for weighting in ["constant", "relative", "tail"] {
        let config = TrainConfig {
            sampler: SamplerKind::parse("within_batch")?,
            weighting: weighting.parse()?,
            epochs: 15,
            lr: 1.0,
            seed: 1,
            ..TrainConfig::default()
        };
        let model = train(&config, &data)?.model;
        let metrics = evaluate(&model, &data, &slices);
        let head_error = metrics.head.as_ref().map_or(f64::NAN, |s| s.balanced_error);
        let tail_error = metrics.tail.as_ref().map_or(f64::NAN, |s| s.balanced_error);
        println!("{weighting:<10} {head_error:>10.3} {tail_error:>10.3}");
        out.push(SchemeResult { weighting: weighting.into(), head_error, tail_error });
    }
    Ok(out)
}

fn main() -> negsample::Result<()> {
    run_example().map(|_| ())
}
