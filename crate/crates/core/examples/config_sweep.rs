// Parses a small sweep grid, runs it, and writes the result tables plus a
// manifest into a scratch directory.

use negsample::harness::{sweep, write_outputs, Grid};
use negsample::manifest::RunManifest;

const GRID: &str = "
seed = 5
[data]
num_labels = 20
imbalance_ratio = 10
noise_scale = 2.0
train_size = 2000
test_per_class = 10
slice_hi = 40
slice_lo = 5
[train]
epochs = 5
lr = 0.5
batch_size = 32
[grid]
sampler = uniform, within_batch
weighting = constant, importance
m = 4, 8
";

pub struct SweepSummary {
    pub runs: usize,
    pub failed: usize,
    pub files: Vec<String>,
    pub stale_after_write: usize,
}

pub fn run_example() -> negsample::Result<SweepSummary> {
    let grid = Grid::parse(GRID)?;
    let configs = grid.configs();
    let dir = std::env::temp_dir().join(format!("negsample-sweep-{}", std::process::id()));
    let manifest = RunManifest::start("sweep", grid.base.to_text(), grid.base.train.seed);
    let records = sweep(&configs)?;
    let files = write_outputs(&dir, &records)?;
    let manifest = manifest.finish(&dir, &files)?;
    let stale_after_write = manifest.stale_outputs(&dir)?.len();

    for r in &records {
        let overall = r.metrics.as_ref().map_or(f64::NAN, |m| m.overall.balanced_error);
        println!("config {:>2}  {:<13} {:<11} m={:<2} balanced error {overall:.3}", r.config_id, r.sampler, r.weighting, r.m);
    }
    println!("wrote {} to {}", files.join(", "), dir.display());
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    std::fs::remove_dir_all(&dir)?;
    Ok(SweepSummary { runs: records.len(), failed, files, stale_after_write })
}

fn main() -> negsample::Result<()> {
    run_example().map(|_| ())
}
