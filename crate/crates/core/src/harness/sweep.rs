//! Runs many configs on one shared dataset and writes the result tables.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::data::{generate_with, SyntheticDataset};
use super::metrics::{evaluate, SlicedMetrics};
use super::train::{train, EpochTrace};

/// Outcome of one config in a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config_id: usize,
    pub sampler: String,
    pub weighting: String,
    pub m: usize,
    pub loss: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<SlicedMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Vec<EpochTrace>,
}

impl RunRecord {
    fn header(config_id: usize, c: &ExperimentConfig) -> Self {
        Self {
            config_id,
            sampler: c.train.sampler.name().to_string(),
            weighting: c.train.weighting.to_string(),
            m: c.train.m,
            loss: c.train.loss.to_string(),
            seed: c.train.seed,
            metrics: None,
            final_train_loss: None,
            error: None,
            trace: Vec::new(),
        }
    }
}

/// Trains and evaluates one config on an existing dataset. Failures are
/// recorded in the returned record.
pub fn run_one(config_id: usize, config: &ExperimentConfig, data: &SyntheticDataset) -> RunRecord {
    let mut rec = RunRecord::header(config_id, config);
    match train(&config.train, data) {
        Ok(out) => {
            rec.metrics = Some(evaluate(&out.model, data, &data.slices()));
            rec.final_train_loss = out.trace.last().map(|t| t.train_loss);
            rec.trace = out.trace;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Runs every config in parallel; records come back in config order.
/// All configs must describe the same dataset.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<RunRecord>> {
    let first = configs.first().ok_or_else(|| Error::Config("empty sweep".into()))?;
    if let Some(i) = configs.iter().position(|c| c.data != first.data) {
        return Err(Error::Config(format!("config {i} uses a different dataset than config 0")));
    }
    let data = generate_with(&first.data)?;
    Ok(sweep_on(configs, &data))
}

pub fn sweep_on(configs: &[ExperimentConfig], data: &SyntheticDataset) -> Vec<RunRecord> {
    configs.par_iter().enumerate().map(|(i, c)| run_one(i, c, data)).collect()
}

pub const METRICS_HEADER: &str = "config_id,sampler,weighting,m,slice,balanced_error,recall@1,recall@5";

/// One row per (run, slice); failed runs contribute no rows.
pub fn write_metrics_csv<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        if let Some(m) = &r.metrics {
            for (slice, s) in m.rows() {
                writeln!(out, "{},{},{},{},{},{},{},{}", r.config_id, r.sampler, r.weighting, r.m, slice, s.balanced_error, s.recall_at_1, s.recall_at_5)?;
            }
        }
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &[EpochTrace], mut out: W) -> Result<()> {
    writeln!(out, "epoch,train_loss")?;
    for t in trace {
        writeln!(out, "{},{}", t.epoch, t.train_loss)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    runs: &'a [RunRecord],
    failed: usize,
}

pub fn write_summary_json<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    serde_json::to_writer_pretty(out, &Summary { runs: records, failed })?;
    Ok(())
}

/// Writes `metrics.csv`, `summary.json` and, for a single run, `trace.csv`.
/// Returns the file names written.
pub fn write_outputs(dir: &Path, records: &[RunRecord]) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    write_metrics_csv(records, std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.csv"))?))?;
    written.push("metrics.csv".to_string());
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("summary.json"))?);
        write_summary_json(records, &mut f)?;
        writeln!(f)?;
    }
    written.push("summary.json".to_string());
    if let [single] = records {
        write_trace_csv(&single.trace, std::io::BufWriter::new(std::fs::File::create(dir.join("trace.csv"))?))?;
        written.push("trace.csv".to_string());
    }
    Ok(written)
}
