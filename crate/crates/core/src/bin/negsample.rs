//! Command-line front end: `verify`, `train`, `sweep` and `catalog`.
//!
//! Exit codes: 0 success, 1 a check or run failed, 2 usage or config error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use negsample::harness::{self, sweep::write_outputs, ExperimentConfig, Grid, RunRecord};
use negsample::implicit::{catalog, QConvention};
use negsample::manifest::RunManifest;
use negsample::verify::{self, Suite, VerifyOptions};
use negsample::Error;

#[derive(Parser)]
#[command(name = "negsample", version, about = "Negative sampling: checks, training runs and the implicit-loss catalog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check the closed forms against enumeration and Monte Carlo.
    Verify {
        #[arg(long, default_value = "all", value_parser = parse_suite)]
        suite: Suite,
        /// Monte-Carlo trials per estimate.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the number of random instances per check.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Report file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Train every config of a grid on one shared dataset.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Print the implicit loss of every (sampler, weighting) pair.
    Catalog {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Config and usage problems exit 2, everything else 1.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownName { .. } | Error::InvalidArgument(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { suite, trials, seed, instances, format, out } => cmd_verify(suite, trials, seed, instances, format, out.as_deref()),
        Command::Train { config, seed, out, format } => cmd_train(config.as_deref(), seed, &out, format),
        Command::Sweep { grid, seed, out, format } => cmd_sweep(&grid, seed, &out, format),
        Command::Catalog { format } => cmd_catalog(format),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn cmd_verify(suite: Suite, trials: usize, seed: u64, instances: Option<usize>, format: Format, out: Option<&Path>) -> negsample::Result<bool> {
    if trials < 2 {
        return Err(Error::InvalidArgument("--trials must be at least 2".into()));
    }
    let opts = VerifyOptions { trials, seed, instances, ..VerifyOptions::default() };
    let rows = verify::run(suite, &opts)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        Format::Csv => verify::write_csv(&rows, &mut sink)?,
        Format::Json => {
            verify::write_json(&rows, &mut sink)?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    eprintln!("{suite}: {} checks, {failed} failed", rows.len());
    Ok(failed == 0)
}

fn print_records(records: &[RunRecord], format: Format) -> negsample::Result<()> {
    let mut out = std::io::stdout().lock();
    match format {
        Format::Csv => harness::sweep::write_metrics_csv(records, &mut out)?,
        Format::Json => {
            harness::sweep::write_summary_json(records, &mut out)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn cmd_train(config: Option<&Path>, seed: Option<u64>, out: &Path, format: Format) -> negsample::Result<bool> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    let manifest = RunManifest::start("train", cfg.to_text(), cfg.train.seed);
    let records = harness::sweep(std::slice::from_ref(&cfg))?;
    let files = write_outputs(out, &records)?;
    manifest.finish(out, &files)?;
    print_records(&records, format)?;
    if let Some(e) = &records[0].error {
        eprintln!("run failed: {e}");
        return Ok(false);
    }
    Ok(true)
}

fn cmd_sweep(grid: &Path, seed: Option<u64>, out: &Path, format: Format) -> negsample::Result<bool> {
    let mut grid = Grid::from_file(grid)?;
    if let Some(s) = seed {
        grid.base.set_seed(s);
    }
    grid.base.validate()?;
    let configs = grid.configs();
    let text = configs.iter().enumerate().map(|(i, c)| format!("# config {i}\n{}", c.to_text())).collect::<Vec<_>>().join("\n");
    let manifest = RunManifest::start("sweep", text, grid.base.train.seed);
    let records = harness::sweep(&configs)?;
    let files = write_outputs(out, &records)?;
    manifest.finish(out, &files)?;
    print_records(&records, format)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", records.len());
    }
    Ok(failed == 0)
}

#[derive(Serialize)]
struct CatalogLine {
    family: &'static str,
    sampler: &'static str,
    weighting: &'static str,
    rho_exclusive: &'static str,
    rho_inclusive: &'static str,
    effect: &'static str,
    implicit_loss: &'static str,
}

fn cmd_catalog(format: Format) -> negsample::Result<bool> {
    let lines: Vec<CatalogLine> = catalog()
        .into_iter()
        .map(|r| {
            CatalogLine {
                family: r.family.name(),
                sampler: r.sampler.name(),
                weighting: r.weight.name(),
                rho_exclusive: r.rho_pattern(QConvention::Exclusive),
                rho_inclusive: r.rho_pattern(QConvention::Inclusive),
                effect: r.effect.name(),
                implicit_loss: r.comment,
            }
        })
        .collect();
    let mut out = std::io::stdout().lock();
    match format {
        Format::Csv => {
            writeln!(out, "family,sampler,weighting,rho_exclusive,rho_inclusive,effect,implicit_loss")?;
            for l in &lines {
                writeln!(out, "{},{},{},\"{}\",\"{}\",{},{}", l.family, l.sampler, l.weighting, l.rho_exclusive, l.rho_inclusive, l.effect, l.implicit_loss)?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &lines)?;
            writeln!(out)?;
        }
    }
    Ok(true)
}
