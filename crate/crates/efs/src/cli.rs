//! Command-line surface. Every command writes into one run directory and
//! leaves a `manifest.json` there.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use efs_core::aggregation::{aggregate_records, pooled_library};
use efs_core::evolution::{
    backtest_library, ledger_metrics, resume_evolution, run_evolution, EvolutionConfig, EvolutionOutput, SearchRecord,
};
use efs_core::generator::{FactorGenerator, OfflineGenerator, RemoteGenerator};
use efs_core::market::MarketData;
use efs_core::seeds::{seed_factors, FactorRecord};

use crate::config::{keys_help, GeneratorMode, RunConfig};
use crate::data::{load_csv_file, Layout, Snapshot, Values};
use crate::error::{IoError, Result};
use crate::formats::{
    read_checkpoints, read_ledger_json, read_pool, write_json, write_ledger_csv, write_ledger_json, write_merged,
    write_metrics_csv, write_metrics_json, write_pool, CheckpointWriter,
};
use crate::manifest::Manifest;
use crate::report::{
    curve_names, factor_sweep, heatmap_csv, read_curve, score_heatmap, sweep_csv, wealth_curve_csv, ReportMode,
};
use crate::transport::{Audited, HttpTransport};

#[derive(Debug, Parser)]
#[command(name = "efs", version, about = "Evolutionary factor search and sparse portfolio backtesting")]
#[command(after_long_help = keys_help(), after_help = keys_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a price CSV and write a market snapshot.
    Ingest(IngestArgs),
    /// Backtest a fixed factor library without generation.
    Backtest(BacktestArgs),
    /// Run the evolutionary search loop.
    Evolve(EvolveArgs),
    /// Merge checkpoints of independent runs into one library.
    Aggregate(AggregateArgs),
    /// Export plot-ready CSV data.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set evolution.cost_rate=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Run directory; overrides `output.dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long)]
    pub rng_seed: Option<u64>,
}

impl Common {
    pub fn resolve(&self, snapshot: Option<&Path>) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(dir) = &self.out_dir {
            overrides.push(format!("output.dir={}", toml_string(&dir.display().to_string())));
        }
        if let Some(seed) = self.rng_seed {
            overrides.push(format!("rng_seed={seed}"));
        }
        if let Some(path) = snapshot {
            overrides.push(format!("data.snapshot={}", toml_string(&path.display().to_string())));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(text: &str) -> String {
    toml::Value::String(text.into()).to_string()
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Input CSV file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "wide")]
    pub layout: Layout,
    #[arg(long, value_enum, default_value = "prices")]
    pub values: Values,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    /// Market snapshot; overrides `data.snapshot`.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Factor library (JSON array or pooled library); defaults to the seeds.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Initial pool; defaults to the seeds.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Continue from a checkpoint file instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Step of the record to resume from; defaults to the last one.
    #[arg(long, requires = "resume")]
    pub resume_step: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// Checkpoint files, one per run.
    #[arg(required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Record limit N; applied when greater than 1.
    #[arg(long, default_value_t = 0)]
    pub limit: usize,
    /// Ratio limit r in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub mode: ReportMode,
    /// Ledger files (`wealth_curve`, `score_heatmap`).
    pub ledgers: Vec<PathBuf>,
    /// Market snapshot (`factor_sweep`).
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Factor library (`factor_sweep`); defaults to the seeds.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Backtest(a) => backtest(&a),
        Command::Evolve(a) => evolve(&a),
        Command::Aggregate(a) => aggregate(&a),
        Command::Report(a) => report(&a),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.clone())
}

fn load_market(cfg: &RunConfig) -> Result<(PathBuf, MarketData)> {
    let path = cfg
        .data
        .snapshot
        .clone()
        .ok_or_else(|| IoError::Config("no snapshot given (--snapshot or data.snapshot)".into()))?;
    let data = Snapshot::read(&path)?.market(cfg.data.lookback)?;
    Ok((path, data))
}

fn load_library(path: Option<&Path>, cfg: &RunConfig) -> Result<Vec<FactorRecord>> {
    match path {
        Some(p) => read_pool(p),
        None => Ok(seed_factors(&cfg.data.seed_windows)?),
    }
}

fn write_run(dir: &Path, out: &EvolutionOutput, cfg: &RunConfig) -> Result<()> {
    write_ledger_csv(&dir.join("ledger.csv"), &out.ledger)?;
    write_ledger_json(&dir.join("ledger.json"), &out.ledger)?;
    write_pool(&dir.join("pool.json"), &out.pool)?;
    let metrics = ledger_metrics(&out.ledger, cfg.data.periods_per_year);
    write_metrics_json(&dir.join("metrics.json"), &metrics)?;
    write_metrics_csv(&dir.join("metrics.csv"), &metrics)?;
    println!(
        "{} steps, final value {:.6} (1/N {:.6}), sharpe {:.4}, max drawdown {:.4}, pool {}",
        metrics.periods,
        metrics.final_value,
        metrics.baseline_final_value,
        metrics.sharpe_ratio,
        metrics.max_drawdown,
        out.pool.len()
    );
    Ok(())
}

const RUN_OUTPUTS: [&str; 6] = ["ledger.csv", "ledger.json", "pool.json", "metrics.json", "metrics.csv", "manifest.json"];

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let cfg = a.common.resolve(None)?;
    let dir = out_dir(&cfg)?;
    let loaded = load_csv_file(&a.input, a.layout, a.values, cfg.data.lookback)?;
    let report = loaded.report.clone();
    let snap = Snapshot::new(loaded, a.values)?;
    // fail now rather than at backtest time if the table is too short
    snap.market(cfg.data.lookback)?;
    snap.write(&dir.join("snapshot.json"))?;
    Manifest::new("ingest", &cfg, &[&a.input], &["snapshot.json", "manifest.json"])?.write(&dir)?;
    println!(
        "{} assets, {} periods; dropped {} short-history, {} with gaps, {} dates",
        snap.asset_ids.len(),
        snap.period_labels.len(),
        report.short_history.len(),
        report.gaps.len(),
        report.dropped_dates.len()
    );
    for id in &report.short_history {
        println!("  short history: {id}");
    }
    for id in &report.gaps {
        println!("  gaps: {id}");
    }
    Ok(())
}

pub fn backtest(a: &BacktestArgs) -> Result<()> {
    let cfg = a.common.resolve(a.snapshot.as_deref())?;
    let (snap_path, data) = load_market(&cfg)?;
    let pool = load_library(a.library.as_deref(), &cfg)?;
    let out = backtest_library(&data, &cfg.evolution_config()?, pool)?;
    let dir = out_dir(&cfg)?;
    write_run(&dir, &out, &cfg)?;
    let mut inputs = vec![snap_path.as_path()];
    inputs.extend(a.library.as_deref());
    Manifest::new("backtest", &cfg, &inputs, &RUN_OUTPUTS)?.write(&dir)
}

/// Builds the configured generator; remote mode fails here when the API key
/// or endpoint is missing.
pub fn make_generator(cfg: &RunConfig) -> Result<Box<dyn FactorGenerator>> {
    match cfg.generator.mode {
        GeneratorMode::Offline => Ok(Box::new(OfflineGenerator::default())),
        GeneratorMode::Remote => {
            let transport = HttpTransport::from_config(&cfg.generator)?;
            let audited = Audited::new(transport, &cfg.audit_log_path(), &cfg.generator)?;
            let mut remote = RemoteGenerator::new(audited);
            remote.max_retries = cfg.generator.max_retries;
            remote.min_valid = cfg.generator.min_valid;
            Ok(Box::new(remote))
        }
    }
}

fn pick_record(records: Vec<SearchRecord>, step: Option<usize>, path: &Path) -> Result<(Vec<SearchRecord>, SearchRecord)> {
    let idx = match step {
        Some(s) => records
            .iter()
            .position(|r| r.step == s)
            .ok_or_else(|| IoError::Malformed(format!("{}: no record at step {s}", path.display())))?,
        None if records.is_empty() => return Err(IoError::Malformed(format!("{}: no records", path.display()))),
        None => records.len() - 1,
    };
    let mut kept = records;
    kept.truncate(idx + 1);
    let from = kept[idx].clone();
    Ok((kept, from))
}

pub fn evolve(a: &EvolveArgs) -> Result<()> {
    let cfg = a.common.resolve(a.snapshot.as_deref())?;
    let (snap_path, data) = load_market(&cfg)?;
    let core_cfg: EvolutionConfig = cfg.evolution_config()?;
    let mut generator = make_generator(&cfg)?;
    let dir = out_dir(&cfg)?;
    let mut inputs = vec![snap_path.clone()];

    let resume = match &a.resume {
        Some(path) => {
            inputs.push(path.clone());
            Some(pick_record(read_checkpoints(path)?, a.resume_step, path)?)
        }
        None => None,
    };
    let mut writer = CheckpointWriter::create(&dir.join("checkpoints.jsonl"))?;
    let mut sink_error = None;
    let out = match resume {
        Some((earlier, from)) => {
            for r in &earlier {
                writer.append(r)?;
            }
            let mut sink = |r: &SearchRecord| {
                if let Err(e) = writer.append(r) {
                    sink_error.get_or_insert(e);
                }
            };
            resume_evolution(&data, &core_cfg, &from, generator.as_mut(), &mut sink)?
        }
        None => {
            let pool = load_library(a.library.as_deref(), &cfg)?;
            if let Some(p) = &a.library {
                inputs.push(p.clone());
            }
            let mut sink = |r: &SearchRecord| {
                if let Err(e) = writer.append(r) {
                    sink_error.get_or_insert(e);
                }
            };
            run_evolution(&data, &core_cfg, pool, generator.as_mut(), &mut sink)?
        }
    };
    if let Some(e) = sink_error {
        return Err(e);
    }
    write_run(&dir, &out, &cfg)?;
    let failed = out.records.iter().filter(|r| !r.generation.success).count();
    println!("{} searches, {} without accepted candidates", out.records.len(), failed);
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut outputs = RUN_OUTPUTS.to_vec();
    outputs.push("checkpoints.jsonl");
    Manifest::new("evolve", &cfg, &input_refs, &outputs)?.write(&dir)
}

pub fn aggregate(a: &AggregateArgs) -> Result<()> {
    let cfg = a.common.resolve(None)?;
    let runs: Vec<Vec<SearchRecord>> = a.checkpoints.iter().map(|p| read_checkpoints(p)).collect::<Result<_>>()?;
    let merged = aggregate_records(&runs, a.limit, a.ratio)?;
    let library = pooled_library(&merged);
    let dir = out_dir(&cfg)?;
    write_merged(&dir.join("merged.jsonl"), &merged)?;
    write_json(&dir.join("library.json"), &library)?;
    for alias in &library.aliases {
        eprintln!("alias: `{}` duplicates `{}`", alias.dropped, alias.kept);
    }
    println!("{} aligned records, {} pooled factors", merged.len(), library.factors.len());
    let inputs: Vec<&Path> = a.checkpoints.iter().map(PathBuf::as_path).collect();
    Manifest::new("aggregate", &cfg, &inputs, &["merged.jsonl", "library.json", "manifest.json"])?.write(&dir)
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let cfg = a.common.resolve(a.snapshot.as_deref())?;
    let dir = out_dir(&cfg)?;
    let mut inputs: Vec<PathBuf> = a.ledgers.clone();
    let (file, text) = match a.mode {
        ReportMode::WealthCurve => {
            let paths: Vec<&Path> = a.ledgers.iter().map(PathBuf::as_path).collect();
            let names = curve_names(&paths);
            let curves = paths.iter().zip(&names).map(|(p, n)| read_curve(p, n)).collect::<Result<Vec<_>>>()?;
            ("wealth_curve.csv", wealth_curve_csv(&curves)?)
        }
        ReportMode::ScoreHeatmap => {
            let [path] = a.ledgers.as_slice() else {
                return Err(IoError::Config("score_heatmap takes exactly one ledger".into()));
            };
            if path.extension().is_some_and(|e| e == "csv") {
                return Err(IoError::Malformed("score_heatmap needs the JSON ledger (factor columns)".into()));
            }
            ("score_heatmap.csv", heatmap_csv(&score_heatmap(&read_ledger_json(path)?))?)
        }
        ReportMode::FactorSweep => {
            let (snap_path, data) = load_market(&cfg)?;
            inputs.push(snap_path);
            inputs.extend(a.library.clone());
            let pool = load_library(a.library.as_deref(), &cfg)?;
            ("factor_sweep.csv", sweep_csv(&factor_sweep(&data, &cfg.evolution_config()?, &pool)?)?)
        }
    };
    std::fs::write(dir.join(file), text)?;
    println!("wrote {}", dir.join(file).display());
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    Manifest::new("report", &cfg, &input_refs, &[file, "manifest.json"])?.write(&dir)
}
