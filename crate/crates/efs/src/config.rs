//! Run configuration: a TOML file with four sections, overridable from the
//! command line with `--set section.key=value`.

use std::path::{Path, PathBuf};

use efs_core::dsl::{ExprLimits, LEGAL_WINDOWS};
use efs_core::evolution::{EvolutionConfig, QualityMetric};
use efs_core::portfolio::{CostModel, Weighting};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IoError, Result};

/// Environment variable holding the API key for remote generation.
pub const API_KEY_ENV: &str = "EFS_API_KEY";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rng_seed: u64,
    pub data: DataConfig,
    pub evolution: SearchConfig,
    pub generator: GeneratorConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub snapshot: Option<PathBuf>,
    pub lookback: usize,
    pub seed_windows: Vec<usize>,
    /// Scales the reported Sharpe ratio when set.
    pub periods_per_year: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    Equal,
    PositiveScore,
    Temperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub warmup_steps: usize,
    pub search_interval: usize,
    pub portfolio_size: usize,
    pub top_factors: usize,
    pub candidates: usize,
    pub prompt_factors: usize,
    pub max_pool_size: usize,
    pub keep_top_n: usize,
    pub drop_threshold: f64,
    pub weighting: WeightingScheme,
    pub temperature: f64,
    pub cost_rate: f64,
    pub drift_turnover: bool,
    pub quality_metric: QualityMetric,
    pub max_depth: usize,
    pub max_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GeneratorMode {
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub min_valid: Option<usize>,
    pub timeout_secs: u64,
    /// Relative paths resolve against the output directory.
    pub audit_log: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { snapshot: None, lookback: 30, seed_windows: LEGAL_WINDOWS.to_vec(), periods_per_year: None }
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        let core = EvolutionConfig::default();
        Self {
            warmup_steps: core.warmup_steps,
            search_interval: core.search_interval,
            portfolio_size: core.portfolio_size,
            top_factors: core.top_factors,
            candidates: core.candidates,
            prompt_factors: core.prompt_factors,
            max_pool_size: core.max_pool_size,
            keep_top_n: core.keep_top_n,
            drop_threshold: core.drop_threshold,
            weighting: WeightingScheme::Equal,
            temperature: 1.0,
            cost_rate: core.cost.rate,
            drift_turnover: core.drift_turnover,
            quality_metric: core.quality_metric,
            max_depth: core.limits.max_depth,
            max_nodes: core.limits.max_nodes,
        }
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            mode: GeneratorMode::Offline,
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.7,
            max_retries: 3,
            min_valid: None,
            timeout_secs: 120,
            audit_log: PathBuf::from("audit.jsonl"),
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/latest") }
    }
}

/// One documented key: dotted path, default as written in TOML, rationale
/// tag and a short description.
pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub tag: &'static str,
    pub about: &'static str,
}

/// Rationale tags:
/// `source` values stated by the method's original description,
/// `ablation` values picked from its ablation results,
/// `convention` common practice where the source is silent,
/// `choice` an implementation decision, `plumbing` operational settings.
pub const KEY_DOCS: &[KeyDoc] = &[
    KeyDoc { key: "rng_seed", default: "0", tag: "plumbing", about: "single source of randomness" },
    KeyDoc { key: "data.snapshot", default: "unset", tag: "plumbing", about: "market snapshot written by `ingest`" },
    KeyDoc { key: "data.lookback", default: "30", tag: "source", about: "window length T fed to every factor" },
    KeyDoc { key: "data.seed_windows", default: "[3, 7, 14, 21]", tag: "source", about: "windows the seed library is instantiated for" },
    KeyDoc { key: "data.periods_per_year", default: "unset", tag: "convention", about: "annualizes the reported Sharpe ratio when set" },
    KeyDoc { key: "evolution.warmup_steps", default: "60", tag: "source", about: "steps held at 1/N before trading on factors" },
    KeyDoc { key: "evolution.search_interval", default: "5", tag: "source", about: "steps between searches (s)" },
    KeyDoc { key: "evolution.portfolio_size", default: "10", tag: "source", about: "assets held (m)" },
    KeyDoc { key: "evolution.top_factors", default: "5", tag: "ablation", about: "factors combined into the score (1..=10)" },
    KeyDoc { key: "evolution.candidates", default: "5", tag: "ablation", about: "candidates requested per search (M)" },
    KeyDoc { key: "evolution.prompt_factors", default: "5", tag: "choice", about: "top factors reported to the generator" },
    KeyDoc { key: "evolution.max_pool_size", default: "80", tag: "choice", about: "pool size that triggers pruning" },
    KeyDoc { key: "evolution.keep_top_n", default: "20", tag: "choice", about: "best generated factors kept when pruning" },
    KeyDoc { key: "evolution.drop_threshold", default: "0.0", tag: "choice", about: "margin over the 1/N final value in the benchmark gate" },
    KeyDoc { key: "evolution.weighting", default: "\"equal\"", tag: "source", about: "equal | positive_score | temperature" },
    KeyDoc { key: "evolution.temperature", default: "1.0", tag: "source", about: "softmax temperature for `temperature` weighting" },
    KeyDoc { key: "evolution.cost_rate", default: "0.0", tag: "source", about: "proportional cost per unit of one-way turnover" },
    KeyDoc { key: "evolution.drift_turnover", default: "true", tag: "convention", about: "measure turnover against drifted weights" },
    KeyDoc { key: "evolution.quality_metric", default: "\"final_value\"", tag: "source", about: "final_value | mean_rankic" },
    KeyDoc { key: "evolution.max_depth", default: "12", tag: "choice", about: "deepest accepted expression tree" },
    KeyDoc { key: "evolution.max_nodes", default: "64", tag: "choice", about: "largest accepted expression tree" },
    KeyDoc { key: "generator.mode", default: "\"offline\"", tag: "plumbing", about: "offline | remote" },
    KeyDoc { key: "generator.endpoint", default: "\"\"", tag: "plumbing", about: "chat-completions URL (remote mode)" },
    KeyDoc { key: "generator.model", default: "\"\"", tag: "plumbing", about: "model name sent to the endpoint" },
    KeyDoc { key: "generator.temperature", default: "0.7", tag: "plumbing", about: "sampling temperature sent to the endpoint" },
    KeyDoc { key: "generator.max_retries", default: "3", tag: "choice", about: "attempts per search" },
    KeyDoc { key: "generator.min_valid", default: "unset", tag: "choice", about: "valid candidates that end the retries; unset means ceil(M/2)" },
    KeyDoc { key: "generator.timeout_secs", default: "120", tag: "plumbing", about: "HTTP timeout per request" },
    KeyDoc { key: "generator.audit_log", default: "\"audit.jsonl\"", tag: "plumbing", about: "request/response log, relative to output.dir" },
    KeyDoc { key: "output.dir", default: "\"runs/latest\"", tag: "plumbing", about: "run directory for every artifact" },
];

/// Text appended to `--help`.
pub fn keys_help() -> String {
    let width = KEY_DOCS.iter().map(|d| d.key.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (TOML; override with --set key=value):\n");
    for d in KEY_DOCS {
        out.push_str(&format!("  {:width$}  default {:<16} [{}] {}\n", d.key, d.default, d.tag, d.about));
    }
    out
}

fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Sets `section.key` (or a top-level key) in a raw table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| IoError::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for section in sections {
        let entry = node.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| IoError::Config(format!("`{section}` is not a section")))?;
    }
    node.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads an optional file and applies overrides; unknown keys are errors.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| IoError::Open(p.display().to_string(), e))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| IoError::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| IoError::Config(e.to_string()))?;
        cfg.evolution_config()?.validate(cfg.data.lookback)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration's TOML text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn evolution_config(&self) -> Result<EvolutionConfig> {
        let e = &self.evolution;
        let weighting = match e.weighting {
            WeightingScheme::Equal => Weighting::Equal,
            WeightingScheme::PositiveScore => Weighting::PositiveScore,
            WeightingScheme::Temperature => Weighting::Temperature { tau: e.temperature },
        };
        Ok(EvolutionConfig {
            warmup_steps: e.warmup_steps,
            search_interval: e.search_interval,
            portfolio_size: e.portfolio_size,
            top_factors: e.top_factors,
            candidates: e.candidates,
            prompt_factors: e.prompt_factors,
            max_pool_size: e.max_pool_size,
            keep_top_n: e.keep_top_n,
            drop_threshold: e.drop_threshold,
            weighting,
            cost: CostModel::new(e.cost_rate)?,
            drift_turnover: e.drift_turnover,
            quality_metric: e.quality_metric,
            rng_seed: self.rng_seed,
            limits: ExprLimits { max_depth: e.max_depth, max_nodes: e.max_nodes },
        })
    }

    pub fn audit_log_path(&self) -> PathBuf {
        self.output.dir.join(&self.generator.audit_log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
        match value {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    flatten(&key, v, out);
                }
            }
            _ => out.push(prefix.to_owned()),
        }
    }

    #[test]
    fn every_key_is_documented_with_its_default() {
        let defaults = toml::Value::try_from(RunConfig::default()).unwrap();
        let mut keys = Vec::new();
        flatten("", &defaults, &mut keys);
        let mut documented: Vec<&str> = KEY_DOCS.iter().map(|d| d.key).collect();
        // optional keys are absent from the serialized defaults
        for k in ["data.snapshot", "data.periods_per_year", "generator.min_valid"] {
            keys.push(k.into());
        }
        keys.sort();
        documented.sort();
        assert_eq!(keys, documented);
        for d in KEY_DOCS.iter().filter(|d| d.default != "unset") {
            let mut table = toml::Table::new();
            apply_override(&mut table, &format!("{}={}", d.key, d.default)).unwrap();
            let parsed: RunConfig = toml::Value::Table(table).try_into().unwrap();
            assert_eq!(parsed, RunConfig::default(), "{}", d.key);
        }
        let help = keys_help();
        assert!(KEY_DOCS.iter().all(|d| help.contains(d.key) && help.contains(&format!("[{}]", d.tag))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::load(None, &["evolution.portfolio_sise=3".into()]).is_err());
        assert!(RunConfig::load(None, &["colour=3".into()]).is_err());
        assert!(RunConfig::load(None, &["evolution.top_factors=11".into()]).is_err());
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "rng_seed = 4\n[evolution]\nportfolio_size = 7\ncost_rate = 0.001\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &["evolution.portfolio_size=3".into(), "output.dir=out/x".into()]).unwrap();
        assert_eq!(cfg.rng_seed, 4);
        assert_eq!(cfg.evolution.portfolio_size, 3);
        assert_eq!(cfg.evolution.cost_rate, 0.001);
        assert_eq!(cfg.output.dir, PathBuf::from("out/x"));
        let core = cfg.evolution_config().unwrap();
        assert_eq!(core.rng_seed, 4);
        assert_eq!(core.cost.rate, 0.001);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.rng_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
