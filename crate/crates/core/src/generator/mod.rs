//! Candidate factor generation.
//!
//! Two engines satisfy [`FactorGenerator`]: the seeded offline
//! mutation/crossover engine and the retrying remote driver, which talks to a
//! chat service through a [`ChatTransport`] supplied by the caller.

mod offline;
mod prompt;
mod remote;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{check_expr, evaluate, ExprLimits};
use crate::market::WindowRef;
use crate::seeds::{parse_factor_name, structural_key, FactorRecord};

pub use offline::OfflineGenerator;
pub use prompt::{build_prompt, leakage_scan, Prompt, SYSTEM_PROMPT};
pub use remote::{parse_response, ChatTransport, RemoteGenerator, TransportError};

/// Standalone top-m backtest statistics of one factor over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerfSummary {
    pub mean_return: f64,
    pub std_return: f64,
    pub sharpe_ratio: f64,
    pub max_drawdown: f64,
    pub final_value: f64,
}

/// Ranking quality of one factor over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QualitySummary {
    pub mean_rankic: f64,
    pub std_rankic: f64,
    #[serde(rename = "mean_recall@20")]
    pub mean_recall: f64,
    #[serde(rename = "std_recall@20")]
    pub std_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub record: FactorRecord,
    pub perf: PerfSummary,
    pub quality: QualitySummary,
}

/// Everything a generator may see. Only names, expressions and metric
/// numbers; no asset identifiers, dates or prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub top_factors: Vec<FactorSummary>,
    pub library_factors: Vec<FactorRecord>,
    /// Requested number of candidates.
    pub count: usize,
    pub rng_seed: u64,
    /// Step stamped on produced records.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AttemptOutcome {
    TransportError { message: String },
    Parsed { accepted: usize, rejected: Vec<Rejected> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: usize,
    #[serde(flatten)]
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub candidates: Vec<FactorRecord>,
    pub attempts: usize,
    pub success: bool,
    pub transport_log: Vec<AttemptLog>,
}

impl GenerationResult {
    pub fn failed(attempts: usize, transport_log: Vec<AttemptLog>) -> Self {
        Self { candidates: Vec::new(), attempts, success: false, transport_log }
    }
}

/// The generation contract shared by the offline and remote engines.
pub trait FactorGenerator {
    /// `pool` is the current factor pool; candidates must not collide with it
    /// by name or structure.
    fn generate(&mut self, req: &GenerationRequest, pool: &[FactorRecord], validator: &Validator) -> GenerationResult;
}

/// A generator that never produces anything; useful for static backtests.
#[derive(Debug, Clone, Copy, Default)]
pub struct Disabled;

impl FactorGenerator for Disabled {
    fn generate(&mut self, _: &GenerationRequest, _: &[FactorRecord], _: &Validator) -> GenerationResult {
        GenerationResult::failed(0, Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    BadName,
    NameCollision,
    Limits,
    Duplicate,
    DegenerateCrossSection,
}

impl Rejection {
    pub fn reason(self) -> &'static str {
        match self {
            Rejection::BadName => "bad name",
            Rejection::NameCollision => "name collision",
            Rejection::Limits => "expression limits",
            Rejection::Duplicate => "duplicate",
            Rejection::DegenerateCrossSection => "degenerate cross-section",
        }
    }
}

impl core::fmt::Display for Rejection {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.reason())
    }
}

pub const SMOKE_WINDOWS: usize = 50;
const SMOKE_SEED: u64 = 0x005e_ed0f_fac7;

/// Fixed synthetic cross-section used to reject degenerate candidates.
#[derive(Debug, Clone)]
pub struct Validator {
    limits: ExprLimits,
    lookback: usize,
    prices: Vec<Vec<f64>>,
    returns: Vec<Vec<f64>>,
}

impl Validator {
    pub fn new(limits: ExprLimits, lookback: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(SMOKE_SEED);
        let mut prices = Vec::with_capacity(SMOKE_WINDOWS);
        let mut returns = Vec::with_capacity(SMOKE_WINDOWS);
        for _ in 0..SMOKE_WINDOWS {
            let drift = rng.random_range(-0.01..0.01);
            let vol = rng.random_range(0.005..0.04);
            let mut path = Vec::with_capacity(lookback + 1);
            let mut p = rng.random_range(50.0..150.0);
            path.push(p);
            for _ in 0..lookback {
                p *= 1.0 + drift + vol * rng.random_range(-1.0..1.0);
                path.push(p);
            }
            returns.push(path.windows(2).map(|w| w[1] / w[0]).collect());
            prices.push(path[1..].to_vec());
        }
        Self { limits, lookback, prices, returns }
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn limits(&self) -> ExprLimits {
        self.limits
    }

    /// Scores of `expr` on the smoke battery.
    pub fn smoke_scores(&self, expr: &crate::dsl::FactorExpr) -> Vec<f64> {
        self.prices
            .iter()
            .zip(&self.returns)
            .map(|(p, r)| evaluate(expr, WindowRef { prices: p, returns: r }))
            .collect()
    }

    /// Accepts a generated record iff its name is well formed and free, its
    /// expression is within limits, structurally new and non-degenerate.
    pub fn validate(&self, record: &FactorRecord, taken: &PoolIndex) -> Result<(), Rejection> {
        if record.is_seed() || record.validate().is_err() {
            return Err(Rejection::BadName);
        }
        match parse_factor_name(&record.name) {
            Some(n) if n.version.is_some() => {}
            _ => return Err(Rejection::BadName),
        }
        if taken.names.contains(&record.name) {
            return Err(Rejection::NameCollision);
        }
        if check_expr(&record.expr, self.limits, self.lookback).is_err() {
            return Err(Rejection::Limits);
        }
        if taken.keys.contains(&structural_key(&record.expr)) {
            return Err(Rejection::Duplicate);
        }
        let scores = self.smoke_scores(&record.expr);
        let first = scores[0];
        if scores.iter().any(|x| !x.is_finite()) || scores.iter().all(|&x| x == first) {
            return Err(Rejection::DegenerateCrossSection);
        }
        Ok(())
    }
}

/// Names and structural keys already present, updated as candidates are accepted.
#[derive(Debug, Clone, Default)]
pub struct PoolIndex {
    pub names: BTreeSet<String>,
    pub keys: BTreeSet<String>,
}

impl PoolIndex {
    pub fn new(pool: &[FactorRecord]) -> Self {
        let mut index = Self::default();
        for r in pool {
            index.insert(r);
        }
        index
    }

    pub fn insert(&mut self, record: &FactorRecord) {
        self.names.insert(record.name.clone());
        self.keys.insert(structural_key(&record.expr));
    }
}

/// Default minimum number of valid candidates: `ceil(count / 2)`.
pub fn default_min_valid(count: usize) -> usize {
    count.div_ceil(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::seeds::{all_seed_factors, Origin};
    use alloc::vec;

    fn record(name: &str, expr: &str) -> FactorRecord {
        FactorRecord::generated(name, parse(expr).unwrap(), Origin::Mutated, vec![], 0).unwrap()
    }

    #[test]
    fn validation_outcomes() {
        let v = Validator::new(ExprLimits::default(), 30);
        let pool = all_seed_factors();
        let idx = PoolIndex::new(&pool);
        assert_eq!(v.validate(&record("flat_7_v1", "1.0"), &idx), Err(Rejection::DegenerateCrossSection));
        assert_eq!(
            v.validate(&record("momentum_7_v2", "sub(div(last(prices), lag(prices, 7)), 1.0)"), &idx),
            Err(Rejection::Duplicate)
        );
        assert_eq!(
            v.validate(&record("momentum_7_v2", "sub(div(last(prices), ts_mean(prices, 7)), 1.0)"), &idx),
            Ok(())
        );
        let seed_named = FactorRecord::seed("momentum_7", parse("ts_mean(returns, 3)").unwrap());
        assert_eq!(v.validate(&seed_named, &idx), Err(Rejection::BadName));
    }

    #[test]
    fn name_collisions_are_rejected() {
        let v = Validator::new(ExprLimits::default(), 30);
        let mut pool = all_seed_factors();
        pool.push(record("momentum_7_v2", "ts_mean(returns, 3)"));
        let idx = PoolIndex::new(&pool);
        assert_eq!(
            v.validate(&record("momentum_7_v2", "ts_mean(returns, 14)"), &idx),
            Err(Rejection::NameCollision)
        );
    }

    #[test]
    fn window_beyond_lookback_rejected() {
        let v = Validator::new(ExprLimits::default(), 14);
        let idx = PoolIndex::default();
        assert_eq!(v.validate(&record("ma_21_v2", "ts_mean(prices, 21)"), &idx), Err(Rejection::Limits));
    }

    #[test]
    fn smoke_battery_is_deterministic() {
        let a = Validator::new(ExprLimits::default(), 30);
        let b = Validator::new(ExprLimits::default(), 30);
        let e = parse("ts_std(returns, 7)").unwrap();
        assert_eq!(a.smoke_scores(&e), b.smoke_scores(&e));
    }

    #[test]
    fn min_valid_rounds_up() {
        assert_eq!(default_min_valid(5), 3);
        assert_eq!(default_min_valid(4), 2);
        assert_eq!(default_min_valid(1), 1);
    }
}
