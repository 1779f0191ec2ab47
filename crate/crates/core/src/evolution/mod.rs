//! The rolling search-and-backtest loop.
//!
//! Decision step `j` trades on information up to price step `j` and earns the
//! returns of period `j` (step `j` to `j + 1`). Steps before the warm-up end
//! hold the 1/N portfolio. From then on every `search_interval` steps the pool
//! is pruned, the generator is asked for candidates and those that pass the
//! benchmark gate join the pool; every step the best factors by the quality
//! metric are combined into a composite score that picks the top-m assets.

mod ledger;
mod pool;
mod tracker;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsl::{normalize_values, ExprLimits};
use crate::error::{Error, Result};
use crate::generator::{
    build_prompt, leakage_scan, FactorGenerator, FactorSummary, GenerationRequest, PerfSummary, QualitySummary,
    Validator,
};
use crate::market::MarketData;
use crate::metrics::{recall_precision_at_n, spearman_rank_corr};
use crate::portfolio::{
    aggregate_scores, drift_weights, fallback_market_return, select_top_m, step_return, CostModel, PortfolioWeights,
    Weighting,
};
use crate::seeds::{structural_key, FactorRecord};

pub use ledger::{ledger_metrics, BacktestLedger, FactorUse, Holding, LedgerMetrics, LedgerRow, Phase};
pub use pool::{benchmark_gate, clean_factor_pool, filter_factor_versions, median, GateInputs, VersionEntry};
pub use tracker::{
    baseline_final_value, summarize, tracker_window, PerfTracker, StepStat, WindowSummary, RECALL_AT,
    TRACKER_HORIZON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityMetric {
    #[default]
    FinalValue,
    MeanRankic,
}

impl QualityMetric {
    pub fn of(self, perf: &PerfSummary, quality: &QualitySummary) -> f64 {
        match self {
            QualityMetric::FinalValue => perf.final_value,
            QualityMetric::MeanRankic => quality.mean_rankic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Decision steps before this one hold the 1/N portfolio.
    pub warmup_steps: usize,
    pub search_interval: usize,
    /// Portfolio cardinality `m`.
    pub portfolio_size: usize,
    /// Factors combined into the composite score.
    pub top_factors: usize,
    /// Candidates requested per search.
    pub candidates: usize,
    /// Rows of the performance tables shown to the generator.
    pub prompt_factors: usize,
    pub max_pool_size: usize,
    pub keep_top_n: usize,
    pub drop_threshold: f64,
    pub weighting: Weighting,
    pub cost: CostModel,
    /// Drift the previous weights by realized returns before measuring turnover.
    pub drift_turnover: bool,
    pub quality_metric: QualityMetric,
    pub rng_seed: u64,
    pub limits: ExprLimits,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            warmup_steps: 60,
            search_interval: 5,
            portfolio_size: 10,
            top_factors: 5,
            candidates: 5,
            prompt_factors: 5,
            max_pool_size: 80,
            keep_top_n: 20,
            drop_threshold: 0.0,
            weighting: Weighting::Equal,
            cost: CostModel::FREE,
            drift_turnover: true,
            quality_metric: QualityMetric::FinalValue,
            rng_seed: 0,
            limits: ExprLimits::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self, lookback: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.warmup_steps < lookback {
            return fail(format!("warmup_steps {} is below the lookback {lookback}", self.warmup_steps));
        }
        if self.search_interval == 0 {
            return fail("search_interval must be at least 1".into());
        }
        if self.portfolio_size == 0 {
            return fail("portfolio_size must be at least 1".into());
        }
        if !(1..=10).contains(&self.top_factors) {
            return fail(format!("top_factors {} outside 1..=10", self.top_factors));
        }
        if self.keep_top_n == 0 || self.keep_top_n > self.max_pool_size {
            return fail(format!(
                "need max_pool_size ({}) >= keep_top_n ({}) >= 1",
                self.max_pool_size, self.keep_top_n
            ));
        }
        if !self.drop_threshold.is_finite() {
            return fail("drop_threshold must be finite".into());
        }
        if let Weighting::Temperature { tau } = self.weighting {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidTemperature(tau));
            }
        }
        CostModel::new(self.cost.rate)?;
        Ok(())
    }
}

/// Portfolio state needed to continue a run from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeState {
    pub next_step: usize,
    pub portfolio_value: f64,
    pub baseline_value: f64,
    /// Weights held over the last completed period, before drift.
    pub holdings: Option<PortfolioWeights>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationEvent {
    pub attempts: usize,
    pub success: bool,
    pub proposed: Vec<String>,
    pub admitted: Vec<String>,
    pub gated_out: Vec<String>,
    pub pruned: Vec<String>,
    /// Forbidden strings found in the prompt; generation is skipped when non-empty.
    pub leakage: Vec<String>,
}

/// Self-contained checkpoint written after each search step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub step: usize,
    pub pool: Vec<FactorRecord>,
    /// Factor name to trailing final value.
    pub performance: BTreeMap<String, f64>,
    /// Factor name to trailing mean RankIC.
    pub quality: BTreeMap<String, f64>,
    pub generation: GenerationEvent,
    pub resume: ResumeState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionOutput {
    pub pool: Vec<FactorRecord>,
    pub ledger: BacktestLedger,
    pub records: Vec<SearchRecord>,
}

/// Mixes the run seed with a step index (splitmix64 finalizer).
pub fn step_seed(rng_seed: u64, step: usize) -> u64 {
    let mut z = rng_seed ^ (step as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct Member {
    record: FactorRecord,
    key: String,
}

impl Member {
    fn new(record: FactorRecord) -> Self {
        let key = structural_key(&record.expr);
        Self { record, key }
    }
}

fn check_pool(pool: &[FactorRecord]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut names: Vec<&str> = pool.iter().map(|r| r.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Schema(format!("duplicate factor name `{}`", w[0])));
    }
    Ok(())
}

/// Pre-populates a tracker with the trailing statistics of every pool factor
/// available at the end of the warm-up.
pub fn warmup<'d>(data: &'d MarketData, pool: &[FactorRecord], cfg: &EvolutionConfig) -> Result<PerfTracker<'d>> {
    cfg.validate(data.lookback())?;
    check_pool(pool)?;
    if data.n_steps() < cfg.warmup_steps + 2 {
        return Err(Error::DatasetTooShort { needed: cfg.warmup_steps + 2, have: data.n_steps() });
    }
    let mut tracker = PerfTracker::new(data, cfg.portfolio_size);
    let end = cfg.warmup_steps;
    let start = end - tracker_window(end, data.lookback());
    for r in pool {
        tracker.window_stats(&structural_key(&r.expr), &r.expr, start, end);
    }
    Ok(tracker)
}

struct Engine<'d, 'g> {
    data: &'d MarketData,
    cfg: &'d EvolutionConfig,
    generator: &'g mut dyn FactorGenerator,
    validator: Validator,
    tracker: PerfTracker<'d>,
    pool: Vec<Member>,
    value: f64,
    baseline: f64,
    holdings: Option<PortfolioWeights>,
    rows: Vec<LedgerRow>,
}

impl<'d, 'g> Engine<'d, 'g> {
    fn summary(&mut self, m: usize, from: usize, to: usize) -> WindowSummary {
        let member = &self.pool[m];
        self.tracker.summary(&member.key, &member.record.expr, from, to)
    }

    fn metric_map(&mut self, from: usize, to: usize) -> (BTreeMap<String, f64>, BTreeMap<String, WindowSummary>) {
        let mut metric = BTreeMap::new();
        let mut all = BTreeMap::new();
        for m in 0..self.pool.len() {
            let s = self.summary(m, from, to);
            let name = self.pool[m].record.name.clone();
            metric.insert(name.clone(), self.cfg.quality_metric.of(&s.perf, &s.quality));
            all.insert(name, s);
        }
        (metric, all)
    }

    /// Pool indices of the best factors by the quality metric over `from..to`
    /// after version filtering, best first.
    fn ranked(&mut self, from: usize, to: usize, limit: usize) -> Vec<(usize, WindowSummary)> {
        let summaries: Vec<WindowSummary> = (0..self.pool.len()).map(|m| self.summary(m, from, to)).collect();
        let metric: Vec<f64> = summaries.iter().map(|s| self.cfg.quality_metric.of(&s.perf, &s.quality)).collect();
        let entries: Vec<VersionEntry<'_>> =
            self.pool.iter().zip(&metric).map(|(m, &x)| VersionEntry::of(&m.record, x)).collect();
        let kept = filter_factor_versions(&entries);
        let mut idx: Vec<usize> =
            (0..self.pool.len()).filter(|&m| kept.iter().any(|k| *k == self.pool[m].record.name)).collect();
        idx.sort_by(|&a, &b| {
            pool::by_metric_desc((&self.pool[a].record.name, metric[a]), (&self.pool[b].record.name, metric[b]))
        });
        idx.truncate(limit);
        idx.into_iter().map(|m| (m, summaries[m])).collect()
    }

    fn records(&self) -> Vec<FactorRecord> {
        self.pool.iter().map(|m| m.record.clone()).collect()
    }

    fn search(&mut self, j: usize) -> GenerationEvent {
        let lookback = self.data.lookback();
        let mut event = GenerationEvent::default();

        let w = tracker_window(j, lookback);
        let (metric, _) = self.metric_map(j - w, j);
        let records = self.records();
        let cleaned = clean_factor_pool(&records, &metric, self.cfg.max_pool_size, self.cfg.keep_top_n);
        if cleaned.len() != records.len() {
            event.pruned =
                records.iter().filter(|r| !cleaned.iter().any(|c| c.name == r.name)).map(|r| r.name.clone()).collect();
            self.pool.retain(|m| cleaned.iter().any(|c| c.name == m.record.name));
            let live: Vec<&str> = self.pool.iter().map(|m| m.key.as_str()).collect();
            self.tracker.retain_keys(&live);
        }

        let from = j.saturating_sub(self.cfg.search_interval);
        let top: Vec<FactorSummary> = self
            .ranked(from, j, self.cfg.prompt_factors)
            .into_iter()
            .map(|(m, s)| FactorSummary { record: self.pool[m].record.clone(), perf: s.perf, quality: s.quality })
            .collect();
        let request = GenerationRequest {
            top_factors: top,
            library_factors: self.pool.iter().filter(|m| m.record.is_seed()).map(|m| m.record.clone()).collect(),
            count: self.cfg.candidates,
            rng_seed: step_seed(self.cfg.rng_seed, j),
            step: j,
        };
        let prompt = build_prompt(&request);
        let forbidden = self.data.asset_ids().iter().chain(self.data.period_labels()).map(String::as_str);
        event.leakage = leakage_scan(&prompt, forbidden);
        if !event.leakage.is_empty() {
            return event;
        }

        let current = self.records();
        let result = self.generator.generate(&request, &current, &self.validator);
        event.attempts = result.attempts;
        event.success = result.success;
        event.proposed = result.candidates.iter().map(|c| c.name.clone()).collect();

        let pool_ics: Vec<f64> = (0..self.pool.len()).map(|m| self.summary(m, from, j).quality.mean_rankic).collect();
        let pool_median = median(&pool_ics);
        let baseline = baseline_final_value(self.data, from, j);
        for mut candidate in result.candidates {
            candidate.created_step = j;
            if self.pool.iter().any(|m| m.record.name == candidate.name) {
                event.gated_out.push(candidate.name);
                continue;
            }
            let member = Member::new(candidate);
            let s = self.tracker.summary(&member.key, &member.record.expr, from, j);
            let keep = benchmark_gate(GateInputs {
                candidate_final_value: s.perf.final_value,
                candidate_mean_rankic: s.quality.mean_rankic,
                baseline_final_value: baseline,
                pool_median_rankic: pool_median,
                drop_threshold: self.cfg.drop_threshold,
            });
            if keep {
                // backfill so every summary window is fully populated
                self.tracker.window_stats(&member.key, &member.record.expr, j - w, j);
                event.admitted.push(member.record.name.clone());
                self.pool.push(member);
            } else {
                event.gated_out.push(member.record.name);
            }
        }
        event
    }

    fn trade(&mut self, j: usize) {
        let realized = self.tracker.realized(j).to_vec();
        let market = fallback_market_return(&realized);
        let from = j.saturating_sub(self.cfg.search_interval);
        let chosen = self.ranked(from, j, self.cfg.top_factors);
        let prev = match (&self.holdings, self.cfg.drift_turnover) {
            (Some(h), true) => drift_weights(h, self.tracker.realized(j - 1)).ok(),
            (Some(h), false) => Some(h.clone()),
            (None, _) => None,
        };

        let mut factor_rows = Vec::with_capacity(chosen.len());
        for &(m, _) in &chosen {
            let member = &self.pool[m];
            factor_rows.push(self.tracker.scores(&member.key, &member.record.expr, j));
        }
        let attempt = aggregate_scores(&factor_rows).and_then(|mean| {
            let composite = normalize_values(&mean);
            let picked = select_top_m(&composite, self.cfg.portfolio_size.min(composite.len()));
            let weights = self.cfg.weighting.weights(j, &picked, &composite)?;
            weights.check(self.cfg.portfolio_size)?;
            let outcome = step_return(&weights, &realized, prev.as_ref(), self.cfg.cost)?;
            Ok((composite, weights, outcome))
        });

        self.baseline *= market;
        let row = match attempt {
            Ok((composite, weights, outcome)) => {
                self.value *= outcome.gross_return;
                let factors = chosen
                    .iter()
                    .zip(&factor_rows)
                    .map(|(&(m, _), row)| FactorUse {
                        name: self.pool[m].record.name.clone(),
                        contribution: weights.entries().iter().map(|&(i, w)| w * row[i]).sum(),
                    })
                    .collect();
                let row = LedgerRow {
                    step: j,
                    date: self.data.period_labels()[j].clone(),
                    phase: Phase::Active,
                    step_return: outcome.gross_return,
                    portfolio_value: self.value,
                    baseline_return: market,
                    baseline_value: self.baseline,
                    turnover: outcome.turnover,
                    cost: outcome.cost,
                    holdings: self.holdings_of(&weights),
                    factors,
                    rankic: Some(spearman_rank_corr(&composite, &realized).value),
                    recall: Some(recall_precision_at_n(&composite, &realized, RECALL_AT).0),
                    pool_size: self.pool.len(),
                };
                self.holdings = Some(weights);
                row
            }
            Err(_) => {
                self.value *= market;
                self.holdings = None;
                LedgerRow {
                    phase: Phase::Fallback,
                    ..self.passive_row(j, market)
                }
            }
        };
        self.rows.push(row);
    }

    fn holdings_of(&self, weights: &PortfolioWeights) -> Vec<Holding> {
        weights
            .entries()
            .iter()
            .map(|&(i, w)| Holding { asset: self.data.asset_ids()[i].clone(), weight: w })
            .collect()
    }

    fn passive_row(&self, j: usize, market: f64) -> LedgerRow {
        LedgerRow {
            step: j,
            date: self.data.period_labels()[j].clone(),
            phase: Phase::Warmup,
            step_return: market,
            portfolio_value: self.value,
            baseline_return: market,
            baseline_value: self.baseline,
            turnover: 0.0,
            cost: 0.0,
            holdings: Vec::new(),
            factors: Vec::new(),
            rankic: None,
            recall: None,
            pool_size: self.pool.len(),
        }
    }

    fn warmup_step(&mut self, j: usize) {
        let market = fallback_market_return(self.tracker.realized(j));
        self.value *= market;
        self.baseline *= market;
        let row = self.passive_row(j, market);
        self.rows.push(row);
    }

    fn checkpoint(&mut self, j: usize, generation: GenerationEvent) -> SearchRecord {
        let w = tracker_window(j, self.data.lookback());
        let (_, summaries) = self.metric_map(j - w, j);
        SearchRecord {
            step: j,
            pool: self.records(),
            performance: summaries.iter().map(|(k, s)| (k.clone(), s.perf.final_value)).collect(),
            quality: summaries.iter().map(|(k, s)| (k.clone(), s.quality.mean_rankic)).collect(),
            generation,
            resume: ResumeState {
                next_step: j + 1,
                portfolio_value: self.value,
                baseline_value: self.baseline,
                holdings: self.holdings.clone(),
            },
        }
    }

    fn run(&mut self, start: usize, sink: &mut dyn FnMut(&SearchRecord)) -> Vec<SearchRecord> {
        let mut records = Vec::new();
        for j in start..self.data.n_periods() {
            if j < self.cfg.warmup_steps {
                self.warmup_step(j);
                continue;
            }
            let is_search = j % self.cfg.search_interval == 0;
            let event = if is_search { Some(self.search(j)) } else { None };
            self.trade(j);
            if let Some(event) = event {
                let record = self.checkpoint(j, event);
                sink(&record);
                records.push(record);
            }
            if j > TRACKER_HORIZON + 1 {
                self.tracker.evict_before(j - TRACKER_HORIZON - 1);
            }
        }
        records
    }
}

/// Runs the full loop from the first period with `pool` as the initial
/// library. `sink` sees every checkpoint as soon as it is produced.
pub fn run_evolution(
    data: &MarketData,
    cfg: &EvolutionConfig,
    pool: Vec<FactorRecord>,
    generator: &mut dyn FactorGenerator,
    sink: &mut dyn FnMut(&SearchRecord),
) -> Result<EvolutionOutput> {
    let tracker = warmup(data, &pool, cfg)?;
    let mut engine = Engine {
        data,
        cfg,
        generator,
        validator: Validator::new(cfg.limits, data.lookback()),
        tracker,
        pool: pool.into_iter().map(Member::new).collect(),
        value: 1.0,
        baseline: 1.0,
        holdings: None,
        rows: Vec::new(),
    };
    let records = engine.run(0, sink);
    Ok(EvolutionOutput {
        pool: engine.records(),
        ledger: BacktestLedger { rows: engine.rows },
        records,
    })
}

/// Continues a run from a checkpoint. The returned ledger holds only the
/// periods after the checkpoint.
pub fn resume_evolution(
    data: &MarketData,
    cfg: &EvolutionConfig,
    checkpoint: &SearchRecord,
    generator: &mut dyn FactorGenerator,
    sink: &mut dyn FnMut(&SearchRecord),
) -> Result<EvolutionOutput> {
    cfg.validate(data.lookback())?;
    check_pool(&checkpoint.pool)?;
    let state = &checkpoint.resume;
    if state.next_step > data.n_periods() || state.next_step <= cfg.warmup_steps {
        return Err(Error::OutOfRange(format!("checkpoint step {} does not fit this run", state.next_step)));
    }
    let mut engine = Engine {
        data,
        cfg,
        generator,
        validator: Validator::new(cfg.limits, data.lookback()),
        tracker: PerfTracker::new(data, cfg.portfolio_size),
        pool: checkpoint.pool.iter().cloned().map(Member::new).collect(),
        value: state.portfolio_value,
        baseline: state.baseline_value,
        holdings: state.holdings.clone(),
        rows: Vec::new(),
    };
    let records = engine.run(state.next_step, sink);
    Ok(EvolutionOutput {
        pool: engine.records(),
        ledger: BacktestLedger { rows: engine.rows },
        records,
    })
}

/// Static backtest of a fixed library: the loop with generation disabled.
pub fn backtest_library(data: &MarketData, cfg: &EvolutionConfig, pool: Vec<FactorRecord>) -> Result<EvolutionOutput> {
    let mut disabled = crate::generator::Disabled;
    let static_cfg = EvolutionConfig { max_pool_size: cfg.max_pool_size.max(pool.len()), ..cfg.clone() };
    run_evolution(data, &static_cfg, pool, &mut disabled, &mut |_| {})
}
