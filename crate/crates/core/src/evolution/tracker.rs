//! Memoized per-factor scores and standalone statistics.
//!
//! Both are pure functions of (expression, step), so entries are keyed by the
//! expression's structural key and can be recomputed at will; the cache only
//! bounds the work.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsl::{evaluate, normalize_values, FactorExpr};
use crate::generator::{PerfSummary, QualitySummary};
use crate::market::MarketData;
use crate::metrics::{
    max_drawdown, mean, recall_precision_at_n, sample_std, sharpe_ratio, spearman_rank_corr, WealthPath,
};
use crate::portfolio::select_top_m;

/// Longest trailing window any summary looks at.
pub const TRACKER_HORIZON: usize = 120;
pub const RECALL_AT: usize = 20;

/// Standalone outcome of one factor's decision at step `t`, realized at `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStat {
    /// Gross return of the equal-weight top-m portfolio, without costs.
    pub gross_return: f64,
    pub rankic: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowSummary {
    pub perf: PerfSummary,
    pub quality: QualitySummary,
    pub steps: usize,
}

/// Summary of a sequence of step statistics.
pub fn summarize(stats: &[StepStat]) -> WindowSummary {
    if stats.is_empty() {
        return WindowSummary {
            perf: PerfSummary { final_value: 1.0, ..Default::default() },
            quality: QualitySummary::default(),
            steps: 0,
        };
    }
    let gross: Vec<f64> = stats.iter().map(|s| s.gross_return).collect();
    let path = WealthPath::from_returns(1.0, &gross);
    let net = path.net_returns();
    let ics: Vec<f64> = stats.iter().map(|s| s.rankic).collect();
    let recalls: Vec<f64> = stats.iter().map(|s| s.recall).collect();
    WindowSummary {
        perf: PerfSummary {
            mean_return: mean(&net),
            std_return: sample_std(&net),
            sharpe_ratio: sharpe_ratio(&net, 0.0, None).value,
            max_drawdown: max_drawdown(&path),
            final_value: path.final_value(),
        },
        quality: QualitySummary {
            mean_rankic: mean(&ics),
            std_rankic: sample_std(&ics),
            mean_recall: mean(&recalls),
            std_recall: sample_std(&recalls),
        },
        steps: stats.len(),
    }
}

/// Per-expression caches of normalized score rows and step statistics.
#[derive(Debug, Clone)]
pub struct PerfTracker<'d> {
    data: &'d MarketData,
    portfolio_size: usize,
    /// Gross returns by period, one vector per period.
    realized: Vec<Vec<f64>>,
    rows: BTreeMap<String, BTreeMap<usize, Vec<f64>>>,
    stats: BTreeMap<String, BTreeMap<usize, StepStat>>,
}

impl<'d> PerfTracker<'d> {
    pub fn new(data: &'d MarketData, portfolio_size: usize) -> Self {
        let realized = (0..data.n_periods()).map(|j| data.period_returns(j)).collect();
        Self { data, portfolio_size, realized, rows: BTreeMap::new(), stats: BTreeMap::new() }
    }

    pub fn data(&self) -> &'d MarketData {
        self.data
    }

    /// Normalized cross-sectional scores at step `t`; `lookback <= t < n_steps`.
    pub fn scores(&mut self, key: &str, expr: &FactorExpr, t: usize) -> Vec<f64> {
        let data = self.data;
        let by_step = self.rows.entry(key.into()).or_default();
        by_step
            .entry(t)
            .or_insert_with(|| {
                let raw: Vec<f64> = (0..data.n_assets()).map(|a| evaluate(expr, data.window_unchecked(a, t))).collect();
                normalize_values(&raw)
            })
            .clone()
    }

    /// Standalone statistics of the decision at `t`; `lookback <= t < n_periods`.
    pub fn stat(&mut self, key: &str, expr: &FactorExpr, t: usize) -> StepStat {
        if let Some(s) = self.stats.get(key).and_then(|m| m.get(&t)) {
            return *s;
        }
        let scores = self.scores(key, expr, t);
        let realized = &self.realized[t];
        let picked = select_top_m(&scores, self.portfolio_size.min(scores.len()));
        let w = 1.0 / picked.len().max(1) as f64;
        let mut gross = 0.0;
        for &i in &picked {
            gross += w * realized[i];
        }
        let stat = StepStat {
            gross_return: gross,
            rankic: spearman_rank_corr(&scores, realized).value,
            recall: recall_precision_at_n(&scores, realized, RECALL_AT).0,
        };
        self.stats.entry(key.into()).or_default().insert(t, stat);
        stat
    }

    /// Statistics for decisions `from..to` (clamped below at the lookback).
    pub fn window_stats(&mut self, key: &str, expr: &FactorExpr, from: usize, to: usize) -> Vec<StepStat> {
        let from = from.max(self.data.lookback());
        (from..to).map(|t| self.stat(key, expr, t)).collect()
    }

    pub fn summary(&mut self, key: &str, expr: &FactorExpr, from: usize, to: usize) -> WindowSummary {
        summarize(&self.window_stats(key, expr, from, to))
    }

    /// Drops cached entries for steps before `t`.
    pub fn evict_before(&mut self, t: usize) {
        for m in self.rows.values_mut() {
            *m = m.split_off(&t);
        }
        for m in self.stats.values_mut() {
            *m = m.split_off(&t);
        }
    }

    /// Drops everything cached for expressions not in `live`.
    pub fn retain_keys(&mut self, live: &[&str]) {
        self.rows.retain(|k, _| live.contains(&k.as_str()));
        self.stats.retain(|k, _| live.contains(&k.as_str()));
    }

    pub fn realized(&self, t: usize) -> &[f64] {
        &self.realized[t]
    }

    pub fn tracked(&self) -> usize {
        self.stats.len()
    }
}

/// Trailing window length used for pool-wide summaries at decision step `t`.
pub fn tracker_window(t: usize, lookback: usize) -> usize {
    t.saturating_sub(lookback).min(TRACKER_HORIZON)
}

/// Final value of the 1/N baseline over decisions `from..to`.
pub fn baseline_final_value(data: &MarketData, from: usize, to: usize) -> f64 {
    let mut v = 1.0;
    for t in from.max(data.lookback())..to {
        v *= crate::portfolio::fallback_market_return(&data.period_returns(t));
    }
    v
}
