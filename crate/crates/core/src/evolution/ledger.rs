use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metrics::{cumulative_wealth, max_drawdown, mean, sample_std, sharpe_ratio, WealthPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Before the warm-up ends: 1/N, no recorded holdings.
    Warmup,
    Active,
    /// Scoring failed; the step earned the market average.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub asset: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorUse {
    pub name: String,
    /// Weighted mean of the factor's normalized scores over the holdings.
    pub contribution: f64,
}

/// One decision step and the period it earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    /// Label of the period over which the return was realized.
    pub date: String,
    pub phase: Phase,
    /// Gross return net of costs.
    pub step_return: f64,
    pub portfolio_value: f64,
    pub baseline_return: f64,
    pub baseline_value: f64,
    pub turnover: f64,
    pub cost: f64,
    pub holdings: Vec<Holding>,
    pub factors: Vec<FactorUse>,
    /// Composite-score RankIC against the realized returns.
    pub rankic: Option<f64>,
    pub recall: Option<f64>,
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BacktestLedger {
    pub rows: Vec<LedgerRow>,
}

impl BacktestLedger {
    pub fn wealth_path(&self) -> WealthPath {
        let r: Vec<f64> = self.rows.iter().map(|r| r.step_return).collect();
        WealthPath::from_returns(1.0, &r)
    }

    pub fn baseline_path(&self) -> WealthPath {
        let r: Vec<f64> = self.rows.iter().map(|r| r.baseline_return).collect();
        WealthPath::from_returns(1.0, &r)
    }

    /// Step of the first row whose stored value disagrees with the running
    /// product of step returns beyond `rel_tol`.
    pub fn replay_mismatch(&self, initial: f64, rel_tol: f64) -> Option<usize> {
        let mut v = initial;
        for row in &self.rows {
            v *= row.step_return;
            if ((row.portfolio_value - v) / v).abs() > rel_tol {
                return Some(row.step);
            }
        }
        None
    }
}

/// Summary report of a ledger. Column names follow the prompt tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerMetrics {
    pub mean_return: f64,
    pub std_return: f64,
    pub sharpe_ratio: f64,
    pub sharpe_ratio_annualized: Option<f64>,
    pub max_drawdown: f64,
    pub final_value: f64,
    pub cumulative_wealth: f64,
    pub mean_rankic: f64,
    pub std_rankic: f64,
    #[serde(rename = "mean_recall@20")]
    pub mean_recall: f64,
    #[serde(rename = "std_recall@20")]
    pub std_recall: f64,
    pub mean_turnover: f64,
    pub total_cost: f64,
    pub periods: usize,
    pub active_periods: usize,
    pub baseline_final_value: f64,
    pub baseline_cumulative_wealth: f64,
    pub baseline_sharpe_ratio: f64,
    pub baseline_max_drawdown: f64,
}

pub fn ledger_metrics(ledger: &BacktestLedger, periods_per_year: Option<u32>) -> LedgerMetrics {
    let path = ledger.wealth_path();
    let net = path.net_returns();
    let base = ledger.baseline_path();
    let base_net = base.net_returns();
    let ics: Vec<f64> = ledger.rows.iter().filter_map(|r| r.rankic).collect();
    let recalls: Vec<f64> = ledger.rows.iter().filter_map(|r| r.recall).collect();
    let turnovers: Vec<f64> = ledger.rows.iter().filter(|r| r.phase == Phase::Active).map(|r| r.turnover).collect();
    LedgerMetrics {
        mean_return: mean(&net),
        std_return: sample_std(&net),
        sharpe_ratio: sharpe_ratio(&net, 0.0, None).value,
        sharpe_ratio_annualized: periods_per_year.map(|p| sharpe_ratio(&net, 0.0, Some(p)).value),
        max_drawdown: max_drawdown(&path),
        final_value: path.final_value(),
        cumulative_wealth: cumulative_wealth(&path),
        mean_rankic: mean(&ics),
        std_rankic: sample_std(&ics),
        mean_recall: mean(&recalls),
        std_recall: sample_std(&recalls),
        mean_turnover: mean(&turnovers),
        total_cost: ledger.rows.iter().map(|r| r.cost).sum(),
        periods: ledger.rows.len(),
        active_periods: turnovers.len(),
        baseline_final_value: base.final_value(),
        baseline_cumulative_wealth: cumulative_wealth(&base),
        baseline_sharpe_ratio: sharpe_ratio(&base_net, 0.0, None).value,
        baseline_max_drawdown: max_drawdown(&base),
    }
}
