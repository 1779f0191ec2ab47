//! Sparse long-only top-m portfolios: score aggregation, selection, weighting
//! and cost-aware step returns.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::top_n_indices;

/// Long-only weights over a sparse set of assets, sorted by asset index.
/// Only strictly positive weights are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub t: usize,
    entries: Vec<(usize, f64)>,
}

impl PortfolioWeights {
    pub fn from_entries(t: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.retain(|&(_, w)| w > 0.0);
        entries.sort_by_key(|&(i, _)| i);
        Self { t, entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nonzero(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    pub fn get(&self, asset: usize) -> f64 {
        self.entries
            .binary_search_by_key(&asset, |&(i, _)| i)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn assets(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    /// `w . r`, summed in asset order.
    pub fn dot(&self, gross: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for &(i, w) in &self.entries {
            let r = gross.get(i).ok_or(Error::DimensionMismatch { expected: i + 1, got: gross.len() })?;
            acc += w * r;
        }
        Ok(acc)
    }

    /// Checks budget, non-negativity and cardinality.
    pub fn check(&self, max_assets: usize) -> Result<()> {
        if self.entries.iter().any(|&(_, w)| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Schema("negative or non-finite weight".into()));
        }
        if self.nonzero() > max_assets {
            return Err(Error::Schema(format!("{} holdings exceed cardinality {max_assets}", self.nonzero())));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::Schema(format!("weights sum to {}", self.total())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub rate: f64,
}

impl CostModel {
    pub const FREE: CostModel = CostModel { rate: 0.0 };

    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("cost rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::FREE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Equal,
    PositiveScore,
    Temperature { tau: f64 },
}

impl Weighting {
    pub fn weights(&self, t: usize, selection: &[usize], scores: &[f64]) -> Result<PortfolioWeights> {
        match *self {
            Weighting::Equal => equal_weights(t, selection),
            Weighting::PositiveScore => positive_score_weights(t, selection, scores),
            Weighting::Temperature { tau } => temperature_weights(t, selection, scores, tau),
        }
    }
}

/// Arithmetic mean of factor rows per asset.
pub fn aggregate_scores<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>> {
    let Some(first) = rows.first() else {
        return Err(Error::EmptyFactorSet);
    };
    let n = first.as_ref().len();
    let mut acc = alloc::vec![0.0; n];
    for row in rows {
        let row = row.as_ref();
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: row.len() });
        }
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let k = rows.len() as f64;
    Ok(acc.into_iter().map(|s| s / k).collect())
}

/// Indices of the `m` best scores, returned in ascending index order.
/// Ties resolve to the lower asset index.
pub fn select_top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut picked = top_n_indices(scores, m);
    picked.sort_unstable();
    picked
}

pub fn equal_weights(t: usize, selection: &[usize]) -> Result<PortfolioWeights> {
    if selection.is_empty() {
        return Err(Error::EmptyPool);
    }
    let w = 1.0 / selection.len() as f64;
    Ok(PortfolioWeights::from_entries(t, selection.iter().map(|&i| (i, w)).collect()))
}

fn lookup(scores: &[f64], i: usize) -> Result<f64> {
    scores.get(i).copied().ok_or(Error::DimensionMismatch { expected: i + 1, got: scores.len() })
}

/// `w_i = max(s_i, 0) / sum_j max(s_j, 0)`; equal weights if nothing is positive.
pub fn positive_score_weights(t: usize, selection: &[usize], scores: &[f64]) -> Result<PortfolioWeights> {
    if selection.is_empty() {
        return Err(Error::EmptyPool);
    }
    let clipped: Vec<f64> = selection.iter().map(|&i| lookup(scores, i).map(|s| s.max(0.0))).collect::<Result<_>>()?;
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return equal_weights(t, selection);
    }
    Ok(PortfolioWeights::from_entries(
        t,
        selection.iter().zip(&clipped).map(|(&i, &c)| (i, c / total)).collect(),
    ))
}

/// Softmax of selected scores at temperature `tau`.
pub fn temperature_weights(t: usize, selection: &[usize], scores: &[f64], tau: f64) -> Result<PortfolioWeights> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidTemperature(tau));
    }
    if selection.is_empty() {
        return Err(Error::EmptyPool);
    }
    let selected: Vec<f64> = selection.iter().map(|&i| lookup(scores, i)).collect::<Result<_>>()?;
    let max = selected.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = selected.iter().map(|&s| libm::exp((s - max) / tau)).collect();
    let total: f64 = exps.iter().sum();
    Ok(PortfolioWeights::from_entries(
        t,
        selection.iter().zip(&exps).map(|(&i, &e)| (i, e / total)).collect(),
    ))
}

/// Weights after one period of price drift, renormalized to sum to one.
pub fn drift_weights(prev: &PortfolioWeights, gross: &[f64]) -> Result<PortfolioWeights> {
    let grown: Vec<(usize, f64)> =
        prev.entries.iter().map(|&(i, w)| lookup(gross, i).map(|r| (i, w * r))).collect::<Result<_>>()?;
    let total: f64 = grown.iter().map(|&(_, v)| v).sum();
    if !(total > 0.0) {
        return Ok(prev.clone());
    }
    Ok(PortfolioWeights::from_entries(prev.t, grown.into_iter().map(|(i, v)| (i, v / total)).collect()))
}

/// One-way turnover `0.5 * sum |w - w_prev|`; a missing previous portfolio
/// counts as all cash, so a full buy-in has turnover 0.5.
pub fn turnover(current: &PortfolioWeights, prev: Option<&PortfolioWeights>) -> f64 {
    let Some(prev) = prev else {
        return 0.5 * current.total();
    };
    let (a, b) = (&current.entries, &prev.entries);
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ia, wa)), Some(&(ib, wb))) if ia == ib => {
                sum += (wa - wb).abs();
                i += 1;
                j += 1;
            }
            (Some(&(ia, wa)), Some(&(ib, _))) if ia < ib => {
                sum += wa;
                i += 1;
            }
            (Some(_), Some(&(_, wb))) => {
                sum += wb;
                j += 1;
            }
            (Some(&(_, wa)), None) => {
                sum += wa;
                i += 1;
            }
            (None, Some(&(_, wb))) => {
                sum += wb;
                j += 1;
            }
            (None, None) => break,
        }
    }
    0.5 * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Gross portfolio return net of costs.
    pub gross_return: f64,
    pub turnover: f64,
    pub cost: f64,
}

/// `w . r_next - c * turnover`, with `prev` already drifted to the current step.
pub fn step_return(
    weights: &PortfolioWeights,
    gross_next: &[f64],
    prev: Option<&PortfolioWeights>,
    cost: CostModel,
) -> Result<StepOutcome> {
    let gross = weights.dot(gross_next)?;
    let turnover = turnover(weights, prev);
    let cost = cost.rate * turnover;
    Ok(StepOutcome { gross_return: gross - cost, turnover, cost })
}

/// Equal-weight market proxy, summed exactly like an equal-weight portfolio.
pub fn fallback_market_return(gross: &[f64]) -> f64 {
    if gross.is_empty() {
        return 1.0;
    }
    let w = 1.0 / gross.len() as f64;
    let mut acc = 0.0;
    for &r in gross {
        acc += w * r;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn aggregate_cases() {
        assert_eq!(aggregate_scores(&[vec![0.5, -1.0]]).unwrap(), vec![0.5, -1.0]);
        assert_eq!(aggregate_scores(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(aggregate_scores::<Vec<f64>>(&[]), Err(Error::EmptyFactorSet));
    }

    #[test]
    fn top_m_selection() {
        assert_eq!(select_top_m(&[3.0, 1.0, 2.0], 2), vec![0, 2]);
        assert_eq!(select_top_m(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
        assert_eq!(select_top_m(&[1.0, 5.0, 2.0], 3), vec![0, 1, 2]);
    }

    #[test]
    fn equal_weight_cases() {
        let w = equal_weights(0, &[0, 1, 2, 3, 4]).unwrap();
        assert!(w.entries().iter().all(|&(_, x)| x == 0.2));
        assert_eq!(equal_weights(0, &[3]).unwrap().entries(), &[(3, 1.0)]);
    }

    #[test]
    fn positive_score_cases() {
        let s = [0.5, 0.5, 1.0, -1.0];
        assert_eq!(positive_score_weights(0, &[0, 1], &s).unwrap().entries(), &[(0, 0.5), (1, 0.5)]);
        let w = positive_score_weights(0, &[2, 3], &s).unwrap();
        assert_eq!(w.entries(), &[(2, 1.0)]);
        let w = positive_score_weights(0, &[0, 3], &[-0.2, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(w.entries(), &[(0, 0.5), (3, 0.5)]);
    }

    #[test]
    fn temperature_cases() {
        let s = [0.0, libm::log(2.0)];
        let w = temperature_weights(0, &[0, 1], &s, 1.0).unwrap();
        assert!((w.get(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.get(1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(temperature_weights(0, &[0], &s, 0.0), Err(Error::InvalidTemperature(0.0)));
        let hot = temperature_weights(0, &[0, 1], &[0.3, -0.9], 1e6).unwrap();
        assert!((hot.get(0) - 0.5).abs() < 1e-4 && (hot.get(1) - 0.5).abs() < 1e-4);
        let cold = temperature_weights(0, &[0, 1], &[0.3, 0.2999], 1e-6).unwrap();
        assert!(cold.get(0) >= 1.0 - 1e-6);
    }

    #[test]
    fn zero_cost_is_dot_product() {
        let w = equal_weights(0, &[0, 2]).unwrap();
        let r = [1.1, 0.7, 0.9];
        let out = step_return(&w, &r, None, CostModel::FREE).unwrap();
        assert_eq!(out.gross_return, 0.5 * 1.1 + 0.5 * 0.9);
        assert_eq!(out.turnover, 0.5);
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn unchanged_weights_cost_nothing() {
        let w = equal_weights(0, &[0, 1]).unwrap();
        let flat = [1.0, 1.0];
        let drifted = drift_weights(&w, &flat).unwrap();
        let out = step_return(&w, &[1.01, 0.99], Some(&drifted), CostModel::new(0.002).unwrap()).unwrap();
        assert_eq!(out.turnover, 0.0);
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn full_rotation_costs_the_rate() {
        let a = equal_weights(0, &(0..10).collect::<Vec<_>>()).unwrap();
        let b = equal_weights(1, &(10..20).collect::<Vec<_>>()).unwrap();
        let out = step_return(&b, &[1.0; 20], Some(&a), CostModel::new(0.001).unwrap()).unwrap();
        assert!((out.turnover - 1.0).abs() < 1e-12);
        assert!((out.cost - 0.001).abs() < 1e-15);
    }

    #[test]
    fn market_fallback() {
        assert!((fallback_market_return(&[1.1, 0.9]) - 1.0).abs() < 1e-15);
        assert_eq!(fallback_market_return(&[1.3]), 1.3);
    }

    #[test]
    fn drift_renormalizes() {
        let w = equal_weights(0, &[0, 1]).unwrap();
        let d = drift_weights(&w, &[1.2, 0.8]).unwrap();
        assert!((d.get(0) - 0.6).abs() < 1e-15);
        assert!((d.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_invariants_checked() {
        assert!(equal_weights(0, &[0, 1, 2]).unwrap().check(3).is_ok());
        assert!(equal_weights(0, &[0, 1, 2]).unwrap().check(2).is_err());
    }
}
