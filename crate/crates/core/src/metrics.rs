//! Portfolio and factor-quality metrics.
//!
//! Standard deviations are sample (`n - 1`) estimates. Ratios whose
//! denominator vanishes return 0 with `degenerate` set instead of failing.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A ratio estimate that may be degenerate (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

impl Estimate {
    fn ok(value: f64) -> Self {
        if value.is_finite() {
            Self { value, degenerate: false }
        } else {
            Self::degenerate()
        }
    }

    fn degenerate() -> Self {
        Self { value: 0.0, degenerate: true }
    }
}

/// Portfolio value path `P_0..P_T` with the gross step returns that produce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthPath {
    pub values: Vec<f64>,
    pub step_returns: Vec<f64>,
}

impl WealthPath {
    pub fn from_returns(initial: f64, step_returns: &[f64]) -> Self {
        let mut values = Vec::with_capacity(step_returns.len() + 1);
        let mut v = initial;
        values.push(v);
        for &r in step_returns {
            v *= r;
            values.push(v);
        }
        Self { values, step_returns: step_returns.to_vec() }
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(1.0)
    }

    /// Net per-period returns (`gross - 1`).
    pub fn net_returns(&self) -> Vec<f64> {
        self.step_returns.iter().map(|r| r - 1.0).collect()
    }
}

/// `P_T - P_0`.
pub fn cumulative_wealth(path: &WealthPath) -> f64 {
    match (path.values.first(), path.values.last()) {
        (Some(first), Some(last)) => last - first,
        _ => 0.0,
    }
}

/// Standard deviations at or below this are treated as zero.
pub const DEGENERATE_STD: f64 = 1e-14;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

/// Mean excess return over sample std of net per-period returns, optionally
/// scaled by `sqrt(periods_per_year)`.
pub fn sharpe_ratio(net_returns: &[f64], risk_free: f64, periods_per_year: Option<u32>) -> Estimate {
    if net_returns.len() < 2 {
        return Estimate::degenerate();
    }
    let sd = sample_std(net_returns);
    if !(sd > DEGENERATE_STD) {
        return Estimate::degenerate();
    }
    let raw = (mean(net_returns) - risk_free) / sd;
    let scaled = match periods_per_year {
        Some(p) => raw * libm::sqrt(p as f64),
        None => raw,
    };
    Estimate::ok(scaled)
}

/// Largest fractional peak-to-trough decline, in `[0, 1)`.
pub fn max_drawdown(path: &WealthPath) -> f64 {
    max_drawdown_values(&path.values)
}

pub fn max_drawdown_values(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        if peak > 0.0 {
            worst = worst.max((peak - v) / peak);
        }
    }
    worst
}

/// Average (fractional) ranks, 1-based; ties share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Estimate {
    let n = x.len().min(y.len());
    if n < 2 {
        return Estimate::degenerate();
    }
    let (mx, my) = (mean(&x[..n]), mean(&y[..n]));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Estimate::degenerate();
    }
    Estimate::ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rank_corr(x: &[f64], y: &[f64]) -> Estimate {
    if x.len() != y.len() || x.len() < 2 {
        return Estimate::degenerate();
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// One entry per evaluable step of a RankIC series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankIcSeries {
    pub values: Vec<f64>,
    /// Step indices skipped because fewer than two assets were available.
    pub skipped: Vec<usize>,
    /// Steps whose correlation was degenerate (reported as 0).
    pub degenerate: Vec<usize>,
}

/// RankIC per step: scores at step `t` against returns realized over `t -> t + 1`.
/// `scores[k]` is aligned with `next_returns[k]`.
pub fn rankic_series(scores: &[Vec<f64>], next_returns: &[Vec<f64>]) -> RankIcSeries {
    let mut out = RankIcSeries { values: Vec::new(), skipped: Vec::new(), degenerate: Vec::new() };
    for (k, (s, r)) in scores.iter().zip(next_returns).enumerate() {
        if s.len() < 2 || s.len() != r.len() {
            out.skipped.push(k);
            continue;
        }
        let ic = spearman_rank_corr(s, r);
        if ic.degenerate {
            out.degenerate.push(k);
        }
        out.values.push(ic.value);
    }
    out
}

/// Mean over sample std of a RankIC series.
pub fn rank_icir(rankics: &[f64]) -> Estimate {
    if rankics.len() < 2 {
        return Estimate::degenerate();
    }
    let sd = sample_std(rankics);
    if !(sd > DEGENERATE_STD) {
        return Estimate::degenerate();
    }
    Estimate::ok(mean(rankics) / sd)
}

/// Indices of the `n` largest values; ties go to the lower index.
pub fn top_n_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// `(recall, precision)` of the predicted top-`n` against the realized top-`n`.
/// With equal set sizes the two coincide.
pub fn recall_precision_at_n(scores: &[f64], realized: &[f64], n: usize) -> (f64, f64) {
    let n = n.min(scores.len()).min(realized.len());
    if n == 0 {
        return (0.0, 0.0);
    }
    let predicted = top_n_indices(scores, n);
    let truth = top_n_indices(realized, n);
    let hits = predicted.iter().filter(|i| truth.contains(i)).count() as f64;
    (hits / n as f64, hits / predicted.len() as f64)
}
