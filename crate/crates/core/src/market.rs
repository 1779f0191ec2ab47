//! Price tables, gross relative returns, normalized prices and lookback windows.
//!
//! Step indexing: a table with `S` price steps has `S - 1` relative returns,
//! `relatives[j] = p[j + 1] / p[j]`. A window at step `t` holds the `T`
//! normalized prices ending at `t` and the `T` relative returns realized over
//! those same steps, i.e. `relatives[t - T..t]`. A decision at step `t` earns
//! `relatives[t]`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lookback length used for factor windows unless configured otherwise.
pub const DEFAULT_LOOKBACK: usize = 30;

/// Base value every normalized price path starts from.
pub const NORMALIZED_BASE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    asset_ids: Vec<String>,
    dates: Vec<String>,
    /// `[n_assets][n_steps]`
    prices: Vec<Vec<f64>>,
}

impl PriceTable {
    /// Dates are opaque strings compared lexicographically and must be
    /// strictly increasing (ISO-8601 or `YYYYMM` style labels sort correctly).
    pub fn new(asset_ids: Vec<String>, dates: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if asset_ids.is_empty() {
            return Err(Error::Shape("empty asset universe".into()));
        }
        if dates.len() < 2 {
            return Err(Error::Shape(format!("need at least 2 dates, got {}", dates.len())));
        }
        if prices.len() != asset_ids.len() {
            return Err(Error::DimensionMismatch { expected: asset_ids.len(), got: prices.len() });
        }
        check_dates(&dates)?;
        for (asset, row) in asset_ids.iter().zip(&prices) {
            if row.len() != dates.len() {
                return Err(Error::Shape(format!(
                    "asset `{asset}` has {} prices for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            for (step, &value) in row.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::NonPositivePrice { asset: asset.clone(), step, value });
                }
            }
        }
        Ok(Self { asset_ids, dates, prices })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.dates.len()
    }

    pub fn to_relative_returns(&self) -> ReturnMatrix {
        let relatives = self
            .prices
            .iter()
            .map(|row| row.windows(2).map(|pair| pair[1] / pair[0]).collect())
            .collect();
        ReturnMatrix { relatives }
    }
}

pub(crate) fn check_dates(dates: &[String]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::Shape(format!(
                "non-monotonic dates: `{}` is not before `{}`",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Gross relative returns `p_t / p_{t-1}`, one row per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMatrix {
    relatives: Vec<Vec<f64>>,
}

impl ReturnMatrix {
    /// Builds a matrix from already computed gross returns (e.g. monthly
    /// price relatives published as such).
    pub fn from_relatives(relatives: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = relatives.first() else {
            return Err(Error::Shape("empty asset universe".into()));
        };
        let len = first.len();
        for (asset, row) in relatives.iter().enumerate() {
            if row.len() != len {
                return Err(Error::DimensionMismatch { expected: len, got: row.len() });
            }
            for (step, &value) in row.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::NonPositivePrice { asset: format!("#{asset}"), step, value });
                }
            }
        }
        Ok(Self { relatives })
    }

    pub fn relatives(&self) -> &[Vec<f64>] {
        &self.relatives
    }

    pub fn n_assets(&self) -> usize {
        self.relatives.len()
    }

    pub fn n_periods(&self) -> usize {
        self.relatives.first().map_or(0, Vec::len)
    }

    /// Cross-section of gross returns realized over period `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.relatives.iter().map(|row| row[j]).collect()
    }

    pub fn to_normalized_prices(&self) -> NormalizedPrices {
        let normalized = self
            .relatives
            .iter()
            .map(|row| {
                let mut path = Vec::with_capacity(row.len() + 1);
                let mut level = NORMALIZED_BASE;
                path.push(level);
                for &r in row {
                    level *= r;
                    path.push(level);
                }
                path
            })
            .collect();
        NormalizedPrices { normalized }
    }
}

/// Price paths rebased to start at 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPrices {
    normalized: Vec<Vec<f64>>,
}

impl NormalizedPrices {
    pub fn normalized(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn n_steps(&self) -> usize {
        self.normalized.first().map_or(0, Vec::len)
    }
}

/// Borrowed lookback window: `prices` and `returns` both have length `T`.
#[derive(Debug, Clone, Copy)]
pub struct WindowRef<'a> {
    pub prices: &'a [f64],
    /// Gross relative returns.
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub asset_id: String,
    pub t: usize,
    pub prices: Vec<f64>,
    /// Gross relative returns aligned with `prices`.
    pub returns: Vec<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn view(&self) -> WindowRef<'_> {
        WindowRef { prices: &self.prices, returns: &self.returns }
    }
}

fn window_bounds(t: usize, lookback: usize, n_steps: usize) -> Result<()> {
    if lookback == 0 {
        return Err(Error::Config("lookback must be positive".into()));
    }
    if t < lookback {
        return Err(Error::InsufficientHistory { t, lookback });
    }
    if t >= n_steps {
        return Err(Error::OutOfRange(format!("step {t} beyond {n_steps} steps")));
    }
    Ok(())
}

/// The `lookback` trailing prices and relative returns of `asset` ending at step `t`.
pub fn window_at(
    prices: &NormalizedPrices,
    returns: &ReturnMatrix,
    asset_ids: &[String],
    asset: usize,
    t: usize,
    lookback: usize,
) -> Result<Window> {
    if asset >= prices.normalized.len() || asset >= returns.relatives.len() {
        return Err(Error::OutOfRange(format!("asset index {asset}")));
    }
    window_bounds(t, lookback, prices.n_steps())?;
    Ok(Window {
        asset_id: asset_ids.get(asset).cloned().unwrap_or_default(),
        t,
        prices: prices.normalized[asset][t + 1 - lookback..=t].to_vec(),
        returns: returns.relatives[asset][t - lookback..t].to_vec(),
    })
}

/// Everything the search loop needs about the market: aligned relative
/// returns, base-100 prices and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    asset_ids: Vec<String>,
    /// Label of each return period, length `n_steps - 1`.
    period_labels: Vec<String>,
    returns: ReturnMatrix,
    prices: NormalizedPrices,
    lookback: usize,
}

impl MarketData {
    pub fn from_prices(table: &PriceTable, lookback: usize) -> Result<Self> {
        let returns = table.to_relative_returns();
        let labels = table.dates()[1..].to_vec();
        Self::from_returns(table.asset_ids().to_vec(), labels, returns, lookback)
    }

    /// `period_labels[j]` names the period over which `returns[.][j]` is realized.
    pub fn from_returns(
        asset_ids: Vec<String>,
        period_labels: Vec<String>,
        returns: ReturnMatrix,
        lookback: usize,
    ) -> Result<Self> {
        if lookback == 0 {
            return Err(Error::Config("lookback must be positive".into()));
        }
        if asset_ids.len() != returns.n_assets() {
            return Err(Error::DimensionMismatch { expected: asset_ids.len(), got: returns.n_assets() });
        }
        if period_labels.len() != returns.n_periods() {
            return Err(Error::DimensionMismatch {
                expected: period_labels.len(),
                got: returns.n_periods(),
            });
        }
        check_dates(&period_labels)?;
        let n_steps = returns.n_periods() + 1;
        if n_steps < lookback + 2 {
            return Err(Error::DatasetTooShort { needed: lookback + 2, have: n_steps });
        }
        let prices = returns.to_normalized_prices();
        Ok(Self { asset_ids, period_labels, returns, prices, lookback })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn returns(&self) -> &ReturnMatrix {
        &self.returns
    }

    pub fn prices(&self) -> &NormalizedPrices {
        &self.prices
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// Number of price steps (one more than the number of return periods).
    pub fn n_steps(&self) -> usize {
        self.returns.n_periods() + 1
    }

    pub fn n_periods(&self) -> usize {
        self.returns.n_periods()
    }

    /// Gross returns realized over period `j` (from step `j` to `j + 1`).
    pub fn period_returns(&self, j: usize) -> Vec<f64> {
        self.returns.column(j)
    }

    pub fn window(&self, asset: usize, t: usize) -> Result<WindowRef<'_>> {
        if asset >= self.asset_ids.len() {
            return Err(Error::OutOfRange(format!("asset index {asset}")));
        }
        window_bounds(t, self.lookback, self.n_steps())?;
        Ok(self.window_unchecked(asset, t))
    }

    pub(crate) fn window_unchecked(&self, asset: usize, t: usize) -> WindowRef<'_> {
        let lookback = self.lookback;
        WindowRef {
            prices: &self.prices.normalized[asset][t + 1 - lookback..=t],
            returns: &self.returns.relatives[asset][t - lookback..t],
        }
    }

    pub fn owned_window(&self, asset: usize, t: usize) -> Result<Window> {
        window_at(&self.prices, &self.returns, &self.asset_ids, asset, t, self.lookback)
    }

    /// Restricts the data to the first `n_periods` return periods.
    pub fn truncated(&self, n_periods: usize) -> Result<Self> {
        let n_periods = n_periods.min(self.n_periods());
        let returns = ReturnMatrix::from_relatives(
            self.returns.relatives.iter().map(|row| row[..n_periods].to_vec()).collect(),
        )?;
        Self::from_returns(
            self.asset_ids.clone(),
            self.period_labels[..n_periods].to_vec(),
            returns,
            self.lookback,
        )
    }
}
