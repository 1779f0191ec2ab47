//! CSV price loading and versioned market snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use efs_core::market::{MarketData, PriceTable, ReturnMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Layout {
    /// `date,<asset>,<asset>,...`
    Wide,
    /// `date,asset_id,close`
    Long,
}

/// What the numeric cells hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Values {
    /// Closing prices; period returns are computed from consecutive rows.
    #[default]
    Prices,
    /// Gross price relatives `p_t / p_{t-1}`, one per period row.
    GrossReturns,
    /// Net returns in percent, as in monthly factor-library files.
    PercentReturns,
}

/// What was removed while loading and why.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    /// Assets with fewer than `lookback + 2` observations.
    pub short_history: Vec<String>,
    /// Assets with a missing cell inside the common calendar.
    pub gaps: Vec<String>,
    /// Dates outside the span every remaining asset covers.
    pub dropped_dates: Vec<String>,
}

/// Parsed table with holes, before the missing-data policy runs.
struct RawTable {
    assets: Vec<String>,
    dates: Vec<String>,
    /// `[asset][date]`
    cells: Vec<Vec<Option<f64>>>,
}

fn parse_cell(text: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("na") || text.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| IoError::Malformed(format!("row {row}, column `{column}`: `{text}` is not a number")))?;
    if !value.is_finite() {
        return Err(IoError::Malformed(format!("row {row}, column `{column}`: non-finite value")));
    }
    Ok(Some(value))
}

fn check_increasing(dates: &[String]) -> Result<()> {
    if let Some(pair) = dates.windows(2).find(|p| p[0] >= p[1]) {
        return Err(IoError::Malformed(format!("dates not strictly increasing: `{}` then `{}`", pair[0], pair[1])));
    }
    Ok(())
}

fn read_wide<R: Read>(reader: R) -> Result<RawTable> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers()?.clone();
    if header.len() < 2 {
        return Err(IoError::Malformed("wide layout needs a date column and at least one asset column".into()));
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if assets.iter().collect::<BTreeSet<_>>().len() != assets.len() {
        return Err(IoError::Malformed("duplicate asset column".into()));
    }
    let mut dates = Vec::new();
    let mut cells = vec![Vec::new(); assets.len()];
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        if row.len() != header.len() {
            return Err(IoError::Malformed(format!("row {} has {} cells, expected {}", i + 2, row.len(), header.len())));
        }
        dates.push(row[0].to_owned());
        for (a, asset) in assets.iter().enumerate() {
            cells[a].push(parse_cell(&row[a + 1], i + 2, asset)?);
        }
    }
    check_increasing(&dates)?;
    Ok(RawTable { assets, dates, cells })
}

fn read_long<R: Read>(reader: R) -> Result<RawTable> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::Malformed(format!("long layout needs a `{name}` column")))
    };
    let (date_col, asset_col, close_col) = (col("date")?, col("asset_id")?, col("close")?);
    let mut series: BTreeMap<String, Vec<(String, Option<f64>)>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let asset = row.get(asset_col).unwrap_or_default().to_owned();
        let date = row.get(date_col).unwrap_or_default().to_owned();
        if asset.is_empty() || date.is_empty() {
            return Err(IoError::Malformed(format!("row {}: empty date or asset_id", i + 2)));
        }
        let value = parse_cell(row.get(close_col).unwrap_or_default(), i + 2, "close")?;
        let entry = series.entry(asset.clone()).or_insert_with(|| {
            order.push(asset.clone());
            Vec::new()
        });
        if let Some((last, _)) = entry.last() {
            if *last >= date {
                return Err(IoError::Malformed(format!("asset `{asset}`: date `{date}` does not follow `{last}`")));
            }
        }
        entry.push((date, value));
    }
    let dates: Vec<String> =
        series.values().flat_map(|s| s.iter().map(|(d, _)| d.clone())).collect::<BTreeSet<_>>().into_iter().collect();
    let cells = order
        .iter()
        .map(|asset| {
            let by_date: BTreeMap<&str, Option<f64>> = series[asset].iter().map(|(d, v)| (d.as_str(), *v)).collect();
            dates.iter().map(|d| by_date.get(d.as_str()).copied().flatten()).collect()
        })
        .collect();
    Ok(RawTable { assets: order, dates, cells })
}

/// Drops short-history assets, trims the calendar to the span all remaining
/// assets cover, then drops assets with holes inside it.
/// Asset ids, dates and `[asset][date]` values that survived, plus the report.
type Cleaned = (Vec<String>, Vec<String>, Vec<Vec<f64>>, LoadReport);

fn apply_missing_policy(raw: RawTable, min_observations: usize) -> Result<Cleaned> {
    let mut report = LoadReport::default();
    let mut kept: Vec<usize> = Vec::new();
    for (a, cells) in raw.cells.iter().enumerate() {
        if cells.iter().filter(|c| c.is_some()).count() < min_observations {
            report.short_history.push(raw.assets[a].clone());
        } else {
            kept.push(a);
        }
    }
    if kept.is_empty() {
        return Err(IoError::Malformed("no asset has enough history".into()));
    }
    let first = kept.iter().map(|&a| raw.cells[a].iter().position(Option::is_some).unwrap()).max().unwrap();
    let last = kept.iter().map(|&a| raw.cells[a].iter().rposition(Option::is_some).unwrap()).min().unwrap();
    if first > last {
        return Err(IoError::Malformed("assets share no common date span".into()));
    }
    report.dropped_dates = raw.dates[..first].iter().chain(&raw.dates[last + 1..]).cloned().collect();
    let mut assets = Vec::new();
    let mut rows = Vec::new();
    for a in kept {
        let span = &raw.cells[a][first..=last];
        if span.iter().any(Option::is_none) {
            report.gaps.push(raw.assets[a].clone());
            continue;
        }
        assets.push(raw.assets[a].clone());
        rows.push(span.iter().map(|c| c.unwrap()).collect());
    }
    if assets.is_empty() {
        return Err(IoError::Malformed("empty universe after dropping assets with gaps".into()));
    }
    Ok((assets, raw.dates[first..=last].to_vec(), rows, report))
}

/// A loaded universe ready for snapshotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub asset_ids: Vec<String>,
    /// `period_labels[j]` names the period whose gross return is `relatives[.][j]`.
    pub period_labels: Vec<String>,
    pub relatives: Vec<Vec<f64>>,
    pub report: LoadReport,
}

pub fn load_csv<R: Read>(reader: R, layout: Layout, values: Values, lookback: usize) -> Result<Loaded> {
    let raw = match layout {
        Layout::Wide => read_wide(reader)?,
        Layout::Long => read_long(reader)?,
    };
    if raw.dates.len() < 2 {
        return Err(IoError::Malformed("need at least two date rows".into()));
    }
    // prices need one extra row to produce lookback + 1 returns
    let min_observations = match values {
        Values::Prices => lookback + 2,
        Values::GrossReturns | Values::PercentReturns => lookback + 1,
    };
    let (assets, dates, rows, report) = apply_missing_policy(raw, min_observations)?;
    let (period_labels, relatives) = match values {
        Values::Prices => {
            let table = PriceTable::new(assets.clone(), dates.clone(), rows)?;
            (dates[1..].to_vec(), table.to_relative_returns().relatives().to_vec())
        }
        Values::GrossReturns => (dates, rows),
        Values::PercentReturns => (dates, rows.into_iter().map(|r| r.into_iter().map(|x| 1.0 + x / 100.0).collect()).collect()),
    };
    // validates positivity of relatives
    ReturnMatrix::from_relatives(relatives.clone())?;
    Ok(Loaded { asset_ids: assets, period_labels, relatives, report })
}

pub fn load_csv_file(path: &Path, layout: Layout, values: Values, lookback: usize) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| IoError::Open(path.display().to_string(), e))?;
    load_csv(BufReader::new(file), layout, values, lookback)
}

pub const SNAPSHOT_FORMAT: &str = "efs-market-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Versioned JSON form of a loaded universe. Normalized prices are stored
/// alongside the relatives they derive from so the file is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub values: Values,
    pub asset_ids: Vec<String>,
    pub period_labels: Vec<String>,
    pub relatives: Vec<Vec<f64>>,
    pub normalized_prices: Vec<Vec<f64>>,
    pub report: LoadReport,
}

impl Snapshot {
    pub fn new(loaded: Loaded, values: Values) -> Result<Self> {
        let matrix = ReturnMatrix::from_relatives(loaded.relatives.clone())?;
        Ok(Self {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            values,
            asset_ids: loaded.asset_ids,
            period_labels: loaded.period_labels,
            normalized_prices: matrix.to_normalized_prices().normalized().to_vec(),
            relatives: loaded.relatives,
            report: loaded.report,
        })
    }

    pub fn market(&self, lookback: usize) -> Result<MarketData> {
        let matrix = ReturnMatrix::from_relatives(self.relatives.clone())?;
        Ok(MarketData::from_returns(self.asset_ids.clone(), self.period_labels.clone(), matrix, lookback)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::Open(path.display().to_string(), e))?;
        let snap: Snapshot = serde_json::from_str(&text)?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(IoError::Malformed(format!(
                "unsupported snapshot `{}` version {} (expected `{SNAPSHOT_FORMAT}` version {SNAPSHOT_VERSION})",
                snap.format, snap.version
            )));
        }
        Ok(snap)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path).map_err(|e| IoError::Open(path.display().to_string(), e))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }
}
