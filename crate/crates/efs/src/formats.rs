//! On-disk forms of ledgers, metrics, factor pools and checkpoints.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use efs_core::aggregation::{MergedRecord, PooledLibrary};
use efs_core::evolution::{BacktestLedger, LedgerMetrics, SearchRecord};
use efs_core::seeds::FactorRecord;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{IoError, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| IoError::Open(path.display().to_string(), e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| IoError::Open(path.display().to_string(), e))?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line)
                .map_err(|e| IoError::Malformed(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(items)
}

/// Appends search records as they are produced.
pub struct CheckpointWriter {
    out: BufWriter<File>,
}

impl CheckpointWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: create(path)? })
    }

    pub fn append(&mut self, record: &SearchRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        // a crash must leave every completed record readable
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_checkpoints(path: &Path) -> Result<Vec<SearchRecord>> {
    read_jsonl(path)
}

pub fn write_merged(path: &Path, merged: &[MergedRecord]) -> Result<()> {
    write_jsonl(path, merged)
}

pub fn write_pool(path: &Path, pool: &[FactorRecord]) -> Result<()> {
    write_json(path, pool)
}

/// Reads a factor library: a JSON array of records, or a pooled library.
pub fn read_pool(path: &Path) -> Result<Vec<FactorRecord>> {
    let value: serde_json::Value = read_json(path)?;
    let pool: Vec<FactorRecord> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        serde_json::from_value::<PooledLibrary>(value)?.factors
    };
    if pool.is_empty() {
        return Err(IoError::Malformed(format!("{}: factor library is empty", path.display())));
    }
    Ok(pool)
}

pub const LEDGER_COLUMNS: [&str; 7] =
    ["date", "portfolio_value", "baseline_value", "turnover", "cost", "selected_assets", "weights"];

/// Flat CSV form: one row per step, holdings as `;`-joined ids plus a JSON
/// object of weights.
pub fn write_ledger_csv(path: &Path, ledger: &BacktestLedger) -> Result<()> {
    let mut csv = csv::Writer::from_writer(create(path)?);
    csv.write_record(LEDGER_COLUMNS)?;
    for row in &ledger.rows {
        let assets: Vec<&str> = row.holdings.iter().map(|h| h.asset.as_str()).collect();
        let weights: serde_json::Map<String, serde_json::Value> =
            row.holdings.iter().map(|h| (h.asset.clone(), serde_json::Value::from(h.weight))).collect();
        csv.write_record([
            row.date.clone(),
            row.portfolio_value.to_string(),
            row.baseline_value.to_string(),
            row.turnover.to_string(),
            row.cost.to_string(),
            assets.join(";"),
            serde_json::to_string(&weights)?,
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// One parsed row of a ledger CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerCsvRow {
    pub date: String,
    pub portfolio_value: f64,
    pub baseline_value: f64,
    pub turnover: f64,
    pub cost: f64,
    pub selected_assets: Vec<String>,
    pub weights: Vec<(String, f64)>,
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<LedgerCsvRow>> {
    let mut csv = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    if header != LEDGER_COLUMNS {
        return Err(IoError::Malformed(format!("{}: unexpected ledger columns {header:?}", path.display())));
    }
    let num = |s: &str, col: &str| {
        s.parse::<f64>().map_err(|_| IoError::Malformed(format!("{}: bad `{col}` value `{s}`", path.display())))
    };
    let mut rows = Vec::new();
    for record in csv.records() {
        let r = record?;
        let weights: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&r[6])?;
        rows.push(LedgerCsvRow {
            date: r[0].to_owned(),
            portfolio_value: num(&r[1], "portfolio_value")?,
            baseline_value: num(&r[2], "baseline_value")?,
            turnover: num(&r[3], "turnover")?,
            cost: num(&r[4], "cost")?,
            selected_assets: if r[5].is_empty() { Vec::new() } else { r[5].split(';').map(str::to_owned).collect() },
            weights: weights.into_iter().map(|(k, v)| (k, v.as_f64().unwrap_or(f64::NAN))).collect(),
        });
    }
    Ok(rows)
}

pub fn write_ledger_json(path: &Path, ledger: &BacktestLedger) -> Result<()> {
    write_json(path, ledger)
}

pub fn read_ledger_json(path: &Path) -> Result<BacktestLedger> {
    read_json(path)
}

pub const METRIC_COLUMNS: [&str; 9] = [
    "mean_return",
    "std_return",
    "sharpe_ratio",
    "max_drawdown",
    "final_value",
    "mean_rankic",
    "std_rankic",
    "mean_recall@20",
    "std_recall@20",
];

pub fn write_metrics_csv(path: &Path, metrics: &LedgerMetrics) -> Result<()> {
    let mut csv = csv::Writer::from_writer(create(path)?);
    csv.write_record(METRIC_COLUMNS)?;
    let m = metrics;
    csv.write_record(
        [
            m.mean_return,
            m.std_return,
            m.sharpe_ratio,
            m.max_drawdown,
            m.final_value,
            m.mean_rankic,
            m.std_rankic,
            m.mean_recall,
            m.std_recall,
        ]
        .map(|v| v.to_string()),
    )?;
    csv.flush()?;
    Ok(())
}

pub fn write_metrics_json(path: &Path, metrics: &LedgerMetrics) -> Result<()> {
    write_json(path, metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use efs_core::evolution::{Holding, LedgerRow, Phase};

    fn ledger() -> BacktestLedger {
        let row = |step: usize, holdings: Vec<Holding>| LedgerRow {
            step,
            date: format!("2021-01-{:02}", step + 1),
            phase: Phase::Active,
            step_return: 1.01,
            portfolio_value: 1.01f64.powi(step as i32 + 1),
            baseline_return: 1.0,
            baseline_value: 1.0,
            turnover: 0.25,
            cost: 0.0,
            holdings,
            factors: vec![],
            rankic: Some(0.1),
            recall: Some(0.2),
            pool_size: 42,
        };
        BacktestLedger {
            rows: vec![
                row(0, vec![]),
                row(1, vec![Holding { asset: "B,1".into(), weight: 0.25 }, Holding { asset: "A".into(), weight: 0.75 }]),
            ],
        }
    }

    #[test]
    fn ledger_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        let ledger = ledger();
        write_ledger_csv(&path, &ledger).unwrap();
        let rows = read_ledger_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].selected_assets.is_empty());
        assert_eq!(rows[1].selected_assets, ["B,1", "A"]);
        assert_eq!(rows[1].weights, vec![("A".to_owned(), 0.75), ("B,1".to_owned(), 0.25)]);
        assert_eq!(rows[1].portfolio_value, ledger.rows[1].portfolio_value);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("date,portfolio_value,baseline_value,turnover,cost,selected_assets,weights\n"));
    }

    #[test]
    fn json_forms_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.json");
        write_ledger_json(&path, &ledger()).unwrap();
        assert_eq!(read_ledger_json(&path).unwrap(), ledger());
        let pool = efs_core::seeds::all_seed_factors();
        let pool_path = dir.path().join("pool.json");
        write_pool(&pool_path, &pool).unwrap();
        assert_eq!(read_pool(&pool_path).unwrap(), pool);
        write_pool(&pool_path, &[]).unwrap();
        assert!(read_pool(&pool_path).is_err());
    }

    #[test]
    fn metrics_csv_has_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let m = efs_core::evolution::ledger_metrics(&ledger(), None);
        write_metrics_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "mean_return,std_return,sharpe_ratio,max_drawdown,final_value,mean_rankic,std_rankic,mean_recall@20,std_recall@20"
        );
    }
}
