//! Plot-ready CSV exports: wealth curves, the factor-count sweep and the
//! factor-contribution heatmap.

use std::collections::BTreeSet;
use std::path::Path;

use efs_core::evolution::{backtest_library, ledger_metrics, BacktestLedger, EvolutionConfig};
use efs_core::market::MarketData;
use efs_core::seeds::FactorRecord;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::formats::{read_ledger_csv, read_ledger_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ReportMode {
    WealthCurve,
    FactorSweep,
    ScoreHeatmap,
}

/// Date and portfolio value per step of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    pub points: Vec<(String, f64)>,
}

/// Reads the wealth path from a ledger in either JSON or CSV form.
pub fn read_curve(path: &Path, name: &str) -> Result<Curve> {
    let points = if path.extension().is_some_and(|e| e == "csv") {
        read_ledger_csv(path)?.into_iter().map(|r| (r.date, r.portfolio_value)).collect()
    } else {
        read_ledger_json(path)?.rows.into_iter().map(|r| (r.date, r.portfolio_value)).collect()
    };
    Ok(Curve { name: name.into(), points })
}

/// Column names for a set of ledger paths: the parent directory name when
/// distinct, else the file stem, suffixed when still ambiguous.
pub fn curve_names(paths: &[&Path]) -> Vec<String> {
    let pick = |p: &Path, use_dir: bool| -> String {
        let part = if use_dir { p.parent().and_then(|d| d.file_name()) } else { p.file_stem() };
        part.map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "ledger".into())
    };
    let dirs: Vec<String> = paths.iter().map(|p| pick(p, true)).collect();
    let base = if dirs.iter().collect::<BTreeSet<_>>().len() == dirs.len() {
        dirs
    } else {
        paths.iter().map(|p| pick(p, false)).collect()
    };
    let mut seen = BTreeSet::new();
    base.into_iter()
        .enumerate()
        .map(|(i, n)| if seen.insert(n.clone()) { n } else { format!("{n}_{i}") })
        .collect()
}

/// `date,<strategy>...`; all curves must share the same dates.
pub fn wealth_curve_csv(curves: &[Curve]) -> Result<String> {
    let first = curves.first().ok_or_else(|| IoError::Malformed("no ledgers given".into()))?;
    for c in curves {
        let same = c.points.len() == first.points.len()
            && c.points.iter().zip(&first.points).all(|(a, b)| a.0 == b.0);
        if !same {
            return Err(IoError::Malformed(format!("ledger `{}` covers different dates than `{}`", c.name, first.name)));
        }
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_owned()];
    header.extend(curves.iter().map(|c| c.name.clone()));
    csv.write_record(&header)?;
    for (i, (date, _)) in first.points.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(curves.iter().map(|c| c.points[i].1.to_string()));
        csv.write_record(&row)?;
    }
    Ok(String::from_utf8(csv.into_inner().map_err(|e| IoError::Io(e.into_error()))?).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub top_factors: usize,
    pub final_value: f64,
    pub cumulative_wealth: f64,
    pub sharpe_ratio: f64,
    pub max_drawdown: f64,
    pub mean_rankic: f64,
}

pub const SWEEP_RANGE: std::ops::RangeInclusive<usize> = 1..=10;

/// Static backtests of `pool` for every composite size in [`SWEEP_RANGE`].
pub fn factor_sweep(data: &MarketData, cfg: &EvolutionConfig, pool: &[FactorRecord]) -> Result<Vec<SweepRow>> {
    SWEEP_RANGE
        .map(|k| {
            let run_cfg = EvolutionConfig { top_factors: k, ..cfg.clone() };
            let out = backtest_library(data, &run_cfg, pool.to_vec())?;
            let m = ledger_metrics(&out.ledger, None);
            Ok(SweepRow {
                top_factors: k,
                final_value: m.final_value,
                cumulative_wealth: m.cumulative_wealth,
                sharpe_ratio: m.sharpe_ratio,
                max_drawdown: m.max_drawdown,
                mean_rankic: m.mean_rankic,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in rows {
        csv.serialize(row)?;
    }
    Ok(String::from_utf8(csv.into_inner().map_err(|e| IoError::Io(e.into_error()))?).expect("csv output is utf-8"))
}

/// Factor-by-step matrix of composite-score contributions; empty cells mark
/// steps where the factor was not selected.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub factors: Vec<String>,
    pub dates: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn score_heatmap(ledger: &BacktestLedger) -> Heatmap {
    let factors: Vec<String> =
        ledger.rows.iter().flat_map(|r| r.factors.iter().map(|f| f.name.clone())).collect::<BTreeSet<_>>().into_iter().collect();
    let dates = ledger.rows.iter().map(|r| r.date.clone()).collect();
    let cells = factors
        .iter()
        .map(|name| {
            ledger
                .rows
                .iter()
                .map(|r| r.factors.iter().find(|f| &f.name == name).map(|f| f.contribution))
                .collect()
        })
        .collect();
    Heatmap { factors, dates, cells }
}

pub fn heatmap_csv(map: &Heatmap) -> Result<String> {
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["factor".to_owned()];
    header.extend(map.dates.iter().cloned());
    csv.write_record(&header)?;
    for (name, row) in map.factors.iter().zip(&map.cells) {
        let mut out = vec![name.clone()];
        out.extend(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        csv.write_record(&out)?;
    }
    Ok(String::from_utf8(csv.into_inner().map_err(|e| IoError::Io(e.into_error()))?).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use efs_core::evolution::{FactorUse, LedgerRow, Phase};

    fn row(step: usize, factors: &[(&str, f64)]) -> LedgerRow {
        LedgerRow {
            step,
            date: format!("d{step}"),
            phase: Phase::Active,
            step_return: 1.0,
            portfolio_value: 1.0 + step as f64,
            baseline_return: 1.0,
            baseline_value: 1.0,
            turnover: 0.0,
            cost: 0.0,
            holdings: vec![],
            factors: factors.iter().map(|(n, c)| FactorUse { name: n.to_string(), contribution: *c }).collect(),
            rankic: None,
            recall: None,
            pool_size: 1,
        }
    }

    #[test]
    fn two_curves_give_three_columns() {
        let a = Curve { name: "a".into(), points: vec![("d0".into(), 1.0), ("d1".into(), 2.0)] };
        let b = Curve { name: "b".into(), points: vec![("d0".into(), 1.0), ("d1".into(), 0.5)] };
        let text = wealth_curve_csv(&[a.clone(), b]).unwrap();
        assert_eq!(text, "date,a,b\nd0,1,1\nd1,2,0.5\n");
        let c = Curve { name: "c".into(), points: vec![("x".into(), 1.0), ("d1".into(), 2.0)] };
        assert!(wealth_curve_csv(&[a, c]).is_err());
    }

    #[test]
    fn heatmap_shape() {
        let ledger = BacktestLedger { rows: vec![row(0, &[]), row(1, &[("f", 0.5), ("g", -0.1)]), row(2, &[("g", 0.2)])] };
        let map = score_heatmap(&ledger);
        assert_eq!(map.factors, ["f", "g"]);
        assert_eq!(map.cells.len(), 2);
        assert!(map.cells.iter().all(|r| r.len() == 3));
        assert_eq!(map.cells[1], vec![None, Some(-0.1), Some(0.2)]);
        assert_eq!(heatmap_csv(&map).unwrap().lines().next().unwrap(), "factor,d0,d1,d2");
    }

    #[test]
    fn names_prefer_directories() {
        let p = [Path::new("runs/a/ledger.json"), Path::new("runs/b/ledger.json")];
        assert_eq!(curve_names(&p), ["a", "b"]);
        let q = [Path::new("x/one.csv"), Path::new("x/two.csv"), Path::new("y/two.csv")];
        assert_eq!(curve_names(&q), ["one", "two", "two_2"]);
    }
}
