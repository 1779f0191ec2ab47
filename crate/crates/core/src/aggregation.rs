//! Merging search records from independent runs into one stream and a
//! pooled factor library.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{filter_factor_versions, SearchRecord, VersionEntry};
use crate::seeds::{structural_key, FactorRecord};

/// Per-step merge of several runs. Every factor's value, quality and record
/// come from the same source run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRecord {
    pub step: usize,
    pub performance: BTreeMap<String, f64>,
    pub quality: BTreeMap<String, f64>,
    pub expressions: BTreeMap<String, FactorRecord>,
}

/// Aligned record count: the shortest run, then capped by `limit` when it
/// exceeds 1, then scaled by `ratio` when below 1.
pub fn aligned_length(lengths: &[usize], limit: usize, ratio: f64) -> Result<usize> {
    if lengths.is_empty() {
        return Err(Error::Config("aggregation needs at least one run".into()));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(alloc::format!("ratio must be in (0, 1], got {ratio}")));
    }
    let mut len = lengths.iter().copied().min().unwrap_or(0);
    if limit > 1 {
        len = len.min(limit);
    }
    if ratio < 1.0 {
        len = len.min(libm::floor(len as f64 * ratio) as usize);
    }
    Ok(len)
}

fn finite_or_min(x: Option<&f64>) -> f64 {
    match x {
        Some(v) if v.is_finite() => *v,
        _ => f64::NEG_INFINITY,
    }
}

/// Whether a candidate (value, quality, record) replaces the incumbent.
/// Higher value wins, then higher quality; the canonical expression text
/// settles full ties so the merge does not depend on run order.
fn replaces(cand: (f64, f64, &FactorRecord), cur: (f64, f64, &FactorRecord)) -> bool {
    let ord = cand
        .0
        .total_cmp(&cur.0)
        .then(cand.1.total_cmp(&cur.1))
        .then_with(|| cur.2.expr.canonical().cmp(&cand.2.expr.canonical()));
    ord == Ordering::Greater
}

/// Names of `record`'s pool kept by version filtering on final value.
pub fn filtered_names(record: &SearchRecord) -> Vec<String> {
    let entries: Vec<VersionEntry<'_>> = record
        .pool
        .iter()
        .map(|r| VersionEntry::of(r, finite_or_min(record.performance.get(&r.name))))
        .collect();
    filter_factor_versions(&entries)
}

/// Merges one aligned slice of records, one per run.
pub fn merge_step(records: &[&SearchRecord]) -> MergedRecord {
    let mut merged = MergedRecord {
        step: records.iter().map(|r| r.step).min().unwrap_or(0),
        performance: BTreeMap::new(),
        quality: BTreeMap::new(),
        expressions: BTreeMap::new(),
    };
    for record in records {
        for name in filtered_names(record) {
            let Some(factor) = record.pool.iter().find(|r| r.name == name) else { continue };
            let value = finite_or_min(record.performance.get(&name));
            let quality = finite_or_min(record.quality.get(&name));
            let take = match merged.expressions.get(&name) {
                None => true,
                Some(cur) => replaces(
                    (value, quality, factor),
                    (finite_or_min(merged.performance.get(&name)), finite_or_min(merged.quality.get(&name)), cur),
                ),
            };
            if take {
                merged.performance.insert(name.clone(), value);
                merged.quality.insert(name.clone(), quality);
                merged.expressions.insert(name, factor.clone());
            }
        }
    }
    merged
}

/// Truncates every run to the aligned length and merges step by step.
pub fn aggregate_records(runs: &[Vec<SearchRecord>], limit: usize, ratio: f64) -> Result<Vec<MergedRecord>> {
    let lengths: Vec<usize> = runs.iter().map(Vec::len).collect();
    let len = aligned_length(&lengths, limit, ratio)?;
    if len == 0 {
        return Err(Error::EmptyAfterTruncation);
    }
    Ok((0..len)
        .map(|i| {
            let slice: Vec<&SearchRecord> = runs.iter().map(|run| &run[i]).collect();
            merge_step(&slice)
        })
        .collect())
}

/// A structural duplicate dropped from the pooled library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alias {
    pub kept: String,
    pub dropped: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PooledLibrary {
    /// Sorted by name.
    pub factors: Vec<FactorRecord>,
    pub aliases: Vec<Alias>,
}

/// Factors of the last merged record, one per structural key. Among
/// duplicates the lexicographically smallest name is kept.
pub fn pooled_library(merged: &[MergedRecord]) -> PooledLibrary {
    let Some(last) = merged.last() else { return PooledLibrary::default() };
    let mut by_key: BTreeMap<String, &FactorRecord> = BTreeMap::new();
    let mut aliases = Vec::new();
    // expressions iterate in name order, so the first holder of a key is the smallest name
    for factor in last.expressions.values() {
        let key = structural_key(&factor.expr);
        match by_key.get(&key) {
            Some(kept) => aliases.push(Alias { kept: kept.name.clone(), dropped: factor.name.clone() }),
            None => {
                by_key.insert(key, factor);
            }
        }
    }
    let mut factors: Vec<FactorRecord> = by_key.into_values().cloned().collect();
    factors.sort_by(|a, b| a.name.cmp(&b.name));
    PooledLibrary { factors, aliases }
}
