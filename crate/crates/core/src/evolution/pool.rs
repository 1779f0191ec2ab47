//! Pool bookkeeping: version filtering, pruning and the benchmark gate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::seeds::FactorRecord;

/// What [`filter_factor_versions`] needs to know about one factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VersionEntry<'a> {
    pub name: &'a str,
    pub base_name: &'a str,
    pub version: u32,
    pub created_step: usize,
    /// Quality metric; non-finite values rank last.
    pub metric: f64,
}

impl<'a> VersionEntry<'a> {
    pub fn of(record: &'a FactorRecord, metric: f64) -> Self {
        Self {
            name: &record.name,
            base_name: &record.base_name,
            version: record.version,
            created_step: record.created_step,
            metric,
        }
    }

    fn recency(&self, other: &Self) -> Ordering {
        self.version
            .cmp(&other.version)
            .then(self.created_step.cmp(&other.created_step))
            .then_with(|| self.name.cmp(other.name))
    }
}

fn finite_or_min(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::NEG_INFINITY
    }
}

/// Orders by metric descending, then name ascending.
pub(crate) fn by_metric_desc(a: (&str, f64), b: (&str, f64)) -> Ordering {
    finite_or_min(b.1).total_cmp(&finite_or_min(a.1)).then_with(|| a.0.cmp(b.0))
}

/// Per base name keeps the latest version and the best by metric
/// (one entry when they coincide). Kept names come back in input order.
pub fn filter_factor_versions(entries: &[VersionEntry<'_>]) -> Vec<String> {
    let mut latest: BTreeMap<&str, &VersionEntry<'_>> = BTreeMap::new();
    let mut best: BTreeMap<&str, &VersionEntry<'_>> = BTreeMap::new();
    for e in entries {
        latest
            .entry(e.base_name)
            .and_modify(|cur| {
                if e.recency(cur) == Ordering::Greater {
                    *cur = e;
                }
            })
            .or_insert(e);
        best.entry(e.base_name)
            .and_modify(|cur| {
                let ord = finite_or_min(e.metric).total_cmp(&finite_or_min(cur.metric)).then_with(|| e.recency(cur));
                if ord == Ordering::Greater {
                    *cur = e;
                }
            })
            .or_insert(e);
    }
    let keep: BTreeSet<&str> = latest.values().chain(best.values()).map(|e| e.name).collect();
    let mut seen = BTreeSet::new();
    entries
        .iter()
        .filter(|e| keep.contains(e.name) && seen.insert(e.name))
        .map(|e| e.name.into())
        .collect()
}

/// Prunes `pool` to at most `max_size` records when it is larger. Seeds are
/// always kept; then the `keep_top_n` best non-seed survivors of version
/// filtering; remaining slots go to the most recently created factors.
/// Survivors keep their relative order.
pub fn clean_factor_pool(
    pool: &[FactorRecord],
    metric: &BTreeMap<String, f64>,
    max_size: usize,
    keep_top_n: usize,
) -> Vec<FactorRecord> {
    if pool.len() <= max_size {
        return pool.to_vec();
    }
    let score = |r: &FactorRecord| metric.get(&r.name).copied().unwrap_or(f64::NEG_INFINITY);
    let mut keep: BTreeSet<&str> = pool.iter().filter(|r| r.is_seed()).map(|r| r.name.as_str()).collect();

    let entries: Vec<VersionEntry<'_>> = pool.iter().map(|r| VersionEntry::of(r, score(r))).collect();
    let filtered = filter_factor_versions(&entries);
    let mut top: Vec<&FactorRecord> =
        pool.iter().filter(|r| !r.is_seed() && filtered.contains(&r.name)).collect();
    top.sort_by(|a, b| by_metric_desc((&a.name, score(a)), (&b.name, score(b))));
    for r in top.into_iter().take(keep_top_n) {
        if keep.len() >= max_size {
            break;
        }
        keep.insert(&r.name);
    }

    let mut recent: Vec<&FactorRecord> = pool.iter().filter(|r| !keep.contains(r.name.as_str())).collect();
    recent.sort_by(|a, b| b.created_step.cmp(&a.created_step).then_with(|| a.name.cmp(&b.name)));
    for r in recent {
        if keep.len() >= max_size {
            break;
        }
        keep.insert(&r.name);
    }
    pool.iter().filter(|r| keep.contains(r.name.as_str())).cloned().collect()
}

/// Inputs of the benchmark gate, all measured over the same trailing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateInputs {
    pub candidate_final_value: f64,
    pub candidate_mean_rankic: f64,
    pub baseline_final_value: f64,
    pub pool_median_rankic: f64,
    pub drop_threshold: f64,
}

/// A candidate is dropped only when it trails the scaled 1/N baseline and
/// the pool's median RankIC at the same time.
pub fn benchmark_gate(g: GateInputs) -> bool {
    let under_baseline = g.candidate_final_value < (1.0 + g.drop_threshold) * g.baseline_final_value;
    let under_median = g.candidate_mean_rankic < g.pool_median_rankic;
    !(under_baseline && under_median)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}
