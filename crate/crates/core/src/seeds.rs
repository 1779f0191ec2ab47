//! Initial factor library and the factor record type.
//!
//! Generated names follow `<base>_<window>_v<version>` with window in
//! {3, 7, 14, 21}; seeds use bare `<base>_<window>` names (`momentum_7`,
//! `rsi_14`, `log_return_1`) and count as version 1.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsl::{parse, FactorExpr, WindowLen, LEGAL_WINDOWS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Mutated,
    Crossover,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorName {
    pub base: String,
    pub window: usize,
    /// `None` for bare seed names.
    pub version: Option<u32>,
}

impl FactorName {
    pub fn effective_version(&self) -> u32 {
        self.version.unwrap_or(1)
    }
}

fn split_numeric_suffix<'a>(s: &'a str, marker: &str) -> Option<(&'a str, &'a str)> {
    let idx = s.rfind(marker)?;
    let digits = &s[idx + marker.len()..];
    (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())).then(|| (&s[..idx], digits))
}

/// Parses a factor name into base, window and version.
pub fn parse_factor_name(name: &str) -> Option<FactorName> {
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
        return None;
    }
    if let Some((rest, version)) = split_numeric_suffix(name, "_v") {
        let version: u32 = version.parse().ok()?;
        let (base, window) = split_numeric_suffix(rest, "_")?;
        let window: usize = window.parse().ok()?;
        if version == 0 || base.is_empty() || WindowLen::new(window).is_none() {
            return None;
        }
        return Some(FactorName { base: base.into(), window, version: Some(version) });
    }
    let (base, window) = split_numeric_suffix(name, "_")?;
    if base.is_empty() {
        return None;
    }
    Some(FactorName { base: base.into(), window: window.parse().ok()?, version: None })
}

pub fn versioned_name(base: &str, window: usize, version: u32) -> String {
    format!("{base}_{window}_v{version}")
}

pub fn crossover_name(base_a: &str, base_b: &str, window_b: usize) -> String {
    versioned_name(&format!("{base_a}_comb_{base_b}"), window_b, 1)
}

/// A named, versioned factor and its lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct FactorRecord {
    pub name: String,
    pub expr: FactorExpr,
    pub base_name: String,
    pub version: u32,
    pub origin: Origin,
    pub parents: Vec<String>,
    pub created_step: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    name: String,
    expr: String,
    base_name: String,
    version: u32,
    origin: Origin,
    #[serde(default)]
    parents: Vec<String>,
    created_step: usize,
}

impl TryFrom<RawRecord> for FactorRecord {
    type Error = Error;

    fn try_from(raw: RawRecord) -> Result<Self> {
        let record = FactorRecord {
            expr: parse(&raw.expr)?,
            name: raw.name,
            base_name: raw.base_name,
            version: raw.version,
            origin: raw.origin,
            parents: raw.parents,
            created_step: raw.created_step,
        };
        record.validate()?;
        Ok(record)
    }
}

impl FactorRecord {
    pub fn seed(name: &str, expr: FactorExpr) -> Self {
        let parsed = parse_factor_name(name).expect("seed names are well formed");
        FactorRecord {
            name: name.into(),
            expr,
            base_name: parsed.base,
            version: 1,
            origin: Origin::Seed,
            parents: Vec::new(),
            created_step: 0,
        }
    }

    /// Builds a record from a generated name, deriving base and version.
    pub fn generated(name: &str, expr: FactorExpr, origin: Origin, parents: Vec<String>, created_step: usize) -> Result<Self> {
        let parsed = parse_factor_name(name).ok_or_else(|| Error::Schema(format!("bad factor name `{name}`")))?;
        if parsed.version.is_none() {
            return Err(Error::Schema(format!("generated factor `{name}` needs a _v<version> suffix")));
        }
        let version = parsed.effective_version();
        let record = FactorRecord {
            name: name.into(),
            expr,
            base_name: parsed.base,
            version,
            origin,
            parents,
            created_step,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn window(&self) -> usize {
        parse_factor_name(&self.name).map_or(0, |n| n.window)
    }

    pub fn is_seed(&self) -> bool {
        self.origin == Origin::Seed
    }

    pub fn validate(&self) -> Result<()> {
        let parsed =
            parse_factor_name(&self.name).ok_or_else(|| Error::Schema(format!("bad factor name `{}`", self.name)))?;
        if parsed.base != self.base_name {
            return Err(Error::Schema(format!("base_name `{}` does not match name `{}`", self.base_name, self.name)));
        }
        if parsed.effective_version() != self.version {
            return Err(Error::Schema(format!("version {} does not match name `{}`", self.version, self.name)));
        }
        if self.origin != Origin::Seed && parsed.version.is_none() {
            return Err(Error::Schema(format!("generated factor `{}` needs a _v<version> suffix", self.name)));
        }
        if self.parents.len() > 2 {
            return Err(Error::Schema(format!("`{}` has {} parents", self.name, self.parents.len())));
        }
        if self.origin == Origin::Crossover {
            if self.parents.len() != 2 {
                return Err(Error::Schema(format!("crossover `{}` must have exactly 2 parents", self.name)));
            }
            if self.version != 1 || !self.base_name.contains("_comb_") {
                return Err(Error::Schema(format!("crossover `{}` must be `<a>_comb_<b>_<w>_v1`", self.name)));
            }
        }
        Ok(())
    }
}

fn expr(text: &str) -> FactorExpr {
    parse(text).expect("seed expressions are well formed")
}

/// Per-step price change `p_i - p_{i-1} = p_i * r / (1 + r)` with net return `r`.
const PRICE_CHANGE: &str = "mul(prices, div(returns, add(returns, 1.0)))";

fn windowed(base: &str, w: usize) -> Option<String> {
    let body = match base {
        "mean_return" => format!("ts_mean(returns, {w})"),
        "std_return" => format!("ts_std(returns, {w})"),
        "momentum" => format!("sub(div(last(prices), lag(prices, {w})), 1.0)"),
        "max_drawdown" => format!("ts_drawdown(prices, {w})"),
        "sharpe_ratio" => format!("div(ts_mean(returns, {w}), ts_std(returns, {w}))"),
        "volatility" => format!("ts_std(log(add(returns, 1.0)), {w})"),
        "price_position" => format!(
            "div(sub(last(prices), ts_min(prices, {w})), sub(ts_max(prices, {w}), ts_min(prices, {w})))"
        ),
        "ma" => format!("ts_mean(prices, {w})"),
        "bb_width" => format!("div(mul(2.0, ts_std(prices, {w})), ts_mean(prices, {w}))"),
        "ema_ratio" => format!("div(last(prices), ts_ema(prices, {w}))"),
        _ => return None,
    };
    Some(body)
}

fn rsi_14() -> String {
    let gain = format!("ts_mean(max2({PRICE_CHANGE}, 0.0), 14)");
    let loss = format!("ts_mean(max2(neg({PRICE_CHANGE}), 0.0), 14)");
    // 100 - 100 / (1 + G / L) rewritten so that L = 0 gives 100
    format!("sub(100.0, div(mul(100.0, {loss}), add({gain}, {loss})))")
}

/// Library rows in table order; `None` marks a window-fixed factor.
pub const SEED_BASES: [(&str, Option<usize>); 12] = [
    ("mean_return", None),
    ("std_return", None),
    ("momentum", None),
    ("max_drawdown", None),
    ("sharpe_ratio", None),
    ("volatility", None),
    ("price_position", None),
    ("log_return", Some(1)),
    ("ma", None),
    ("bb_width", None),
    ("ema_ratio", None),
    ("rsi", Some(14)),
];

/// One record per (formula, window); `log_return_1` and `rsi_14` appear once
/// regardless of `windows`.
pub fn seed_factors(windows: &[usize]) -> Result<Vec<FactorRecord>> {
    if windows.is_empty() {
        return Err(Error::Config("seed window set is empty".into()));
    }
    let mut ws: Vec<usize> = windows.to_vec();
    ws.sort_unstable();
    ws.dedup();
    if let Some(bad) = ws.iter().find(|&&w| !LEGAL_WINDOWS.contains(&w)) {
        return Err(Error::Config(format!("illegal seed window {bad}")));
    }
    let mut out = Vec::new();
    for (base, fixed) in SEED_BASES {
        match fixed {
            Some(1) => out.push(FactorRecord::seed("log_return_1", expr("last(log(add(returns, 1.0)))"))),
            Some(_) => out.push(FactorRecord::seed("rsi_14", expr(&rsi_14()))),
            None => {
                for &w in &ws {
                    let body = windowed(base, w).expect("every windowed base has a body");
                    out.push(FactorRecord::seed(&format!("{base}_{w}"), expr(&body)));
                }
            }
        }
    }
    Ok(out)
}

pub fn all_seed_factors() -> Vec<FactorRecord> {
    seed_factors(&LEGAL_WINDOWS).expect("legal windows")
}

/// Stable textual identity of an expression, used for structural dedup.
pub fn structural_key(expr: &FactorExpr) -> String {
    expr.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{check_expr, evaluate, ExprLimits};
    use crate::market::WindowRef;
    use alloc::vec;

    #[test]
    fn twelve_records_for_one_window() {
        let seeds = seed_factors(&[14]).unwrap();
        assert_eq!(seeds.len(), 12);
        let names: Vec<&str> = seeds.iter().map(|s| s.name.as_str()).collect();
        assert!(names.contains(&"log_return_1"));
        assert!(names.contains(&"rsi_14"));
        assert!(names.contains(&"bb_width_14"));
        assert_eq!(all_seed_factors().len(), 10 * 4 + 2);
        for s in all_seed_factors() {
            s.validate().unwrap();
            check_expr(&s.expr, ExprLimits::default(), 30).unwrap();
        }
    }

    #[test]
    fn momentum_arithmetic() {
        let m = seed_factors(&[7]).unwrap().into_iter().find(|s| s.name == "momentum_7").unwrap();
        let mut prices = vec![100.0; 30];
        prices[29] = 121.0;
        prices[22] = 110.0;
        let returns = vec![1.0; 30];
        let v = evaluate(&m.expr, WindowRef { prices: &prices, returns: &returns });
        assert!((v - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rsi_of_rising_prices_is_100() {
        let rsi = seed_factors(&[14]).unwrap().into_iter().find(|s| s.name == "rsi_14").unwrap();
        let prices: Vec<f64> = (0..30).map(|i| 100.0 * libm::pow(1.01, i as f64)).collect();
        let returns = vec![1.01; 30];
        let v = evaluate(&rsi.expr, WindowRef { prices: &prices, returns: &returns });
        assert!((v - 100.0).abs() < 1e-9);
    }

    #[test]
    fn flat_window_sharpe_is_zero() {
        let sharpe = seed_factors(&[7]).unwrap().into_iter().find(|s| s.name == "sharpe_ratio_7").unwrap();
        let prices: Vec<f64> = (0..30).map(|i| 100.0 * libm::pow(1.002, i as f64)).collect();
        let returns = vec![1.002; 30];
        assert_eq!(evaluate(&sharpe.expr, WindowRef { prices: &prices, returns: &returns }), 0.0);
    }

    #[test]
    fn name_grammar() {
        assert_eq!(
            parse_factor_name("momentum_7_v3"),
            Some(FactorName { base: "momentum".into(), window: 7, version: Some(3) })
        );
        assert_eq!(
            parse_factor_name("breakout_comb_meanrevert_21_v1"),
            Some(FactorName { base: "breakout_comb_meanrevert".into(), window: 21, version: Some(1) })
        );
        assert_eq!(parse_factor_name("rsi_14").unwrap().base, "rsi");
        assert_eq!(parse_factor_name("log_return_1").unwrap().window, 1);
        assert!(parse_factor_name("momentum_5_v1").is_none());
        assert!(parse_factor_name("momentum_7_v0").is_none());
        assert!(parse_factor_name("Momentum_7_v1").is_none());
        assert!(parse_factor_name("momentum").is_none());
        assert!(parse_factor_name("_7_v1").is_none());
        assert_eq!(crossover_name("momentum", "sharpe_ratio", 14), "momentum_comb_sharpe_ratio_14_v1");
    }

    #[test]
    fn crossover_needs_two_parents() {
        let e = parse("last(prices)").unwrap();
        let ok = FactorRecord::generated(
            "a_comb_b_7_v1",
            e.clone(),
            Origin::Crossover,
            vec!["a_7".into(), "b_7".into()],
            3,
        );
        assert!(ok.is_ok());
        let bad = FactorRecord::generated("a_comb_b_7_v1", e.clone(), Origin::Crossover, vec!["a_7".into()], 3);
        assert!(matches!(bad, Err(Error::Schema(_))));
        let bad = FactorRecord::generated("a_comb_b_7_v2", e, Origin::Crossover, vec!["a".into(), "b".into()], 3);
        assert!(matches!(bad, Err(Error::Schema(_))));
    }
}
