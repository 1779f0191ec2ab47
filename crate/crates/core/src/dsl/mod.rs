//! Factor expression language.
//!
//! A factor is a tree over two features (`prices`, `returns`), real constants,
//! unary and binary arithmetic, rolling time-series operators and `last`.
//! Every node evaluates to either a scalar or a series aligned on the current
//! step; the root is reduced to its last element. Undefined arithmetic (log of
//! a non-positive value, division by a near-zero denominator, overflow) yields
//! 0, so evaluation is total.
//!
//! Text form is prefix/functional, for example
//! `sub(div(last(prices), ts_mean(prices, 7)), 1.0)`.

mod ast;
mod eval;
mod parse;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use ast::{BinaryOp, FactorExpr, Feature, TsOp, UnaryOp, WindowLen, LEGAL_WINDOWS};
pub use eval::{evaluate, DIV_EPSILON};

pub use parse::{parse, parse_with_limits, ParseError, ParseErrorKind};

use crate::market::WindowRef;

/// Structural bounds on expression trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExprLimits {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for ExprLimits {
    fn default() -> Self {
        Self { max_depth: 12, max_nodes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprViolation {
    TooDeep { depth: usize, max: usize },
    TooManyNodes { nodes: usize, max: usize },
    WindowExceedsLookback { window: usize, lookback: usize },
}

impl core::fmt::Display for ExprViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExprViolation::TooDeep { depth, max } => write!(f, "depth {depth} exceeds {max}"),
            ExprViolation::TooManyNodes { nodes, max } => write!(f, "{nodes} nodes exceed {max}"),
            ExprViolation::WindowExceedsLookback { window, lookback } => {
                write!(f, "window {window} exceeds lookback {lookback}")
            }
        }
    }
}

/// Checks the tree invariants that parsing alone cannot know about
/// (the lookback length) or that hold for trees built in code.
pub fn check_expr(expr: &FactorExpr, limits: ExprLimits, lookback: usize) -> Result<(), ExprViolation> {
    let depth = expr.depth();
    if depth > limits.max_depth {
        return Err(ExprViolation::TooDeep { depth, max: limits.max_depth });
    }
    let nodes = expr.node_count();
    if nodes > limits.max_nodes {
        return Err(ExprViolation::TooManyNodes { nodes, max: limits.max_nodes });
    }
    if let Some(w) = expr.windows().into_iter().find(|w| w.get() > lookback) {
        return Err(ExprViolation::WindowExceedsLookback { window: w.get(), lookback });
    }
    Ok(())
}

/// Raw or normalized factor outputs for every asset at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScoreRow {
    pub factor_name: String,
    pub t: usize,
    pub values: Vec<f64>,
}

/// Evaluates `expr` on one window per asset, in asset order.
pub fn evaluate_cross_section<'a, I>(expr: &FactorExpr, factor_name: &str, t: usize, windows: I) -> FactorScoreRow
where
    I: IntoIterator<Item = WindowRef<'a>>,
{
    FactorScoreRow {
        factor_name: factor_name.into(),
        t,
        values: windows.into_iter().map(|w| evaluate(expr, w)).collect(),
    }
}

/// Cross-sectional min-max map onto `[-1, 1]`; a constant row maps to zeros.
pub fn normalize_scores(row: &FactorScoreRow) -> FactorScoreRow {
    FactorScoreRow { factor_name: row.factor_name.clone(), t: row.t, values: normalize_values(&row.values) }
}

pub fn normalize_values(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) || !range.is_finite() {
        return alloc::vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|&x| {
            let y = 2.0 * (x - min) / range - 1.0;
            y.clamp(-1.0, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn window<'a>(prices: &'a [f64], returns: &'a [f64]) -> WindowRef<'a> {
        WindowRef { prices, returns }
    }

    fn rising(len: usize) -> (Vec<f64>, Vec<f64>) {
        let prices: Vec<f64> = (0..len).map(|i| 100.0 + i as f64).collect();
        let mut returns = vec![1.0];
        returns.extend(prices.windows(2).map(|p| p[1] / p[0]));
        (prices, returns)
    }

    #[test]
    fn parse_single_node() {
        let e = parse("last(returns)").unwrap();
        assert_eq!(e, FactorExpr::last(FactorExpr::feature(Feature::Returns)));
    }

    #[test]
    fn illegal_window_reports_value() {
        let err = parse("ts_mean(prices, 5)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::IllegalWindow("5".into()));
        assert!(err.to_string().contains("illegal window 5"));
        assert!(parse("ts_mean(prices, 7.5)").is_err());
        assert!(parse("ts_mean(prices, 7)").is_ok());
    }

    #[test]
    fn five_node_tree() {
        let e = parse("div(ts_std(returns,14), ts_mean(returns,14))").unwrap();
        assert_eq!(e.node_count(), 5);
        assert_eq!(e.depth(), 3);
    }

    #[test]
    fn unknown_operator_and_syntax_errors() {
        let err = parse("volume").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownOperator("volume".into()));
        let err = parse("add(prices returns)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Expected("`,`"));
        assert_eq!(err.position, 11);
        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::Empty);
        assert_eq!(parse("last(prices) x").unwrap_err().kind, ParseErrorKind::TrailingInput);
        assert!(matches!(parse("add(1.0,").unwrap_err().kind, ParseErrorKind::UnexpectedEnd));
    }

    #[test]
    fn depth_and_node_limits() {
        let mut text = "prices".to_string();
        for _ in 0..11 {
            text = alloc::format!("neg({text})");
        }
        let e = parse(&text).unwrap();
        assert_eq!(e.depth(), 12);
        assert_eq!(parse(&e.canonical()).unwrap(), e);
        let deeper = alloc::format!("neg({text})");
        assert_eq!(parse(&deeper).unwrap_err().kind, ParseErrorKind::DepthOverflow(12));

        // 65 nodes, depth 7
        let mut wide = "1.0".to_string();
        for _ in 0..32 {
            wide = alloc::format!("add({wide}, 1.0)");
        }
        let limits = ExprLimits { max_depth: 64, max_nodes: 64 };
        assert_eq!(parse_with_limits(&wide, limits).unwrap_err().kind, ParseErrorKind::TooManyNodes(64));
    }

    #[test]
    fn canonical_print() {
        assert_eq!(FactorExpr::constant(1.0).canonical(), "1.0");
        let e = parse("sub( div(last(prices),lag(prices,21)) ,1)").unwrap();
        let once = e.canonical();
        assert_eq!(once, "sub(div(last(prices), lag(prices, 21)), 1.0)");
        assert_eq!(parse(&once).unwrap().canonical(), once);
        assert_eq!(parse("div_safe(1, ts_delta(prices, 3))").unwrap().canonical(), "div(1.0, delta(prices, 3))");
        for c in [1e-7, -0.0, 1e21, 0.1, -2.5] {
            let e = FactorExpr::constant(c);
            assert_eq!(parse(&e.canonical()).unwrap(), e);
        }
    }

    #[test]
    fn projection_and_momentum() {
        let mut prices: Vec<f64> = (0..30).map(|i| 90.0 + i as f64 * 0.5).collect();
        prices[29] = 105.2;
        let returns = vec![1.0; 30];
        let e = parse("last(prices)").unwrap();
        assert_eq!(evaluate(&e, window(&prices, &returns)), 105.2);

        prices[29] = 110.0;
        prices[29 - 21] = 100.0;
        let m = parse("sub(div(last(prices), lag(prices,21)),1)").unwrap();
        assert!((evaluate(&m, window(&prices, &returns)) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn undefined_arithmetic_is_neutral() {
        let (p, r) = rising(30);
        let w = window(&p, &r);
        assert_eq!(evaluate(&parse("log(-1.0)").unwrap(), w), 0.0);
        assert_eq!(evaluate(&parse("div(1.0, 0.0)").unwrap(), w), 0.0);
        assert_eq!(evaluate(&parse("mul(1e300, 1e300)").unwrap(), w), 0.0);
        assert_eq!(evaluate(&parse("sqrt_abs(-4.0)").unwrap(), w), 2.0);
        // nested 21-windows leave too few observations: empty series -> 0
        assert_eq!(evaluate(&parse("ts_mean(ts_mean(prices, 21), 21)").unwrap(), w), 0.0);
    }

    #[test]
    fn root_series_reduces_to_last() {
        let (p, r) = rising(30);
        let w = window(&p, &r);
        assert_eq!(evaluate(&parse("prices").unwrap(), w), 129.0);
        assert_eq!(evaluate(&parse("ts_sum(2.0, 7)").unwrap(), w), 14.0);
        assert_eq!(evaluate(&parse("delta(prices, 7)").unwrap(), w), 7.0);
        assert_eq!(evaluate(&parse("ts_argmax(prices, 7)").unwrap(), w), 0.0);
        assert_eq!(evaluate(&parse("ts_argmax(neg(prices), 7)").unwrap(), w), 1.0);
        assert_eq!(evaluate(&parse("ts_rank(prices, 7)").unwrap(), w), 1.0);
        assert_eq!(evaluate(&parse("ts_drawdown(prices, 7)").unwrap(), w), 0.0);
    }

    #[test]
    fn cross_section_matches_single_asset_loop() {
        let assets: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|a| {
                let p: Vec<f64> = (0..30).map(|i| 100.0 + (a as f64 + 1.0) * libm::sin(i as f64 * 0.3)).collect();
                let mut r = vec![1.0];
                r.extend(p.windows(2).map(|x| x[1] / x[0]));
                (p, r)
            })
            .collect();
        let e = parse("div(ts_std(returns, 14), ts_mean(prices, 7))").unwrap();
        let row = evaluate_cross_section(&e, "f", 29, assets.iter().map(|(p, r)| window(p, r)));
        assert_eq!(row.values.len(), 3);
        for (a, (p, r)) in assets.iter().enumerate() {
            assert_eq!(row.values[a].to_bits(), evaluate(&e, window(p, r)).to_bits());
        }

        let c = evaluate_cross_section(&parse("1.0").unwrap(), "c", 0, assets.iter().map(|(p, r)| window(p, r)));
        assert_eq!(c.values, vec![1.0; 3]);
    }

    #[test]
    fn momentum_orders_assets() {
        let up: Vec<f64> = (0..30).map(|i| 100.0 * libm::pow(1.1, i as f64 / 29.0)).collect();
        let down: Vec<f64> = (0..30).map(|i| 100.0 * libm::pow(0.9, i as f64 / 29.0)).collect();
        let ones = vec![1.0; 30];
        let m = parse("sub(div(last(prices), lag(prices, 21)), 1.0)").unwrap();
        let row = evaluate_cross_section(&m, "m", 29, [window(&up, &ones), window(&down, &ones)]);
        assert!(row.values[0] > row.values[1]);
    }

    #[test]
    fn normalize_endpoints() {
        let row = |v: Vec<f64>| FactorScoreRow { factor_name: "f".into(), t: 0, values: v };
        assert_eq!(normalize_scores(&row(vec![0.0, 5.0, 10.0])).values, vec![-1.0, 0.0, 1.0]);
        assert_eq!(normalize_scores(&row(vec![7.0, 7.0, 7.0])).values, vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize_scores(&row(vec![-3.0, 1.0])).values, vec![-1.0, 1.0]);
        assert_eq!(normalize_scores(&row(vec![4.0])).values, vec![0.0]);
    }

    #[test]
    fn check_expr_rejects_long_windows() {
        let e = parse("ts_mean(prices, 21)").unwrap();
        assert!(check_expr(&e, ExprLimits::default(), 30).is_ok());
        assert_eq!(
            check_expr(&e, ExprLimits::default(), 14),
            Err(ExprViolation::WindowExceedsLookback { window: 21, lookback: 14 })
        );
    }

    #[test]
    fn replace_subtree_by_preorder_index() {
        let e = parse("add(ts_mean(prices, 7), last(returns))").unwrap();
        // pre-order: add, ts_mean, prices, last, returns
        let nodes = e.nodes();
        assert_eq!(nodes.len(), 5);
        assert_eq!(*nodes[3], parse("last(returns)").unwrap());
        let r = e.with_replaced(2, &FactorExpr::feature(Feature::Returns));
        assert_eq!(r.canonical(), "add(ts_mean(returns, 7), last(returns))");
        let r = e.with_replaced(4, &FactorExpr::constant(2.0));
        assert_eq!(r.canonical(), "add(ts_mean(prices, 7), last(2.0))");
        assert_eq!(e.with_replaced(0, &FactorExpr::constant(2.0)).canonical(), "2.0");
    }
}
