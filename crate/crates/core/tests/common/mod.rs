//! Random inputs shared by the property and oracle suites.
#![allow(dead_code)]

use efs_core::dsl::{check_expr, BinaryOp, ExprLimits, FactorExpr, Feature, TsOp, UnaryOp, WindowLen, LEGAL_WINDOWS};
use efs_core::market::{MarketData, ReturnMatrix};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const LOOKBACK: usize = 30;

const CONSTANTS: [f64; 8] = [0.0, 1.0, -1.0, 0.5, 2.0, 100.0, 1e-3, -0.25];

fn leaf<R: Rng>(rng: &mut R) -> FactorExpr {
    match rng.random_range(0..4) {
        0 => FactorExpr::feature(Feature::Prices),
        1 => FactorExpr::feature(Feature::Returns),
        2 => FactorExpr::constant(*CONSTANTS.choose(rng).unwrap()),
        _ => FactorExpr::constant(rng.random_range(-10.0..10.0)),
    }
}

fn node<R: Rng>(rng: &mut R, depth_left: usize, budget: &mut usize) -> FactorExpr {
    if depth_left <= 1 || *budget <= 3 || rng.random_bool(0.25) {
        *budget = budget.saturating_sub(1);
        return leaf(rng);
    }
    *budget -= 1;
    match rng.random_range(0..4) {
        0 => FactorExpr::unary(*UnaryOp::ALL.choose(rng).unwrap(), node(rng, depth_left - 1, budget)),
        1 => {
            let left = node(rng, depth_left - 1, budget);
            let right = node(rng, depth_left - 1, budget);
            FactorExpr::binary(*BinaryOp::ALL.choose(rng).unwrap(), left, right)
        }
        2 => {
            let window = WindowLen::new(*LEGAL_WINDOWS.choose(rng).unwrap()).unwrap();
            FactorExpr::ts(*TsOp::ALL.choose(rng).unwrap(), node(rng, depth_left - 1, budget), window)
        }
        _ => FactorExpr::last(node(rng, depth_left - 1, budget)),
    }
}

/// A grammar-valid tree within the default limits.
pub fn random_expr<R: Rng>(rng: &mut R) -> FactorExpr {
    let limits = ExprLimits::default();
    loop {
        let mut budget = limits.max_nodes;
        let expr = node(rng, limits.max_depth, &mut budget);
        if check_expr(&expr, limits, LOOKBACK).is_ok() {
            return expr;
        }
    }
}

/// A positive price path of `len` steps with the matching gross returns.
/// `returns[k]` is `prices[k] / prices[k - 1]`, the first against a hidden
/// prior price.
pub fn random_window<R: Rng>(rng: &mut R, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut price = rng.random_range(20.0..500.0);
    let mut prices = Vec::with_capacity(len);
    let mut returns = Vec::with_capacity(len);
    let flat = rng.random_bool(0.05);
    for _ in 0..len {
        let gross = if flat { 1.0 } else { 1.0 + rng.random_range(-0.08..0.08) };
        price *= gross;
        prices.push(price);
        returns.push(gross);
    }
    (prices, returns)
}

pub fn random_market<R: Rng>(rng: &mut R, n_assets: usize, n_periods: usize, lookback: usize) -> MarketData {
    let rel: Vec<Vec<f64>> = (0..n_assets)
        .map(|_| (0..n_periods).map(|_| 1.0 + rng.random_range(-0.05..0.05)).collect())
        .collect();
    let ids = (0..n_assets).map(|i| format!("A{i:03}")).collect();
    let labels = (0..n_periods).map(|j| format!("D{j:05}")).collect();
    MarketData::from_returns(ids, labels, ReturnMatrix::from_relatives(rel).unwrap(), lookback).unwrap()
}
