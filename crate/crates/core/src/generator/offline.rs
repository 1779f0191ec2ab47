use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AttemptLog, AttemptOutcome, FactorGenerator, GenerationRequest, GenerationResult, PoolIndex, Rejected, Validator};
use crate::dsl::{BinaryOp, FactorExpr, TsOp, UnaryOp, WindowLen};
use crate::seeds::{crossover_name, parse_factor_name, versioned_name, FactorRecord, Origin};

/// Seeded mutation/crossover engine. Output is a pure function of the
/// request (including its seed) and the pool.
#[derive(Debug, Clone, Copy)]
pub struct OfflineGenerator {
    /// Draws allowed per requested candidate before giving up.
    pub tries_per_candidate: usize,
}

impl Default for OfflineGenerator {
    fn default() -> Self {
        Self { tries_per_candidate: 20 }
    }
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Parameter,
    Operator,
    Crossover,
}

impl FactorGenerator for OfflineGenerator {
    fn generate(&mut self, req: &GenerationRequest, pool: &[FactorRecord], validator: &Validator) -> GenerationResult {
        let parents: Vec<&FactorRecord> = if req.top_factors.is_empty() {
            req.library_factors.iter().collect()
        } else {
            req.top_factors.iter().map(|s| &s.record).collect()
        };
        if parents.is_empty() || req.count == 0 {
            return GenerationResult::failed(0, Vec::new());
        }
        let actions: &[Action] = if parents.len() < 2 {
            &[Action::Parameter, Action::Operator]
        } else {
            &[Action::Parameter, Action::Operator, Action::Crossover]
        };

        let mut rng = ChaCha8Rng::seed_from_u64(req.rng_seed);
        let mut index = PoolIndex::new(pool);
        let mut candidates = Vec::new();
        let mut rejected = Vec::new();
        let budget = req.count * self.tries_per_candidate.max(1);
        for draw in 0..budget {
            if candidates.len() >= req.count {
                break;
            }
            let action = actions[draw % actions.len()];
            let proposal = match action {
                Action::Parameter => {
                    let parent = parents[rng.random_range(0..parents.len())];
                    mutate_parameter(&parent.expr, validator.lookback(), &mut rng)
                        .and_then(|e| mutated(parent, e, &index, req.step))
                }
                Action::Operator => {
                    let parent = parents[rng.random_range(0..parents.len())];
                    mutate_operator(&parent.expr, &mut rng).and_then(|e| mutated(parent, e, &index, req.step))
                }
                Action::Crossover => {
                    let a = rng.random_range(0..parents.len());
                    let mut b = rng.random_range(0..parents.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    crossover(parents[a], parents[b], &mut rng, req.step)
                }
            };
            let Some(record) = proposal else { continue };
            match validator.validate(&record, &index) {
                Ok(()) => {
                    index.insert(&record);
                    candidates.push(record);
                }
                Err(why) => rejected.push(Rejected {
                    text: format!("{} = {}", record.name, record.expr),
                    reason: why.reason().into(),
                }),
            }
        }
        let accepted = candidates.len();
        GenerationResult {
            success: accepted > 0,
            candidates,
            attempts: 1,
            transport_log: vec![AttemptLog { attempt: 1, outcome: AttemptOutcome::Parsed { accepted, rejected } }],
        }
    }
}

/// Window used in generated names: the parent's own if legal, else the
/// largest window in the expression, else the smallest legal window.
fn name_window(record: &FactorRecord) -> usize {
    match parse_factor_name(&record.name) {
        Some(n) if WindowLen::new(n.window).is_some() => n.window,
        _ => record.expr.windows().into_iter().map(WindowLen::get).max().unwrap_or(3),
    }
}

fn next_version(base: &str, window: usize, index: &PoolIndex) -> u32 {
    index
        .names
        .iter()
        .filter_map(|n| parse_factor_name(n))
        .filter(|n| n.base == base && n.window == window)
        .map(|n| n.effective_version())
        .max()
        .unwrap_or(0)
        + 1
}

fn mutated(parent: &FactorRecord, expr: FactorExpr, index: &PoolIndex, step: usize) -> Option<FactorRecord> {
    let window = name_window(parent);
    let name = versioned_name(&parent.base_name, window, next_version(&parent.base_name, window, index));
    FactorRecord::generated(&name, expr, Origin::Mutated, vec![parent.name.clone()], step).ok()
}

fn crossover(a: &FactorRecord, b: &FactorRecord, rng: &mut ChaCha8Rng, step: usize) -> Option<FactorRecord> {
    let a_nodes = a.expr.node_count();
    let b_nodes = b.expr.nodes();
    let at = rng.random_range(0..a_nodes);
    let donor = b_nodes[rng.random_range(0..b_nodes.len())];
    let expr = a.expr.with_replaced(at, donor);
    let name = crossover_name(&a.base_name, &b.base_name, name_window(b));
    FactorRecord::generated(&name, expr, Origin::Crossover, vec![a.name.clone(), b.name.clone()], step).ok()
}

/// Resamples one window or rescales one constant by a factor in `[0.5, 2]`.
fn mutate_parameter(expr: &FactorExpr, lookback: usize, rng: &mut ChaCha8Rng) -> Option<FactorExpr> {
    let nodes = expr.nodes();
    let sites: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n, FactorExpr::TimeSeries(..) | FactorExpr::Const(_)))
        .map(|(i, _)| i)
        .collect();
    if sites.is_empty() {
        return None;
    }
    let at = sites[rng.random_range(0..sites.len())];
    let replacement = match nodes[at] {
        FactorExpr::TimeSeries(op, child, w) => {
            let choices: Vec<WindowLen> = WindowLen::all().filter(|c| *c != *w && c.get() <= lookback).collect();
            if choices.is_empty() {
                return None;
            }
            FactorExpr::TimeSeries(*op, child.clone(), choices[rng.random_range(0..choices.len())])
        }
        FactorExpr::Const(c) => FactorExpr::Const(c * rng.random_range(0.5..=2.0)),
        _ => unreachable!("sites hold only windows and constants"),
    };
    Some(expr.with_replaced(at, &replacement))
}

fn pick_other<T: Copy + PartialEq>(all: &[T], current: T, rng: &mut ChaCha8Rng) -> T {
    let others: Vec<T> = all.iter().copied().filter(|o| *o != current).collect();
    others[rng.random_range(0..others.len())]
}

/// Swaps one operator for another of the same arity class.
fn mutate_operator(expr: &FactorExpr, rng: &mut ChaCha8Rng) -> Option<FactorExpr> {
    let nodes = expr.nodes();
    let sites: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n, FactorExpr::Unary(..) | FactorExpr::Binary(..) | FactorExpr::TimeSeries(..)))
        .map(|(i, _)| i)
        .collect();
    if sites.is_empty() {
        return None;
    }
    let at = sites[rng.random_range(0..sites.len())];
    let replacement = match nodes[at] {
        FactorExpr::Unary(op, c) => FactorExpr::Unary(pick_other(&UnaryOp::ALL, *op, rng), c.clone()),
        FactorExpr::Binary(op, l, r) => FactorExpr::Binary(pick_other(&BinaryOp::ALL, *op, rng), l.clone(), r.clone()),
        FactorExpr::TimeSeries(op, c, w) => FactorExpr::TimeSeries(pick_other(&TsOp::ALL, *op, rng), c.clone(), *w),
        _ => unreachable!("sites hold only operators"),
    };
    Some(expr.with_replaced(at, &replacement))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, ExprLimits};
    use crate::generator::{FactorSummary, PerfSummary, QualitySummary};
    use crate::seeds::all_seed_factors;

    fn summary(record: FactorRecord) -> FactorSummary {
        FactorSummary { record, perf: PerfSummary::default(), quality: QualitySummary::default() }
    }

    fn gen_record(name: &str, expr: &str) -> FactorRecord {
        FactorRecord::generated(name, parse(expr).unwrap(), Origin::Mutated, vec![], 0).unwrap()
    }

    fn request(top: Vec<FactorRecord>, seed: u64) -> GenerationRequest {
        GenerationRequest {
            top_factors: top.into_iter().map(summary).collect(),
            library_factors: all_seed_factors(),
            count: 5,
            rng_seed: seed,
            step: 60,
        }
    }

    #[test]
    fn deterministic_for_same_seed() {
        let v = Validator::new(ExprLimits::default(), 30);
        let pool = all_seed_factors();
        let req = request(pool[..5].to_vec(), 42);
        let a = OfflineGenerator::default().generate(&req, &pool, &v);
        let b = OfflineGenerator::default().generate(&req, &pool, &v);
        assert_eq!(a, b);
        assert_eq!(a.candidates.len(), 5);
        let c = OfflineGenerator::default().generate(&request(pool[..5].to_vec(), 43), &pool, &v);
        assert_ne!(a.candidates, c.candidates);
    }

    #[test]
    fn mutation_bumps_version() {
        let v = Validator::new(ExprLimits::default(), 30);
        let mut pool = all_seed_factors();
        let v2 = gen_record("momentum_7_v2", "sub(div(last(prices), lag(prices, 3)), 1.0)");
        pool.push(v2.clone());
        let req = request(vec![v2], 7);
        let out = OfflineGenerator::default().generate(&req, &pool, &v);
        assert!(!out.candidates.is_empty());
        let first = &out.candidates[0];
        assert_eq!(first.name, "momentum_7_v3");
        assert_eq!(first.parents, vec![alloc::string::String::from("momentum_7_v2")]);
        assert!(out.candidates.iter().all(|c| c.origin != Origin::Crossover));
    }

    #[test]
    fn crossover_names_and_parents() {
        let a = gen_record("momentum_7_v1", "sub(div(last(prices), lag(prices, 7)), 2.0)");
        let b = gen_record("sharpe_ratio_14_v1", "div(ts_mean(returns, 14), ts_std(returns, 7))");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let child = crossover(&a, &b, &mut rng, 3).unwrap();
        assert_eq!(child.name, "momentum_comb_sharpe_ratio_14_v1");
        assert_eq!(child.origin, Origin::Crossover);
        assert_eq!(child.parents.len(), 2);
        assert_eq!(child.created_step, 3);
    }

    #[test]
    fn candidates_pass_validation_and_are_new() {
        let v = Validator::new(ExprLimits::default(), 30);
        let pool = all_seed_factors();
        for seed in 0..20 {
            let out = OfflineGenerator::default().generate(&request(pool[10..16].to_vec(), seed), &pool, &v);
            let mut idx = PoolIndex::new(&pool);
            for c in &out.candidates {
                assert_eq!(v.validate(c, &idx), Ok(()));
                idx.insert(c);
            }
        }
    }
}
