use alloc::vec::Vec;

use super::ast::{BinaryOp, FactorExpr, Feature, TsOp, UnaryOp};
use crate::market::WindowRef;

/// Denominators smaller than this in magnitude make a division undefined.
pub const DIV_EPSILON: f64 = 1e-12;

/// Undefined or non-finite arithmetic collapses to the neutral value 0.
#[inline]
fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn safe_div(num: f64, den: f64) -> f64 {
    if libm::fabs(den) < DIV_EPSILON {
        0.0
    } else {
        finite_or_zero(num / den)
    }
}

enum Value {
    Scalar(f64),
    /// Aligned so that the last element is the current step.
    Series(Vec<f64>),
}

impl Value {
    fn last(&self) -> f64 {
        match self {
            Value::Scalar(x) => *x,
            Value::Series(s) => s.last().copied().unwrap_or(0.0),
        }
    }
}

/// Scalar score of `expr` on one asset's window. Pure and total: never
/// panics, never returns NaN or an infinity.
pub fn evaluate(expr: &FactorExpr, window: WindowRef<'_>) -> f64 {
    let len = window.prices.len().min(window.returns.len());
    finite_or_zero(eval_node(expr, &window, len).last())
}

fn eval_node(expr: &FactorExpr, w: &WindowRef<'_>, len: usize) -> Value {
    match expr {
        FactorExpr::Const(c) => Value::Scalar(finite_or_zero(*c)),
        FactorExpr::Feature(Feature::Prices) => {
            Value::Series(w.prices[w.prices.len() - len..].iter().map(|&p| finite_or_zero(p)).collect())
        }
        FactorExpr::Feature(Feature::Returns) => {
            Value::Series(w.returns[w.returns.len() - len..].iter().map(|&r| finite_or_zero(r - 1.0)).collect())
        }
        FactorExpr::Last(child) => Value::Scalar(eval_node(child, w, len).last()),
        FactorExpr::Unary(op, child) => match eval_node(child, w, len) {
            Value::Scalar(x) => Value::Scalar(apply_unary(*op, x)),
            Value::Series(mut s) => {
                for x in &mut s {
                    *x = apply_unary(*op, *x);
                }
                Value::Series(s)
            }
        },
        FactorExpr::Binary(op, left, right) => {
            let a = eval_node(left, w, len);
            let b = eval_node(right, w, len);
            match (a, b) {
                (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(apply_binary(*op, x, y)),
                (Value::Scalar(x), Value::Series(mut s)) => {
                    for y in &mut s {
                        *y = apply_binary(*op, x, *y);
                    }
                    Value::Series(s)
                }
                (Value::Series(mut s), Value::Scalar(y)) => {
                    for x in &mut s {
                        *x = apply_binary(*op, *x, y);
                    }
                    Value::Series(s)
                }
                (Value::Series(s), Value::Series(t)) => {
                    let n = s.len().min(t.len());
                    let (s, t) = (&s[s.len() - n..], &t[t.len() - n..]);
                    Value::Series(s.iter().zip(t).map(|(&x, &y)| apply_binary(*op, x, y)).collect())
                }
            }
        }
        FactorExpr::TimeSeries(op, child, window) => {
            let series = match eval_node(child, w, len) {
                Value::Scalar(x) => alloc::vec![x; len],
                Value::Series(s) => s,
            };
            Value::Series(rolling(*op, &series, window.get()))
        }
    }
}

fn apply_unary(op: UnaryOp, x: f64) -> f64 {
    let y = match op {
        UnaryOp::Abs => libm::fabs(x),
        UnaryOp::Log => {
            if x > 0.0 {
                libm::log(x)
            } else {
                0.0
            }
        }
        UnaryOp::Neg => -x,
        UnaryOp::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        UnaryOp::SqrtAbs => libm::sqrt(libm::fabs(x)),
    };
    finite_or_zero(y)
}

fn apply_binary(op: BinaryOp, x: f64, y: f64) -> f64 {
    let z = match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => safe_div(x, y),
        BinaryOp::Min2 => x.min(y),
        BinaryOp::Max2 => x.max(y),
    };
    finite_or_zero(z)
}

fn rolling(op: TsOp, x: &[f64], w: usize) -> Vec<f64> {
    let span = op.span(w);
    if x.len() < span {
        return Vec::new();
    }
    x.windows(span).map(|chunk| finite_or_zero(reduce(op, chunk, w))).collect()
}

fn mean(chunk: &[f64]) -> f64 {
    chunk.iter().sum::<f64>() / chunk.len() as f64
}

pub(crate) fn population_std(chunk: &[f64]) -> f64 {
    let m = mean(chunk);
    let var = chunk.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / chunk.len() as f64;
    libm::sqrt(var)
}

fn reduce(op: TsOp, chunk: &[f64], w: usize) -> f64 {
    match op {
        TsOp::Sum => chunk.iter().sum(),
        TsOp::Mean => mean(chunk),
        TsOp::Std => population_std(chunk),
        TsOp::Min => chunk.iter().copied().fold(f64::INFINITY, f64::min),
        TsOp::Max => chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        TsOp::Ema => {
            let alpha = 2.0 / (w as f64 + 1.0);
            let mut ema = chunk[0];
            for &v in &chunk[1..] {
                ema = alpha * v + (1.0 - alpha) * ema;
            }
            ema
        }
        TsOp::Delta => chunk[chunk.len() - 1] - chunk[0],
        TsOp::Lag => chunk[0],
        TsOp::RankPos => {
            let (&latest, rest) = chunk.split_last().unwrap();
            let below = rest.iter().filter(|&&v| v < latest).count() as f64;
            let equal = rest.iter().filter(|&&v| v == latest).count() as f64;
            (below + 0.5 * equal) / rest.len() as f64
        }
        TsOp::Drawdown => {
            let mut peak = chunk[0];
            let mut worst = 0.0f64;
            for &v in chunk {
                peak = peak.max(v);
                worst = worst.min(safe_div(v - peak, peak));
            }
            worst
        }
        TsOp::ArgmaxRecency => {
            let mut best = 0;
            for (i, &v) in chunk.iter().enumerate() {
                if v >= chunk[best] {
                    best = i;
                }
            }
            (chunk.len() - 1 - best) as f64 / (chunk.len() - 1) as f64
        }
    }
}
