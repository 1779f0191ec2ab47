use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::parse::parse;

/// Window lengths a time-series operator may use.
pub const LEGAL_WINDOWS: [usize; 4] = [3, 7, 14, 21];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowLen(u8);

impl WindowLen {
    pub fn new(len: usize) -> Option<Self> {
        LEGAL_WINDOWS.contains(&len).then_some(Self(len as u8))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = WindowLen> {
        LEGAL_WINDOWS.iter().map(|&w| WindowLen(w as u8))
    }
}

impl fmt::Display for WindowLen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    /// Base-100 normalized closing prices.
    Prices,
    /// Net per-step returns, `p_t / p_{t-1} - 1`.
    Returns,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::Prices => "prices",
            Feature::Returns => "returns",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Abs,
    Log,
    Neg,
    Sign,
    SqrtAbs,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [UnaryOp::Abs, UnaryOp::Log, UnaryOp::Neg, UnaryOp::Sign, UnaryOp::SqrtAbs];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Abs => "abs",
            UnaryOp::Log => "log",
            UnaryOp::Neg => "neg",
            UnaryOp::Sign => "sign",
            UnaryOp::SqrtAbs => "sqrt_abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    /// Division that yields 0 when the denominator is (numerically) zero.
    Div,
    Min2,
    Max2,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 6] =
        [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Min2, BinaryOp::Max2];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Min2 => "min2",
            BinaryOp::Max2 => "max2",
        }
    }
}

/// Rolling operators. `Delta`, `Lag` and `Drawdown` reach back `w` steps and
/// so consume `w + 1` observations; the others consume `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TsOp {
    Sum,
    Mean,
    /// Population standard deviation.
    Std,
    Min,
    Max,
    /// Exponential average with `alpha = 2 / (w + 1)` seeded at the first
    /// observation of the window.
    Ema,
    Delta,
    Lag,
    /// Percentile of the latest value within the window, in `[0, 1]`.
    RankPos,
    /// Most negative running-peak drawdown, `<= 0` for positive series.
    Drawdown,
    /// Steps since the window maximum divided by `w - 1`, in `[0, 1]`.
    ArgmaxRecency,
}

impl TsOp {
    pub const ALL: [TsOp; 11] = [
        TsOp::Sum,
        TsOp::Mean,
        TsOp::Std,
        TsOp::Min,
        TsOp::Max,
        TsOp::Ema,
        TsOp::Delta,
        TsOp::Lag,
        TsOp::RankPos,
        TsOp::Drawdown,
        TsOp::ArgmaxRecency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TsOp::Sum => "ts_sum",
            TsOp::Mean => "ts_mean",
            TsOp::Std => "ts_std",
            TsOp::Min => "ts_min",
            TsOp::Max => "ts_max",
            TsOp::Ema => "ts_ema",
            TsOp::Delta => "delta",
            TsOp::Lag => "lag",
            TsOp::RankPos => "ts_rank",
            TsOp::Drawdown => "ts_drawdown",
            TsOp::ArgmaxRecency => "ts_argmax",
        }
    }

    /// Observations consumed per output value for window length `w`.
    pub fn span(self, w: usize) -> usize {
        match self {
            TsOp::Delta | TsOp::Lag | TsOp::Drawdown => w + 1,
            _ => w,
        }
    }
}

/// A factor expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorExpr {
    Feature(Feature),
    Const(f64),
    Unary(UnaryOp, Box<FactorExpr>),
    Binary(BinaryOp, Box<FactorExpr>, Box<FactorExpr>),
    TimeSeries(TsOp, Box<FactorExpr>, WindowLen),
    /// Final element of a series.
    Last(Box<FactorExpr>),
}

impl FactorExpr {
    pub fn feature(f: Feature) -> Self {
        FactorExpr::Feature(f)
    }

    pub fn constant(value: f64) -> Self {
        FactorExpr::Const(value)
    }

    pub fn unary(op: UnaryOp, child: FactorExpr) -> Self {
        FactorExpr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: FactorExpr, right: FactorExpr) -> Self {
        FactorExpr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn ts(op: TsOp, child: FactorExpr, window: WindowLen) -> Self {
        FactorExpr::TimeSeries(op, Box::new(child), window)
    }

    pub fn last(child: FactorExpr) -> Self {
        FactorExpr::Last(Box::new(child))
    }

    pub fn children(&self) -> Vec<&FactorExpr> {
        match self {
            FactorExpr::Feature(_) | FactorExpr::Const(_) => Vec::new(),
            FactorExpr::Unary(_, c) | FactorExpr::TimeSeries(_, c, _) | FactorExpr::Last(c) => alloc::vec![&**c],
            FactorExpr::Binary(_, l, r) => alloc::vec![&**l, &**r],
        }
    }

    /// Depth of the tree; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().into_iter().map(FactorExpr::depth).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(FactorExpr::node_count).sum::<usize>()
    }

    /// Nodes in pre-order; index 0 is the root.
    pub fn nodes(&self) -> Vec<&FactorExpr> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            let children = node.children();
            stack.extend(children.into_iter().rev());
        }
        out
    }

    /// Every window length used by time-series nodes.
    pub fn windows(&self) -> Vec<WindowLen> {
        self.nodes()
            .into_iter()
            .filter_map(|n| match n {
                FactorExpr::TimeSeries(_, _, w) => Some(*w),
                _ => None,
            })
            .collect()
    }

    /// Copy of the tree with the pre-order node `index` replaced.
    pub fn with_replaced(&self, index: usize, replacement: &FactorExpr) -> FactorExpr {
        let mut counter = 0;
        self.replace_inner(index, replacement, &mut counter)
    }

    fn replace_inner(&self, index: usize, replacement: &FactorExpr, counter: &mut usize) -> FactorExpr {
        let here = *counter;
        *counter += 1;
        if here == index {
            // skip numbering of the replaced subtree
            *counter += self.node_count() - 1;
            return replacement.clone();
        }
        match self {
            FactorExpr::Feature(_) | FactorExpr::Const(_) => self.clone(),
            FactorExpr::Unary(op, c) => FactorExpr::Unary(*op, Box::new(c.replace_inner(index, replacement, counter))),
            FactorExpr::Last(c) => FactorExpr::Last(Box::new(c.replace_inner(index, replacement, counter))),
            FactorExpr::TimeSeries(op, c, w) => {
                FactorExpr::TimeSeries(*op, Box::new(c.replace_inner(index, replacement, counter)), *w)
            }
            FactorExpr::Binary(op, l, r) => {
                let l = l.replace_inner(index, replacement, counter);
                let r = r.replace_inner(index, replacement, counter);
                FactorExpr::Binary(*op, Box::new(l), Box::new(r))
            }
        }
    }

    /// Canonical text form; `parse(&e.canonical()) == Ok(e)`.
    pub fn canonical(&self) -> String {
        alloc::format!("{self}")
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, value: f64) -> fmt::Result {
    // Debug formatting is the shortest representation that round-trips.
    write!(f, "{value:?}")
}

impl fmt::Display for FactorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Iterative to stay safe on arbitrarily deep trees built in code.
        enum Item<'a> {
            Node(&'a FactorExpr),
            Text(&'static str),
            Window(WindowLen),
        }
        let mut stack = alloc::vec![Item::Node(self)];
        while let Some(item) = stack.pop() {
            match item {
                Item::Text(s) => f.write_str(s)?,
                Item::Window(w) => write!(f, "{w}")?,
                Item::Node(node) => match node {
                    FactorExpr::Feature(feat) => f.write_str(feat.name())?,
                    FactorExpr::Const(v) => write_const(f, *v)?,
                    FactorExpr::Unary(op, c) => {
                        write!(f, "{}(", op.name())?;
                        stack.push(Item::Text(")"));
                        stack.push(Item::Node(c));
                    }
                    FactorExpr::Last(c) => {
                        f.write_str("last(")?;
                        stack.push(Item::Text(")"));
                        stack.push(Item::Node(c));
                    }
                    FactorExpr::Binary(op, l, r) => {
                        write!(f, "{}(", op.name())?;
                        stack.push(Item::Text(")"));
                        stack.push(Item::Node(r));
                        stack.push(Item::Text(", "));
                        stack.push(Item::Node(l));
                    }
                    FactorExpr::TimeSeries(op, c, w) => {
                        write!(f, "{}(", op.name())?;
                        stack.push(Item::Text(")"));
                        stack.push(Item::Window(*w));
                        stack.push(Item::Text(", "));
                        stack.push(Item::Node(c));
                    }
                },
            }
        }
        Ok(())
    }
}

impl Serialize for FactorExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FactorExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}
