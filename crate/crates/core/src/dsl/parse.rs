//! Recursive-descent parser for the prefix expression grammar:
//!
//! ```text
//! expr    := number | feature | call
//! feature := "prices" | "returns"
//! call    := ident "(" expr ")"                 unary ops, last
//!          | ident "(" expr "," expr ")"        binary ops
//!          | ident "(" expr "," window ")"      time-series ops
//! window  := 3 | 7 | 14 | 21
//! ```

use alloc::string::{String, ToString};
use core::fmt;

use super::ast::{BinaryOp, FactorExpr, Feature, TsOp, UnaryOp, WindowLen};
use super::ExprLimits;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedEnd,
    Expected(&'static str),
    UnknownOperator(String),
    IllegalWindow(String),
    InvalidNumber(String),
    DepthOverflow(usize),
    TooManyNodes(usize),
    TrailingInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the input.
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}` at {}", self.position),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input at {}", self.position),
            ParseErrorKind::Expected(what) => write!(f, "expected {what} at {}", self.position),
            ParseErrorKind::UnknownOperator(name) => write!(f, "unknown operator `{name}` at {}", self.position),
            ParseErrorKind::IllegalWindow(w) => write!(f, "illegal window {w} at {}", self.position),
            ParseErrorKind::InvalidNumber(n) => write!(f, "invalid number `{n}` at {}", self.position),
            ParseErrorKind::DepthOverflow(max) => write!(f, "depth overflow (max {max}) at {}", self.position),
            ParseErrorKind::TooManyNodes(max) => write!(f, "too many nodes (max {max}) at {}", self.position),
            ParseErrorKind::TrailingInput => write!(f, "trailing input at {}", self.position),
        }
    }
}

impl core::error::Error for ParseError {}

pub fn parse(text: &str) -> Result<FactorExpr, ParseError> {
    parse_with_limits(text, ExprLimits::default())
}

pub fn parse_with_limits(text: &str, limits: ExprLimits) -> Result<FactorExpr, ParseError> {
    let mut parser = Parser { src: text.as_bytes(), text, pos: 0, nodes: 0, limits };
    parser.skip_ws();
    if parser.pos == parser.src.len() {
        return Err(parser.error(ParseErrorKind::Empty));
    }
    let expr = parser.expr(1)?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.error(ParseErrorKind::TrailingInput));
    }
    Ok(expr)
}

enum Op {
    Unary(UnaryOp),
    Binary(BinaryOp),
    Ts(TsOp),
    Last,
}

fn lookup(name: &str) -> Option<Op> {
    if name == "last" {
        return Some(Op::Last);
    }
    if let Some(op) = UnaryOp::ALL.iter().find(|op| op.name() == name) {
        return Some(Op::Unary(*op));
    }
    if name == "div_safe" {
        return Some(Op::Binary(BinaryOp::Div));
    }
    if let Some(op) = BinaryOp::ALL.iter().find(|op| op.name() == name) {
        return Some(Op::Binary(*op));
    }
    let ts = match name {
        "ts_delta" => Some(TsOp::Delta),
        "ts_lag" => Some(TsOp::Lag),
        _ => TsOp::ALL.iter().copied().find(|op| op.name() == name),
    };
    ts.map(Op::Ts)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    nodes: usize,
    limits: ExprLimits,
}

impl<'a> Parser<'a> {
    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { position: self.pos, kind }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8, what: &'static str) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b) if b == byte => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.error(ParseErrorKind::Expected(what))),
            None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn count_node(&mut self) -> Result<(), ParseError> {
        self.nodes += 1;
        if self.nodes > self.limits.max_nodes {
            return Err(self.error(ParseErrorKind::TooManyNodes(self.limits.max_nodes)));
        }
        Ok(())
    }

    fn expr(&mut self, depth: usize) -> Result<FactorExpr, ParseError> {
        self.skip_ws();
        if depth > self.limits.max_depth {
            return Err(self.error(ParseErrorKind::DepthOverflow(self.limits.max_depth)));
        }
        let start = self.pos;
        match self.peek() {
            None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
            Some(b) if b.is_ascii_digit() || b == b'-' || b == b'+' || b == b'.' => {
                let value = self.number()?;
                if !value.is_finite() {
                    return Err(ParseError {
                        position: start,
                        kind: ParseErrorKind::InvalidNumber(self.text[start..self.pos].to_string()),
                    });
                }
                self.count_node()?;
                Ok(FactorExpr::Const(value))
            }
            Some(b) if b.is_ascii_lowercase() || b == b'_' => {
                let name = self.ident();
                match name {
                    "prices" => {
                        self.count_node()?;
                        return Ok(FactorExpr::Feature(Feature::Prices));
                    }
                    "returns" => {
                        self.count_node()?;
                        return Ok(FactorExpr::Feature(Feature::Returns));
                    }
                    _ => {}
                }
                let Some(op) = lookup(name) else {
                    return Err(ParseError { position: start, kind: ParseErrorKind::UnknownOperator(name.to_string()) });
                };
                self.count_node()?;
                self.expect(b'(', "`(`")?;
                let expr = match op {
                    Op::Last => FactorExpr::last(self.expr(depth + 1)?),
                    Op::Unary(op) => FactorExpr::unary(op, self.expr(depth + 1)?),
                    Op::Binary(op) => {
                        let left = self.expr(depth + 1)?;
                        self.expect(b',', "`,`")?;
                        let right = self.expr(depth + 1)?;
                        FactorExpr::binary(op, left, right)
                    }
                    Op::Ts(op) => {
                        let child = self.expr(depth + 1)?;
                        self.expect(b',', "`,`")?;
                        let window = self.window()?;
                        FactorExpr::ts(op, child, window)
                    }
                };
                self.expect(b')', "`)`")?;
                Ok(expr)
            }
            Some(b) => Err(self.error(ParseErrorKind::UnexpectedChar(b as char))),
        }
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = self.text;
        &text[start..self.pos]
    }

    fn number_token(&mut self) -> &'a str {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-' | b'+')) {
            self.pos += 1;
        }
        let digits = |p: &mut Self| {
            while matches!(p.peek(), Some(b) if b.is_ascii_digit()) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some(b'-' | b'+')) {
                self.pos += 1;
            }
            digits(self);
        }
        let text = self.text;
        &text[start..self.pos]
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let token = self.number_token();
        token.parse::<f64>().map_err(|_| ParseError {
            position: start,
            kind: ParseErrorKind::InvalidNumber(token.to_string()),
        })
    }

    fn window(&mut self) -> Result<WindowLen, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let token = self.number_token();
        if token.is_empty() {
            return Err(self.error(ParseErrorKind::Expected("window length")));
        }
        let illegal = || ParseError { position: start, kind: ParseErrorKind::IllegalWindow(token.to_string()) };
        let value: f64 = token.parse().map_err(|_| illegal())?;
        if value != libm::trunc(value) || !(0.0..=255.0).contains(&value) {
            return Err(illegal());
        }
        WindowLen::new(value as usize).ok_or_else(illegal)
    }
}
