use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::GenerationRequest;
use crate::dsl::{BinaryOp, TsOp, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

pub const SYSTEM_PROMPT: &str = "\
You are a world-class quantitative researcher specializing in alpha factor design for asset ranking.
Your task is to generate high-quality factor expressions that are evolved versions of the provided factors.

STRICT REQUIREMENTS:
1. Output ONLY a list of quoted strings of the form \"<factor_name> = <expression>\" - no comments or explanations.
2. Each expression MUST:
   - Use only the grammar below; nothing else is executed
   - Read only the features `prices` (base-100 normalized) and `returns` (net per-step returns) over the lookback window
   - Use a window length from {3, 7, 14, 21} for every time-series operator
   - Stay within 12 levels of nesting and 64 nodes
3. Factor name rules: [factor_name_part]_[window_size]_v[version number], the window_size can only be the following value: 3, 7, 14, 21
4. Value of output factor: higher value means better asset; make sure the output value is positively related to the future performance of assets.

GRAMMAR (prefix form):
   expr := number | prices | returns | op(expr) | op(expr, expr) | op(expr, window)
";

fn grammar_ops() -> String {
    let mut out = String::new();
    let unary: Vec<&str> = UnaryOp::ALL.iter().map(|op| op.name()).collect();
    let binary: Vec<&str> = BinaryOp::ALL.iter().map(|op| op.name()).collect();
    let ts: Vec<&str> = TsOp::ALL.iter().map(|op| op.name()).collect();
    let _ = writeln!(out, "   unary: {}, last", unary.join(", "));
    let _ = writeln!(out, "   binary: {}", binary.join(", "));
    let _ = writeln!(out, "   time-series (expr, window): {}", ts.join(", "));
    out
}

const ACTION_SPACE: &str = "
ACTION SPACE:
1. Improve existing factors by mutation:
   - Modifying parameters (e.g., window lengths, constants)
   - Adjusting logic
   - Updating inside operators for factors
2. Improve existing factors by crossover:
   - Combining two existing factors to create a new one if you think they can work together
   - Restart version number from v1 for new factors

IMPROVEMENT CRITERIA:
1. Versioning:
   - if you improve from a given version, increase 1 to version number; the version number can only be an integer like v1, v2, v3
   - if you create a new factor by crossover from two others, restart the version number from v1 and use a name like factor1_comb_factor2_<window>_v1
   - never reuse the name of an existing factor
2. Combined factors should stay simple and easy to understand.

Output example:
[\"momentum_7_v3 = sub(div(last(prices), lag(prices, 14)), 1.0)\",
 \"momentum_comb_sharpe_ratio_14_v1 = mul(ts_mean(returns, 14), div(last(prices), lag(prices, 7)))\"]
";

fn library_section(req: &GenerationRequest) -> String {
    let mut out = String::new();
    for r in &req.library_factors {
        let _ = writeln!(out, "{} = {}", r.name, r.expr);
    }
    out
}

fn generated_section(req: &GenerationRequest) -> String {
    let mut out = String::new();
    for s in req.top_factors.iter().filter(|s| !s.record.is_seed()) {
        let _ = writeln!(out, "{} = {}", s.record.name, s.record.expr);
    }
    out
}

fn performance_section(req: &GenerationRequest) -> String {
    let mut out = String::from("Performance Information:\n");
    let _ = writeln!(out, "Factor | mean_return | std_return | sharpe_ratio | max_drawdown | final_value");
    for s in &req.top_factors {
        let p = &s.perf;
        let _ = writeln!(
            out,
            "{} | {:.5} | {:.5} | {:.5} | {:.5} | {:.5}",
            s.record.name, p.mean_return, p.std_return, p.sharpe_ratio, p.max_drawdown, p.final_value
        );
    }
    out.push_str("\nFactor Quality Information:\n");
    let _ = writeln!(out, "Factor | mean_rankic | std_rankic | mean_recall@20 | std_recall@20");
    for s in &req.top_factors {
        let q = &s.quality;
        let _ = writeln!(
            out,
            "{} | {:.6} | {:.6} | {:.6} | {:.6}",
            s.record.name, q.mean_rankic, q.std_rankic, q.mean_recall, q.std_recall
        );
    }
    out
}

pub fn build_prompt(req: &GenerationRequest) -> Prompt {
    let mut system = String::from(SYSTEM_PROMPT);
    system.push_str(&grammar_ops());
    system.push_str(ACTION_SPACE);

    let mut user = String::from(
        "You are a professional quantitative researcher.\nDesign and optimize alpha factors using ONLY price data.\n",
    );
    let _ = write!(user, "\nExisting Library Factors:\n{}", library_section(req));
    let generated = generated_section(req);
    if !generated.is_empty() {
        let _ = write!(user, "\nPrevious LLM-Generated Factors:\n{generated}");
    }
    if !req.top_factors.is_empty() {
        let _ = write!(user, "\nRecent Performance Metrics:\n{}", performance_section(req));
    }
    let _ = write!(user, "\nGenerate {} new factors.\n", req.count);
    Prompt { system, user }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Forbidden strings found in the prompt as whole tokens. Purely numeric
/// identifiers are skipped because metric tables are full of digits.
pub fn leakage_scan<'a, I>(prompt: &Prompt, forbidden: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut hits = Vec::new();
    for needle in forbidden {
        let trimmed = needle.trim();
        if trimmed.is_empty() || trimmed.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
            continue;
        }
        if contains_token(&prompt.system, trimmed) || contains_token(&prompt.user, trimmed) {
            hits.push(trimmed.into());
        }
    }
    hits
}

fn contains_token(haystack: &str, needle: &str) -> bool {
    let bytes = haystack.as_bytes();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = start == 0 || !is_word_byte(bytes[start - 1]) || !is_word_byte(needle.as_bytes()[0]);
        let after_ok =
            end == bytes.len() || !is_word_byte(bytes[end]) || !is_word_byte(needle.as_bytes()[needle.len() - 1]);
        if before_ok && after_ok {
            return true;
        }
        from = start + 1;
        while !haystack.is_char_boundary(from) {
            from += 1;
        }
    }
    false
}
