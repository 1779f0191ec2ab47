use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{
    build_prompt, default_min_valid, AttemptLog, AttemptOutcome, FactorGenerator, GenerationRequest,
    GenerationResult, PoolIndex, Prompt, Rejected, Validator,
};
use crate::dsl::parse;
use crate::seeds::{parse_factor_name, FactorRecord, Origin};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

impl core::fmt::Display for TransportError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

/// One request/response exchange with a chat service.
pub trait ChatTransport {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, TransportError>;
}

/// Retrying driver: queries the transport until one response yields at least
/// `min_valid` valid candidates or `max_retries` attempts are used up.
#[derive(Debug, Clone)]
pub struct RemoteGenerator<T> {
    pub transport: T,
    pub max_retries: usize,
    /// Defaults to `ceil(count / 2)`.
    pub min_valid: Option<usize>,
}

impl<T> RemoteGenerator<T> {
    pub fn new(transport: T) -> Self {
        Self { transport, max_retries: 3, min_valid: None }
    }
}

impl<T: ChatTransport> FactorGenerator for RemoteGenerator<T> {
    fn generate(&mut self, req: &GenerationRequest, pool: &[FactorRecord], validator: &Validator) -> GenerationResult {
        let prompt = build_prompt(req);
        let min_valid = self.min_valid.unwrap_or_else(|| default_min_valid(req.count)).min(req.count.max(1));
        let mut log = Vec::new();
        for attempt in 1..=self.max_retries {
            let text = match self.transport.complete(&prompt) {
                Ok(text) => text,
                Err(e) => {
                    log.push(AttemptLog { attempt, outcome: AttemptOutcome::TransportError { message: e.0 } });
                    continue;
                }
            };
            let (candidates, rejected) = accept_response(&text, req, pool, validator);
            let accepted = candidates.len();
            log.push(AttemptLog { attempt, outcome: AttemptOutcome::Parsed { accepted, rejected } });
            if accepted >= min_valid {
                return GenerationResult { candidates, attempts: attempt, success: true, transport_log: log };
            }
        }
        GenerationResult::failed(self.max_retries, log)
    }
}

fn accept_response(
    text: &str,
    req: &GenerationRequest,
    pool: &[FactorRecord],
    validator: &Validator,
) -> (Vec<FactorRecord>, Vec<Rejected>) {
    let mut candidates = Vec::new();
    let mut rejected = Vec::new();
    let Some(entries) = parse_response(text) else {
        rejected.push(Rejected { text: text.chars().take(200).collect(), reason: "no bracketed list".into() });
        return (candidates, rejected);
    };
    let mut index = PoolIndex::new(pool);
    for entry in entries.into_iter().take(req.count.max(1)) {
        let record = match to_record(&entry, pool, &candidates, req.step) {
            Ok(r) => r,
            Err(reason) => {
                rejected.push(Rejected { text: entry, reason });
                continue;
            }
        };
        match validator.validate(&record, &index) {
            Ok(()) => {
                index.insert(&record);
                candidates.push(record);
            }
            Err(why) => rejected.push(Rejected { text: entry, reason: why.reason().into() }),
        }
    }
    (candidates, rejected)
}

fn latest<'a>(records: impl Iterator<Item = &'a FactorRecord>, base: &str, window: Option<usize>) -> Option<&'a FactorRecord> {
    records
        .filter(|r| r.base_name == base && window.is_none_or(|w| r.window() == w))
        .max_by(|a, b| a.version.cmp(&b.version).then_with(|| b.name.cmp(&a.name)))
}

/// Builds a record from a `"name = expr"` entry, inferring lineage from the
/// name against the pool.
fn to_record(entry: &str, pool: &[FactorRecord], accepted: &[FactorRecord], step: usize) -> Result<FactorRecord, String> {
    let (name, body) = entry.split_once('=').ok_or_else(|| String::from("missing `=`"))?;
    let name = name.trim();
    let expr = parse(body.trim()).map_err(|e| format!("parse error: {e}"))?;
    let parsed = parse_factor_name(name).ok_or_else(|| String::from("bad name"))?;
    let known = || pool.iter().chain(accepted);

    if parsed.effective_version() == 1 {
        if let Some((a, b)) = parsed.base.split_once("_comb_") {
            if let (Some(pa), Some(pb)) = (latest(known(), a, None), latest(known(), b, Some(parsed.window))) {
                let parents = vec![pa.name.clone(), pb.name.clone()];
                return FactorRecord::generated(name, expr, Origin::Crossover, parents, step).map_err(|e| e.to_string());
            }
        }
    }
    let parents = latest(known().filter(|r| r.version < parsed.effective_version()), &parsed.base, Some(parsed.window))
        .map(|p| vec![p.name.clone()])
        .unwrap_or_default();
    FactorRecord::generated(name, expr, Origin::Mutated, parents, step).map_err(|e| e.to_string())
}

/// Extracts the quoted strings of the first bracketed list in `text`,
/// ignoring any surrounding prose.
pub fn parse_response(text: &str) -> Option<Vec<String>> {
    let start = text.find('[')?;
    let mut out = Vec::new();
    let mut chars = text[start + 1..].chars();
    loop {
        let c = chars.next()?;
        match c {
            ']' => return Some(out),
            '"' | '\'' => {
                let mut s = String::new();
                loop {
                    match chars.next()? {
                        '\\' => match chars.next()? {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            other => s.push(other),
                        },
                        q if q == c => break,
                        other => s.push(other),
                    }
                }
                out.push(s);
            }
            _ => {}
        }
    }
}
