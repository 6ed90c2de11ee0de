//! Logit-trace data model: one record per decode step carrying the chosen
//! token's raw logit and the log-sum-exp over the full vocabulary.
//!
//! The on-disk form is line-delimited JSON. Line 1 is a header object, each
//! following line is one step, and an optional final line carries the
//! readout of one extra forward pass after the last generated token:
//!
//! ```text
//! {"format_version":1,"vocab_size":3,"model":"m","temperature":1.0,"prompt_text":"Q","generation_text":"A"}
//! {"i":0,"tok":2,"logit":1.0986,"lse":1.0986,"cs":0,"ce":1}
//! {"trailing":true,"lse":0.5}
//! ```
//!
//! Character offsets count Unicode scalar values, not bytes.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Readouts taken at a single decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step_index: usize,
    pub token_id: u32,
    /// Raw pre-softmax score of the token produced at this step.
    pub chosen_logit: f64,
    /// `log Σ_k exp(logit_k)` over the full vocabulary at this step.
    pub logsumexp: f64,
    pub char_start: usize,
    pub char_end: usize,
    pub top_k: Option<Vec<(u32, f64)>>,
}

impl StepRecord {
    pub fn char_range(&self) -> Range<usize> {
        self.char_start..self.char_end
    }
}

/// Readout of the forward pass after the final generated token.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailingStep {
    pub logsumexp: f64,
    pub top_k: Option<Vec<(u32, f64)>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMetadata {
    pub model: String,
    /// Temperature used at capture. Stored logits are raw regardless.
    pub temperature: f64,
    pub captured_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub prompt_text: String,
    pub generation_text: String,
    pub vocab_size: usize,
    pub steps: Vec<StepRecord>,
    pub trailing_step: Option<TrailingStep>,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of characters in the generation text.
    pub fn generation_chars(&self) -> usize {
        self.generation_text.chars().count()
    }

    /// Slices the generation text by character offsets.
    pub fn generation_slice(&self, range: Range<usize>) -> Option<&str> {
        char_slice(&self.generation_text, range)
    }

    /// True when every step (and the trailing step, if any) records the full
    /// logit vector, so log-sum-exp can be recomputed at any temperature.
    pub fn has_full_logits(&self) -> bool {
        let full = |top_k: &Option<Vec<(u32, f64)>>| {
            top_k.as_ref().is_some_and(|k| k.len() == self.vocab_size)
        };
        self.steps.iter().all(|s| full(&s.top_k))
            && self.trailing_step.as_ref().is_none_or(|t| full(&t.top_k))
    }
}

/// Inclusive token interval `[u, w]` into a trace's steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenSpan {
    pub u: usize,
    pub w: usize,
}

impl TokenSpan {
    pub fn new(u: usize, w: usize) -> Option<Self> {
        (u <= w).then_some(Self { u, w })
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.w - self.u + 1
    }

    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.u..=self.w
    }
}

pub(crate) fn char_slice(text: &str, range: Range<usize>) -> Option<&str> {
    if range.start > range.end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = indices.nth(range.start)?;
    let end = if range.end == range.start {
        start
    } else {
        indices.nth(range.end - range.start - 1)?
    };
    Some(&text[start..end])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    EmptySteps,
    VocabTooSmall,
    NonIncreasingIndex,
    TokenOutOfVocab,
    NonFinite,
    LogitAboveLogsumexp,
    InvertedCharRange,
    CharRangeOutOfText,
    SpanOverlap,
    TopKOutOfVocab,
}

impl ViolationKind {
    pub fn code(self) -> &'static str {
        match self {
            Self::EmptySteps => "empty-steps",
            Self::VocabTooSmall => "vocab-too-small",
            Self::NonIncreasingIndex => "non-increasing-index",
            Self::TokenOutOfVocab => "token-out-of-vocab",
            Self::NonFinite => "non-finite",
            Self::LogitAboveLogsumexp => "logit-above-logsumexp",
            Self::InvertedCharRange => "inverted-char-range",
            Self::CharRangeOutOfText => "char-range-out-of-text",
            Self::SpanOverlap => "span-overlap",
            Self::TopKOutOfVocab => "topk-out-of-vocab",
        }
    }
}

/// One broken invariant. `step` is `None` for trace-level rules; the trailing
/// step is reported at index `steps.len()`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub step: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(k) => write!(f, "{} at step {k}", self.kind.code()),
            None => f.write_str(self.kind.code()),
        }
    }
}

/// Returns every invariant violation, ordered by step then rule.
pub fn validate_trace(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |step: Option<usize>, kind| out.push(Violation { step, kind });

    if trace.steps.is_empty() {
        push(None, ViolationKind::EmptySteps);
    }
    if trace.vocab_size < 2 {
        push(None, ViolationKind::VocabTooSmall);
    }

    let text_chars = trace.generation_chars();
    let vocab = trace.vocab_size as u64;
    let check_top_k = |top_k: &Option<Vec<(u32, f64)>>| -> (bool, bool) {
        let Some(entries) = top_k else {
            return (true, true);
        };
        let in_vocab = entries.iter().all(|&(id, _)| u64::from(id) < vocab);
        let finite = entries.iter().all(|&(_, l)| l.is_finite());
        (in_vocab, finite)
    };

    let mut prev: Option<&StepRecord> = None;
    for (k, step) in trace.steps.iter().enumerate() {
        let at = Some(k);
        if let Some(p) = prev {
            if step.step_index <= p.step_index {
                push(at, ViolationKind::NonIncreasingIndex);
            }
        }
        if u64::from(step.token_id) >= vocab {
            push(at, ViolationKind::TokenOutOfVocab);
        }
        let (topk_in_vocab, topk_finite) = check_top_k(&step.top_k);
        if !step.chosen_logit.is_finite() || !step.logsumexp.is_finite() || !topk_finite {
            push(at, ViolationKind::NonFinite);
        } else if step.chosen_logit > step.logsumexp {
            push(at, ViolationKind::LogitAboveLogsumexp);
        }
        if step.char_start > step.char_end {
            push(at, ViolationKind::InvertedCharRange);
        } else if step.char_end > text_chars {
            push(at, ViolationKind::CharRangeOutOfText);
        }
        if let Some(p) = prev {
            if step.char_start < p.char_end {
                push(at, ViolationKind::SpanOverlap);
            }
        }
        if !topk_in_vocab {
            push(at, ViolationKind::TopKOutOfVocab);
        }
        prev = Some(step);
    }

    if let Some(trailing) = &trace.trailing_step {
        let at = Some(trace.steps.len());
        let (topk_in_vocab, topk_finite) = check_top_k(&trailing.top_k);
        if !trailing.logsumexp.is_finite() || !topk_finite {
            push(at, ViolationKind::NonFinite);
        }
        if !topk_in_vocab {
            push(at, ViolationKind::TopKOutOfVocab);
        }
    }

    out.sort();
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum SpanError {
    #[error("character range {start}..{end} is empty or outside the generation text")]
    InvalidRange { start: usize, end: usize },
    #[error("character range {start}..{end} overlaps no token")]
    NotFound { start: usize, end: usize },
}

/// Maps a half-open character range to the minimal token span covering every
/// token whose character range overlaps it. Partially overlapping tokens are
/// included.
pub fn char_span_to_token_span(trace: &Trace, chars: Range<usize>) -> Result<TokenSpan, SpanError> {
    let (start, end) = (chars.start, chars.end);
    if start >= end || end > trace.generation_chars() {
        return Err(SpanError::InvalidRange { start, end });
    }
    let mut hits = trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.char_start < end && start < s.char_end)
        .map(|(t, _)| t);
    let u = hits.next().ok_or(SpanError::NotFound { start, end })?;
    let w = hits.next_back().unwrap_or(u);
    Ok(TokenSpan { u, w })
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u64 },
    #[error("trace is invalid: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Deserialize)]
struct HeaderLine {
    vocab_size: usize,
    #[serde(default)]
    model: String,
    #[serde(default = "default_temperature")]
    temperature: f64,
    #[serde(default)]
    prompt_text: String,
    generation_text: String,
    #[serde(default)]
    captured_at: Option<String>,
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct StepLine {
    i: usize,
    tok: u32,
    logit: f64,
    lse: f64,
    cs: usize,
    ce: usize,
    #[serde(default)]
    topk: Option<Vec<(u32, f64)>>,
}

#[derive(Deserialize)]
struct TrailingLine {
    lse: f64,
    #[serde(default)]
    topk: Option<Vec<(u32, f64)>>,
}

fn decode_line<T: serde::de::DeserializeOwned>(value: Value, line: usize) -> Result<T, TraceError> {
    serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        match message.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(field) => TraceError::MissingField { line, field: static_field(field) },
            None => TraceError::Malformed { line, message },
        }
    })
}

fn static_field(name: &str) -> &'static str {
    const FIELDS: &[&str] = &["vocab_size", "generation_text", "i", "tok", "logit", "lse", "cs", "ce"];
    FIELDS.iter().find(|f| **f == name).copied().unwrap_or("<unknown>")
}

/// Parses a trace without checking its invariants.
pub fn parse_trace_unchecked<R: BufRead>(reader: R) -> Result<Trace, TraceError> {
    let lines = reader.lines().enumerate().map(|(n, l)| (n + 1, l));
    let mut header: Option<HeaderLine> = None;
    let mut steps = Vec::new();
    let mut trailing: Option<TrailingStep> = None;

    for (line, text) in lines {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| TraceError::Malformed { line, message: e.to_string() })?;
        if !value.is_object() {
            return Err(TraceError::Malformed { line, message: "expected a JSON object".into() });
        }
        if header.is_none() {
            let version = value
                .get("format_version")
                .ok_or(TraceError::MissingField { line, field: "format_version" })?
                .as_u64()
                .ok_or_else(|| TraceError::Malformed {
                    line,
                    message: "format_version must be a non-negative integer".into(),
                })?;
            if version != u64::from(FORMAT_VERSION) {
                return Err(TraceError::VersionMismatch { found: version });
            }
            header = Some(decode_line(value, line)?);
            continue;
        }
        if trailing.is_some() {
            return Err(TraceError::Malformed { line, message: "record after trailing step".into() });
        }
        if value.get("trailing").and_then(Value::as_bool) == Some(true) {
            let t: TrailingLine = decode_line(value, line)?;
            trailing = Some(TrailingStep { logsumexp: t.lse, top_k: t.topk });
        } else {
            let s: StepLine = decode_line(value, line)?;
            steps.push(StepRecord {
                step_index: s.i,
                token_id: s.tok,
                chosen_logit: s.logit,
                logsumexp: s.lse,
                char_start: s.cs,
                char_end: s.ce,
                top_k: s.topk,
            });
        }
    }

    let header = header.ok_or(TraceError::MissingField { line: 1, field: "format_version" })?;
    Ok(Trace {
        prompt_text: header.prompt_text,
        generation_text: header.generation_text,
        vocab_size: header.vocab_size,
        steps,
        trailing_step: trailing,
        metadata: TraceMetadata {
            model: header.model,
            temperature: header.temperature,
            captured_at: header.captured_at,
        },
    })
}

/// Parses and validates a trace. Unknown fields are ignored.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Trace, TraceError> {
    let trace = parse_trace_unchecked(reader)?;
    let violations = validate_trace(&trace);
    if violations.is_empty() {
        Ok(trace)
    } else {
        Err(TraceError::Invalid(violations))
    }
}

pub fn read_trace_file(path: &std::path::Path) -> Result<Trace, TraceError> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

/// Formats a float with 17 significant digits so every value round-trips.
fn num(x: f64) -> String {
    if x == 0.0 {
        // keeps -0.0 distinct
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    format!("{x:.16e}")
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn top_k_json(top_k: &[(u32, f64)]) -> String {
    let items: Vec<String> = top_k.iter().map(|(id, l)| format!("[{id},{}]", num(*l))).collect();
    format!("[{}]", items.join(","))
}

pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    write!(
        out,
        "{{\"format_version\":{FORMAT_VERSION},\"vocab_size\":{},\"model\":{},\"temperature\":{},\"prompt_text\":{},\"generation_text\":{}",
        trace.vocab_size,
        json_str(&trace.metadata.model),
        num(trace.metadata.temperature),
        json_str(&trace.prompt_text),
        json_str(&trace.generation_text),
    )?;
    if let Some(at) = &trace.metadata.captured_at {
        write!(out, ",\"captured_at\":{}", json_str(at))?;
    }
    writeln!(out, "}}")?;
    for s in &trace.steps {
        write!(
            out,
            "{{\"i\":{},\"tok\":{},\"logit\":{},\"lse\":{},\"cs\":{},\"ce\":{}",
            s.step_index,
            s.token_id,
            num(s.chosen_logit),
            num(s.logsumexp),
            s.char_start,
            s.char_end
        )?;
        if let Some(k) = &s.top_k {
            write!(out, ",\"topk\":{}", top_k_json(k))?;
        }
        writeln!(out, "}}")?;
    }
    if let Some(t) = &trace.trailing_step {
        write!(out, "{{\"trailing\":true,\"lse\":{}", num(t.logsumexp))?;
        if let Some(k) = &t.top_k {
            write!(out, ",\"topk\":{}", top_k_json(k))?;
        }
        writeln!(out, "}}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn trace_with_offsets(text: &str, offsets: &[(usize, usize)]) -> Trace {
        Trace {
            prompt_text: "p".into(),
            generation_text: text.into(),
            vocab_size: 10,
            steps: offsets
                .iter()
                .enumerate()
                .map(|(i, &(cs, ce))| StepRecord {
                    step_index: i,
                    token_id: 1,
                    chosen_logit: 0.0,
                    logsumexp: 1.0,
                    char_start: cs,
                    char_end: ce,
                    top_k: None,
                })
                .collect(),
            trailing_step: None,
            metadata: TraceMetadata::default(),
        }
    }

    fn three_tokens() -> Trace {
        trace_with_offsets("Hello big Rome", &[(0, 5), (5, 9), (10, 14)])
    }

    #[test]
    fn exact_alignment() {
        assert_eq!(char_span_to_token_span(&three_tokens(), 10..14), Ok(TokenSpan { u: 2, w: 2 }));
    }

    #[test]
    fn partial_overlap_includes_both_tokens() {
        // [3,7) touches (0,5) and (5,9) but not (10,14)
        assert_eq!(char_span_to_token_span(&three_tokens(), 3..7), Ok(TokenSpan { u: 0, w: 1 }));
    }

    #[test]
    fn gap_is_not_found() {
        assert_eq!(
            char_span_to_token_span(&three_tokens(), 9..10),
            Err(SpanError::NotFound { start: 9, end: 10 })
        );
    }

    #[test]
    fn empty_or_oob_range_rejected() {
        let t = three_tokens();
        assert!(matches!(char_span_to_token_span(&t, 4..4), Err(SpanError::InvalidRange { .. })));
        assert!(matches!(char_span_to_token_span(&t, 12..15), Err(SpanError::InvalidRange { .. })));
    }

    #[test]
    fn overlap_and_non_finite_reported() {
        let mut t = trace_with_offsets("abcdefgh", &[(0, 4), (3, 6), (6, 8)]);
        t.steps[2].logsumexp = f64::NAN;
        let v = validate_trace(&t);
        assert_eq!(
            v,
            vec![
                Violation { step: Some(1), kind: ViolationKind::SpanOverlap },
                Violation { step: Some(2), kind: ViolationKind::NonFinite },
            ]
        );
        assert_eq!(v[0].to_string(), "span-overlap at step 1");
    }

    #[test]
    fn char_slice_handles_multibyte() {
        assert_eq!(char_slice("héllo wörld", 1..4), Some("éll"));
        assert_eq!(char_slice("héllo", 5..5), Some(""));
        assert_eq!(char_slice("héllo", 2..6), None);
    }

    #[test]
    fn one_step_trace_parses() {
        let src = "{\"format_version\":1,\"vocab_size\":3,\"model\":\"m\",\"temperature\":1,\"prompt_text\":\"q\",\"generation_text\":\"x\"}\n\
                   {\"i\":0,\"tok\":1,\"logit\":1.0986,\"lse\":1.0986,\"cs\":0,\"ce\":1,\"extra\":\"ignored\"}\n";
        let t = read_trace(src.as_bytes()).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.vocab_size, 3);
    }

    #[test]
    fn logit_above_lse_rejected() {
        let src = "{\"format_version\":1,\"vocab_size\":3,\"generation_text\":\"x\"}\n\
                   {\"i\":0,\"tok\":1,\"logit\":2.0,\"lse\":1.0,\"cs\":0,\"ce\":1}\n";
        match read_trace(src.as_bytes()) {
            Err(TraceError::Invalid(v)) => assert_eq!(v[0].kind, ViolationKind::LogitAboveLogsumexp),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let src = "{\"format_version\":1,\"vocab_size\":3,\"generation_text\":\"x\"}\n{\"i\":0,\"tok\":1,\n";
        assert!(matches!(read_trace(src.as_bytes()), Err(TraceError::Malformed { line: 2, .. })));
        let src = "{\"format_version\":1,\"vocab_size\":3,\"generation_text\":\"x\"}\n{\"i\":0,\"tok\":1,\"logit\":0,\"cs\":0,\"ce\":1}\n";
        assert!(matches!(
            read_trace(src.as_bytes()),
            Err(TraceError::MissingField { line: 2, field: "lse" })
        ));
        let src = "{\"format_version\":2,\"vocab_size\":3,\"generation_text\":\"x\"}\n";
        assert!(matches!(read_trace(src.as_bytes()), Err(TraceError::VersionMismatch { found: 2 })));
    }

    #[test]
    fn nothing_after_trailing() {
        let src = "{\"format_version\":1,\"vocab_size\":3,\"generation_text\":\"x\"}\n\
                   {\"i\":0,\"tok\":1,\"logit\":0,\"lse\":1,\"cs\":0,\"ce\":1}\n\
                   {\"trailing\":true,\"lse\":1}\n\
                   {\"i\":1,\"tok\":1,\"logit\":0,\"lse\":1,\"cs\":1,\"ce\":1}\n";
        assert!(matches!(read_trace(src.as_bytes()), Err(TraceError::Malformed { line: 4, .. })));
    }
}
