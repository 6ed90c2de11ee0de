//! Exact-answer localization: find the token interval `[u, w]` that carries
//! the answer, either by matching a closed label set or by asking an
//! auxiliary model to quote the answer and validating the quote.

mod client;
pub mod prompt;

use std::ops::Range;

use thiserror::Error;

use crate::exclusion::ExclusionReason;
use crate::trace::{char_span_to_token_span, SpanError, TokenSpan, Trace};

pub use client::{
    decode_completion_response, ClientError, CompletionRequest, ExtractionClient, ExtractionRequest,
    HttpClient, HttpClientConfig, ReplayClient, ReplayParseError,
};
pub use prompt::NO_ANSWER;

pub const MAX_EXTRACTION_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocateMethod {
    Heuristic,
    Extracted,
}

impl LocateMethod {
    pub fn code(self) -> &'static str {
        match self {
            Self::Heuristic => "heuristic",
            Self::Extracted => "extracted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSpan {
    pub span: TokenSpan,
    /// Character range of the matched text inside the generation.
    pub char_range: Range<usize>,
    /// Always equal to the generation text sliced at `char_range`.
    pub answer_text: String,
    pub method: LocateMethod,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Localization {
    Located(AnswerSpan),
    Excluded { reason: ExclusionReason, attempts: u32 },
}

#[derive(Debug, Error, PartialEq)]
pub enum AnswerError {
    #[error("empty label set")]
    EmptyLabels,
    #[error("no label occurs in the generation")]
    NotFound,
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("max_attempts must be in 1..={MAX_EXTRACTION_ATTEMPTS}, got {0}")]
    BadAttempts(u32),
}

fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Start indices (in chars) of every case-insensitive occurrence of `needle`
/// that is not glued to a neighbouring alphanumeric character.
fn occurrences(hay: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    let guard_left = needle[0].is_alphanumeric();
    let guard_right = needle[needle.len() - 1].is_alphanumeric();
    (0..=hay.len() - needle.len())
        .filter(|&s| hay[s..s + needle.len()].iter().zip(needle).all(|(a, b)| a == b))
        .filter(|&s| !(guard_left && s > 0 && hay[s - 1].is_alphanumeric()))
        .filter(|&s| {
            let e = s + needle.len();
            !(guard_right && e < hay.len() && hay[e].is_alphanumeric())
        })
        .collect()
}

/// Locates a closed-set label in the generation. Matching is
/// case-insensitive and respects word boundaries; the longest matching label
/// wins, and among its occurrences the last one.
pub fn heuristic_locate<S: AsRef<str>>(trace: &Trace, labels: &[S]) -> Result<AnswerSpan, AnswerError> {
    if labels.is_empty() {
        return Err(AnswerError::EmptyLabels);
    }
    let hay: Vec<char> = trace.generation_text.chars().map(fold).collect();
    let mut best: Option<(usize, usize)> = None; // (len, start)
    for label in labels {
        let needle: Vec<char> = label.as_ref().trim().chars().map(fold).collect();
        if let Some(&start) = occurrences(&hay, &needle).last() {
            let cand = (needle.len(), start);
            if best.is_none_or(|b| cand > b) {
                best = Some(cand);
            }
        }
    }
    let (len, start) = best.ok_or(AnswerError::NotFound)?;
    let char_range = start..start + len;
    let span = char_span_to_token_span(trace, char_range.clone())?;
    let answer_text = trace.generation_slice(char_range.clone()).unwrap_or_default().to_string();
    Ok(AnswerSpan { span, char_range, answer_text, method: LocateMethod::Heuristic, attempts: 1 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extraction {
    Answer(String),
    NoAnswer,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("empty completion")]
    Empty,
}

/// Asks the client for the short answer. The completion is reduced to its
/// first line, whitespace-trimmed.
pub fn extract_exact_answer(
    question: &str,
    long_answer: &str,
    client: &dyn ExtractionClient,
) -> Result<Extraction, ExtractError> {
    let raw = client.complete(&ExtractionRequest::new(question, long_answer))?;
    let first = raw.trim_start().lines().next().unwrap_or("").trim();
    match first {
        "" => Err(ExtractError::Empty),
        NO_ANSWER => Ok(Extraction::NoAnswer),
        s => Ok(Extraction::Answer(s.to_string())),
    }
}

/// Character range of the last case-sensitive occurrence of `needle`.
fn last_occurrence(text: &str, needle: &str) -> Option<Range<usize>> {
    let byte = text.rfind(needle)?;
    let start = text[..byte].chars().count();
    Some(start..start + needle.chars().count())
}

/// Extract, validate, map; up to `max_attempts` client calls. `NO ANSWER`
/// excludes immediately. Transport failures and invalid quotes each consume
/// one attempt.
pub fn locate_with_retries(
    question: &str,
    trace: &Trace,
    client: &dyn ExtractionClient,
    max_attempts: u32,
) -> Result<Localization, AnswerError> {
    if !(1..=MAX_EXTRACTION_ATTEMPTS).contains(&max_attempts) {
        return Err(AnswerError::BadAttempts(max_attempts));
    }
    for attempt in 1..=max_attempts {
        let answer = match extract_exact_answer(question, &trace.generation_text, client) {
            Ok(Extraction::Answer(a)) => a,
            Ok(Extraction::NoAnswer) => {
                return Ok(Localization::Excluded { reason: ExclusionReason::NoAnswer, attempts: attempt })
            }
            Err(_) => continue,
        };
        let Some(char_range) = last_occurrence(&trace.generation_text, &answer) else {
            continue;
        };
        let Ok(span) = char_span_to_token_span(trace, char_range.clone()) else {
            continue;
        };
        return Ok(Localization::Located(AnswerSpan {
            span,
            char_range,
            answer_text: answer,
            method: LocateMethod::Extracted,
            attempts: attempt,
        }));
    }
    Ok(Localization::Excluded { reason: ExclusionReason::ExtractionFailed, attempts: max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{StepRecord, TraceMetadata};
    use std::sync::atomic::{AtomicU32, Ordering};

    /// Splits on spaces; each token covers a word plus its leading space.
    fn word_trace(text: &str) -> Trace {
        let mut steps = Vec::new();
        let chars: Vec<char> = text.chars().collect();
        let mut start = 0;
        for i in 1..=chars.len() {
            if i == chars.len() || chars[i] == ' ' {
                steps.push(StepRecord {
                    step_index: steps.len(),
                    token_id: 0,
                    chosen_logit: 0.0,
                    logsumexp: 1.0,
                    char_start: start,
                    char_end: i,
                    top_k: None,
                });
                start = i;
            }
        }
        Trace {
            prompt_text: String::new(),
            generation_text: text.into(),
            vocab_size: 4,
            steps,
            trailing_step: None,
            metadata: TraceMetadata::default(),
        }
    }

    #[test]
    fn heuristic_finds_label() {
        let t = word_trace("The answer is positive.");
        let a = heuristic_locate(&t, &["positive", "negative"]).unwrap();
        assert_eq!(a.answer_text, "positive");
        assert_eq!(a.span, TokenSpan { u: 3, w: 3 });
        assert_eq!(a.method, LocateMethod::Heuristic);
    }

    #[test]
    fn heuristic_last_occurrence_and_case() {
        let t = word_trace("Negative... but POSITIVE overall");
        let a = heuristic_locate(&t, &["positive", "negative"]).unwrap();
        assert_eq!(a.answer_text, "POSITIVE");
        assert_eq!(a.char_range, 16..24);
        let b = heuristic_locate(&t, &["negative", "positive"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heuristic_longest_label_wins() {
        let t = word_trace("not entailment but neutral, so not entailment");
        let a = heuristic_locate(&t, &["entailment", "not entailment", "neutral"]).unwrap();
        assert_eq!(a.answer_text, "not entailment");
    }

    #[test]
    fn heuristic_respects_word_boundaries() {
        let t = word_trace("A nonpositive reply");
        assert_eq!(heuristic_locate(&t, &["positive"]), Err(AnswerError::NotFound));
        assert_eq!(heuristic_locate::<&str>(&t, &[]), Err(AnswerError::EmptyLabels));
    }

    struct Counting<'a> {
        calls: AtomicU32,
        reply: &'a (dyn Fn(u32) -> Result<String, ClientError> + Sync),
    }

    impl ExtractionClient for Counting<'_> {
        fn complete(&self, _: &ExtractionRequest) -> Result<String, ClientError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            (self.reply)(n)
        }
    }

    #[test]
    fn extraction_normalizes_first_line() {
        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok("  Rome  \nextra".into()) };
        assert_eq!(
            extract_exact_answer("What is the capital of Italy?", "The capital of Italy is Rome", &c).unwrap(),
            Extraction::Answer("Rome".into())
        );
        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok("NO ANSWER".into()) };
        assert_eq!(extract_exact_answer("q", "a", &c).unwrap(), Extraction::NoAnswer);
        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok(" \n ".into()) };
        assert!(matches!(extract_exact_answer("q", "a", &c), Err(ExtractError::Empty)));
    }

    #[test]
    fn retries_locate_rome_first_try() {
        let t = word_trace("The capital of Italy is Rome");
        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok("Rome".into()) };
        let Localization::Located(a) = locate_with_retries("What is the capital of Italy?", &t, &c, 5).unwrap()
        else {
            panic!("expected a span");
        };
        assert_eq!(a.attempts, 1);
        assert_eq!(a.span, TokenSpan { u: 5, w: 5 });
        assert_eq!(t.generation_slice(a.char_range.clone()), Some("Rome"));
    }

    #[test]
    fn retries_cap_and_exclude() {
        let t = word_trace("The capital of Italy is Rome");
        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok("Paris".into()) };
        assert_eq!(
            locate_with_retries("q", &t, &c, 5).unwrap(),
            Localization::Excluded { reason: ExclusionReason::ExtractionFailed, attempts: 5 }
        );
        assert_eq!(c.calls.load(Ordering::SeqCst), 5);

        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok("NO ANSWER".into()) };
        assert_eq!(
            locate_with_retries("q", &t, &c, 5).unwrap(),
            Localization::Excluded { reason: ExclusionReason::NoAnswer, attempts: 1 }
        );
        assert_eq!(c.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn transport_errors_consume_attempts() {
        let t = word_trace("The capital of Italy is Rome");
        let c = Counting {
            calls: AtomicU32::new(0),
            reply: &|n| if n < 3 { Err(ClientError::Transport("down".into())) } else { Ok("rome\n".into()) },
        };
        // "rome" is not a case-sensitive substring, so attempt 3 fails too
        assert_eq!(
            locate_with_retries("q", &t, &c, 4).unwrap(),
            Localization::Excluded { reason: ExclusionReason::ExtractionFailed, attempts: 4 }
        );
        assert_eq!(c.calls.load(Ordering::SeqCst), 4);
        assert_eq!(locate_with_retries("q", &t, &c, 6), Err(AnswerError::BadAttempts(6)));
        assert_eq!(locate_with_retries("q", &t, &c, 0), Err(AnswerError::BadAttempts(0)));
    }

    #[test]
    fn multiple_occurrences_pick_last() {
        let t = word_trace("Rome or Rome");
        let c = Counting { calls: AtomicU32::new(0), reply: &|_| Ok("Rome".into()) };
        let Localization::Located(a) = locate_with_retries("q", &t, &c, 5).unwrap() else { panic!() };
        assert_eq!(a.char_range, 8..12);
        assert_eq!(a.span, TokenSpan { u: 2, w: 2 });
    }
}
