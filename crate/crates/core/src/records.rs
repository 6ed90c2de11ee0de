//! Line-delimited records that connect pipeline stages: the example
//! manifest (what to localize) and the span file (where the answer is).

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{AnswerSpan, LocateMethod, Localization};
use crate::exclusion::ExclusionReason;
use crate::trace::TokenSpan;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One example to localize. `trace` is relative to the manifest's directory
/// unless absolute. A non-empty `labels` list selects closed-set matching;
/// otherwise `question` is sent to the extraction client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub trace: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Ids name per-example output files, so they must be usable as one.
pub fn check_example_id(id: &str) -> Result<(), String> {
    if id.is_empty() || id == "." || id == ".." {
        return Err(format!("example id `{id}` is not a usable file name"));
    }
    if let Some(c) = id.chars().find(|c| matches!(c, '/' | '\\' | '\0') || c.is_control()) {
        return Err(format!("example id `{}` contains {c:?}", id.escape_debug()));
    }
    Ok(())
}

fn read_lines<R: BufRead, T: for<'de> Deserialize<'de>, U>(
    reader: R,
    mut convert: impl FnMut(T) -> Result<U, String>,
) -> Result<Vec<U>, RecordError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| RecordError::Malformed { line: n + 1, message };
        let rec: T = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.push(convert(rec).map_err(bad)?);
    }
    Ok(out)
}

/// Reads `{id, trace, question?, labels?}` lines; ids must be unique.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestEntry>, RecordError> {
    let mut seen = HashSet::new();
    read_lines(reader, |e: ManifestEntry| {
        check_example_id(&e.id)?;
        if !seen.insert(e.id.clone()) {
            return Err(format!("duplicate example id `{}`", e.id));
        }
        if e.question.is_none() && e.labels.as_ref().is_none_or(|l| l.is_empty()) {
            return Err(format!("example `{}` needs a question or a label set", e.id));
        }
        Ok(e)
    })
}

/// Localization outcome of one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRecord {
    pub id: String,
    pub outcome: Localization,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpanLine {
    id: String,
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    char_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    char_end: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

impl From<&SpanRecord> for SpanLine {
    fn from(r: &SpanRecord) -> Self {
        let empty = SpanLine {
            id: r.id.clone(),
            status: String::new(),
            u: None,
            w: None,
            char_start: None,
            char_end: None,
            answer_text: None,
            method: None,
            attempts: 0,
            reason: None,
        };
        match &r.outcome {
            Localization::Located(a) => SpanLine {
                status: "located".into(),
                u: Some(a.span.u),
                w: Some(a.span.w),
                char_start: Some(a.char_range.start),
                char_end: Some(a.char_range.end),
                answer_text: Some(a.answer_text.clone()),
                method: Some(a.method.code().into()),
                attempts: a.attempts,
                ..empty
            },
            Localization::Excluded { reason, attempts } => SpanLine {
                status: "excluded".into(),
                attempts: *attempts,
                reason: Some(reason.code().into()),
                ..empty
            },
        }
    }
}

impl TryFrom<SpanLine> for SpanRecord {
    type Error = String;

    fn try_from(l: SpanLine) -> Result<Self, String> {
        check_example_id(&l.id)?;
        let outcome = match l.status.as_str() {
            "located" => {
                let (Some(u), Some(w), Some(cs), Some(ce), Some(text), Some(method)) =
                    (l.u, l.w, l.char_start, l.char_end, l.answer_text, l.method)
                else {
                    return Err("located span needs u, w, char_start, char_end, answer_text and method".into());
                };
                let span = TokenSpan::new(u, w).ok_or_else(|| format!("u = {u} is after w = {w}"))?;
                if cs >= ce || text.chars().count() != ce - cs {
                    return Err(format!("character range {cs}..{ce} does not fit the answer text"));
                }
                let method = match method.as_str() {
                    "heuristic" => LocateMethod::Heuristic,
                    "extracted" => LocateMethod::Extracted,
                    other => return Err(format!("unknown method `{other}`")),
                };
                if l.reason.is_some() {
                    return Err("located span cannot carry a reason".into());
                }
                Localization::Located(AnswerSpan { span, char_range: cs..ce, answer_text: text, method, attempts: l.attempts })
            }
            "excluded" => {
                let reason: ExclusionReason =
                    l.reason.as_deref().ok_or("excluded span needs a reason")?.parse()?;
                if l.u.is_some() || l.w.is_some() || l.answer_text.is_some() {
                    return Err("excluded span cannot carry a location".into());
                }
                Localization::Excluded { reason, attempts: l.attempts }
            }
            other => return Err(format!("unknown status `{other}`")),
        };
        Ok(SpanRecord { id: l.id, outcome })
    }
}

pub fn write_span_records<W: Write>(records: &[SpanRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &SpanLine::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a span file; ids must be unique.
pub fn read_span_records<R: BufRead>(reader: R) -> Result<Vec<SpanRecord>, RecordError> {
    let mut seen = HashSet::new();
    read_lines(reader, |l: SpanLine| {
        if !seen.insert(l.id.clone()) {
            return Err(format!("duplicate example id `{}`", l.id));
        }
        SpanRecord::try_from(l)
    })
}
