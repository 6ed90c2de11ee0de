//! Correctness labels: read from a labels file or derived by normalized
//! containment of a gold answer in the generation.

use std::io::BufRead;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Correct,
    Incorrect,
    Unlabeled,
}

impl Label {
    /// Positive class for AuROC is the hallucination.
    pub fn is_positive(self) -> Option<bool> {
        match self {
            Self::Correct => Some(false),
            Self::Incorrect => Some(true),
            Self::Unlabeled => None,
        }
    }
}

fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// `Correct` iff some gold answer, after lowercasing, punctuation stripping
/// and whitespace collapsing, occurs in the generation as a whole-token run.
pub fn label_correctness<S: AsRef<str>>(generation: &str, gold_answers: &[S]) -> Label {
    let hay = normalize(generation);
    let mut any_gold = false;
    for gold in gold_answers {
        let needle = normalize(gold.as_ref());
        if needle.is_empty() {
            continue;
        }
        any_gold = true;
        if hay.windows(needle.len()).any(|w| w == needle.as_slice()) {
            return Label::Correct;
        }
    }
    if any_gold {
        Label::Incorrect
    } else {
        Label::Unlabeled
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub example_id: String,
    pub dataset: Option<String>,
    pub gold_answers: Vec<String>,
    pub generation: Option<String>,
    pub label: Label,
}

#[derive(Debug, Deserialize)]
struct LabelLine {
    id: String,
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    gold: Vec<String>,
    #[serde(default)]
    generation: Option<String>,
}

#[derive(Debug, Error)]
pub enum LabelsError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads `{id, label?, gold?, generation?, dataset?}` lines. An explicit
/// `label` (`correct` | `incorrect`) wins; otherwise `gold` plus
/// `generation` are matched; otherwise the example is unlabeled. Synthetic
/// arithmetic dataset files are valid input.
pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<LabeledExample>, LabelsError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| LabelsError::Malformed { line: n + 1, message };
        let rec: LabelLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let label = match (rec.label.as_deref(), &rec.generation) {
            (Some("correct"), _) => Label::Correct,
            (Some("incorrect"), _) => Label::Incorrect,
            (Some(other), _) => return Err(bad(format!("bad label `{other}`"))),
            (None, Some(generation)) => label_correctness(generation, &rec.gold),
            (None, None) => Label::Unlabeled,
        };
        out.push(LabeledExample {
            example_id: rec.id,
            dataset: rec.dataset,
            gold_answers: rec.gold,
            generation: rec.generation,
            label,
        });
    }
    Ok(out)
}
