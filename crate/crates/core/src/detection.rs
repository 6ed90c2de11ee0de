//! Pooling per-token energies over the answer span into one score per
//! example, and threshold classification of those scores.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergySeries, PositionEnergy};
use crate::exclusion::ExclusionReason;
use crate::trace::TokenSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PoolingStrategy {
    Min,
    Max,
    Mean,
    LastToken,
    AfterLastToken,
}

impl PoolingStrategy {
    pub const ALL: [PoolingStrategy; 5] =
        [Self::Min, Self::Max, Self::Mean, Self::LastToken, Self::AfterLastToken];

    pub fn code(self) -> &'static str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
            Self::Mean => "mean",
            Self::LastToken => "last_token",
            Self::AfterLastToken => "after_last_token",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Min => "Min",
            Self::Max => "Max",
            Self::Mean => "Mean",
            Self::LastToken => "Last Token",
            Self::AfterLastToken => "After Last Token",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    LogitE,
    MarginalE,
    SpilledDe,
    ScaledSpilledDes,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Self::LogitE, Self::MarginalE, Self::SpilledDe, Self::ScaledSpilledDes];

    pub fn code(self) -> &'static str {
        match self {
            Self::LogitE => "logit_e",
            Self::MarginalE => "marginal_e",
            Self::SpilledDe => "spilled_de",
            Self::ScaledSpilledDes => "scaled_spilled_des",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::LogitE => "Logit E^l",
            Self::MarginalE => "Marginal E^m",
            Self::SpilledDe => "Spilled dE",
            Self::ScaledSpilledDes => "Spilled dE_s",
        }
    }

    /// Whether a larger raw value predicts a hallucination. Fixed per metric,
    /// never fitted to data.
    pub fn higher_is_hallucination(self) -> bool {
        match self {
            // low chosen logit (high energy) means low confidence
            Self::LogitE => true,
            Self::MarginalE => true,
            Self::SpilledDe => true,
            Self::ScaledSpilledDes => true,
        }
    }

    /// Raw value of this metric at one position, if defined.
    pub fn value_at(self, p: &PositionEnergy) -> Option<f64> {
        match self {
            Self::LogitE => Some(p.logit_energy),
            Self::MarginalE => Some(p.marginal_energy),
            Self::SpilledDe => p.spilled,
            Self::ScaledSpilledDes => p.scaled_spilled,
        }
    }
}

macro_rules! code_parse {
    ($t:ty) => {
        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.trim().to_ascii_lowercase().replace('-', "_");
                Self::ALL
                    .into_iter()
                    .find(|v| v.code() == s)
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($t)))
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }
    };
}

code_parse!(PoolingStrategy);
code_parse!(Metric);

/// Spilled energy with min pooling.
pub const DEFAULT_METRIC: Metric = Metric::SpilledDe;
pub const DEFAULT_POOLING: PoolingStrategy = PoolingStrategy::Min;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionScore {
    pub example_id: String,
    pub metric: Metric,
    pub pooling: PoolingStrategy,
    /// Raw pooled value; `Err` carries the exclusion reason.
    pub value: Result<f64, ExclusionReason>,
}

impl DetectionScore {
    pub fn excluded(example_id: impl Into<String>, metric: Metric, pooling: PoolingStrategy, reason: ExclusionReason) -> Self {
        Self { example_id: example_id.into(), metric, pooling, value: Err(reason) }
    }

    /// Value flipped so that larger always means "more likely hallucinated".
    pub fn oriented(&self) -> Option<f64> {
        let v = *self.value.as_ref().ok()?;
        Some(if self.metric.higher_is_hallucination() { v } else { -v })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error("empty pooling window")]
    EmptyWindow,
    #[error("no value after the window")]
    MissingAfter,
    #[error("undefined energy inside the window")]
    Undefined,
}

impl PoolError {
    pub fn reason(&self) -> ExclusionReason {
        match self {
            Self::EmptyWindow => ExclusionReason::SpanOutOfRange,
            Self::MissingAfter => ExclusionReason::NoFollowingToken,
            Self::Undefined => ExclusionReason::UndefinedEnergy,
        }
    }
}

/// Reduces a window to one value. `after` is the value at the position just
/// past the window and is read only by [`PoolingStrategy::AfterLastToken`].
pub fn pool(window: &[Option<f64>], strategy: PoolingStrategy, after: Option<f64>) -> Result<f64, PoolError> {
    if window.is_empty() {
        return Err(PoolError::EmptyWindow);
    }
    if strategy == PoolingStrategy::AfterLastToken {
        return after.ok_or(PoolError::MissingAfter);
    }
    let values: Vec<f64> = window.iter().copied().collect::<Option<_>>().ok_or(PoolError::Undefined)?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(match strategy {
        PoolingStrategy::Min => min,
        PoolingStrategy::Max => max,
        // rounding in the sum can push the quotient one ulp past the extremes
        PoolingStrategy::Mean => (values.iter().sum::<f64>() / values.len() as f64).clamp(min, max),
        PoolingStrategy::LastToken => values[values.len() - 1],
        PoolingStrategy::AfterLastToken => unreachable!(),
    })
}

/// Pools `metric` over `span` of `series`. Only positions `u..=w` (and
/// `w + 1` for after-last-token pooling) are read.
pub fn score_example(
    example_id: &str,
    series: &EnergySeries,
    span: TokenSpan,
    metric: Metric,
    pooling: PoolingStrategy,
) -> DetectionScore {
    let value = if span.u > span.w || span.w >= series.len() {
        Err(ExclusionReason::SpanOutOfRange)
    } else {
        let window: Vec<Option<f64>> =
            series.positions[span.u..=span.w].iter().map(|p| metric.value_at(p)).collect();
        match series.positions.get(span.w + 1).map(|p| metric.value_at(p)) {
            // a following position exists but its value is undefined
            Some(None) if pooling == PoolingStrategy::AfterLastToken => Err(ExclusionReason::UndefinedEnergy),
            after => pool(&window, pooling, after.flatten()).map_err(|e| e.reason()),
        }
    };
    DetectionScore { example_id: example_id.to_string(), metric, pooling, value }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Hallucination,
    Correct,
}

#[derive(Debug, Error, PartialEq)]
#[error("score for {0} is excluded")]
pub struct ExcludedScoreError(pub String);

/// `Hallucination` iff the oriented value is at or above the threshold.
pub fn classify(score: &DetectionScore, threshold: f64) -> Result<Prediction, ExcludedScoreError> {
    let v = score.oriented().ok_or_else(|| ExcludedScoreError(score.example_id.clone()))?;
    Ok(if v >= threshold { Prediction::Hallucination } else { Prediction::Correct })
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    example_id: String,
    metric: String,
    pooling: String,
    value: Option<f64>,
    excluded: u8,
    reason: String,
}

#[derive(Debug, Error)]
pub enum ScoreCsvError {
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn write_scores_csv<W: Write>(scores: &[DetectionScore], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for s in scores {
        w.serialize(ScoreRow {
            example_id: s.example_id.clone(),
            metric: s.metric.code().into(),
            pooling: s.pooling.code().into(),
            value: s.value.ok(),
            excluded: u8::from(s.value.is_err()),
            reason: s.value.err().map(|r| r.code().to_string()).unwrap_or_default(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<DetectionScore>, ScoreCsvError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<ScoreRow>().enumerate() {
        let row_no = i + 2;
        let bad = |message: String| ScoreCsvError::Malformed { row: row_no, message };
        let row = row?;
        let metric = row.metric.parse().map_err(bad)?;
        let pooling = row.pooling.parse().map_err(bad)?;
        let value = match (row.excluded, row.value) {
            (0, Some(v)) if v.is_finite() => Ok(v),
            (1, None) => Err(row.reason.parse().map_err(bad)?),
            _ => return Err(bad("value and excluded flag disagree".into())),
        };
        out.push(DetectionScore { example_id: row.example_id, metric, pooling, value });
    }
    Ok(out)
}
