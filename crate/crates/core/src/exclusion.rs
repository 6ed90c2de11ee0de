use std::fmt;
use std::str::FromStr;

/// Why an example carries no score. Excluded examples are counted in reports,
/// never dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionReason {
    /// The extractor answered `NO ANSWER`.
    NoAnswer,
    /// No valid substring after every extraction attempt.
    ExtractionFailed,
    /// No closed-set label occurs in the generation.
    LabelNotFound,
    /// An energy inside the pooling window is undefined.
    UndefinedEnergy,
    /// `AFTER_LAST_TOKEN` pooling with no position after the span.
    NoFollowingToken,
    /// The span does not fit inside the energy series.
    SpanOutOfRange,
    /// No correctness label was available.
    Unlabeled,
    /// A labeled example has no score row for this metric and pooling.
    MissingScore,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 8] = [
        Self::NoAnswer,
        Self::ExtractionFailed,
        Self::LabelNotFound,
        Self::UndefinedEnergy,
        Self::NoFollowingToken,
        Self::SpanOutOfRange,
        Self::Unlabeled,
        Self::MissingScore,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Self::NoAnswer => "no-answer",
            Self::ExtractionFailed => "extraction-failed",
            Self::LabelNotFound => "label-not-found",
            Self::UndefinedEnergy => "undefined-energy",
            Self::NoFollowingToken => "no-following-token",
            Self::SpanOutOfRange => "span-out-of-range",
            Self::Unlabeled => "unlabeled",
            Self::MissingScore => "missing-score",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ExclusionReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.code() == s)
            .ok_or_else(|| format!("unknown exclusion reason `{s}`"))
    }
}
