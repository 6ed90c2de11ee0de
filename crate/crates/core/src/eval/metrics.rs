//! Rank-based AuROC, ROC points, shared-edge histograms and bootstrap spread.
//!
//! Labels are `true` for the positive class (incorrect / hallucinated).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("AuROC is undefined: only one class present")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score")]
    NonFinite,
    #[error("no scores or zero bins")]
    Empty,
    #[error("histogram range [{0}, {1}] is not a finite increasing interval")]
    BadRange(f64, f64),
    #[error("bootstrap needs at least {MIN_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
    #[error("no resample with both classes after {0} redraws")]
    Degenerate(usize),
}

pub const MIN_RESAMPLES: usize = 100;
pub const DEFAULT_RESAMPLES: usize = 1000;
/// Consecutive single-class redraws tolerated before giving up.
pub const MAX_REDRAWS: usize = 1000;

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok((pos, neg))
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `P(score_pos > score_neg) + ½ P(tie)` from the Mann-Whitney rank sum.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// `(fpr, tpr)` points, one per distinct threshold in descending order,
/// starting at `(0, 0)` and ending at `(1, 1)`.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline of `(x, y)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangePolicy {
    /// `[min, max]` over all scores of both classes.
    Pooled,
    /// Fixed `[lo, hi]`; values outside go to under/overflow.
    Fixed(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` shared edges. Bins are `[e_k, e_{k+1})`, the last closed.
    pub edges: Vec<f64>,
    /// Counts for the positive (incorrect) class.
    pub positive: Vec<usize>,
    /// Counts for the negative (correct) class.
    pub negative: Vec<usize>,
    /// `[positive, negative]` below the first edge.
    pub underflow: [usize; 2],
    /// `[positive, negative]` above the last edge.
    pub overflow: [usize; 2],
}

pub fn histogram(
    positive: &[f64],
    negative: &[f64],
    bins: usize,
    range: RangePolicy,
) -> Result<Histogram, MetricError> {
    let all = positive.iter().chain(negative);
    if bins == 0 || positive.len() + negative.len() == 0 {
        return Err(MetricError::Empty);
    }
    if all.clone().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let (lo, hi) = match range {
        RangePolicy::Pooled => all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        RangePolicy::Fixed(lo, hi) if lo.is_finite() && hi.is_finite() && lo < hi => (lo, hi),
        RangePolicy::Fixed(lo, hi) => return Err(MetricError::BadRange(lo, hi)),
    };
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + (hi - lo) * k as f64 / bins as f64 })
        .collect();

    let mut h = Histogram {
        positive: vec![0; bins],
        negative: vec![0; bins],
        underflow: [0; 2],
        overflow: [0; 2],
        edges,
    };
    for (class, values) in [(0, positive), (1, negative)] {
        for &v in values {
            if v < lo {
                h.underflow[class] += 1;
            } else if v > hi {
                h.overflow[class] += 1;
            } else {
                let bin = if hi == lo {
                    0
                } else {
                    (h.edges.partition_point(|&e| e <= v).max(1) - 1).min(bins - 1)
                };
                if class == 0 {
                    h.positive[bin] += 1;
                } else {
                    h.negative[bin] += 1;
                }
            }
        }
    }
    Ok(h)
}

/// Paired bootstrap standard deviation (n − 1 denominator) of AuROC.
/// Resamples missing a class are redrawn.
pub fn bootstrap_std(scores: &[f64], labels: &[bool], resamples: usize, seed: u64) -> Result<f64, MetricError> {
    check(scores, labels)?;
    if resamples < MIN_RESAMPLES {
        return Err(MetricError::TooFewResamples(resamples));
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut redraws = 0;
        loop {
            for k in 0..n {
                let j = rng.gen_range(0..n);
                s[k] = scores[j];
                l[k] = labels[j];
            }
            if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
                break;
            }
            redraws += 1;
            if redraws >= MAX_REDRAWS {
                return Err(MetricError::Degenerate(MAX_REDRAWS));
            }
        }
        values.push(auroc(&s, &l)?);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}
