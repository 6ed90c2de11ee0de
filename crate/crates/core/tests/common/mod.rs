//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use spillscope::trace::{StepRecord, Trace, TraceMetadata, TrailingStep};

/// Error-free sum of two doubles.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `log Σ exp(x_k)` by direct (unshifted) summation in double-double
/// precision. Only valid where `exp` does not overflow.
pub fn oracle_log_sum_exp(xs: &[f64]) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &x in xs {
        let (s, e) = two_sum(hi, x.exp());
        hi = s;
        lo += e;
    }
    let total = hi + lo;
    total.ln() + (lo - (total - hi)) / total
}

/// `−log softmax(logits)[chosen]` from the direct oracle.
pub fn oracle_nll(logits: &[f64], chosen: usize) -> f64 {
    oracle_log_sum_exp(logits) - logits[chosen]
}

pub fn random_logits<R: Rng>(rng: &mut R, v: usize, bound: f64) -> Vec<f64> {
    (0..v).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Trace from full logit vectors: one per step plus an optional trailing
/// vector. Token `k` covers characters `k..k+1` of a run of `x`s.
pub struct FullTrace {
    pub trace: Trace,
    pub logits: Vec<Vec<f64>>,
    pub chosen: Vec<usize>,
}

pub fn trace_from_logits<R: Rng>(rng: &mut R, steps: usize, v: usize, bound: f64, trailing: bool, keep_full: bool) -> FullTrace {
    let n_vectors = steps + usize::from(trailing);
    let logits: Vec<Vec<f64>> = (0..n_vectors).map(|_| random_logits(rng, v, bound)).collect();
    let chosen: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..v)).collect();
    let top_k = |l: &Vec<f64>| keep_full.then(|| l.iter().enumerate().map(|(i, &x)| (i as u32, x)).collect());
    let records = (0..steps)
        .map(|i| StepRecord {
            step_index: i,
            token_id: chosen[i] as u32,
            chosen_logit: logits[i][chosen[i]],
            logsumexp: spillscope::energy::log_sum_exp(&logits[i]),
            char_start: i,
            char_end: i + 1,
            top_k: top_k(&logits[i]),
        })
        .collect();
    let trailing_step = trailing.then(|| TrailingStep {
        logsumexp: spillscope::energy::log_sum_exp(&logits[steps]),
        top_k: top_k(&logits[steps]),
    });
    FullTrace {
        trace: Trace {
            prompt_text: "prompt".into(),
            generation_text: "x".repeat(steps),
            vocab_size: v,
            steps: records,
            trailing_step,
            metadata: TraceMetadata { model: "synthetic".into(), temperature: 1.0, captured_at: None },
        },
        logits,
        chosen,
    }
}

/// Trace where every step's log-sum-exp equals the previous step's chosen
/// logit, so spilled energy is exactly zero wherever it is defined.
pub fn consistent_trace<R: Rng>(rng: &mut R, steps: usize, trailing: bool) -> Trace {
    let mut lse = rng.gen_range(-20.0..20.0);
    let mut records = Vec::with_capacity(steps);
    for i in 0..steps {
        let chosen = lse - rng.gen_range(0.0..5.0);
        records.push(StepRecord {
            step_index: i,
            token_id: 0,
            chosen_logit: chosen,
            logsumexp: lse,
            char_start: i,
            char_end: i + 1,
            top_k: None,
        });
        lse = chosen;
    }
    Trace {
        prompt_text: String::new(),
        generation_text: "x".repeat(steps),
        vocab_size: 50_000,
        steps: records,
        trailing_step: trailing.then_some(TrailingStep { logsumexp: lse, top_k: None }),
        metadata: TraceMetadata::default(),
    }
}
