//! Energy readouts of the softmax head.
//!
//! For the step that produced token `i` with raw logits `θ`:
//!
//! * logit energy `E^ℓ_i = −θ[id(x_i)] / τ`
//! * marginal energy `E^m_i = −log Σ_k exp(θ[k] / τ)`
//! * token NLL `E^ℓ_i − E^m_i = −log softmax(θ/τ)[id(x_i)]`
//!
//! Spilled energy pairs the marginal readout of the *next* step with the
//! chosen logit of this step, `ΔE_i = E^m_{i+1} − E^ℓ_i`. Under a perfectly
//! consistent chain-rule factorization both readouts measure the energy of
//! the same prefix and `ΔE_i = 0`.

use std::io::{Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::trace::{validate_trace, Trace, Violation};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("empty logit vector")]
    Empty,
    #[error("non-finite input")]
    NonFinite,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("position {0} has no next-step readout")]
    UndefinedPosition(usize),
    #[error("temperature {0} requires full logit vectors; trace stores only log-sum-exp")]
    CompressedTrace(f64),
    #[error("invalid trace: {0:?}")]
    InvalidTrace(Vec<Violation>),
    #[error("position {position}: {source}")]
    AtPosition {
        position: usize,
        #[source]
        source: Box<EnergyError>,
    },
}

fn check_temperature(tau: f64) -> Result<(), EnergyError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(EnergyError::BadTemperature(tau))
    }
}

/// `log Σ exp(x_k)` with max-shift. Inputs must be finite and non-empty.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Temperature-scaled log-sum-exp, `log Σ exp(x_k / τ)`.
pub fn log_sum_exp_scaled(logits: &[f64], tau: f64) -> Result<f64, EnergyError> {
    check_temperature(tau)?;
    if logits.is_empty() {
        return Err(EnergyError::Empty);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(EnergyError::NonFinite);
    }
    if tau == 1.0 {
        return Ok(log_sum_exp(logits));
    }
    let scaled: Vec<f64> = logits.iter().map(|&v| v / tau).collect();
    Ok(log_sum_exp(&scaled))
}

/// `E^m = −log Σ_k exp(logits[k] / τ)`.
pub fn marginal_energy(logits: &[f64], tau: f64) -> Result<f64, EnergyError> {
    log_sum_exp_scaled(logits, tau).map(|lse| -lse)
}

/// `E^ℓ = −chosen_logit / τ`.
pub fn logit_energy(chosen_logit: f64, tau: f64) -> Result<f64, EnergyError> {
    check_temperature(tau)?;
    if !chosen_logit.is_finite() {
        return Err(EnergyError::NonFinite);
    }
    Ok(-chosen_logit / tau)
}

/// Negative log-probability of the chosen token, `E^ℓ − E^m`.
///
/// `logsumexp` must already be at temperature `τ` (see [`log_sum_exp_scaled`]).
pub fn token_nll(chosen_logit: f64, logsumexp: f64, tau: f64) -> Result<f64, EnergyError> {
    let e_l = logit_energy(chosen_logit, tau)?;
    if !logsumexp.is_finite() {
        return Err(EnergyError::NonFinite);
    }
    Ok(e_l - (-logsumexp))
}

/// `ΔE_i = −lse_{i+1} + chosen_logit_i / τ`, with `next_logsumexp` already at
/// temperature `τ`.
pub fn spilled_energy(chosen_logit: f64, next_logsumexp: f64, tau: f64) -> Result<f64, EnergyError> {
    let e_l = logit_energy(chosen_logit, tau)?;
    if !next_logsumexp.is_finite() {
        return Err(EnergyError::NonFinite);
    }
    Ok(-next_logsumexp - e_l)
}

/// `ΔE_s = |E^m| · ΔE`.
pub fn scaled_spilled_energy(marginal: f64, delta: f64) -> Result<f64, EnergyError> {
    if !marginal.is_finite() || !delta.is_finite() {
        return Err(EnergyError::NonFinite);
    }
    Ok(marginal.abs() * delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEnergy {
    pub logit_energy: f64,
    /// From this step's own logits.
    pub marginal_energy: f64,
    /// From the following step's logits; `None` at the final position of a
    /// trace without a trailing step.
    pub next_marginal_energy: Option<f64>,
    pub spilled: Option<f64>,
    pub scaled_spilled: Option<f64>,
    pub token_nll: f64,
}

impl PositionEnergy {
    pub fn is_defined(&self) -> bool {
        self.spilled.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub temperature: f64,
    pub positions: Vec<PositionEnergy>,
}

impl EnergySeries {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Indices whose spilled energy is undefined.
    pub fn undefined_positions(&self) -> Vec<usize> {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_defined())
            .map(|(i, _)| i)
            .collect()
    }
}

fn step_logsumexp(
    stored: f64,
    top_k: Option<&Vec<(u32, f64)>>,
    tau: f64,
) -> Result<f64, EnergyError> {
    if tau == 1.0 {
        return Ok(stored);
    }
    let logits: Vec<f64> = top_k.ok_or(EnergyError::CompressedTrace(tau))?.iter().map(|&(_, l)| l).collect();
    log_sum_exp_scaled(&logits, tau)
}

fn at(position: usize) -> impl Fn(EnergyError) -> EnergyError {
    move |e| EnergyError::AtPosition { position, source: Box::new(e) }
}

/// Per-position energies for a validated trace.
///
/// At `τ ≠ 1` the trace must carry full logit vectors; a stored log-sum-exp
/// cannot be rescaled.
pub fn energy_series(trace: &Trace, tau: f64) -> Result<EnergySeries, EnergyError> {
    check_temperature(tau)?;
    let violations = validate_trace(trace);
    if !violations.is_empty() {
        return Err(EnergyError::InvalidTrace(violations));
    }
    if tau != 1.0 && !trace.has_full_logits() {
        return Err(EnergyError::CompressedTrace(tau));
    }

    let lse: Vec<f64> = trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| step_logsumexp(s.logsumexp, s.top_k.as_ref(), tau).map_err(at(i)))
        .collect::<Result<_, _>>()?;
    let trailing_lse = trace
        .trailing_step
        .as_ref()
        .map(|t| step_logsumexp(t.logsumexp, t.top_k.as_ref(), tau).map_err(at(trace.steps.len())))
        .transpose()?;

    let mut positions = Vec::with_capacity(trace.steps.len());
    for (i, step) in trace.steps.iter().enumerate() {
        let e_l = logit_energy(step.chosen_logit, tau).map_err(at(i))?;
        let e_m = -lse[i];
        let next_lse = lse.get(i + 1).copied().or(trailing_lse);
        let spilled = next_lse
            .map(|n| spilled_energy(step.chosen_logit, n, tau))
            .transpose()
            .map_err(at(i))?;
        let scaled_spilled = spilled
            .map(|d| scaled_spilled_energy(e_m, d))
            .transpose()
            .map_err(at(i))?;
        positions.push(PositionEnergy {
            logit_energy: e_l,
            marginal_energy: e_m,
            next_marginal_energy: next_lse.map(|n| -n),
            spilled,
            scaled_spilled,
            token_nll: token_nll(step.chosen_logit, lse[i], tau).map_err(at(i))?,
        });
    }
    Ok(EnergySeries { temperature: tau, positions })
}

/// `Σ_i (E^ℓ_i − E^m_i)` over generated positions. The unconditional first
/// token of the sequence is not part of a generation and is never included.
pub fn sequence_nll(series: &EnergySeries) -> f64 {
    series.positions.iter().map(|p| p.token_nll).sum()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `position,E_l,E_m,E_m_next,delta_E,delta_E_s,token_nll,defined,tau`.
/// Undefined values are empty fields.
pub fn write_series_csv<W: Write>(series: &EnergySeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SERIES_HEADER}")?;
    for (i, p) in series.positions.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            p.logit_energy,
            p.marginal_energy,
            opt(p.next_marginal_energy),
            opt(p.spilled),
            opt(p.scaled_spilled),
            p.token_nll,
            u8::from(p.is_defined()),
            series.temperature
        )?;
    }
    Ok(())
}

const SERIES_HEADER: &str = "position,E_l,E_m,E_m_next,delta_E,delta_E_s,token_nll,defined,tau";

#[derive(Debug, Deserialize)]
struct SeriesRow {
    position: usize,
    #[serde(rename = "E_l")]
    logit_energy: f64,
    #[serde(rename = "E_m")]
    marginal_energy: f64,
    #[serde(rename = "E_m_next")]
    next_marginal_energy: Option<f64>,
    #[serde(rename = "delta_E")]
    spilled: Option<f64>,
    #[serde(rename = "delta_E_s")]
    scaled_spilled: Option<f64>,
    token_nll: f64,
    defined: u8,
    tau: f64,
}

#[derive(Debug, Error)]
pub enum SeriesCsvError {
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("no rows")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads a file written by [`write_series_csv`], checking that positions
/// are consecutive, values finite, definedness flags consistent and the
/// temperature constant.
pub fn read_series_csv<R: Read>(input: R) -> Result<EnergySeries, SeriesCsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != SERIES_HEADER {
        return Err(SeriesCsvError::Malformed { row: 1, message: format!("unexpected header `{}`", header.join(",")) });
    }
    let mut positions = Vec::new();
    let mut temperature = None;
    for (i, row) in r.deserialize::<SeriesRow>().enumerate() {
        let bad = |message: &str| SeriesCsvError::Malformed { row: i + 2, message: message.to_string() };
        let row = row?;
        if row.position != i {
            return Err(bad("positions must count up from 0"));
        }
        let values = [Some(row.logit_energy), Some(row.marginal_energy), row.next_marginal_energy, row.spilled, row.scaled_spilled, Some(row.token_nll)];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        let defined = match row.defined {
            0 => false,
            1 => true,
            _ => return Err(bad("defined must be 0 or 1")),
        };
        let flags = [row.next_marginal_energy.is_some(), row.spilled.is_some(), row.scaled_spilled.is_some()];
        if flags.iter().any(|&f| f != defined) {
            return Err(bad("defined flag disagrees with the next-step columns"));
        }
        if check_temperature(row.tau).is_err() || temperature.is_some_and(|t| t != row.tau) {
            return Err(bad("temperature must be positive and the same on every row"));
        }
        temperature = Some(row.tau);
        positions.push(PositionEnergy {
            logit_energy: row.logit_energy,
            marginal_energy: row.marginal_energy,
            next_marginal_energy: row.next_marginal_energy,
            spilled: row.spilled,
            scaled_spilled: row.scaled_spilled,
            token_nll: row.token_nll,
        });
    }
    let temperature = temperature.ok_or(SeriesCsvError::Empty)?;
    Ok(EnergySeries { temperature, positions })
}
