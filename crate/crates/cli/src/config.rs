//! The fully resolved settings of a run, written next to its outputs so the
//! run can be repeated exactly. Nothing here depends on the clock or the
//! machine, so identical invocations produce identical files.

use std::path::PathBuf;

use serde::Serialize;

/// Environment variable holding the bearer token for the extraction endpoint.
pub const TOKEN_ENV: &str = "SPILLSCOPE_EXTRACTION_TOKEN";

#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<&'static str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poolings: Option<Vec<&'static str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationSettings>,
}

impl RunConfig {
    pub fn new(subcommand: &'static str, inputs: Vec<PathBuf>, output: PathBuf) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            inputs,
            output,
            metrics: None,
            poolings: None,
            temperature: None,
            seed: None,
            extraction: None,
            difficulty: None,
            digits: None,
            n_per_class: None,
            evaluation: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ExtractionSettings {
    /// `replay` or `http`; `none` when every example uses a label set.
    pub client: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport_retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backoff_ms: Option<u64>,
    /// Name of the variable the token is read from; the token itself is
    /// never written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_env: Option<&'static str>,
    pub max_attempts: u32,
    pub template_id: &'static str,
}

#[derive(Debug, Serialize)]
pub struct EvaluationSettings {
    pub default_dataset: String,
    /// `None` when the bootstrap is disabled.
    pub resamples: Option<usize>,
    pub histogram_bins: usize,
}
