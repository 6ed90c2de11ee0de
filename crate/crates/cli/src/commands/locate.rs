use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use spillscope::answer::{
    heuristic_locate, locate_with_retries, prompt::TEMPLATE_ID, AnswerError, ExtractionClient, HttpClient,
    HttpClientConfig, Localization, ReplayClient, MAX_EXTRACTION_ATTEMPTS,
};
use spillscope::records::{read_manifest, write_span_records, ManifestEntry, SpanRecord};
use spillscope::ExclusionReason;

use crate::commands::load_trace;
use crate::config::{ExtractionSettings, RunConfig, TOKEN_ENV};
use crate::error::{CliError, Result};
use crate::files;

/// Find the answer span of every example in a manifest.
///
/// Examples with a `labels` list are matched against it; the rest are sent
/// to the extraction client (--replay or --endpoint). The endpoint's bearer
/// token is read from SPILLSCOPE_EXTRACTION_TOKEN.
#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    manifest: PathBuf,
    /// Span file (JSON lines, manifest order)
    #[arg(long)]
    output: PathBuf,
    /// Canned extraction responses (JSON lines)
    #[arg(long, conflicts_with = "endpoint")]
    replay: Option<PathBuf>,
    /// HTTP completion endpoint for extraction
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = MAX_EXTRACTION_ATTEMPTS)]
    max_attempts: u32,
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 32)]
    max_tokens: u32,
    /// Extra tries per attempt for transport failures
    #[arg(long, default_value_t = 0)]
    transport_retries: u32,
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
}

fn build_client(args: &Args) -> Result<(Option<Box<dyn ExtractionClient>>, ExtractionSettings)> {
    let mut settings = ExtractionSettings {
        client: "none",
        replay_file: None,
        endpoint: None,
        timeout_secs: None,
        max_tokens: None,
        transport_retries: None,
        backoff_ms: None,
        token_env: None,
        max_attempts: args.max_attempts,
        template_id: TEMPLATE_ID,
    };
    if let Some(path) = &args.replay {
        let bytes = files::read(path)?;
        let client = ReplayClient::from_reader(bytes.as_slice()).map_err(|e| CliError::invalid(path, e))?;
        settings.client = "replay";
        settings.replay_file = Some(path.clone());
        return Ok((Some(Box::new(client)), settings));
    }
    let Some(endpoint) = &args.endpoint else {
        return Ok((None, settings));
    };
    if !(args.timeout_secs > 0.0 && args.timeout_secs.is_finite()) {
        return Err(CliError::Validation(format!("--timeout-secs must be positive, got {}", args.timeout_secs)));
    }
    let mut config = HttpClientConfig::new(endpoint.clone());
    config.timeout = Duration::from_secs_f64(args.timeout_secs);
    config.max_tokens = args.max_tokens;
    config.transport_retries = args.transport_retries;
    config.backoff = Duration::from_millis(args.backoff_ms);
    config.bearer_token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
    let client = HttpClient::new(config).map_err(|e| CliError::Validation(e.to_string()))?;
    settings.client = "http";
    settings.endpoint = Some(endpoint.clone());
    settings.timeout_secs = Some(args.timeout_secs);
    settings.max_tokens = Some(args.max_tokens);
    settings.transport_retries = Some(args.transport_retries);
    settings.backoff_ms = Some(args.backoff_ms);
    settings.token_env = Some(TOKEN_ENV);
    Ok((Some(Box::new(client)), settings))
}

fn locate_one(
    entry: &ManifestEntry,
    base: &Path,
    client: Option<&dyn ExtractionClient>,
    max_attempts: u32,
) -> Result<SpanRecord> {
    let path = files::resolve(base, &entry.trace);
    let trace = load_trace(&path)?;
    let outcome = match (&entry.labels, &entry.question) {
        (Some(labels), _) if !labels.is_empty() => match heuristic_locate(&trace, labels) {
            Ok(span) => Localization::Located(span),
            Err(AnswerError::NotFound) => Localization::Excluded { reason: ExclusionReason::LabelNotFound, attempts: 0 },
            Err(e) => return Err(CliError::invalid(&path, e)),
        },
        (_, Some(question)) => {
            let client = client.ok_or_else(|| {
                CliError::Validation(format!("example `{}` needs extraction; pass --replay or --endpoint", entry.id))
            })?;
            locate_with_retries(question, &trace, client, max_attempts)
                .map_err(|e| CliError::Validation(format!("example `{}`: {e}", entry.id)))?
        }
        _ => unreachable!("manifest reader requires a question or labels"),
    };
    Ok(SpanRecord { id: entry.id.clone(), outcome })
}

pub fn run(args: Args) -> Result<()> {
    if !(1..=MAX_EXTRACTION_ATTEMPTS).contains(&args.max_attempts) {
        return Err(CliError::Validation(format!(
            "--max-attempts must be in 1..={MAX_EXTRACTION_ATTEMPTS}, got {}",
            args.max_attempts
        )));
    }
    let bytes = files::read(&args.manifest)?;
    let entries = read_manifest(bytes.as_slice()).map_err(|e| CliError::invalid(&args.manifest, e))?;
    let base = args.manifest.parent().unwrap_or(Path::new(""));
    let (client, settings) = build_client(&args)?;

    let records: Vec<SpanRecord> = entries
        .par_iter()
        .map(|e| locate_one(e, base, client.as_deref(), args.max_attempts))
        .collect::<Result<_>>()?;
    files::write_with(&args.output, |buf| write_span_records(&records, buf))?;

    let located = records.iter().filter(|r| matches!(r.outcome, Localization::Located(_))).count();
    eprintln!("located {located} of {} answers", records.len());

    let mut inputs = vec![args.manifest.clone()];
    inputs.extend(args.replay.clone());
    let mut config = RunConfig::new("locate", inputs, args.output.clone());
    config.extraction = Some(settings);
    files::write_json(&files::config_path_for_file(&args.output), &config)
}
