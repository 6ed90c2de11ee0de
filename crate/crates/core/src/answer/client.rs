//! Extraction clients: a replay client backed by canned responses and a
//! generic HTTP completion client.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{build_prompt, TEMPLATE_ID};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionRequest {
    pub question: String,
    pub long_answer: String,
    pub template_id: &'static str,
}

impl ExtractionRequest {
    pub fn new(question: impl Into<String>, long_answer: impl Into<String>) -> Self {
        Self { question: question.into(), long_answer: long_answer.into(), template_id: TEMPLATE_ID }
    }

    pub fn prompt(&self) -> String {
        build_prompt(&self.question, &self.long_answer)
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no canned response left for question {0:?}")]
    Exhausted(String),
}

/// Anything that can complete an extraction prompt. Implementations are
/// shared across worker threads.
pub trait ExtractionClient: Send + Sync {
    fn complete(&self, request: &ExtractionRequest) -> Result<String, ClientError>;
}

impl<C: ExtractionClient + ?Sized> ExtractionClient for &C {
    fn complete(&self, request: &ExtractionRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Deserialize)]
struct ReplayLine {
    question: String,
    #[serde(default)]
    long_answer: Option<String>,
    responses: Vec<String>,
}

type ReplayKey = (String, Option<String>);

#[derive(Debug, Error)]
pub enum ReplayParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serves canned completions, one per call, in file order. Lines look like
/// `{"question": "...", "responses": ["Rome"]}`; an optional `long_answer`
/// field narrows the entry to one generation, and such entries are consulted
/// before question-wide ones. Repeated keys append to the same queue.
#[derive(Debug, Default)]
pub struct ReplayClient {
    queues: Mutex<HashMap<ReplayKey, VecDeque<String>>>,
}

impl ReplayClient {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, ReplayParseError> {
        let mut queues: HashMap<ReplayKey, VecDeque<String>> = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayLine = serde_json::from_str(&line)
                .map_err(|e| ReplayParseError::Malformed { line: n + 1, message: e.to_string() })?;
            queues.entry((rec.question, rec.long_answer)).or_default().extend(rec.responses);
        }
        Ok(Self { queues: Mutex::new(queues) })
    }

    pub fn from_pairs<I, Q, R>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Q, Vec<R>)>,
        Q: Into<String>,
        R: Into<String>,
    {
        let queues = pairs
            .into_iter()
            .map(|(q, rs)| ((q.into(), None), rs.into_iter().map(Into::into).collect()))
            .collect();
        Self { queues: Mutex::new(queues) }
    }
}

impl ExtractionClient for ReplayClient {
    fn complete(&self, request: &ExtractionRequest) -> Result<String, ClientError> {
        let mut queues = self.queues.lock().expect("replay client mutex poisoned");
        let specific = (request.question.clone(), Some(request.long_answer.clone()));
        if let Some(r) = queues.get_mut(&specific).and_then(|q| q.pop_front()) {
            return Ok(r);
        }
        queues
            .get_mut(&(request.question.clone(), None))
            .and_then(|q| q.pop_front())
            .ok_or_else(|| ClientError::Exhausted(request.question.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub max_tokens: u32,
    /// Extra tries for transport failures within one extraction attempt.
    pub transport_retries: u32,
    pub backoff: Duration,
    pub bearer_token: Option<String>,
}

impl HttpClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            max_tokens: 32,
            transport_retries: 0,
            backoff: Duration::from_millis(500),
            bearer_token: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub max_tokens: u32,
    pub temperature: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Decodes a `{"text": "..."}` completion body.
pub fn decode_completion_response(body: &[u8]) -> Result<String, ClientError> {
    serde_json::from_slice::<CompletionResponse>(body)
        .map(|r| r.text)
        .map_err(|e| ClientError::Malformed(e.to_string()))
}

/// POSTs `{prompt, max_tokens, temperature: 0}` and reads `{text}`.
pub struct HttpClient {
    config: HttpClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self { config, http })
    }

    fn post_once(&self, prompt: &str) -> Result<String, ClientError> {
        let body = CompletionRequest { prompt, max_tokens: self.config.max_tokens, temperature: 0 };
        let mut req = self.http.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.config.bearer_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Transport(format!("HTTP {status}")));
        }
        decode_completion_response(&bytes)
    }
}

impl ExtractionClient for HttpClient {
    fn complete(&self, request: &ExtractionRequest) -> Result<String, ClientError> {
        let prompt = request.prompt();
        let mut tries = 0;
        loop {
            match self.post_once(&prompt) {
                Err(ClientError::Transport(_)) if tries < self.config.transport_retries => {
                    tries += 1;
                    std::thread::sleep(self.config.backoff * tries);
                }
                other => return other,
            }
        }
    }
}
