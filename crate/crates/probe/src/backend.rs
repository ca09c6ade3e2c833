//! Completion backends: an HTTP chat-completions client and a scripted mock.

use std::path::Path;
use std::thread::sleep;
use std::time::Duration;

use log::{debug, warn};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::distribution::{from_logprobs, Distribution};
use crate::{ProbeConfig, ProbeError};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub step: usize,
    pub prompt: String,
    pub temperature: f64,
    pub logprobs: bool,
    pub top_logprobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Distribution over the first generated token, when reported.
    pub first_token: Option<Distribution>,
    /// Log-probability of each generated token, when reported.
    pub token_logprobs: Option<Vec<f64>>,
    /// The endpoint rejected the log-probability request.
    pub logprobs_refused: bool,
}

pub trait Backend {
    fn complete(&mut self, req: &CompletionRequest) -> Result<Completion, ProbeError>;
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repeat {
    Last,
    Cycle,
}

/// `{"steps": [...], "repeat": "last"|"cycle", "token_logprob": -1.0}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub steps: Vec<String>,
    #[serde(default = "default_repeat")]
    pub repeat: Repeat,
    /// Natural-log probability assigned to every token; 0 when absent.
    #[serde(default)]
    pub token_logprob: Option<f64>,
    /// Behave like an endpoint without log-probability support.
    #[serde(default)]
    pub refuse_logprobs: bool,
}

fn default_repeat() -> Repeat {
    Repeat::Last
}

/// Replays a script; the same request sequence always yields the same
/// replies.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
    label: String,
}

impl MockBackend {
    pub fn new(script: MockScript, label: &str) -> Result<Self, ProbeError> {
        if script.steps.is_empty() {
            return Err(ProbeError::Config("mock script has no steps".into()));
        }
        if matches!(script.token_logprob, Some(lp) if lp > 0.0 || lp.is_nan()) {
            return Err(ProbeError::Config("token_logprob must be <= 0".into()));
        }
        Ok(MockBackend {
            script,
            label: label.to_string(),
        })
    }

    pub fn from_json(text: &str, label: &str) -> Result<Self, ProbeError> {
        let script = serde_json::from_str(text).map_err(|e| ProbeError::Config(e.to_string()))?;
        Self::new(script, label)
    }

    pub fn from_path(path: &Path) -> Result<Self, ProbeError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProbeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    fn reply(&self, step: usize) -> &str {
        let steps = &self.script.steps;
        match self.script.repeat {
            Repeat::Last => &steps[step.min(steps.len() - 1)],
            Repeat::Cycle => &steps[step % steps.len()],
        }
    }
}

impl Backend for MockBackend {
    fn complete(&mut self, req: &CompletionRequest) -> Result<Completion, ProbeError> {
        let text = self.reply(req.step).to_string();
        if !req.logprobs || self.script.refuse_logprobs {
            return Ok(Completion {
                text,
                first_token: None,
                token_logprobs: None,
                logprobs_refused: req.logprobs,
            });
        }
        let lp = self.script.token_logprob.unwrap_or(0.0);
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let first_token = tokens.first().map(|t| from_logprobs([(*t, lp)]));
        Ok(Completion {
            first_token,
            token_logprobs: Some(vec![lp; tokens.len()]),
            text,
            logprobs_refused: false,
        })
    }

    fn describe(&self) -> String {
        format!("mock:{}", self.label)
    }
}

/// Chat-completions client over plain HTTP.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    retries: usize,
    backoff: Duration,
    /// Set once the endpoint has refused log-probabilities.
    no_logprobs: bool,
}

impl HttpBackend {
    pub fn new(cfg: &ProbeConfig) -> Result<Self, ProbeError> {
        if cfg.endpoint.is_empty() {
            return Err(ProbeError::Config("no endpoint configured".into()));
        }
        let token = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ProbeError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.request_timeout_secs))
            .build()
            .map_err(|e| ProbeError::Network(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            token,
            retries: cfg.retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            no_logprobs: false,
        })
    }

    fn body(&self, req: &CompletionRequest, logprobs: bool) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
        });
        if logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(req.top_logprobs);
        }
        body
    }

    /// One POST with retries on transport errors and 5xx/429 replies.
    fn post(&self, body: &Value) -> Result<(u16, String), ProbeError> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                warn!("retrying after {delay:?}: {last}");
                sleep(delay);
                delay *= 2;
            }
            let mut rb = self.client.post(&self.endpoint).json(body);
            if let Some(t) = &self.token {
                rb = rb.bearer_auth(t);
            }
            match rb.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().map_err(|e| ProbeError::Network(e.to_string()))?;
                    if status == 429 || status >= 500 {
                        last = format!("HTTP {status}");
                        continue;
                    }
                    return Ok((status, text));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(ProbeError::Network(format!("{} after {} attempts: {last}", self.endpoint, self.retries + 1)))
    }
}

fn parse_completion(text: &str) -> Result<Completion, ProbeError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ProbeError::Protocol(e.to_string()))?;
    let choice = &v["choices"][0];
    let content = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| ProbeError::Protocol("response has no choices[0].message.content".into()))?;
    let tokens = choice["logprobs"]["content"].as_array();
    let token_logprobs = tokens.map(|ts| ts.iter().filter_map(|t| t["logprob"].as_f64()).collect());
    let first_token = tokens.and_then(|ts| ts.first()).map(|t| {
        let tops = t["top_logprobs"].as_array().cloned().unwrap_or_default();
        let pairs: Vec<(String, f64)> = if tops.is_empty() {
            vec![(t["token"].as_str().unwrap_or("").to_string(), t["logprob"].as_f64().unwrap_or(0.0))]
        } else {
            tops.iter()
                .filter_map(|x| Some((x["token"].as_str()?.to_string(), x["logprob"].as_f64()?)))
                .collect()
        };
        from_logprobs(pairs.iter().map(|(a, b)| (a.as_str(), *b)))
    });
    Ok(Completion {
        text: content.to_string(),
        first_token,
        token_logprobs,
        logprobs_refused: false,
    })
}

impl Backend for HttpBackend {
    fn complete(&mut self, req: &CompletionRequest) -> Result<Completion, ProbeError> {
        let want = req.logprobs && !self.no_logprobs;
        let (status, text) = self.post(&self.body(req, want))?;
        if status == 400 && want {
            debug!("endpoint rejected logprobs, falling back to text equality");
            self.no_logprobs = true;
        } else if !(200..300).contains(&status) {
            return Err(ProbeError::Network(format!("HTTP {status}: {text}")));
        } else {
            let mut c = parse_completion(&text)?;
            if want && c.first_token.is_none() {
                c.logprobs_refused = true;
                self.no_logprobs = true;
            }
            return Ok(c);
        }
        let (status, text) = self.post(&self.body(req, false))?;
        if !(200..300).contains(&status) {
            return Err(ProbeError::Network(format!("HTTP {status}: {text}")));
        }
        let mut c = parse_completion(&text)?;
        c.logprobs_refused = true;
        Ok(c)
    }

    fn describe(&self) -> String {
        format!("http:{}", self.endpoint)
    }
}
