use serde::{Deserialize, Serialize};

use crate::ProbeError;

fn default_max_iters() -> usize {
    50
}
fn default_eps() -> f64 {
    0.01
}
fn default_anneal() -> Vec<f64> {
    vec![0.7, 0.5, 0.3, 0.1, 0.0]
}
fn default_template() -> String {
    "You just said: '{output}'. Please continue or revise.".to_string()
}
fn default_timeout() -> u64 {
    30
}
fn default_true() -> bool {
    true
}
fn default_top_k() -> usize {
    20
}
fn default_tail() -> usize {
    1024
}
fn default_retries() -> usize {
    3
}
fn default_backoff() -> u64 {
    250
}

/// Probe settings, usually read from a JSON file. Every field except
/// `endpoint` and `model` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_eps")]
    pub tv_eps: f64,
    #[serde(default = "default_anneal")]
    pub anneal: Vec<f64>,
    #[serde(default = "default_template")]
    pub feedback_template: String,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_true")]
    pub logprobs: bool,
    #[serde(default = "default_top_k")]
    pub top_logprobs: usize,
    /// Feedback keeps only this many trailing whitespace tokens of the output.
    #[serde(default = "default_tail")]
    pub tail_tokens: usize,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Upper bound on requests per second across concurrent probes.
    #[serde(default)]
    pub max_requests_per_sec: Option<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ProbeConfig {
    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        let cfg: ProbeConfig =
            serde_json::from_str(text).map_err(|e| ProbeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let fail = |m: &str| Err(ProbeError::Config(m.to_string()));
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1");
        }
        if !(self.tv_eps > 0.0 && self.tv_eps < 2.0) {
            return fail("tv_eps must lie in (0, 2)");
        }
        if self.anneal.is_empty() || *self.anneal.last().unwrap() != 0.0 {
            return fail("anneal schedule must end at 0");
        }
        if self.anneal.windows(2).any(|w| w[1] > w[0]) || self.anneal.iter().any(|t| *t < 0.0) {
            return fail("anneal schedule must be non-increasing and non-negative");
        }
        if !self.feedback_template.contains("{output}") {
            return fail("feedback_template needs an {output} slot");
        }
        if matches!(self.max_requests_per_sec, Some(r) if r <= 0.0) {
            return fail("max_requests_per_sec must be positive");
        }
        Ok(())
    }

    /// Temperature for step `i`: the schedule, then its final 0.
    pub fn temperature(&self, i: usize) -> f64 {
        self.anneal[i.min(self.anneal.len() - 1)]
    }

    pub fn feedback(&self, output: &str) -> String {
        let tokens: Vec<&str> = output.split_whitespace().collect();
        let tail = if tokens.len() > self.tail_tokens {
            tokens[tokens.len() - self.tail_tokens..].join(" ")
        } else {
            output.to_string()
        };
        self.feedback_template.replace("{output}", &tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ProbeConfig::default();
        assert_eq!(c.max_iters, 50);
        assert_eq!(c.tv_eps, 0.01);
        assert_eq!(c.temperature(0), 0.7);
        assert_eq!(c.temperature(99), 0.0);
        assert_eq!(c.tail_tokens, 1024);
        assert_eq!(c.feedback("hi"), "You just said: 'hi'. Please continue or revise.");
    }

    #[test]
    fn validation() {
        assert!(ProbeConfig::from_json(r#"{"max_iters": 0}"#).is_err());
        assert!(ProbeConfig::from_json(r#"{"anneal": [0.5, 0.7, 0]}"#).is_err());
        assert!(ProbeConfig::from_json(r#"{"anneal": [0.5, 0.1]}"#).is_err());
        assert!(ProbeConfig::from_json(r#"{"tv_eps": 2.0}"#).is_err());
        assert!(ProbeConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ProbeConfig::from_json(r#"{"model": "m", "tv_eps": 0.05}"#).is_ok());
    }

    #[test]
    fn tail_truncation() {
        let c = ProbeConfig {
            tail_tokens: 2,
            feedback_template: "<{output}>".into(),
            ..ProbeConfig::default()
        };
        assert_eq!(c.feedback("a b  c d"), "<c d>");
        assert_eq!(c.feedback("a  b"), "<a  b>");
    }
}
