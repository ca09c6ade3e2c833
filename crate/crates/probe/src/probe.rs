use std::fmt;

use serde::Serialize;

use crate::backend::{Backend, CompletionRequest};
use crate::distribution::{perplexity_of, tv_distance, Distribution};
use crate::ProbeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Consecutive first-token distributions are compared in L1.
    FirstTokenDistribution,
    /// Consecutive outputs are compared verbatim.
    TextEquality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub index: usize,
    pub temperature: f64,
    pub prompt: String,
    pub output: String,
    pub distribution: Option<Distribution>,
    /// Distance to the previous step's distribution (from step 1 on).
    pub l1: Option<f64>,
    pub tv: Option<f64>,
    /// Verbatim equality with the previous output (from step 1 on).
    pub same_text: Option<bool>,
    pub token_logprobs: Option<Vec<f64>>,
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    Converged { n: usize },
    /// `max_iters` queries without stabilising.
    Divergent { max_iters: usize },
    Aborted { reason: String },
}

impl Verdict {
    /// `n`, `>N`, or `aborted`.
    pub fn marker(&self) -> String {
        match self {
            Verdict::Converged { n } => n.to_string(),
            Verdict::Divergent { max_iters } => format!(">{max_iters}"),
            Verdict::Aborted { .. } => "aborted".into(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Converged { .. } => "converged",
            Verdict::Divergent { .. } => "divergent",
            Verdict::Aborted { .. } => "aborted",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Aborted { .. } => f.write_str(self.label()),
            _ => write!(f, "{} {}", self.label(), self.marker()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeTranscript {
    pub prompt_id: String,
    pub backend: String,
    pub model: String,
    pub mode: Mode,
    /// Which output position the compared distribution belongs to.
    pub distribution_position: &'static str,
    pub fallback_reason: Option<String>,
    pub tv_eps: f64,
    pub max_iters: usize,
    pub steps: Vec<Step>,
    pub verdict: Verdict,
}

impl ProbeTranscript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialise") + "\n"
    }

    pub fn mean_tv(&self) -> Option<f64> {
        mean(self.steps.iter().filter_map(|s| s.tv))
    }

    pub fn mean_perplexity(&self) -> Option<f64> {
        mean(self.steps.iter().filter_map(|s| s.perplexity))
    }

    /// Whitespace tokens in the first output.
    pub fn cot_tokens(&self) -> usize {
        self.steps.first().map_or(0, |s| s.output.split_whitespace().count())
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// First step `j ≥ 1` whose distance to step `j - 1` is below `eps`, or
/// whose text repeats in text-equality mode.
pub fn decide(steps: &[Step], mode: Mode, eps: f64, max_iters: usize) -> Verdict {
    for s in steps.iter().skip(1) {
        let stable = match mode {
            Mode::FirstTokenDistribution => s.l1.is_some_and(|d| d < eps),
            Mode::TextEquality => s.same_text == Some(true),
        };
        if stable {
            return Verdict::Converged { n: s.index };
        }
    }
    Verdict::Divergent { max_iters }
}

/// Per-step perplexity; `None` where log-probabilities are missing.
pub fn perplexity(steps: &[Step]) -> Vec<Option<f64>> {
    steps
        .iter()
        .map(|s| s.token_logprobs.as_deref().and_then(perplexity_of))
        .collect()
}

/// Feeds each output back through the template until consecutive outputs
/// stabilise or `max_iters` queries have been made.
pub fn run_probe(cfg: &ProbeConfig, prompt_id: &str, prompt: &str, backend: &mut dyn Backend) -> ProbeTranscript {
    let mut t = ProbeTranscript {
        prompt_id: prompt_id.to_string(),
        backend: backend.describe(),
        model: cfg.model.clone(),
        mode: if cfg.logprobs { Mode::FirstTokenDistribution } else { Mode::TextEquality },
        distribution_position: "first-token",
        fallback_reason: (!cfg.logprobs).then(|| "log-probabilities not requested".to_string()),
        tv_eps: cfg.tv_eps,
        max_iters: cfg.max_iters,
        steps: Vec::new(),
        verdict: Verdict::Divergent { max_iters: cfg.max_iters },
    };
    let mut current = prompt.to_string();
    for i in 0..cfg.max_iters {
        let req = CompletionRequest {
            step: i,
            prompt: current.clone(),
            temperature: cfg.temperature(i),
            logprobs: t.mode == Mode::FirstTokenDistribution,
            top_logprobs: cfg.top_logprobs,
        };
        let c = match backend.complete(&req) {
            Ok(c) => c,
            Err(e) => {
                t.verdict = Verdict::Aborted { reason: e.to_string() };
                return t;
            }
        };
        if t.mode == Mode::FirstTokenDistribution && (c.logprobs_refused || c.first_token.is_none()) {
            t.mode = Mode::TextEquality;
            t.fallback_reason = Some(format!("no log-probabilities at step {i}"));
        }
        let prev = t.steps.last();
        let (l1, tv) = match (prev.and_then(|p| p.distribution.as_ref()), &c.first_token) {
            (Some(a), Some(b)) if t.mode == Mode::FirstTokenDistribution => match tv_distance(a, b) {
                Ok(d) => (Some(d.l1), Some(d.tv)),
                Err(e) => {
                    t.verdict = Verdict::Aborted { reason: e.to_string() };
                    return t;
                }
            },
            _ => (None, None),
        };
        let same_text = prev.map(|p| p.output == c.text);
        let perplexity = c.token_logprobs.as_deref().and_then(perplexity_of);
        current = cfg.feedback(&c.text);
        t.steps.push(Step {
            index: i,
            temperature: req.temperature,
            prompt: req.prompt,
            output: c.text,
            distribution: c.first_token,
            l1,
            tv,
            same_text,
            token_logprobs: c.token_logprobs,
            perplexity,
        });
        if let v @ Verdict::Converged { .. } = decide(&t.steps, t.mode, cfg.tv_eps, cfg.max_iters) {
            t.verdict = v;
            return t;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;

    fn cfg(max_iters: usize) -> ProbeConfig {
        ProbeConfig {
            max_iters,
            model: "mock".into(),
            ..ProbeConfig::default()
        }
    }

    fn mock(json: &str) -> MockBackend {
        MockBackend::from_json(json, "inline").unwrap()
    }

    #[test]
    fn constant_converges_at_one() {
        let t = run_probe(&cfg(50), "c", "What is 2+2?", &mut mock(r#"{"steps": ["Four."]}"#));
        assert_eq!(t.verdict, Verdict::Converged { n: 1 });
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.steps[1].l1, Some(0.0));
        assert_eq!(t.steps[1].prompt, "You just said: 'Four.'. Please continue or revise.");
    }

    #[test]
    fn one_revision_converges_at_two() {
        let t = run_probe(&cfg(50), "r", "q", &mut mock(r#"{"steps": ["Maybe 5.", "Actually 4.", "Actually 4."]}"#));
        assert_eq!(t.verdict, Verdict::Converged { n: 2 });
        assert_eq!(t.steps[1].l1, Some(2.0));
        assert_eq!(t.steps[1].tv, Some(1.0));
    }

    #[test]
    fn oscillator_diverges() {
        let t = run_probe(&cfg(10), "o", "q", &mut mock(r#"{"steps": ["True.", "False."], "repeat": "cycle"}"#));
        assert_eq!(t.verdict, Verdict::Divergent { max_iters: 10 });
        assert_eq!(t.verdict.to_string(), "divergent >10");
        assert_eq!(t.steps.len(), 10);
    }

    #[test]
    fn refusal_falls_back_to_text() {
        let t = run_probe(
            &cfg(20),
            "f",
            "q",
            &mut mock(r#"{"steps": ["a b", "a c", "a c"], "refuse_logprobs": true}"#),
        );
        assert_eq!(t.mode, Mode::TextEquality);
        assert!(t.fallback_reason.is_some());
        assert_eq!(t.verdict, Verdict::Converged { n: 2 });
    }

    #[test]
    fn annealing_and_perplexity() {
        let t = run_probe(&cfg(6), "a", "q", &mut mock(r#"{"steps": ["x", "y"], "repeat": "cycle", "token_logprob": -1.0}"#));
        let temps: Vec<f64> = t.steps.iter().map(|s| s.temperature).collect();
        assert_eq!(temps, [0.7, 0.5, 0.3, 0.1, 0.0, 0.0]);
        for p in perplexity(&t.steps) {
            assert!((p.unwrap() - std::f64::consts::E).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_transcripts() {
        let script = r#"{"steps": ["one", "two", "two"], "token_logprob": -0.5}"#;
        let a = run_probe(&cfg(10), "d", "q", &mut mock(script)).to_json();
        let b = run_probe(&cfg(10), "d", "q", &mut mock(script)).to_json();
        assert_eq!(a, b);
    }
}
