//! Iterated self-feedback probing of text-completion models.
//!
//! A probe sends a prompt, wraps the reply in a feedback template, sends
//! that back, and records how many rounds pass before consecutive replies
//! stop changing.

pub mod backend;
pub mod config;
pub mod distribution;
pub mod probe;
pub mod report;

use thiserror::Error;

pub use backend::{Backend, HttpBackend, MockBackend};
pub use config::ProbeConfig;
pub use distribution::{tv_distance, Distance, Distribution, OTHER};
pub use probe::{decide, perplexity, run_probe, Mode, ProbeTranscript, Step, Verdict};
pub use report::{batch_report, run_batch};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProbeError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("network: {0}")]
    Network(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("negative probability {p} for token `{token}`")]
    NegativeProbability { token: String, p: f64 },
    #[error("i/o: {0}")]
    Io(String),
}
