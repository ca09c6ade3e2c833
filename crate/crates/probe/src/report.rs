use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::backend::Backend;
use crate::probe::{run_probe, ProbeTranscript};
use crate::{ProbeConfig, ProbeError};

pub const CSV_HEADER: [&str; 6] = [
    "prompt_id",
    "verdict",
    "n_or_marker",
    "mean_tv",
    "mean_perplexity",
    "cot_tokens",
];

/// One row per transcript; missing statistics are left empty.
pub fn batch_report(transcripts: &[ProbeTranscript]) -> Result<String, ProbeError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| ProbeError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    let num = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for t in transcripts {
        w.write_record([
            t.prompt_id.clone(),
            t.verdict.label().to_string(),
            t.verdict.marker(),
            num(t.mean_tv()),
            num(t.mean_perplexity()),
            t.cot_tokens().to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| ProbeError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ProbeError::Io(e.to_string()))
}

/// Spaces out request starts across threads.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(per_sec: Option<f64>) -> Self {
        RateLimiter {
            interval: per_sec.map_or(Duration::ZERO, |r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        std::thread::sleep(wait);
    }
}

struct Limited<'a> {
    inner: Box<dyn Backend + Send>,
    limiter: &'a RateLimiter,
}

impl Backend for Limited<'_> {
    fn complete(&mut self, req: &crate::backend::CompletionRequest) -> Result<crate::backend::Completion, ProbeError> {
        self.limiter.acquire();
        self.inner.complete(req)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Runs one probe per `(id, prompt)` on up to `threads` workers, sharing the
/// configured request-rate cap. Results keep input order.
pub fn run_batch<F>(cfg: &ProbeConfig, prompts: &[(String, String)], threads: usize, make_backend: F) -> Result<Vec<ProbeTranscript>, ProbeError>
where
    F: Fn() -> Result<Box<dyn Backend + Send>, ProbeError> + Sync,
{
    let limiter = RateLimiter::new(cfg.max_requests_per_sec);
    let results: Mutex<Vec<Option<ProbeTranscript>>> = Mutex::new(vec![None; prompts.len()]);
    let next = Mutex::new(0usize);
    let error: Mutex<Option<ProbeError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(prompts.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= prompts.len() {
                    return;
                }
                let backend = match make_backend() {
                    Ok(b) => b,
                    Err(e) => {
                        *error.lock().unwrap() = Some(e);
                        return;
                    }
                };
                let mut b = Limited { inner: backend, limiter: &limiter };
                let t = run_probe(cfg, &prompts[i].0, &prompts[i].1, &mut b);
                results.lock().unwrap()[i] = Some(t);
            });
        }
    });
    if let Some(e) = error.into_inner().unwrap() {
        return Err(e);
    }
    Ok(results.into_inner().unwrap().into_iter().map(|t| t.expect("every prompt ran")).collect())
}
