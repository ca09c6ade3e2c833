use std::collections::BTreeMap;

use serde::Serialize;

use crate::ProbeError;

/// Reserved token receiving all probability mass not reported explicitly.
pub const OTHER: &str = "<OTHER>";

pub type Distribution = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distance {
    pub l1: f64,
    /// Total variation, `l1 / 2`.
    pub tv: f64,
}

/// Adds the unreported remainder to [`OTHER`].
pub fn pool_other(d: &Distribution) -> Result<Distribution, ProbeError> {
    let mut out = Distribution::new();
    let mut total = 0.0;
    for (tok, &p) in d {
        if p < 0.0 || p.is_nan() {
            return Err(ProbeError::NegativeProbability {
                token: tok.clone(),
                p,
            });
        }
        total += p;
        *out.entry(tok.clone()).or_insert(0.0) += p;
    }
    let rest = 1.0 - total;
    if rest > 1e-6 {
        *out.entry(OTHER.to_string()).or_insert(0.0) += rest;
    }
    Ok(out)
}

/// L1 distance over the union support, after pooling, with TV alongside.
pub fn tv_distance(a: &Distribution, b: &Distribution) -> Result<Distance, ProbeError> {
    let a = pool_other(a)?;
    let b = pool_other(b)?;
    let mut l1 = 0.0;
    for tok in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
        l1 += (a.get(tok).unwrap_or(&0.0) - b.get(tok).unwrap_or(&0.0)).abs();
    }
    Ok(Distance { l1, tv: l1 / 2.0 })
}

/// Distribution from `(token, logprob)` pairs.
pub fn from_logprobs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Distribution {
    let mut d = Distribution::new();
    for (t, lp) in pairs {
        *d.entry(t.to_string()).or_insert(0.0) += lp.exp();
    }
    d
}

/// `exp(-mean logprob)`; `None` when there are no tokens.
pub fn perplexity_of(logprobs: &[f64]) -> Option<f64> {
    if logprobs.is_empty() {
        return None;
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Some((-mean).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(pairs: &[(&str, f64)]) -> Distribution {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn unit_cases() {
        let x = d(&[("a", 0.6), ("b", 0.4)]);
        let y = d(&[("a", 0.5), ("b", 0.5)]);
        let r = tv_distance(&x, &y).unwrap();
        assert!((r.l1 - 0.2).abs() < 1e-12);
        assert!((r.tv - 0.1).abs() < 1e-12);
        assert_eq!(tv_distance(&x, &x).unwrap().l1, 0.0);
        let r = tv_distance(&d(&[("a", 1.0)]), &d(&[("b", 1.0)])).unwrap();
        assert_eq!((r.l1, r.tv), (2.0, 1.0));
    }

    #[test]
    fn pooling() {
        let r = tv_distance(&d(&[("a", 0.5)]), &d(&[("a", 0.5), ("b", 0.5)])).unwrap();
        // OTHER 0.5 on one side, b 0.5 on the other
        assert!((r.l1 - 1.0).abs() < 1e-12);
        assert!(matches!(
            tv_distance(&d(&[("a", -0.1)]), &d(&[])),
            Err(ProbeError::NegativeProbability { .. })
        ));
    }

    #[test]
    fn perplexities() {
        assert_eq!(perplexity_of(&[0.0, 0.0]), Some(1.0));
        let q = (0.25f64).ln();
        assert!((perplexity_of(&[q; 4]).unwrap() - 4.0).abs() < 1e-12);
        assert!((perplexity_of(&[-1.0; 3]).unwrap() - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(perplexity_of(&[]), None);
    }
}
