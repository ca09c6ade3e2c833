use std::collections::BTreeMap;

use ofi_probe::backend::MockBackend;
use ofi_probe::{decide, run_probe, tv_distance, Distribution, Mode, ProbeConfig, Verdict};
use proptest::prelude::*;

fn dist(weights: &[u32]) -> Distribution {
    let total: u32 = weights.iter().sum::<u32>().max(1);
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| (format!("t{i}"), *w as f64 / total as f64))
        .collect()
}

fn script(replies: &[u8], cycle: bool) -> String {
    let steps: Vec<String> = replies.iter().map(|r| format!("w{r} tail")).collect();
    serde_json::json!({"steps": steps, "repeat": if cycle { "cycle" } else { "last" }}).to_string()
}

proptest! {
    #[test]
    fn distance_is_a_bounded_metric(a in prop::collection::vec(1u32..10, 1..6), b in prop::collection::vec(1u32..10, 1..6)) {
        let (x, y) = (dist(&a), dist(&b));
        let d = tv_distance(&x, &y).unwrap();
        prop_assert!(d.l1 >= 0.0 && d.l1 <= 2.0 + 1e-12);
        prop_assert!((d.tv * 2.0 - d.l1).abs() < 1e-15);
        prop_assert!((tv_distance(&y, &x).unwrap().l1 - d.l1).abs() < 1e-12);
        prop_assert!(tv_distance(&x, &x).unwrap().l1 < 1e-12);
    }

    #[test]
    fn looser_threshold_converges_no_later(replies in prop::collection::vec(0u8..3, 1..8), eps in 0.001f64..1.9, extra in 0.0f64..0.5) {
        let cfg = ProbeConfig { max_iters: 12, tv_eps: eps, ..ProbeConfig::default() };
        let mut mock = MockBackend::from_json(&script(&replies, true), "p").unwrap();
        let t = run_probe(&cfg, "id", "q", &mut mock);
        let loose = decide(&t.steps, t.mode, (eps + extra).min(1.99), cfg.max_iters);
        if let Verdict::Converged { n } = t.verdict {
            let ok = matches!(loose, Verdict::Converged { n: m } if m <= n);
            prop_assert!(ok);
        }
    }

    #[test]
    fn text_equality_implies_distribution_convergence(replies in prop::collection::vec(0u8..3, 1..8)) {
        // mock distributions are point masses on the first word
        let cfg = ProbeConfig { max_iters: 12, ..ProbeConfig::default() };
        let mut mock = MockBackend::from_json(&script(&replies, false), "p").unwrap();
        let t = run_probe(&cfg, "id", "q", &mut mock);
        let by_text = decide(&t.steps, Mode::TextEquality, cfg.tv_eps, cfg.max_iters);
        if let Verdict::Converged { n } = by_text {
            let ok = matches!(t.verdict, Verdict::Converged { n: m } if m <= n);
            prop_assert!(ok);
        }
    }

    #[test]
    fn divergence_only_at_the_cap(replies in prop::collection::vec(0u8..4, 1..6), max_iters in 1usize..15) {
        let cfg = ProbeConfig { max_iters, ..ProbeConfig::default() };
        let mut mock = MockBackend::from_json(&script(&replies, true), "p").unwrap();
        let t = run_probe(&cfg, "id", "q", &mut mock);
        if let Verdict::Divergent { max_iters: m } = t.verdict {
            prop_assert_eq!(m, max_iters);
            prop_assert_eq!(t.steps.len(), max_iters);
            if let Some(d) = t.steps.last().unwrap().l1 {
                prop_assert!(d >= cfg.tv_eps);
            }
        }
    }

    #[test]
    fn mock_runs_are_byte_identical(replies in prop::collection::vec(0u8..3, 1..6)) {
        let cfg = ProbeConfig { max_iters: 8, ..ProbeConfig::default() };
        let run = || {
            let mut mock = MockBackend::from_json(&script(&replies, true), "p").unwrap();
            run_probe(&cfg, "id", "q", &mut mock).to_json()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn negative_mass_is_rejected() {
    let bad: Distribution = BTreeMap::from([("a".to_string(), -0.5)]);
    assert!(tv_distance(&bad, &bad).is_err());
}

#[test]
fn mock_loaded_from_disk_matches_inline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("script.json");
    let text = script(&[0, 1, 1], false);
    std::fs::write(&path, &text).unwrap();
    let cfg = ProbeConfig { max_iters: 6, ..ProbeConfig::default() };
    let mut disk = MockBackend::from_path(&path).unwrap();
    let mut inline = MockBackend::from_json(&text, "p").unwrap();
    let a = run_probe(&cfg, "id", "q", &mut disk);
    let b = run_probe(&cfg, "id", "q", &mut inline);
    assert_eq!(a.verdict, b.verdict);
    assert_eq!(a.steps.len(), b.steps.len());
}
