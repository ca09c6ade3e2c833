mod common;

use std::cell::Cell;

use common::{model, uniform_formula};
use ofi_core::engine::evaluate;
use ofi_core::formula::parse;
use ofi_core::metafold::{
    anchor_is_total, metafold_run, run_builtin, schedule, verify_convergence, Builtin, CollatzLike, Counter,
    DomainGenerator, FiniteModel, MetafoldError, Outcome,
};
use proptest::prelude::*;

const REACH: &str = r"mu X.(p \/ <>X)";

#[test]
fn counter_converges_in_second_envelope() {
    let f = parse(REACH).unwrap();
    let g = Counter { goal: Some(6), limit: None };
    let out = metafold_run(&f, &g, &schedule(&[4, 16], 32), 10_000).unwrap();
    let Outcome::Converged { k, t, ref value, ref anchors } = out else {
        panic!("{}", out.summary());
    };
    assert_eq!(k, 1);
    assert!(t <= 16);
    assert!(value.root_row()[0]);
    assert_eq!(anchors.len(), 1);
    assert_eq!(anchors[0].beta_star, 4);
    assert!(anchor_is_total(&anchors[0], &f, &g, 32));
    assert!(verify_convergence(&out, &f, &g));
}

#[test]
fn unreachable_goal_exhausts_schedule() {
    let f = parse(REACH).unwrap();
    let g = Counter { goal: None, limit: None };
    let out = metafold_run(&f, &g, &schedule(&[4, 8], 32), 10_000).unwrap();
    let Outcome::ScheduleExhausted { ref anchors, .. } = out else {
        panic!("{}", out.summary());
    };
    assert_eq!(anchors.len(), 2);
    assert!(!verify_convergence(&out, &f, &g));
}

#[test]
fn bounded_counter_settles_to_false() {
    let f = parse(REACH).unwrap();
    let g = Counter { goal: None, limit: Some(3) };
    let out = metafold_run(&f, &g, &schedule(&[16], 32), 10_000).unwrap();
    let Outcome::Converged { ref value, .. } = out else {
        panic!("{}", out.summary());
    };
    assert_eq!(value.len(), 4);
    assert!(!value.root_row()[0]);
    assert!(verify_convergence(&out, &f, &g));
}

#[test]
fn tampered_fixed_point_is_rejected() {
    let f = parse(REACH).unwrap();
    let g = Counter { goal: Some(2), limit: None };
    let mut out = metafold_run(&f, &g, &schedule(&[32], 32), 10_000).unwrap();
    assert!(verify_convergence(&out, &f, &g));
    if let Outcome::Converged { value, .. } = &mut out {
        value.values.flip(0, 0);
    }
    assert!(!verify_convergence(&out, &f, &g));
}

#[test]
fn builtins_from_specs() {
    let f = parse(REACH).unwrap();
    for spec in ["counter:3", "grid:2,1", "collatz-like:6", "collatz-like:7:5"] {
        let b: Builtin = spec.parse().unwrap();
        let (out, verified) = run_builtin(&f, &b, &schedule(&[8, 64], 64), 10_000).unwrap();
        assert!(matches!(out, Outcome::Converged { .. }), "{spec}: {}", out.summary());
        assert!(verified, "{spec}");
    }
    for bad in ["counter", "grid:1", "teapot:3", "counter:x"] {
        assert!(matches!(bad.parse::<Builtin>(), Err(MetafoldError::BadSpec(_))), "{bad}");
    }
}

#[test]
fn collatz_target_off_orbit_never_holds() {
    let f = parse(REACH).unwrap();
    let g = CollatzLike { start: 6, target: 7 };
    let out = metafold_run(&f, &g, &schedule(&[64], 64), 10_000).unwrap();
    let Outcome::Converged { ref value, .. } = out else {
        panic!("{}", out.summary());
    };
    assert!(!value.root_row()[0]);
}

#[test]
fn schedule_errors() {
    let f = parse(REACH).unwrap();
    let g = Counter { goal: Some(1), limit: None };
    assert_eq!(metafold_run(&f, &g, &[], 100).unwrap_err(), MetafoldError::EmptySchedule);
    assert_eq!(metafold_run(&f, &g, &schedule(&[0], 8), 100).unwrap_err(), MetafoldError::ZeroBudget);
    assert_eq!(metafold_run(&f, &g, &schedule(&[4], 0), 100).unwrap_err(), MetafoldError::ZeroBudget);
}

/// Successors drift with every call.
struct Flaky {
    calls: Cell<u64>,
}

impl DomainGenerator for Flaky {
    type State = u64;

    fn seeds(&self) -> Vec<u64> {
        vec![0]
    }

    fn successors(&self, s: &u64) -> Vec<u64> {
        self.calls.set(self.calls.get() + 1);
        vec![s + self.calls.get()]
    }

    fn holds(&self, _: &str, _: &u64) -> bool {
        false
    }
}

#[test]
fn nondeterministic_generator_is_reported() {
    let f = parse(REACH).unwrap();
    let g = Flaky { calls: Cell::new(0) };
    let err = metafold_run(&f, &g, &schedule(&[8], 32), 100).unwrap_err();
    assert!(matches!(err, MetafoldError::Nondeterministic { .. }), "{err}");
}

struct Empty;

impl DomainGenerator for Empty {
    type State = u8;

    fn seeds(&self) -> Vec<u8> {
        Vec::new()
    }

    fn successors(&self, _: &u8) -> Vec<u8> {
        Vec::new()
    }

    fn holds(&self, _: &str, _: &u8) -> bool {
        false
    }
}

#[test]
fn generator_without_seeds() {
    let f = parse(REACH).unwrap();
    assert_eq!(metafold_run(&f, &Empty, &schedule(&[4], 4), 100).unwrap_err(), MetafoldError::NoSeeds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// On a finite model with a roomy envelope the lazy run lands on the
    /// engine's truth value at the designated state.
    #[test]
    fn finite_domains_match_engine(f in uniform_formula(), m in model()) {
        let g = FiniteModel(m.clone());
        let out = metafold_run(&f, &g, &schedule(&[1000], 64), 100_000).unwrap();
        let Outcome::Converged { k, ref value, .. } = out else {
            return Err(TestCaseError::fail(out.summary()));
        };
        prop_assert_eq!(k, 0);
        prop_assert!(verify_convergence(&out, &f, &g));
        let root = value.states.iter().position(|&s| s == m.initial()).unwrap();
        prop_assert_eq!(value.root_row()[root], evaluate(&f, &m).unwrap().top_truth);
    }
}
