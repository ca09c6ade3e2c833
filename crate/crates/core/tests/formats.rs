mod common;

use common::{formula, model};
use ofi_core::engine::{evaluate_prob, ContractionConfig, EngineError, ProbValuation};
use ofi_core::formula::{parse, FormulaError};
use ofi_core::model::{fixture_from_spec, KripkeModel, ModelError};
use proptest::prelude::*;

proptest! {
    #[test]
    fn model_text_round_trip(m in model()) {
        prop_assert_eq!(KripkeModel::load(&m.save()).unwrap(), m);
    }

    #[test]
    fn model_json_round_trip(m in model()) {
        prop_assert_eq!(KripkeModel::load(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn prob_values_stay_in_unit_interval(f in formula(), m in model()) {
        let cfg = ContractionConfig::new(0.5, 0.01).unwrap();
        let t = evaluate_prob(&f, &m, &ProbValuation::new(), &cfg).unwrap();
        prop_assert!(t.stages.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!((0.0..=1.0).contains(&t.top_value));
        if let Some(k) = t.fold_back {
            prop_assert_eq!(&t.stages[k], &t.stages[k + 1]);
            prop_assert_eq!(t.error_curve[k], 0.0);
        }
    }
}

#[test]
fn fixtures_by_spec() {
    assert_eq!(fixture_from_spec("chain:3").unwrap().len(), 4);
    assert_eq!(fixture_from_spec("ring:4").unwrap().len(), 4);
    assert_eq!(fixture_from_spec("clique:8").unwrap().succ(0).len(), 8);
    assert!(matches!(fixture_from_spec("cube:3"), Err(ModelError::UnknownFixture(_))));
    assert!(matches!(fixture_from_spec("chain:0"), Err(ModelError::FixtureSize)));
}

#[test]
fn model_errors_carry_lines() {
    let err = KripkeModel::load("states: 2\nedges:\n0 -> 5\n").unwrap_err();
    assert!(matches!(err, ModelError::OutOfRange { state: 5, states: 2 }));
    let err = KripkeModel::load("states: 2\nedges:\n0 => 1\n").unwrap_err();
    assert!(matches!(err, ModelError::Malformed { line: 3, .. }));
}

#[test]
fn formula_errors_carry_positions() {
    assert!(matches!(parse("mu X.(p /\\ Y)"), Err(FormulaError::FreeVariable { .. })));
    assert!(matches!(parse("~<>p"), Err(FormulaError::NegationOnNonAtom { line: 1, column: 1 })));
    assert!(matches!(parse("p /\\\n  )"), Err(FormulaError::Syntax { line: 2, .. })));
}

#[test]
fn single_state_discounted_reach() {
    let m = KripkeModel::load("states: 1\nedges:\nvaluation:\n").unwrap();
    let f = parse(r"mu X.(c \/ @X)").unwrap();
    let atoms = ProbValuation::from([("c".to_string(), vec![0.25])]);
    let cfg = ContractionConfig::new(0.5, 0.01).unwrap();
    let t = evaluate_prob(&f, &m, &atoms, &cfg).unwrap();
    let top: Vec<f64> = (0..3).map(|s| t.value(s, 0, 0)).collect();
    assert_eq!(top, vec![0.0, 0.25, 0.25]);
    assert_eq!(t.predicted_steps, 7);
    assert_eq!(t.top_value, 0.25);

    let bad = ProbValuation::from([("c".to_string(), vec![1.5])]);
    assert!(matches!(evaluate_prob(&f, &m, &bad, &cfg), Err(EngineError::AtomOutOfRange { .. })));
}
