//! Seeded random inputs and the cross-backend consistency suite.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{compress, extract, simulate};
use crate::engine::{evaluate, oracle_evaluate, StageTrace};
use crate::formula::{Fixpoint, Formula, Node};
use crate::game::{build_game, check_rank_ofi, solve_ranks, Player, RankOfiReport};
use crate::model::{fixture, FixtureKind, KripkeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub max_states: usize,
    pub max_size: usize,
    pub max_depth: usize,
    /// When false, every binder of a formula has one common kind.
    pub mixed: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_states: 6,
            max_size: 10,
            max_depth: 5,
            mixed: false,
        }
    }
}

struct FormulaGen<'r> {
    rng: &'r mut ChaCha8Rng,
    cfg: GenConfig,
    kind: Fixpoint,
    fresh: usize,
}

impl FormulaGen<'_> {
    fn literal(&mut self, budget: usize, room: bool, scope: &[String]) -> Node {
        let atom = Node::atom(["p", "q"].choose(self.rng).unwrap());
        let roll = self.rng.gen_range(0..3);
        if roll == 0 && !scope.is_empty() {
            Node::var(scope.choose(self.rng).unwrap())
        } else if roll == 1 && budget >= 2 && room {
            Node::not(atom)
        } else {
            atom
        }
    }

    fn node(&mut self, budget: usize, depth: usize, scope: &mut Vec<String>) -> Node {
        // a node at `depth` sits on level depth + 1, its children one below
        let room = depth + 2 <= self.cfg.max_depth;
        if budget <= 1 || !room || self.rng.gen_bool(0.2) {
            return self.literal(budget, room, scope);
        }
        match self.rng.gen_range(0..7) {
            0 | 1 if budget >= 3 => {
                let left = self.rng.gen_range(1..budget - 1);
                let l = self.node(left, depth + 1, scope);
                let r = self.node(budget - 1 - l.size(), depth + 1, scope);
                if self.rng.gen_bool(0.5) {
                    Node::and(l, r)
                } else {
                    Node::or(l, r)
                }
            }
            2 => Node::diamond(self.node(budget - 1, depth + 1, scope)),
            3 => Node::necessity(self.node(budget - 1, depth + 1, scope)),
            4 => Node::delay(self.node(budget - 1, depth + 1, scope)),
            _ => {
                let name = format!("V{}", self.fresh);
                self.fresh += 1;
                let kind = if self.cfg.mixed && self.rng.gen_bool(0.5) {
                    self.kind.dual()
                } else {
                    self.kind
                };
                scope.push(name.clone());
                let body = self.node(budget - 1, depth + 1, scope);
                scope.pop();
                match kind {
                    Fixpoint::Mu => Node::mu(&name, body),
                    Fixpoint::Nu => Node::nu(&name, body),
                }
            }
        }
    }
}

/// A closed formula in positive normal form with at most `max_size` nodes.
pub fn random_formula(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Formula {
    let kind = if rng.gen_bool(0.5) { Fixpoint::Mu } else { Fixpoint::Nu };
    let budget = rng.gen_range(1..=cfg.max_size);
    let mut g = FormulaGen {
        rng,
        cfg: *cfg,
        kind,
        fresh: 0,
    };
    let node = g.node(budget, 0, &mut Vec::new());
    Formula::new(node).expect("generator only emits closed PNF formulas")
}

/// A model with random edges (deadlocks allowed) and random `p`, `q`.
pub fn random_model(rng: &mut ChaCha8Rng, max_states: usize) -> KripkeModel {
    let n = rng.gen_range(1..=max_states);
    let density = rng.gen_range(0.1..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if rng.gen_bool(density) {
                edges.push((a, b));
            }
        }
    }
    let mut valuation = Vec::new();
    for atom in ["p", "q"] {
        let set: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        valuation.push((atom.to_string(), set));
    }
    KripkeModel::new(n, edges, valuation, Some(0)).expect("generated model is valid")
}

/// `count` seeded (formula, model) pairs.
pub fn random_cases(seed: u64, count: usize, cfg: &GenConfig) -> Vec<(Formula, KripkeModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let f = random_formula(&mut rng, cfg);
            let m = random_model(&mut rng, cfg.max_states);
            (f, m)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Property {
    OracleEquivalence,
    CircuitEquivalence,
    PrefixBound,
    DeltaLayers,
    Compression,
    WinnerConsistency,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::OracleEquivalence,
        Property::CircuitEquivalence,
        Property::PrefixBound,
        Property::DeltaLayers,
        Property::Compression,
        Property::WinnerConsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::OracleEquivalence => "engine=oracle",
            Property::CircuitEquivalence => "engine=circuit",
            Property::PrefixBound => "prefix-bound",
            Property::DeltaLayers => "delta-layers",
            Property::Compression => "compression",
            Property::WinnerConsistency => "winner-consistency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub case: usize,
    pub property: Property,
    pub formula: String,
    pub model: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub cases: usize,
    /// Pass counts in [`Property::ALL`] order.
    pub passed: Vec<usize>,
    pub failures: Vec<Failure>,
}

impl SuiteReport {
    pub fn passed(&self, p: Property) -> usize {
        let i = Property::ALL.iter().position(|&q| q == p).unwrap();
        self.passed[i]
    }

    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, n) in Property::ALL.iter().zip(&self.passed) {
            writeln!(f, "{}: {}/{}", p.name(), n, self.cases)?;
        }
        Ok(())
    }
}

/// Cells flipped by the delta layers are pairwise disjoint and, applied to
/// the seed, rebuild the final stage.
pub fn deltas_reconstitute(t: &StageTrace) -> bool {
    let mut seen = std::collections::HashSet::new();
    let mut v = t.stages[0].clone();
    for layer in &t.deltas {
        for &(r, c) in layer {
            if !seen.insert((r, c)) {
                return false;
            }
            v.flip(r, c);
        }
    }
    &v == t.final_stage()
}

/// Checks one case against every property, returning the failed ones.
pub fn check_case(f: &Formula, m: &KripkeModel) -> Vec<(Property, String)> {
    let mut bad = Vec::new();
    let trace = match evaluate(f, m) {
        Ok(t) => t,
        Err(e) => {
            return Property::ALL.iter().map(|&p| (p, e.to_string())).collect();
        }
    };
    match oracle_evaluate(f, m) {
        Ok(o) if o == trace => {}
        Ok(o) => bad.push((Property::OracleEquivalence, format!("oracle ofi={} engine ofi={}", o.fold_back, trace.fold_back))),
        Err(e) => bad.push((Property::OracleEquivalence, e.to_string())),
    }
    if trace.fold_back > trace.bound {
        bad.push((Property::PrefixBound, format!("{} > {}", trace.fold_back, trace.bound)));
    }
    if !deltas_reconstitute(&trace) {
        bad.push((Property::DeltaLayers, "overlapping or incomplete layers".into()));
    }
    match extract(f, m) {
        Err(e) => {
            bad.push((Property::CircuitEquivalence, e.to_string()));
            bad.push((Property::Compression, e.to_string()));
        }
        Ok(c) => {
            let plain = simulate(&c, c.iteration_bound());
            match &plain {
                Ok(r) if r.stages == trace.stages && r.settle_time == trace.fold_back => {}
                Ok(r) => bad.push((Property::CircuitEquivalence, format!("settle={} ofi={}", r.settle_time, trace.fold_back))),
                Err(e) => bad.push((Property::CircuitEquivalence, e.to_string())),
            }
            let cc = compress(&c);
            match (simulate(&cc, cc.iteration_bound()), plain) {
                (Ok(fast), Ok(slow)) => {
                    let limit = slow.settle_time.min(cc.compression_bound());
                    if fast.quiescent != slow.quiescent || fast.settle_time > limit {
                        bad.push((
                            Property::Compression,
                            format!("compressed settle={} limit={}", fast.settle_time, limit),
                        ));
                    }
                }
                (Err(e), _) | (_, Err(e)) => bad.push((Property::Compression, e.to_string())),
            }
        }
    }
    let g = build_game(f, m);
    let won = solve_ranks(&g).root_winner(&g) == Player::Even;
    if won != trace.top_truth {
        bad.push((Property::WinnerConsistency, format!("game={} engine={}", won, trace.top_truth)));
    }
    bad
}

/// Runs every property over `count` seeded polarity-uniform cases.
pub fn run_suite(seed: u64, count: usize, cfg: &GenConfig) -> SuiteReport {
    let cases = random_cases(seed, count, cfg);
    let mut report = SuiteReport {
        cases: cases.len(),
        passed: vec![cases.len(); Property::ALL.len()],
        failures: Vec::new(),
    };
    for (i, (f, m)) in cases.iter().enumerate() {
        for (p, detail) in check_case(f, m) {
            let k = Property::ALL.iter().position(|&q| q == p).unwrap();
            report.passed[k] -= 1;
            report.failures.push(Failure {
                case: i,
                property: p,
                formula: f.to_string(),
                model: m.to_json(),
                detail,
            });
        }
    }
    report
}

/// The fixed comparison set for the rank/OFI relation: chains, literals,
/// alternating fixtures, then seeded random cases of both polarities.
pub fn curated_rank_cases() -> Vec<(Formula, KripkeModel)> {
    let parse = |s: &str| Formula::parse(s).expect("curated formula parses");
    let mut out = Vec::new();
    let reach = parse("mu X. (p \\/ <>X)");
    for n in 1..=10 {
        out.push((reach.clone(), fixture(FixtureKind::Chain, n).unwrap()));
    }
    for (kind, n) in [(FixtureKind::Chain, 2), (FixtureKind::Ring, 3), (FixtureKind::Clique, 2)] {
        out.push((parse("p"), fixture(kind, n).unwrap()));
    }
    let alternating = [
        "nu X. mu Y. ((p /\\ <>X) \\/ <>Y)",
        "nu X. (p /\\ []X)",
        "mu X. ([]X \\/ p)",
        "nu X. mu Y. ([]Y \\/ (p /\\ []X))",
        "mu X. @X",
        "mu X. (p \\/ @<>X)",
    ];
    for text in alternating {
        for n in [2, 4] {
            out.push((parse(text), fixture(FixtureKind::Ring, n).unwrap()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d0f1);
    let cfg = GenConfig {
        max_states: 5,
        mixed: true,
        ..GenConfig::default()
    };
    while out.len() < 100 {
        let f = random_formula(&mut rng, &cfg);
        let m = random_model(&mut rng, cfg.max_states);
        out.push((f, m));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSuiteReport {
    pub cases: usize,
    pub equal: usize,
    pub unequal: Vec<RankOfiReport>,
    /// Cases where the engine exceeded its bound.
    pub errors: Vec<(String, String)>,
}

pub fn run_rank_suite(cases: &[(Formula, KripkeModel)]) -> RankSuiteReport {
    let mut rep = RankSuiteReport {
        cases: cases.len(),
        equal: 0,
        unequal: Vec::new(),
        errors: Vec::new(),
    };
    for (f, m) in cases {
        match check_rank_ofi(f, m) {
            Ok(r) if r.equal => rep.equal += 1,
            Ok(r) => rep.unequal.push(r),
            Err(e) => rep.errors.push((f.to_string(), e.to_string())),
        }
    }
    rep
}
