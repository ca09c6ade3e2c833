//! Staged evaluation of delayed μ-calculus formulas over finite frames.
//!
//! A stage is one truth value per (subformula occurrence, state) cell.
//! Binder and delay rows are registers: their next value is computed from
//! the previous stage. A binder row latches (μ: once true stays true, ν: once
//! false stays false) and a delay row copies its child's previous value.
//! Variable rows alias their binder's register, and every other row is
//! recomputed combinationally from the current stage.
//!
//! The seed stage sets μ rows (and their variables) to false, ν rows to true,
//! and evaluates everything else over that seed. Iteration stops at the first
//! `κ` with `V^{κ+1} = V^κ`; `κ` is the folding index.

pub mod oracle;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::formula::{Fixpoint, Formula, Op, SubformulaClosure};
use crate::model::{Frame, KripkeModel};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("no fixed point within {bound} stages (monotonicity violated)")]
    BoundExceeded { bound: usize },
    #[error("atom `{atom}` has value {value} at state {state}, outside [0,1]")]
    AtomOutOfRange { atom: String, state: usize, value: f64 },
    #[error("contraction constant must lie in (0,1), got {0}")]
    Gamma(f64),
    #[error("target accuracy must lie in (0,1), got {0}")]
    Epsilon(f64),
    #[error("operator norm {norm} exceeds contraction constant {gamma}")]
    NormTooLarge { norm: f64, gamma: f64 },
    #[error("affine map does not send the unit cube into itself (row {row})")]
    LeavesCube { row: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contraction bound violated at step {step}: error {error} > {bound}")]
    ContractionViolated { step: usize, error: f64, bound: f64 },
}

/// A `(subformula, state)` cell.
pub type Cell = (usize, usize);

/// Boolean stage: an `m × N` bit matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StageValue {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl StageValue {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64).max(1);
        StageValue {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        let mask = 1u64 << (col % 64);
        if v {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub fn flip(&mut self, row: usize, col: usize) {
        let v = self.get(row, col);
        self.set(row, col, !v);
    }

    /// States where row `row` holds.
    pub fn row_set(&self, row: usize) -> Vec<usize> {
        (0..self.cols).filter(|&c| self.get(row, c)).collect()
    }

    /// Cells whose value differs between `self` and `other`, row-major.
    pub fn diff(&self, other: &StageValue) -> Vec<Cell> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) != other.get(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

/// Result of a boolean evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTrace {
    /// `V^0 ..= V^{κ+1}`.
    pub stages: Vec<StageValue>,
    /// `deltas[α]`: cells that change between `V^α` and `V^{α+1}`, for `α < κ`.
    pub deltas: Vec<Vec<Cell>>,
    /// `κ`.
    pub fold_back: usize,
    /// Value of the root occurrence at the designated state in `V^κ`.
    pub top_truth: bool,
    /// `2 · N · |φ|`.
    pub bound: usize,
}

impl StageTrace {
    pub fn final_stage(&self) -> &StageValue {
        &self.stages[self.fold_back]
    }

    /// Changed cells as CSV (`stage,subformula,state,value`) followed by the
    /// summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,subformula,state,value\n");
        for (alpha, delta) in self.deltas.iter().enumerate() {
            for &(row, col) in delta {
                let v = self.stages[alpha + 1].get(row, col) as u8;
                let _ = writeln!(out, "{},{},{},{}", alpha + 1, row, col, v);
            }
        }
        out.push_str(&self.summary());
        out.push('\n');
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "ofi={} truth={} bound={}",
            self.fold_back, self.top_truth, self.bound
        )
    }
}

/// `2 · N · |φ|`, the stage count after which the approximants must have
/// stabilised on a finite frame.
pub fn iteration_bound(f: &Formula, m: &KripkeModel) -> usize {
    2 * m.len() * f.size()
}

/// How a row is updated on each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Latch(Fixpoint),
    Pipeline,
    Comb,
}

pub fn row_kind(op: &Op) -> RowKind {
    match op {
        Op::Fix(k, _) => RowKind::Latch(*k),
        Op::Delay(_) => RowKind::Pipeline,
        _ => RowKind::Comb,
    }
}

/// Value a modal cell takes at a state whose successors are not known yet:
/// the seed polarity of its innermost binder.
fn unexplored_default(scope: Option<Fixpoint>) -> bool {
    scope == Some(Fixpoint::Nu)
}

/// The optimised evaluator: one step function over closure-indexed rows.
#[derive(Debug, Clone)]
pub struct Evaluator {
    closure: SubformulaClosure,
}

impl Evaluator {
    pub fn new(f: &Formula) -> Self {
        Evaluator {
            closure: f.closure(),
        }
    }

    pub fn closure(&self) -> &SubformulaClosure {
        &self.closure
    }

    fn comb(&self, i: usize, s: usize, v: &StageValue, frame: &dyn Frame) -> bool {
        let item = &self.closure.items[i];
        match &item.op {
            Op::Atom(a) => frame.holds(a, s),
            Op::Not(c) => !v.get(*c, s),
            Op::Var(b) => v.get(*b, s),
            Op::And(l, r) => v.get(*l, s) && v.get(*r, s),
            Op::Or(l, r) => v.get(*l, s) || v.get(*r, s),
            Op::Diamond(c) => match frame.successors(s) {
                Some(ts) => ts.iter().any(|&t| v.get(*c, t)),
                None => unexplored_default(item.scope),
            },
            Op::Necessity(c) => match frame.successors(s) {
                Some(ts) => ts.iter().all(|&t| v.get(*c, t)),
                None => unexplored_default(item.scope),
            },
            // seed pass only: a pipeline row starts as its child's seed value
            Op::Delay(c) => v.get(*c, s),
            Op::Fix(..) => unreachable!("registers are not combinational"),
        }
    }

    /// Recomputes every combinational row, children before parents.
    fn settle_comb(&self, v: &mut StageValue, frame: &dyn Frame, include_delay: bool) {
        for i in (0..self.closure.len()).rev() {
            let kind = row_kind(&self.closure.items[i].op);
            if kind == RowKind::Comb || (include_delay && kind == RowKind::Pipeline) {
                for s in 0..frame.num_states() {
                    let b = self.comb(i, s, v, frame);
                    v.set(i, s, b);
                }
            }
        }
    }

    /// Writes seed values into columns `from..` of `v`.
    pub fn seed_columns(&self, v: &mut StageValue, frame: &dyn Frame, from: usize) {
        let n = frame.num_states();
        let mut fresh = StageValue::new(self.closure.len(), n);
        for (i, item) in self.closure.items.iter().enumerate() {
            if let Op::Fix(k, _) = item.op {
                for s in 0..n {
                    fresh.set(i, s, k == Fixpoint::Nu);
                }
            }
        }
        // registers of already-known columns keep their values
        for i in 0..self.closure.len() {
            if row_kind(&self.closure.items[i].op) != RowKind::Comb {
                for s in 0..from.min(n) {
                    fresh.set(i, s, v.get(i, s));
                }
            }
        }
        // pipeline rows of new columns take their child's seed; recompute
        // all combinational rows over the merged registers
        let mut pipeline_seeded = fresh.clone();
        self.settle_comb(&mut pipeline_seeded, frame, true);
        for i in 0..self.closure.len() {
            if row_kind(&self.closure.items[i].op) == RowKind::Pipeline {
                for s in from..n {
                    fresh.set(i, s, pipeline_seeded.get(i, s));
                }
            }
        }
        self.settle_comb(&mut fresh, frame, false);
        *v = fresh;
    }

    /// `V^0`.
    pub fn seed(&self, frame: &dyn Frame) -> StageValue {
        let mut v = StageValue::new(self.closure.len(), frame.num_states());
        self.seed_columns(&mut v, frame, 0);
        v
    }

    /// `F_φ`: one synchronous stage.
    pub fn step(&self, prev: &StageValue, frame: &dyn Frame) -> StageValue {
        let n = frame.num_states();
        let mut next = StageValue::new(self.closure.len(), n);
        for (i, item) in self.closure.items.iter().enumerate() {
            match item.op {
                Op::Fix(Fixpoint::Mu, body) => {
                    for s in 0..n {
                        next.set(i, s, prev.get(i, s) || prev.get(body, s));
                    }
                }
                Op::Fix(Fixpoint::Nu, body) => {
                    for s in 0..n {
                        next.set(i, s, prev.get(i, s) && prev.get(body, s));
                    }
                }
                Op::Delay(c) => {
                    for s in 0..n {
                        next.set(i, s, prev.get(c, s));
                    }
                }
                _ => {}
            }
        }
        self.settle_comb(&mut next, frame, false);
        next
    }

    /// Iterates from the seed until two consecutive stages agree.
    pub fn run(&self, frame: &dyn Frame, initial: usize, bound: usize) -> Result<StageTrace, EngineError> {
        let mut stages = vec![self.seed(frame)];
        let mut deltas = Vec::new();
        for t in 0..=bound {
            let next = self.step(&stages[t], frame);
            let delta = stages[t].diff(&next);
            stages.push(next);
            if delta.is_empty() {
                let top_truth = stages[t].get(0, initial);
                return Ok(StageTrace {
                    stages,
                    deltas,
                    fold_back: t,
                    top_truth,
                    bound,
                });
            }
            deltas.push(delta);
        }
        Err(EngineError::BoundExceeded { bound })
    }
}

/// Boolean staged evaluation of `f` over `m`.
pub fn evaluate(f: &Formula, m: &KripkeModel) -> Result<StageTrace, EngineError> {
    Evaluator::new(f).run(m, m.initial(), iteration_bound(f, m))
}

pub use oracle::oracle_evaluate;

// ---------------------------------------------------------------------------
// Probabilistic semantics

/// Contraction parameters for the real-valued semantics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionConfig {
    gamma: f64,
    epsilon: f64,
}

impl ContractionConfig {
    pub fn new(gamma: f64, epsilon: f64) -> Result<Self, EngineError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EngineError::Gamma(gamma));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(EngineError::Epsilon(epsilon));
        }
        Ok(ContractionConfig { gamma, epsilon })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `⌈log_γ ε⌉`: steps after which the tail bound guarantees ε-proximity.
    pub fn step_budget(&self) -> usize {
        step_budget(self.gamma, self.epsilon)
    }
}

pub fn step_budget(gamma: f64, epsilon: f64) -> usize {
    let raw = epsilon.ln() / gamma.ln();
    // guard against 6.999999999 style rounding
    let snapped = (raw * 1e9).round() / 1e9;
    snapped.ceil().max(0.0) as usize
}

const GRID: f64 = 1e12;

fn snap(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

/// Real-valued atom assignment: atom → per-state value. Atoms missing here
/// fall back to the model's boolean valuation.
pub type ProbValuation = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbTrace {
    /// Row-major `m × N` matrices, `V^0 ..`.
    pub stages: Vec<Vec<f64>>,
    pub deltas: Vec<Vec<Cell>>,
    /// First `t` with `V^{t+1} = V^t`, if reached within the step budget.
    pub fold_back: Option<usize>,
    /// L1 distance from each stage to the final stage.
    pub error_curve: Vec<f64>,
    /// `⌈log_γ ε⌉`.
    pub predicted_steps: usize,
    pub top_value: f64,
    pub states: usize,
}

impl ProbTrace {
    /// Value of `row` at `state` in stage `t`.
    pub fn value(&self, t: usize, row: usize, state: usize) -> f64 {
        self.stages[t][row * self.states + state]
    }
}

/// Min/max real semantics; every variable and delay read is scaled by `γ`.
pub fn evaluate_prob(
    f: &Formula,
    m: &KripkeModel,
    atoms: &ProbValuation,
    cfg: &ContractionConfig,
) -> Result<ProbTrace, EngineError> {
    let n = m.len();
    for (atom, values) in atoms {
        if values.len() != n {
            return Err(EngineError::Dimension(format!(
                "atom `{atom}` has {} values for {n} states",
                values.len()
            )));
        }
        for (s, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(EngineError::AtomOutOfRange {
                    atom: atom.clone(),
                    state: s,
                    value: v,
                });
            }
        }
    }
    let cl = f.closure();
    let rows = cl.len();
    let gamma = cfg.gamma;
    let atom_value = |a: &str, s: usize| match atoms.get(a) {
        Some(vs) => vs[s],
        None => m.holds(a, s) as u8 as f64,
    };
    let comb = |i: usize, s: usize, v: &[f64]| -> f64 {
        let at = |r: usize, t: usize| v[r * n + t];
        match &cl.items[i].op {
            Op::Atom(a) => atom_value(a, s),
            Op::Not(c) => 1.0 - at(*c, s),
            Op::Var(b) => gamma * at(*b, s),
            Op::And(l, r) => at(*l, s).min(at(*r, s)),
            Op::Or(l, r) => at(*l, s).max(at(*r, s)),
            Op::Diamond(c) => m.succ(s).iter().map(|&t| at(*c, t)).fold(0.0, f64::max),
            Op::Necessity(c) => m.succ(s).iter().map(|&t| at(*c, t)).fold(1.0, f64::min),
            Op::Delay(c) => gamma * at(*c, s),
            Op::Fix(..) => unreachable!(),
        }
    };
    let settle = |v: &mut Vec<f64>, include_delay: bool| {
        for i in (0..rows).rev() {
            let kind = row_kind(&cl.items[i].op);
            if kind == RowKind::Comb || (include_delay && kind == RowKind::Pipeline) {
                for s in 0..n {
                    v[i * n + s] = snap(comb(i, s, v));
                }
            }
        }
    };

    let mut seed = vec![0.0; rows * n];
    for (i, item) in cl.items.iter().enumerate() {
        if let Op::Fix(Fixpoint::Nu, _) = item.op {
            seed[i * n..(i + 1) * n].fill(1.0);
        }
    }
    settle(&mut seed, true);

    let predicted = cfg.step_budget();
    let horizon = predicted + 2 * n * f.size();
    let mut stages = vec![seed];
    let mut deltas = Vec::new();
    let mut fold_back = None;
    for t in 0..horizon {
        let prev = &stages[t];
        let mut next = vec![0.0; rows * n];
        for (i, item) in cl.items.iter().enumerate() {
            for s in 0..n {
                let k = i * n + s;
                next[k] = match item.op {
                    Op::Fix(Fixpoint::Mu, body) => prev[k].max(prev[body * n + s]),
                    Op::Fix(Fixpoint::Nu, body) => prev[k].min(prev[body * n + s]),
                    Op::Delay(c) => snap(gamma * prev[c * n + s]),
                    _ => 0.0,
                };
            }
        }
        settle(&mut next, false);
        let delta: Vec<Cell> = (0..rows * n)
            .filter(|&k| prev[k] != next[k])
            .map(|k| (k / n, k % n))
            .collect();
        stages.push(next);
        if delta.is_empty() {
            fold_back = Some(t);
            break;
        }
        deltas.push(delta);
    }
    let last = fold_back.unwrap_or(stages.len() - 1);
    let fin = stages[last].clone();
    let error_curve = stages
        .iter()
        .map(|v| v.iter().zip(&fin).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    let top_value = fin[m.initial()];
    Ok(ProbTrace {
        stages,
        deltas,
        fold_back,
        error_curve,
        predicted_steps: predicted,
        top_value,
        states: n,
    })
}

// ---------------------------------------------------------------------------
// Affine contraction harness

#[derive(Debug, Clone, PartialEq)]
pub struct AffineTrace {
    pub fixed_point: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    /// `‖x_α − x*‖₁`.
    pub errors: Vec<f64>,
    /// Measured L1 operator norm of `a`.
    pub norm: f64,
    /// `⌈log_γ ε⌉`.
    pub predicted_steps: usize,
    /// First α with `errors[α] ≤ ε`.
    pub steps_to_epsilon: Option<usize>,
    /// First α with `x_{α+1} = x_α`.
    pub converged_at: Option<usize>,
}

/// Largest absolute column sum.
pub fn l1_operator_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.first().map_or(0, |r| r.len());
    (0..n)
        .map(|j| a.iter().map(|row| row[j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Iterates `x ↦ a·x + b` from `x0`, measuring the L1 error against the
/// exact fixed point at every step and checking it against `γ^α` (scaled by
/// the initial error when that exceeds 1).
pub fn affine_contract(
    a: &[Vec<f64>],
    b: &[f64],
    x0: &[f64],
    cfg: &ContractionConfig,
) -> Result<AffineTrace, EngineError> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) || x0.len() != n {
        return Err(EngineError::Dimension(format!(
            "a must be {n}x{n} and x0 of length {n}"
        )));
    }
    let norm = l1_operator_norm(a);
    if norm > cfg.gamma + 1e-12 {
        return Err(EngineError::NormTooLarge {
            norm,
            gamma: cfg.gamma,
        });
    }
    for (i, row) in a.iter().enumerate() {
        let lo = b[i] + row.iter().map(|x| x.min(0.0)).sum::<f64>();
        let hi = b[i] + row.iter().map(|x| x.max(0.0)).sum::<f64>();
        if lo < -1e-12 || hi > 1.0 + 1e-12 {
            return Err(EngineError::LeavesCube { row: i });
        }
    }
    let am = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let bv = DVector::from_column_slice(b);
    let system = DMatrix::identity(n, n) - &am;
    let fixed = system
        .lu()
        .solve(&bv)
        .ok_or_else(|| EngineError::Dimension("I - a is singular".into()))?;
    let fixed_point: Vec<f64> = fixed.iter().copied().collect();

    let predicted = cfg.step_budget();
    let horizon = predicted.max(60) + 64;
    let mut x = DVector::from_column_slice(x0);
    let mut iterates = vec![x0.to_vec()];
    let mut errors = vec![(&x - &fixed).lp_norm(1)];
    let mut converged_at = None;
    for alpha in 0..horizon {
        let next = &am * &x + &bv;
        let same = next == x;
        x = next;
        iterates.push(x.iter().copied().collect());
        errors.push((&x - &fixed).lp_norm(1));
        if same {
            converged_at = Some(alpha);
            break;
        }
    }
    let scale = errors[0].max(1.0);
    for (alpha, &e) in errors.iter().enumerate() {
        let bound = cfg.gamma.powi(alpha as i32) * scale;
        if e > bound + 1e-12 {
            return Err(EngineError::ContractionViolated {
                step: alpha,
                error: e,
                bound,
            });
        }
    }
    let steps_to_epsilon = errors.iter().position(|&e| e <= cfg.epsilon);
    Ok(AffineTrace {
        fixed_point,
        iterates,
        errors,
        norm,
        predicted_steps: predicted,
        steps_to_epsilon,
        converged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::model::{fixture, FixtureKind};

    const REACH: &str = "mu X. (p \\/ <>X)";

    fn chain(n: usize) -> KripkeModel {
        fixture(FixtureKind::Chain, n).unwrap()
    }

    #[test]
    fn reach_on_chain() {
        let t = evaluate(&parse(REACH).unwrap(), &chain(3)).unwrap();
        assert_eq!(t.fold_back, 4);
        assert!(t.top_truth);
        assert_eq!(t.stages.len(), 6);
        assert_eq!(t.final_stage().row_set(0), vec![0, 1, 2, 3]);
        assert_eq!(t.summary(), "ofi=4 truth=true bound=40");
    }

    #[test]
    fn delayed_self_reference_is_immediately_stable() {
        let t = evaluate(&parse("mu X. @X").unwrap(), &chain(1)).unwrap();
        assert_eq!(t.fold_back, 0);
        assert!(!t.top_truth);
        assert!(t.deltas.is_empty());
    }

    #[test]
    fn nu_peels_ring() {
        let ring = fixture(FixtureKind::Ring, 4).unwrap();
        let t = evaluate(&parse("nu X. (p /\\ []X)").unwrap(), &ring).unwrap();
        assert_eq!(t.fold_back, 4);
        assert!(t.final_stage().row_set(0).is_empty());
    }

    #[test]
    fn bounds() {
        let reach = parse(REACH).unwrap();
        assert_eq!(iteration_bound(&reach, &chain(3)), 40);
        let one = KripkeModel::new(1, [], [], None).unwrap();
        assert_eq!(iteration_bound(&parse("p").unwrap(), &one), 2);
        let twelve = parse("mu X. (p /\\ ~q) \\/ <>(X /\\ []@X)").unwrap();
        assert_eq!(twelve.size(), 12);
        assert_eq!(iteration_bound(&twelve, &fixture(FixtureKind::Clique, 8).unwrap()), 192);
    }

    #[test]
    fn deadlocks() {
        // state 1 of chain(1) has no successors
        let t = evaluate(&parse("[]q /\\ <>~p").unwrap(), &chain(1)).unwrap();
        let v = t.final_stage();
        // []q holds vacuously at the deadlock, <>~p fails there
        assert_eq!(v.row_set(1), vec![1]);
        assert_eq!(v.row_set(3), Vec::<usize>::new());
        assert!(v.row_set(0).is_empty());
    }

    #[test]
    fn trace_csv() {
        let t = evaluate(&parse(REACH).unwrap(), &chain(1)).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("stage,subformula,state,value\n1,0,1,1\n"));
        assert!(csv.ends_with("ofi=2 truth=true bound=20\n"));
    }

    #[test]
    fn prob_single_state() {
        let one = KripkeModel::new(1, [], [], None).unwrap();
        let f = parse("mu X. (c \\/ @X)").unwrap();
        let atoms = ProbValuation::from([("c".to_string(), vec![0.25])]);
        let cfg = ContractionConfig::new(0.5, 0.01).unwrap();
        let t = evaluate_prob(&f, &one, &atoms, &cfg).unwrap();
        let top: Vec<f64> = (0..3).map(|s| t.value(s, 0, 0)).collect();
        assert_eq!(top, vec![0.0, 0.25, 0.25]);
        // the delay row settles one stage after the binder row
        assert_eq!(t.fold_back, Some(2));
        assert_eq!(t.top_value, 0.25);
        assert_eq!(t.predicted_steps, 7);
        assert_eq!(*t.error_curve.last().unwrap(), 0.0);
    }

    #[test]
    fn prob_rejects_bad_atoms() {
        let one = KripkeModel::new(1, [], [], None).unwrap();
        let f = parse("c").unwrap();
        let cfg = ContractionConfig::new(0.5, 0.01).unwrap();
        let bad = ProbValuation::from([("c".to_string(), vec![1.5])]);
        assert!(matches!(
            evaluate_prob(&f, &one, &bad, &cfg),
            Err(EngineError::AtomOutOfRange { .. })
        ));
        assert!(ContractionConfig::new(1.0, 0.1).is_err());
        assert!(ContractionConfig::new(0.5, 0.0).is_err());
    }

    #[test]
    fn prob_matches_boolean_on_crisp_atoms() {
        // γ scales truth, so compare supports rather than values
        let f = parse(REACH).unwrap();
        let m = chain(3);
        let cfg = ContractionConfig::new(0.9, 0.01).unwrap();
        let t = evaluate_prob(&f, &m, &ProbValuation::new(), &cfg).unwrap();
        let b = evaluate(&f, &m).unwrap();
        for s in 0..4 {
            let last = t.stages.len() - 1;
            assert_eq!(t.value(last, 0, s) > 0.0, b.final_stage().get(0, s));
        }
        assert!(t.fold_back.is_some());
    }

    #[test]
    fn budgets() {
        assert_eq!(step_budget(0.5, 0.01), 7);
        assert_eq!(step_budget(0.9, 0.01), 44);
        assert_eq!(step_budget(0.5, 0.5), 1);
    }

    #[test]
    fn affine_scalar() {
        let cfg = ContractionConfig::new(0.5, 0.01).unwrap();
        let t = affine_contract(&[vec![0.5]], &[0.25], &[0.0], &cfg).unwrap();
        assert!((t.fixed_point[0] - 0.5).abs() < 1e-15);
        assert!((t.errors[3] - 0.0625).abs() < 1e-15);
        for (alpha, e) in t.errors.iter().enumerate().take(61) {
            assert!((e - 0.5 * 0.5f64.powi(alpha as i32)).abs() < 1e-12);
        }
        assert_eq!(t.steps_to_epsilon, Some(6));
        assert!(t.steps_to_epsilon.unwrap() <= t.predicted_steps);
    }

    #[test]
    fn affine_constant_map() {
        let cfg = ContractionConfig::new(0.5, 0.01).unwrap();
        let t = affine_contract(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[0.3, 0.7], &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(t.errors[1], 0.0);
        assert_eq!(t.converged_at, Some(1));
    }

    #[test]
    fn affine_budget_and_errors() {
        let cfg = ContractionConfig::new(0.9, 0.01).unwrap();
        let t = affine_contract(&[vec![0.9]], &[0.05], &[0.0], &cfg).unwrap();
        assert_eq!(t.predicted_steps, 44);
        assert!(t.steps_to_epsilon.unwrap() <= 44);
        let tight = ContractionConfig::new(0.4, 0.01).unwrap();
        assert!(matches!(
            affine_contract(&[vec![0.5]], &[0.25], &[0.0], &tight),
            Err(EngineError::NormTooLarge { .. })
        ));
        assert!(matches!(
            affine_contract(&[vec![0.5]], &[0.75], &[0.0], &cfg),
            Err(EngineError::LeavesCube { row: 0 })
        ));
    }
}
