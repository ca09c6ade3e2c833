//! Envelope-scheduled evaluation over lazily generated state spaces.
//!
//! The domain starts at the generator's seeds and grows one layer per stage.
//! Only states still undecided for the root (reachable from a seed through
//! undecided states) are expanded. Each envelope bounds the number of stages
//! and the number of discovered states; when it overshoots, evaluation
//! restarts in the next envelope from the newest stored stage whose one-step
//! image still fits the size budget (the anchor).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

use crate::engine::{Evaluator, StageValue};
use crate::formula::{Fixpoint, Formula, Op};
use crate::model::{Frame, KripkeModel};

pub trait DomainGenerator {
    type State: Clone + Eq + Hash + Debug;

    fn seeds(&self) -> Vec<Self::State>;
    /// Must be a pure function of the state.
    fn successors(&self, s: &Self::State) -> Vec<Self::State>;
    fn holds(&self, atom: &str, s: &Self::State) -> bool;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetafoldError {
    #[error("empty envelope schedule")]
    EmptySchedule,
    #[error("envelope budgets must be at least 1")]
    ZeroBudget,
    #[error("generator has no seed states")]
    NoSeeds,
    #[error("generator is not deterministic: state {state} expanded to {first} and then {second}")]
    Nondeterministic {
        state: String,
        first: String,
        second: String,
    },
    #[error("malformed generator spec `{0}`")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Envelope {
    /// `τ_k`: stage budget.
    pub timeout: usize,
    /// Maximum number of discovered states.
    pub size_budget: usize,
}

/// Builds envelopes from a timeout list sharing one size budget.
pub fn schedule(timeouts: &[usize], size_budget: usize) -> Vec<Envelope> {
    timeouts
        .iter()
        .map(|&timeout| Envelope { timeout, size_budget })
        .collect()
}

/// Stage plus the explored part of the domain it lives on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot<S> {
    pub states: Vec<S>,
    /// Successor indices of expanded states.
    pub expanded: Vec<Option<Vec<usize>>>,
    pub values: StageValue,
}

impl<S> Snapshot<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Value of the root subformula at each discovered state.
    pub fn root_row(&self) -> Vec<bool> {
        (0..self.states.len()).map(|s| self.values.get(0, s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OvershootKind {
    Timeout,
    Size,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor<S> {
    /// Envelope in which the overshoot happened.
    pub envelope: usize,
    /// Stage index (within that envelope) of the snapshot.
    pub beta_star: usize,
    /// First stage that overshot.
    pub overshoot_stage: usize,
    pub overshoot: OvershootKind,
    /// Domain size after one step from the snapshot (the totality witness).
    pub witness_size: usize,
    pub snapshot: Snapshot<S>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome<S> {
    Converged {
        k: usize,
        t: usize,
        value: Snapshot<S>,
        anchors: Vec<Anchor<S>>,
    },
    ScheduleExhausted {
        last_anchor: Option<Anchor<S>>,
        anchors: Vec<Anchor<S>>,
        reason: String,
    },
}

impl<S> Outcome<S> {
    pub fn summary(&self) -> String {
        match self {
            Outcome::Converged { k, t, value, .. } => {
                format!("converged k={k} t={t} states={}", value.len())
            }
            Outcome::ScheduleExhausted { reason, .. } => format!("schedule-exhausted ({reason})"),
        }
    }
}

/// Root rows whose value is final as soon as it leaves the seed value.
fn root_polarity(f: &Formula) -> Option<Fixpoint> {
    match f.closure().op(0) {
        Op::Fix(k, _) if f.polarity() == Some(*k) => Some(*k),
        _ => None,
    }
}

struct Domain<'g, G: DomainGenerator> {
    gen: &'g G,
    atoms: Vec<String>,
    states: Vec<G::State>,
    index: HashMap<G::State, usize>,
    expanded: Vec<Option<Vec<usize>>>,
    /// `holds[a][s]` for the formula's atoms.
    holds: Vec<Vec<bool>>,
    cache: &'g mut HashMap<G::State, Vec<G::State>>,
}

impl<G: DomainGenerator> Frame for Domain<'_, G> {
    fn num_states(&self) -> usize {
        self.states.len()
    }

    fn successors(&self, s: usize) -> Option<&[usize]> {
        self.expanded[s].as_deref()
    }

    fn holds(&self, atom: &str, s: usize) -> bool {
        self.atoms
            .iter()
            .position(|a| a == atom)
            .is_some_and(|i| self.holds[i][s])
    }
}

impl<'g, G: DomainGenerator> Domain<'g, G> {
    fn from_snapshot(
        gen: &'g G,
        atoms: Vec<String>,
        snap: &Snapshot<G::State>,
        cache: &'g mut HashMap<G::State, Vec<G::State>>,
    ) -> Self {
        let mut d = Domain {
            gen,
            atoms,
            states: Vec::new(),
            index: HashMap::new(),
            expanded: Vec::new(),
            holds: Vec::new(),
            cache,
        };
        d.holds = vec![Vec::new(); d.atoms.len()];
        for s in &snap.states {
            d.discover(s.clone());
        }
        d.expanded = snap.expanded.clone();
        d
    }

    fn discover(&mut self, s: G::State) -> usize {
        if let Some(&i) = self.index.get(&s) {
            return i;
        }
        let i = self.states.len();
        for (a, row) in self.atoms.iter().zip(self.holds.iter_mut()) {
            row.push(self.gen.holds(a, &s));
        }
        self.index.insert(s.clone(), i);
        self.states.push(s);
        self.expanded.push(None);
        i
    }

    fn expand(&mut self, i: usize) -> Result<(), MetafoldError> {
        let s = self.states[i].clone();
        let succ = self.gen.successors(&s);
        let again = self.gen.successors(&s);
        let previous = self.cache.get(&s).cloned();
        for other in [Some(again), previous].into_iter().flatten() {
            if other != succ {
                return Err(MetafoldError::Nondeterministic {
                    state: format!("{s:?}"),
                    first: format!("{succ:?}"),
                    second: format!("{other:?}"),
                });
            }
        }
        self.cache.insert(s, succ.clone());
        let ids = succ.into_iter().map(|t| self.discover(t)).collect();
        self.expanded[i] = Some(ids);
        Ok(())
    }

    fn snapshot(&self, values: StageValue) -> Snapshot<G::State> {
        Snapshot {
            states: self.states.clone(),
            expanded: self.expanded.clone(),
            values,
        }
    }
}

struct Runner<'a, G: DomainGenerator> {
    gen: &'a G,
    eval: Evaluator,
    atoms: Vec<String>,
    polarity: Option<Fixpoint>,
    cache: HashMap<G::State, Vec<G::State>>,
}

impl<G: DomainGenerator> Runner<'_, G> {
    fn undecided(&self, v: &StageValue, s: usize) -> bool {
        match self.polarity {
            Some(Fixpoint::Mu) => !v.get(0, s),
            Some(Fixpoint::Nu) => v.get(0, s),
            None => true,
        }
    }

    /// One stage: expand the undecided frontier, seed the new columns, then
    /// apply the evaluator's step.
    fn step(&mut self, cur: &Snapshot<G::State>) -> Result<Snapshot<G::State>, MetafoldError> {
        let seeds_len = self.gen.seeds().len();
        let mut frontier = Vec::new();
        let mut seen = vec![false; cur.len()];
        let mut stack: Vec<usize> = (0..seeds_len.min(cur.len())).collect();
        while let Some(s) = stack.pop() {
            if seen[s] || !self.undecided(&cur.values, s) {
                continue;
            }
            seen[s] = true;
            match &cur.expanded[s] {
                Some(ts) => stack.extend(ts.iter().copied()),
                None => frontier.push(s),
            }
        }
        frontier.sort_unstable();
        let atoms = self.atoms.clone();
        let gen = self.gen;
        let mut dom = Domain::from_snapshot(gen, atoms, cur, &mut self.cache);
        for s in frontier {
            dom.expand(s)?;
        }
        let old = cur.len();
        let mut values = StageValue::new(cur.values.rows(), dom.num_states());
        for r in 0..values.rows() {
            for c in 0..old {
                values.set(r, c, cur.values.get(r, c));
            }
        }
        self.eval.seed_columns(&mut values, &dom, old);
        let next = self.eval.step(&values, &dom);
        Ok(dom.snapshot(next))
    }

    fn cold_boot(&mut self) -> Result<Snapshot<G::State>, MetafoldError> {
        let seeds = self.gen.seeds();
        if seeds.is_empty() {
            return Err(MetafoldError::NoSeeds);
        }
        let empty = Snapshot {
            states: Vec::new(),
            expanded: Vec::new(),
            values: StageValue::new(self.eval.closure().len(), 0),
        };
        let atoms = self.atoms.clone();
        let mut dom = Domain::from_snapshot(self.gen, atoms, &empty, &mut self.cache);
        for s in seeds {
            dom.discover(s);
        }
        let seed = self.eval.seed(&dom);
        Ok(dom.snapshot(seed))
    }
}

fn formula_atoms(f: &Formula) -> Vec<String> {
    let cl = f.closure();
    let set: BTreeSet<String> = (0..cl.len())
        .filter_map(|i| match cl.op(i) {
            Op::Atom(a) => Some(a.clone()),
            _ => None,
        })
        .collect();
    set.into_iter().collect()
}

fn runner<'g, G: DomainGenerator>(f: &Formula, g: &'g G) -> Runner<'g, G> {
    Runner {
        gen: g,
        eval: Evaluator::new(f),
        atoms: formula_atoms(f),
        polarity: root_polarity(f),
        cache: HashMap::new(),
    }
}

/// Runs the envelope schedule. `global_cap` bounds the total number of
/// stages over all envelopes.
pub fn metafold_run<G: DomainGenerator>(
    f: &Formula,
    g: &G,
    sched: &[Envelope],
    global_cap: usize,
) -> Result<Outcome<G::State>, MetafoldError> {
    if sched.is_empty() {
        return Err(MetafoldError::EmptySchedule);
    }
    if sched.iter().any(|e| e.timeout == 0 || e.size_budget == 0) {
        return Err(MetafoldError::ZeroBudget);
    }
    let mut run = runner(f, g);
    let mut start = run.cold_boot()?;
    let mut anchors: Vec<Anchor<G::State>> = Vec::new();
    let mut total = 0;
    for (k, env) in sched.iter().enumerate() {
        let mut snaps = vec![start.clone()];
        let mut overshoot = None;
        for t in 0..env.timeout {
            if total == global_cap {
                return Ok(Outcome::ScheduleExhausted {
                    last_anchor: anchors.last().cloned(),
                    anchors,
                    reason: format!("global cap of {global_cap} stages reached"),
                });
            }
            total += 1;
            let next = run.step(&snaps[t])?;
            if next == snaps[t] {
                return Ok(Outcome::Converged {
                    k,
                    t,
                    value: next,
                    anchors,
                });
            }
            let too_big = next.len() > env.size_budget;
            snaps.push(next);
            if too_big {
                overshoot = Some((t + 1, OvershootKind::Size));
                break;
            }
        }
        let (overshoot_stage, kind) = overshoot.unwrap_or((env.timeout, OvershootKind::Timeout));

        // newest stored stage whose image stays within budget
        let mut anchor = None;
        for beta in (0..snaps.len()).rev() {
            if snaps[beta].len() > env.size_budget {
                continue;
            }
            let image = run.step(&snaps[beta])?;
            if image.len() <= env.size_budget {
                anchor = Some(Anchor {
                    envelope: k,
                    beta_star: beta,
                    overshoot_stage,
                    overshoot: kind,
                    witness_size: image.len(),
                    snapshot: snaps[beta].clone(),
                });
                break;
            }
        }
        let Some(anchor) = anchor else {
            return Ok(Outcome::ScheduleExhausted {
                last_anchor: anchors.last().cloned(),
                anchors,
                reason: format!("no stage of envelope {k} fits its size budget"),
            });
        };
        start = anchor.snapshot.clone();
        anchors.push(anchor);
    }
    Ok(Outcome::ScheduleExhausted {
        last_anchor: anchors.last().cloned(),
        anchors,
        reason: format!("all {} envelopes overshot", sched.len()),
    })
}

/// Applies one more stage to a converged value and checks it is unchanged.
pub fn verify_convergence<G: DomainGenerator>(outcome: &Outcome<G::State>, f: &Formula, g: &G) -> bool {
    let Outcome::Converged { value, .. } = outcome else {
        return false;
    };
    if value.values.rows() != f.size() || value.values.cols() != value.len() {
        return false;
    }
    let mut run = runner(f, g);
    match run.step(value) {
        Ok(next) => &next == value,
        Err(_) => false,
    }
}

/// The anchor totality condition, checked directly.
pub fn anchor_is_total<G: DomainGenerator>(anchor: &Anchor<G::State>, f: &Formula, g: &G, size_budget: usize) -> bool {
    let mut run = runner(f, g);
    run.step(&anchor.snapshot)
        .is_ok_and(|img| img.len() <= size_budget && img.len() == anchor.witness_size)
}

// ---------------------------------------------------------------------------
// Builtin generators

/// `0 → 1 → 2 → …`, with `p` true at `goal`. With a limit, the last state
/// has no successor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counter {
    pub goal: Option<u64>,
    pub limit: Option<u64>,
}

impl DomainGenerator for Counter {
    type State = u64;

    fn seeds(&self) -> Vec<u64> {
        vec![0]
    }

    fn successors(&self, s: &u64) -> Vec<u64> {
        match self.limit {
            Some(l) if *s >= l => Vec::new(),
            _ => vec![s + 1],
        }
    }

    fn holds(&self, atom: &str, s: &u64) -> bool {
        atom == "p" && Some(*s) == self.goal
    }
}

/// Quarter plane, moving right or up; `p` at the goal cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub goal: (u64, u64),
}

impl DomainGenerator for Grid {
    type State = (u64, u64);

    fn seeds(&self) -> Vec<(u64, u64)> {
        vec![(0, 0)]
    }

    fn successors(&self, &(x, y): &(u64, u64)) -> Vec<(u64, u64)> {
        vec![(x + 1, y), (x, y + 1)]
    }

    fn holds(&self, atom: &str, s: &(u64, u64)) -> bool {
        atom == "p" && *s == self.goal
    }
}

/// `n ↦ n/2` on evens, `n ↦ 3n+1` on odds, starting at `start`; `p` holds at
/// `target`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollatzLike {
    pub start: u64,
    pub target: u64,
}

impl DomainGenerator for CollatzLike {
    type State = u64;

    fn seeds(&self) -> Vec<u64> {
        vec![self.start]
    }

    fn successors(&self, &n: &u64) -> Vec<u64> {
        if n <= 1 {
            vec![1]
        } else if n % 2 == 0 {
            vec![n / 2]
        } else {
            vec![3 * n + 1]
        }
    }

    fn holds(&self, atom: &str, s: &u64) -> bool {
        atom == "p" && *s == self.target
    }
}

/// A finite model seen as a generator seeded at its designated state.
#[derive(Debug, Clone)]
pub struct FiniteModel(pub KripkeModel);

impl DomainGenerator for FiniteModel {
    type State = usize;

    fn seeds(&self) -> Vec<usize> {
        vec![self.0.initial()]
    }

    fn successors(&self, s: &usize) -> Vec<usize> {
        self.0.succ(*s).to_vec()
    }

    fn holds(&self, atom: &str, s: &usize) -> bool {
        Frame::holds(&self.0, atom, *s)
    }
}

/// Named builtin generators: `counter:GOAL[:LIMIT]`, `counter:none`,
/// `grid:X,Y` and `collatz-like:START[:TARGET]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Builtin {
    Counter(Counter),
    Grid(Grid),
    CollatzLike(CollatzLike),
}

impl std::str::FromStr for Builtin {
    type Err = MetafoldError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = || MetafoldError::BadSpec(spec.to_string());
        let mut parts = spec.split(':');
        let name = parts.next().ok_or_else(bad)?;
        let args: Vec<&str> = parts.collect();
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
        match (name, args.as_slice()) {
            ("counter", [g]) | ("counter", [g, _]) => {
                let goal = if *g == "none" { None } else { Some(num(g)?) };
                let limit = args.get(1).map(|l| num(l)).transpose()?;
                Ok(Builtin::Counter(Counter { goal, limit }))
            }
            ("grid", [xy]) => {
                let (x, y) = xy.split_once(',').ok_or_else(bad)?;
                Ok(Builtin::Grid(Grid { goal: (num(x)?, num(y)?) }))
            }
            ("collatz-like", [s]) => Ok(Builtin::CollatzLike(CollatzLike { start: num(s)?, target: 1 })),
            ("collatz-like", [s, t]) => Ok(Builtin::CollatzLike(CollatzLike { start: num(s)?, target: num(t)? })),
            _ => Err(bad()),
        }
    }
}

/// Outcome with states rendered as text, for builtins of differing state types.
pub fn run_builtin(
    f: &Formula,
    b: &Builtin,
    sched: &[Envelope],
    global_cap: usize,
) -> Result<(Outcome<String>, bool), MetafoldError> {
    fn go<G: DomainGenerator>(
        f: &Formula,
        g: &G,
        sched: &[Envelope],
        cap: usize,
    ) -> Result<(Outcome<String>, bool), MetafoldError> {
        let out = metafold_run(f, g, sched, cap)?;
        let verified = matches!(out, Outcome::Converged { .. }) && verify_convergence(&out, f, g);
        Ok((render(out), verified))
    }
    match b {
        Builtin::Counter(g) => go(f, g, sched, global_cap),
        Builtin::Grid(g) => go(f, g, sched, global_cap),
        Builtin::CollatzLike(g) => go(f, g, sched, global_cap),
    }
}

fn render_snapshot<S: Debug>(s: Snapshot<S>) -> Snapshot<String> {
    Snapshot {
        states: s.states.iter().map(|x| format!("{x:?}")).collect(),
        expanded: s.expanded,
        values: s.values,
    }
}

fn render_anchor<S: Debug>(a: Anchor<S>) -> Anchor<String> {
    Anchor {
        envelope: a.envelope,
        beta_star: a.beta_star,
        overshoot_stage: a.overshoot_stage,
        overshoot: a.overshoot,
        witness_size: a.witness_size,
        snapshot: render_snapshot(a.snapshot),
    }
}

fn render<S: Debug>(o: Outcome<S>) -> Outcome<String> {
    match o {
        Outcome::Converged { k, t, value, anchors } => Outcome::Converged {
            k,
            t,
            value: render_snapshot(value),
            anchors: anchors.into_iter().map(render_anchor).collect(),
        },
        Outcome::ScheduleExhausted {
            last_anchor,
            anchors,
            reason,
        } => Outcome::ScheduleExhausted {
            last_anchor: last_anchor.map(render_anchor),
            anchors: anchors.into_iter().map(render_anchor).collect(),
            reason,
        },
    }
}
