//! Evaluation parity games, progress-measure solving and ranks.
//!
//! Games use the max-parity condition: Even (the verifier) wins an infinite
//! play iff the largest priority seen infinitely often is even. A player who
//! has no move loses.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::{Ordering, Reverse};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{evaluate, EngineError};
use crate::formula::{Fixpoint, Formula, Op};
use crate::model::{Frame, KripkeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Player {
    Even,
    Odd,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Even => Player::Odd,
            Player::Odd => Player::Even,
        }
    }

    /// The player favoured by a priority.
    pub fn of_priority(p: usize) -> Player {
        if p.is_multiple_of(2) {
            Player::Even
        } else {
            Player::Odd
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: edge refers to undeclared node `{id}`")]
    Dangling { line: usize, id: String },
    #[error("line {line}: node `{id}` declared twice")]
    Duplicate { line: usize, id: String },
    #[error("game has no nodes")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityGame {
    owner: Vec<Player>,
    priority: Vec<usize>,
    succ: Vec<Vec<usize>>,
    /// Parallel to `succ`; ranks sum these along a play.
    weight: Vec<Vec<usize>>,
    labels: Vec<String>,
    root: usize,
}

impl ParityGame {
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn owner(&self, v: usize) -> Player {
        self.owner[v]
    }

    pub fn priority(&self, v: usize) -> usize {
        self.priority[v]
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn max_priority(&self) -> usize {
        self.priority.iter().copied().max().unwrap_or(0)
    }

    /// Nodes reachable from the root, root included.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.succ[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Serialises to the game document format.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for v in 0..self.len() {
            let o = if self.owner[v] == Player::Even { "E" } else { "O" };
            let _ = writeln!(out, "node {} {} {}", self.labels[v], o, self.priority[v]);
        }
        for v in 0..self.len() {
            for &w in &self.succ[v] {
                let _ = writeln!(out, "edge {} {}", self.labels[v], self.labels[w]);
            }
        }
        let _ = writeln!(out, "root {}", self.labels[self.root]);
        out
    }
}

/// Builds the evaluation game of `f` on `m`, rooted at the designated state.
///
/// Node `sub * N + state` stands for "subformula `sub` holds at `state`".
/// Even moves at disjunctions and diamonds, Odd at conjunctions and boxes.
/// Literals are dead ends owned by whoever they refute.
pub fn build_game(f: &Formula, m: &KripkeModel) -> ParityGame {
    let cl = f.closure();
    let n = m.len();
    let id = |sub: usize, s: usize| sub * n + s;

    // bottom-up: a binder's priority exceeds every binder inside it
    let mut binder_priority = vec![0usize; cl.len()];
    for i in (0..cl.len()).rev() {
        if let Op::Fix(k, _) = cl.items[i].op {
            let inner = (i + 1..cl.len())
                .take_while(|&j| is_descendant(&cl, i, j))
                .filter(|&j| matches!(cl.items[j].op, Op::Fix(..)))
                .map(|j| binder_priority[j])
                .max()
                .unwrap_or(0);
            let want = if k == Fixpoint::Mu { 1 } else { 0 };
            let mut p = inner + 1;
            if p % 2 != want {
                p += 1;
            }
            binder_priority[i] = p;
        }
    }

    let total = cl.len() * n;
    let mut owner = vec![Player::Even; total];
    let mut priority = vec![0; total];
    let mut succ = vec![Vec::new(); total];
    let mut weight = vec![Vec::new(); total];
    let mut labels = Vec::with_capacity(total);
    for (i, item) in cl.items.iter().enumerate() {
        for s in 0..n {
            let v = id(i, s);
            labels.push(format!("{i}@{s}"));
            let mut moves: Vec<(usize, usize)> = Vec::new();
            match &item.op {
                Op::Atom(a) => {
                    owner[v] = if m.holds(a, s) { Player::Odd } else { Player::Even };
                }
                Op::Not(c) => {
                    let Op::Atom(a) = &cl.items[*c].op else {
                        unreachable!("negation is restricted to atoms")
                    };
                    owner[v] = if m.holds(a, s) { Player::Even } else { Player::Odd };
                }
                Op::Var(b) => moves.push((id(*b, s), 1)),
                Op::Delay(c) => moves.push((id(*c, s), 1)),
                Op::Fix(_, body) => {
                    priority[v] = binder_priority[i];
                    moves.push((id(*body, s), 0));
                }
                Op::Or(l, r) | Op::And(l, r) => {
                    owner[v] = if matches!(item.op, Op::Or(..)) { Player::Even } else { Player::Odd };
                    moves.push((id(*l, s), 0));
                    if r != l {
                        moves.push((id(*r, s), 0));
                    }
                }
                Op::Diamond(c) | Op::Necessity(c) => {
                    owner[v] = if matches!(item.op, Op::Diamond(_)) { Player::Even } else { Player::Odd };
                    moves.extend(m.succ(s).iter().map(|&t| (id(*c, t), 0)));
                }
            }
            succ[v] = moves.iter().map(|x| x.0).collect();
            weight[v] = moves.iter().map(|x| x.1).collect();
        }
    }
    ParityGame {
        owner,
        priority,
        succ,
        weight,
        labels,
        root: id(0, m.initial()),
    }
}

/// Closure positions are pre-order, so the subtree of `i` is the
/// contiguous block of its extent right after it.
fn is_descendant(cl: &crate::formula::SubformulaClosure, i: usize, j: usize) -> bool {
    fn extent(cl: &crate::formula::SubformulaClosure, i: usize) -> usize {
        1 + cl.children(i).iter().map(|&c| extent(cl, c)).sum::<usize>()
    }
    j > i && j < i + extent(cl, i)
}

/// Parses the line-oriented game document; every edge has weight 1.
pub fn load_game(text: &str) -> Result<ParityGame, GameError> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut owner = Vec::new();
    let mut priority = Vec::new();
    let mut labels = Vec::new();
    let mut edges: Vec<(usize, String, String)> = Vec::new();
    let mut root: Option<(usize, String)> = None;
    let bad = |line: usize, message: &str| GameError::Malformed {
        line,
        message: message.to_string(),
    };
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let f: Vec<&str> = content.split_whitespace().collect();
        match f[0] {
            "node" => {
                if f.len() != 4 {
                    return Err(bad(line, "expected `node <id> <E|O> <priority>`"));
                }
                let o = match f[2] {
                    "E" => Player::Even,
                    "O" => Player::Odd,
                    _ => return Err(bad(line, "owner must be E or O")),
                };
                let p: usize = f[3].parse().map_err(|_| bad(line, "priority must be a natural number"))?;
                if index.insert(f[1].to_string(), owner.len()).is_some() {
                    return Err(GameError::Duplicate {
                        line,
                        id: f[1].to_string(),
                    });
                }
                owner.push(o);
                priority.push(p);
                labels.push(f[1].to_string());
            }
            "edge" => {
                if f.len() != 3 {
                    return Err(bad(line, "expected `edge <src> <dst>`"));
                }
                edges.push((line, f[1].to_string(), f[2].to_string()));
            }
            "root" => {
                if f.len() != 2 {
                    return Err(bad(line, "expected `root <id>`"));
                }
                root = Some((line, f[1].to_string()));
            }
            other => return Err(bad(line, &format!("unknown directive `{other}`"))),
        }
    }
    if owner.is_empty() {
        return Err(GameError::Empty);
    }
    let lookup = |line: usize, id: &str| {
        index.get(id).copied().ok_or_else(|| GameError::Dangling {
            line,
            id: id.to_string(),
        })
    };
    let mut succ = vec![Vec::new(); owner.len()];
    for (line, a, b) in &edges {
        let (a, b) = (lookup(*line, a)?, lookup(*line, b)?);
        if !succ[a].contains(&b) {
            succ[a].push(b);
        }
    }
    let weight = succ.iter().map(|s| vec![1; s.len()]).collect();
    let root = match root {
        Some((line, id)) => lookup(line, &id)?,
        None => 0,
    };
    Ok(ParityGame {
        owner,
        priority,
        succ,
        weight,
        labels,
        root,
    })
}

/// The nine-node example game whose root has closure ordinal 3.
pub fn fig1_game() -> ParityGame {
    load_game(FIG1_DOCUMENT).expect("built-in fixture is well formed")
}

pub const FIG1_DOCUMENT: &str = "\
node n0 E 0
node n1 O 1
node n2 E 2
node n0r E 0
node n4 E 4
node n2r O 2
node n1r E 1
node n5 O 5
node n3 O 3
edge n0 n1
edge n1 n2
edge n2 n3
edge n2 n0r
edge n0r n4
edge n4 n2r
edge n2r n1r
edge n1r n5
edge n5 n3
edge n0r n5
root n0
";

/// Truncation of the descending chain: Odd nodes `d0 .. d{n-1}`, each able
/// to step down or escape to a sink where Odd is stuck.
pub fn fig2_truncation(n: usize) -> ParityGame {
    let mut doc = String::new();
    for i in 0..n {
        let _ = writeln!(doc, "node d{i} O 0");
    }
    doc.push_str("node sink O 0\n");
    for i in 0..n {
        if i + 1 < n {
            let _ = writeln!(doc, "edge d{i} d{}", i + 1);
        }
        let _ = writeln!(doc, "edge d{i} sink");
    }
    doc.push_str(if n > 0 { "root d0\n" } else { "root sink\n" });
    load_game(&doc).expect("generated fixture is well formed")
}

// ---------------------------------------------------------------------------
// Small progress measures

/// A progress measure value: counters for odd priorities, most significant
/// (highest priority) first. `None` is ⊤.
pub type Measure = Option<Vec<usize>>;

/// Game with dead ends redirected into two absorbing sinks.
struct Totalised {
    owner: Vec<Player>,
    priority: Vec<usize>,
    succ: Vec<Vec<usize>>,
}

fn totalise(g: &ParityGame) -> Totalised {
    let n = g.len();
    let (even_sink, odd_sink) = (n, n + 1);
    let mut owner = g.owner.clone();
    let mut priority = g.priority.clone();
    let mut succ = g.succ.clone();
    for v in 0..n {
        if succ[v].is_empty() {
            succ[v].push(if owner[v] == Player::Odd { even_sink } else { odd_sink });
        }
    }
    owner.extend([Player::Even, Player::Even]);
    priority.extend([0, 1]);
    succ.push(vec![even_sink]);
    succ.push(vec![odd_sink]);
    Totalised { owner, priority, succ }
}

struct MeasureSpace {
    /// Odd priorities, descending.
    odd: Vec<usize>,
    /// Inclusive upper bound per counter.
    cap: Vec<usize>,
}

impl MeasureSpace {
    fn new(priority: &[usize]) -> Self {
        let top = priority.iter().copied().max().unwrap_or(0);
        let odd: Vec<usize> = (1..=top).rev().filter(|p| p % 2 == 1).collect();
        let cap = odd
            .iter()
            .map(|&p| priority.iter().filter(|&&q| q == p).count())
            .collect();
        MeasureSpace { odd, cap }
    }

    /// Number of counters that matter at priority `p`.
    fn prefix(&self, p: usize) -> usize {
        self.odd.iter().take_while(|&&q| q >= p).count()
    }

    /// Least measure `m` with `m ≥_p ρ(w)`, strictly when `p` is odd.
    fn prog(&self, rho_w: &Measure, p: usize) -> Measure {
        let w = rho_w.as_ref()?;
        let k = self.prefix(p);
        let mut m = vec![0; self.odd.len()];
        m[..k].copy_from_slice(&w[..k]);
        if p % 2 == 1 {
            let mut i = k;
            loop {
                if i == 0 {
                    return None;
                }
                i -= 1;
                if m[i] < self.cap[i] {
                    m[i] += 1;
                    return Some(m);
                }
                m[i] = 0;
            }
        }
        Some(m)
    }
}

fn cmp_measure(a: &Measure, b: &Measure) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Greater,
        (Some(_), None) => Ordering::Less,
        (Some(x), Some(y)) => x.cmp(y),
    }
}

fn best(t: &Totalised, sp: &MeasureSpace, rho: &[Measure], v: usize) -> Measure {
    let progs = t.succ[v].iter().map(|&w| sp.prog(&rho[w], t.priority[v]));
    let pick = if t.owner[v] == Player::Even {
        progs.min_by(cmp_measure)
    } else {
        progs.max_by(cmp_measure)
    };
    pick.expect("totalised games have no dead ends")
}

/// Least progress measure by the lifting algorithm. Index `len()` is the
/// Even-winning sink and `len() + 1` the Odd-winning sink.
pub fn progress_measure(g: &ParityGame) -> Vec<Measure> {
    let t = totalise(g);
    let sp = MeasureSpace::new(&t.priority);
    let n = t.owner.len();
    let mut rho: Vec<Measure> = vec![Some(vec![0; sp.odd.len()]); n];
    let mut pred = vec![Vec::new(); n];
    for v in 0..n {
        for &w in &t.succ[v] {
            pred[w].push(v);
        }
    }
    let mut queue: std::collections::VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let lifted = best(&t, &sp, &rho, v);
        if cmp_measure(&lifted, &rho[v]) == Ordering::Greater {
            rho[v] = lifted;
            for &u in &pred[v] {
                if !queued[u] {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    rho
}

/// Checks the local progress conditions of `rho` (as returned by
/// [`progress_measure`]) without reference to how it was computed.
pub fn verify_progress_measure(g: &ParityGame, rho: &[Measure]) -> bool {
    let t = totalise(g);
    if rho.len() != t.owner.len() {
        return false;
    }
    let sp = MeasureSpace::new(&t.priority);
    for (v, r) in rho.iter().enumerate() {
        let Some(rv) = r else { continue };
        if rv.len() != sp.odd.len() || rv.iter().zip(&sp.cap).any(|(x, c)| x > c) {
            return false;
        }
        let ok = |w: &usize| {
            cmp_measure(&sp.prog(&rho[*w], t.priority[v]), r) != Ordering::Greater
        };
        let holds = if t.owner[v] == Player::Even {
            t.succ[v].iter().any(ok)
        } else {
            t.succ[v].iter().all(ok)
        };
        if !holds {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankAssignment {
    pub winner: Vec<Player>,
    /// `None` on Odd-won nodes.
    pub rank: Vec<Option<usize>>,
    /// Rank of the root, if Even wins there.
    pub value: Option<usize>,
    /// Largest rank among Even-won nodes reachable from the root (0 if none).
    pub sup_rank: usize,
}

impl RankAssignment {
    pub fn root_winner(&self, g: &ParityGame) -> Player {
        self.winner[g.root()]
    }
}

/// Even-priority nodes of `won` that sit on a cycle of `won` whose nodes all
/// have priority at most their own.
fn cycle_targets(g: &ParityGame, won: &[bool]) -> Vec<bool> {
    let mut target = vec![false; g.len()];
    let mut evens: Vec<usize> = (0..g.len())
        .filter(|&v| won[v] && g.priority[v].is_multiple_of(2))
        .map(|v| g.priority[v])
        .collect();
    evens.sort_unstable();
    evens.dedup();
    for p in evens {
        let keep: Vec<bool> = (0..g.len()).map(|v| won[v] && g.priority[v] <= p).collect();
        for comp in sccs(g, &keep) {
            let cyclic = comp.len() > 1 || g.succ[comp[0]].contains(&comp[0]);
            if cyclic {
                for v in comp {
                    if g.priority[v] == p {
                        target[v] = true;
                    }
                }
            }
        }
    }
    target
}

/// Tarjan's algorithm on the subgraph induced by `keep`.
fn sccs(g: &ParityGame, keep: &[bool]) -> Vec<Vec<usize>> {
    let n = g.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for start in 0..n {
        if !keep[start] || index[start] != usize::MAX {
            continue;
        }
        let mut work = vec![(start, 0usize)];
        index[start] = counter;
        low[start] = counter;
        counter += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            if *next < g.succ[v].len() {
                let w = g.succ[v][*next];
                *next += 1;
                if !keep[w] {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(u, _)) = work.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Winners from the progress measure, then ranks as the weighted
/// forced-reach distance (Even minimising, Odd maximising) to the targets:
/// Odd dead ends and even-priority nodes closing a cycle they dominate.
pub fn solve_ranks(g: &ParityGame) -> RankAssignment {
    let rho = progress_measure(g);
    let won: Vec<bool> = (0..g.len()).map(|v| rho[v].is_some()).collect();
    let winner = won
        .iter()
        .map(|&w| if w { Player::Even } else { Player::Odd })
        .collect();

    let mut target = cycle_targets(g, &won);
    for v in 0..g.len() {
        if won[v] && g.succ[v].is_empty() {
            target[v] = true;
        }
    }
    let mut pred: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.len()];
    for v in 0..g.len() {
        for (k, &w) in g.succ[v].iter().enumerate() {
            pred[w].push((v, g.weight[v][k]));
        }
    }
    let mut rank: Vec<Option<usize>> = vec![None; g.len()];
    let mut pending: Vec<usize> = g.succ.iter().map(|s| s.len()).collect();
    let mut worst = vec![0usize; g.len()];
    let mut heap = BinaryHeap::new();
    for (v, _) in target.iter().enumerate().filter(|(_, &t)| t) {
        heap.push(Reverse((0usize, v)));
    }
    while let Some(Reverse((d, v))) = heap.pop() {
        if rank[v].is_some() {
            continue;
        }
        rank[v] = Some(d);
        for &(u, w) in &pred[v] {
            if !won[u] || rank[u].is_some() {
                continue;
            }
            match g.owner[u] {
                Player::Even => heap.push(Reverse((d + w, u))),
                Player::Odd => {
                    worst[u] = worst[u].max(d + w);
                    pending[u] -= 1;
                    if pending[u] == 0 {
                        heap.push(Reverse((worst[u], u)));
                    }
                }
            }
        }
    }
    let reach = g.reachable();
    let sup_rank = (0..g.len())
        .filter(|&v| reach[v])
        .filter_map(|v| rank[v])
        .max()
        .unwrap_or(0);
    RankAssignment {
        winner,
        value: rank[g.root],
        rank,
        sup_rank,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankOfiReport {
    pub formula: String,
    pub states: usize,
    pub ofi: usize,
    pub sup_rank: usize,
    /// `1 + sup_rank`, the side the comparison uses.
    pub rank_side: usize,
    pub equal: bool,
    pub top_truth: bool,
    pub root_winner: Player,
    /// How the empty supremum is read.
    pub convention: &'static str,
}

impl RankOfiReport {
    pub fn line(&self) -> String {
        format!(
            "{} ofi={} 1+sup_rank={} N={} formula={}",
            if self.equal { "equal" } else { "unequal" },
            self.ofi,
            self.rank_side,
            self.states,
            self.formula
        )
    }
}

/// Computes `OFI` with the engine and `1 + sup rank` with the game solver and
/// reports whether they agree. Never fails on disagreement.
pub fn check_rank_ofi(f: &Formula, m: &KripkeModel) -> Result<RankOfiReport, EngineError> {
    let trace = evaluate(f, m)?;
    let g = build_game(f, m);
    let ranks = solve_ranks(&g);
    let rank_side = 1 + ranks.sup_rank;
    Ok(RankOfiReport {
        formula: f.to_string(),
        states: m.len(),
        ofi: trace.fold_back,
        sup_rank: ranks.sup_rank,
        rank_side,
        equal: rank_side == trace.fold_back,
        top_truth: trace.top_truth,
        root_winner: ranks.root_winner(&g),
        convention: "sup over no verifier-won reachable node is 0",
    })
}

/// Sup ranks of the chain truncations `1..=max_n`, with the symbolic limit
/// when the sequence keeps growing.
pub fn fig2_family(max_n: usize) -> (Vec<usize>, String) {
    let sups: Vec<usize> = (1..=max_n).map(|n| solve_ranks(&fig2_truncation(n)).sup_rank).collect();
    let increasing = sups.windows(2).all(|w| w[0] < w[1]);
    let limit = if increasing {
        "omega (unbounded in family)".to_string()
    } else {
        "bounded".to_string()
    };
    (sups, limit)
}

/// Squares for Even, diamonds for Odd, labelled with priorities.
pub fn export_game_dot(g: &ParityGame) -> String {
    let mut out = String::from("digraph game {\n");
    for v in 0..g.len() {
        let shape = if g.owner[v] == Player::Even { "box" } else { "diamond" };
        let peripheries = if v == g.root { ", peripheries=2" } else { "" };
        let _ = writeln!(
            out,
            "  v{v} [label=\"{}: {}\", shape={shape}{peripheries}];",
            g.labels[v], g.priority[v]
        );
    }
    for v in 0..g.len() {
        for &w in &g.succ[v] {
            let _ = writeln!(out, "  v{v} -> v{w};");
        }
    }
    out.push_str("}\n");
    out
}

/// Rank histogram for reports.
pub fn rank_histogram(r: &RankAssignment) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for x in r.rank.iter().flatten() {
        *h.entry(*x).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::model::{fixture, FixtureKind};

    #[test]
    fn literal_terminal() {
        let m = KripkeModel::new(2, [(0, 1)], [("p".to_string(), vec![1])], None).unwrap();
        let g = build_game(&parse("p").unwrap(), &m);
        assert!(g.successors(g.root()).is_empty());
        let r = solve_ranks(&g);
        assert_eq!(r.root_winner(&g), Player::Odd);
        assert_eq!(r.value, None);
    }

    #[test]
    fn reach_is_won() {
        let m = fixture(FixtureKind::Chain, 2).unwrap();
        let g = build_game(&parse("mu X. (p \\/ <>X)").unwrap(), &m);
        assert_eq!(g.priority(g.root()), 1);
        let r = solve_ranks(&g);
        assert_eq!(r.root_winner(&g), Player::Even);
        assert_eq!(r.value, Some(2));
        assert!(verify_progress_measure(&g, &progress_measure(&g)));
    }

    #[test]
    fn priorities_grow_outwards() {
        let m = fixture(FixtureKind::Ring, 1).unwrap();
        let f = parse("nu X. mu Y. (<>Y \\/ nu Z. []Z /\\ X)").unwrap();
        let g = build_game(&f, &m);
        let cl = f.closure();
        let pris: Vec<usize> = (0..cl.len())
            .filter(|&i| matches!(cl.op(i), Op::Fix(..)))
            .map(|i| g.priority(i))
            .collect();
        assert_eq!(pris, vec![4, 3, 2]);
    }

    #[test]
    fn fig1_value() {
        let g = fig1_game();
        assert_eq!(g.len(), 9);
        let r = solve_ranks(&g);
        assert_eq!(r.value, Some(3));
        assert!(r.winner.iter().all(|&p| p == Player::Even));
    }

    #[test]
    fn single_even_won_terminal() {
        let g = load_game("node t O 0\n").unwrap();
        let r = solve_ranks(&g);
        assert_eq!(r.rank, vec![Some(0)]);
        assert_eq!(r.sup_rank, 0);
    }

    #[test]
    fn fig2_sup_ranks() {
        for n in 1..8 {
            assert_eq!(solve_ranks(&fig2_truncation(n)).sup_rank, n);
        }
        let (sups, limit) = fig2_family(5);
        assert_eq!(sups, vec![1, 2, 3, 4, 5]);
        assert_eq!(limit, "omega (unbounded in family)");
    }

    #[test]
    fn odd_cycle_is_lost() {
        let g = load_game("node a E 1\nnode b O 0\nedge a b\nedge b a\nroot a\n").unwrap();
        let r = solve_ranks(&g);
        assert_eq!(r.winner, vec![Player::Odd, Player::Odd]);
        let rho = progress_measure(&g);
        assert!(rho[0].is_none());
        assert!(verify_progress_measure(&g, &rho));
        let mut forged = rho.clone();
        forged[0] = Some(vec![0]);
        assert!(!verify_progress_measure(&g, &forged));
    }

    #[test]
    fn even_cycle_targets() {
        let g = load_game("node a E 2\nnode b O 1\nedge a b\nedge b a\nroot b\n").unwrap();
        let r = solve_ranks(&g);
        assert_eq!(r.rank, vec![Some(0), Some(1)]);
    }

    #[test]
    fn loader_errors() {
        assert_eq!(load_game("# nothing\n"), Err(GameError::Empty));
        assert!(matches!(load_game("node a E 0\nedge a b\n"), Err(GameError::Dangling { line: 2, .. })));
        assert!(matches!(load_game("node a X 0\n"), Err(GameError::Malformed { line: 1, .. })));
        assert!(matches!(load_game("node a E 0\nnode a O 1\n"), Err(GameError::Duplicate { .. })));
        let g = load_game("node a E 0\nedge a a\nedge a a\n").unwrap();
        assert_eq!(g.successors(0), &[0]);
    }

    #[test]
    fn document_round_trip() {
        let g = fig1_game();
        assert_eq!(load_game(&g.to_document()).unwrap(), g);
    }

    #[test]
    fn dot_shapes() {
        let dot = export_game_dot(&fig1_game());
        assert_eq!(dot.matches("shape=box").count(), 5);
        assert_eq!(dot.matches("shape=diamond").count(), 4);
        assert!(dot.contains("v0 [label=\"n0: 0\", shape=box, peripheries=2];"));
        let one = export_game_dot(&load_game("node x E 0\n").unwrap());
        assert_eq!(one.lines().count(), 3);
    }

    #[test]
    fn rank_ofi_on_chains() {
        for n in 1..=6 {
            let r = check_rank_ofi(
                &parse("mu X. (p \\/ <>X)").unwrap(),
                &fixture(FixtureKind::Chain, n).unwrap(),
            )
            .unwrap();
            assert_eq!(r.ofi, n + 1);
            assert!(r.equal, "{}", r.line());
        }
    }
}
