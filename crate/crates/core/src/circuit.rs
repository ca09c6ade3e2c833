//! Synchronous circuit view of staged evaluation.
//!
//! Bit `sub * N + state` holds the value of subformula `sub` at `state`.
//! Register bits (latches and pipelines) load on the clock edge from the
//! values of the previous cycle; combinational bits are recomputed from
//! register outputs and other nets in topological order.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::{Evaluator, StageValue};
use crate::formula::{Fixpoint, Formula, Op};
use crate::model::{Frame, KripkeModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("combinational cycle through bit {bit}")]
    CombinationalCycle { bit: usize },
    #[error("circuit did not settle within {max_cycles} cycles")]
    NoSettle { max_cycles: usize },
    #[error("netlist line {line}: {message}")]
    Netlist { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitKind {
    MuLatch,
    NuLatch,
    Pipeline,
    Comb,
}

impl BitKind {
    pub fn is_register(self) -> bool {
        self != BitKind::Comb
    }

    fn name(self) -> &'static str {
        match self {
            BitKind::MuLatch => "mu-latch",
            BitKind::NuLatch => "nu-latch",
            BitKind::Pipeline => "pipeline",
            BitKind::Comb => "comb",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "mu-latch" => BitKind::MuLatch,
            "nu-latch" => BitKind::NuLatch,
            "pipeline" => BitKind::Pipeline,
            "comb" => BitKind::Comb,
            _ => return None,
        })
    }
}

/// Boolean expression over bit reads.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(bool),
    /// Output of a register bit.
    Reg(usize),
    /// Output of a combinational bit.
    Comb(usize),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    fn read(bit: usize, kinds: &[BitKind]) -> Expr {
        if kinds[bit].is_register() {
            Expr::Reg(bit)
        } else {
            Expr::Comb(bit)
        }
    }

    fn and(mut xs: Vec<Expr>) -> Expr {
        match xs.len() {
            0 => Expr::Const(true),
            1 => xs.pop().unwrap(),
            _ => Expr::And(xs),
        }
    }

    fn or(mut xs: Vec<Expr>) -> Expr {
        match xs.len() {
            0 => Expr::Const(false),
            1 => xs.pop().unwrap(),
            _ => Expr::Or(xs),
        }
    }

    pub fn eval(&self, q: &[bool]) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Reg(i) | Expr::Comb(i) => q[*i],
            Expr::And(xs) => xs.iter().all(|x| x.eval(q)),
            Expr::Or(xs) => xs.iter().any(|x| x.eval(q)),
        }
    }

    fn comb_reads(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Comb(i) => out.push(*i),
            Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| x.comb_reads(out)),
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(b) => write!(f, "{}", *b as u8),
            Expr::Reg(i) => write!(f, "reg:{i}"),
            Expr::Comb(i) => write!(f, "comb:{i}"),
            Expr::And(xs) | Expr::Or(xs) => {
                f.write_str(if matches!(self, Expr::And(_)) { "and(" } else { "or(" })?;
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    subformulas: usize,
    states: usize,
    kinds: Vec<BitKind>,
    /// Next-state function for register bits, net function for comb bits.
    exprs: Vec<Expr>,
    reset: Vec<bool>,
    /// Combinational bits in evaluation order.
    order: Vec<usize>,
    macro_step: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettleReport {
    /// First `t` with `q^{t+1} = q^t`.
    pub settle_time: usize,
    /// Per bit, the last edge `α` at which it changed (`q^α ≠ q^{α+1}`).
    pub toggle_log: Vec<Option<usize>>,
    /// Per bit, how many times it changed.
    pub toggle_counts: Vec<usize>,
    /// `m^t = [q^t = q^{t-1}]` for `t = 1 ..= settle_time + 1`.
    pub metastable: Vec<bool>,
    /// `q^0 ..= q^{settle_time + 1}` as subformula × state matrices.
    pub stages: Vec<StageValue>,
    pub quiescent: Vec<bool>,
}

impl SettleReport {
    pub fn single_toggle(&self) -> bool {
        self.toggle_counts.iter().all(|&c| c <= 1)
    }

    /// `cycle,bit,value`: all bits at cycle 0, then every change.
    pub fn dump_vcd(&self) -> String {
        let mut out = String::from("cycle,bit,value\n");
        let flat: Vec<Vec<bool>> = self.stages.iter().map(flatten).collect();
        for (bit, v) in flat[0].iter().enumerate() {
            let _ = writeln!(out, "0,{bit},{}", *v as u8);
        }
        for (t, pair) in flat.windows(2).enumerate() {
            for (bit, (a, b)) in pair[0].iter().zip(&pair[1]).enumerate() {
                if a != b {
                    let _ = writeln!(out, "{},{bit},{}", t + 1, *b as u8);
                }
            }
        }
        out
    }
}

fn flatten(v: &StageValue) -> Vec<bool> {
    let mut out = Vec::with_capacity(v.rows() * v.cols());
    for r in 0..v.rows() {
        for c in 0..v.cols() {
            out.push(v.get(r, c));
        }
    }
    out
}

fn topo_order(kinds: &[BitKind], exprs: &[Expr]) -> Result<Vec<usize>, CircuitError> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark = vec![0u8; kinds.len()];
    let mut order = Vec::new();
    for start in 0..kinds.len() {
        if kinds[start].is_register() || mark[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, false)];
        while let Some((bit, expanded)) = stack.pop() {
            if expanded {
                mark[bit] = 2;
                order.push(bit);
                continue;
            }
            match mark[bit] {
                2 => continue,
                1 => return Err(CircuitError::CombinationalCycle { bit }),
                _ => {}
            }
            mark[bit] = 1;
            stack.push((bit, true));
            let mut reads = Vec::new();
            exprs[bit].comb_reads(&mut reads);
            for r in reads {
                if kinds[r].is_register() {
                    continue;
                }
                match mark[r] {
                    1 => return Err(CircuitError::CombinationalCycle { bit: r }),
                    0 => stack.push((r, false)),
                    _ => {}
                }
            }
        }
    }
    Ok(order)
}

/// Compiles `f` over `m` into a netlist, with the engine's seed as reset.
pub fn extract(f: &Formula, m: &KripkeModel) -> Result<Circuit, CircuitError> {
    let cl = f.closure();
    let n = m.len();
    let bit = |sub: usize, s: usize| sub * n + s;
    let mut kinds = Vec::with_capacity(cl.len() * n);
    for item in &cl.items {
        let k = match item.op {
            Op::Fix(Fixpoint::Mu, _) => BitKind::MuLatch,
            Op::Fix(Fixpoint::Nu, _) => BitKind::NuLatch,
            Op::Delay(_) => BitKind::Pipeline,
            _ => BitKind::Comb,
        };
        kinds.extend(std::iter::repeat_n(k, n));
    }
    let mut exprs = Vec::with_capacity(kinds.len());
    for (row, item) in cl.items.iter().enumerate() {
        for s in 0..n {
            let rd = |sub: usize, t: usize| Expr::read(bit(sub, t), &kinds);
            let e = match &item.op {
                Op::Atom(a) => Expr::Const(m.holds(a, s)),
                Op::Not(c) => match &cl.items[*c].op {
                    Op::Atom(a) => Expr::Const(!m.holds(a, s)),
                    _ => unreachable!("negation is restricted to atoms"),
                },
                Op::Var(b) => Expr::Reg(bit(*b, s)),
                Op::And(l, r) => Expr::And(vec![rd(*l, s), rd(*r, s)]),
                Op::Or(l, r) => Expr::Or(vec![rd(*l, s), rd(*r, s)]),
                Op::Diamond(c) => Expr::or(m.succ(s).iter().map(|&t| rd(*c, t)).collect()),
                Op::Necessity(c) => Expr::and(m.succ(s).iter().map(|&t| rd(*c, t)).collect()),
                Op::Delay(c) => rd(*c, s),
                Op::Fix(Fixpoint::Mu, body) => Expr::Or(vec![Expr::Reg(bit(row, s)), rd(*body, s)]),
                Op::Fix(Fixpoint::Nu, body) => Expr::And(vec![Expr::Reg(bit(row, s)), rd(*body, s)]),
            };
            exprs.push(e);
        }
    }
    let order = topo_order(&kinds, &exprs)?;
    let seed = Evaluator::new(f).seed(m);
    Ok(Circuit {
        subformulas: cl.len(),
        states: n,
        kinds,
        exprs,
        reset: flatten(&seed),
        order,
        macro_step: false,
    })
}

impl Circuit {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn subformulas(&self) -> usize {
        self.subformulas
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn kinds(&self) -> &[BitKind] {
        &self.kinds
    }

    /// One kind per subformula.
    pub fn row_kinds(&self) -> Vec<BitKind> {
        (0..self.subformulas).map(|r| self.kinds[r * self.states]).collect()
    }

    pub fn expr(&self, bit: usize) -> &Expr {
        &self.exprs[bit]
    }

    pub fn reset_vector(&self) -> &[bool] {
        &self.reset
    }

    pub fn is_compressed(&self) -> bool {
        self.macro_step
    }

    /// `2 · N · m`.
    pub fn iteration_bound(&self) -> usize {
        2 * self.states * self.subformulas
    }

    /// `⌈log₂ m⌉`.
    pub fn compression_bound(&self) -> usize {
        let m = self.subformulas.max(1);
        (usize::BITS - (m - 1).leading_zeros()) as usize
    }

    /// `F_φ`: clock edge followed by combinational settling.
    pub fn clock(&self, q: &[bool]) -> Vec<bool> {
        let mut next = vec![false; q.len()];
        for (bit, k) in self.kinds.iter().enumerate() {
            if k.is_register() {
                next[bit] = self.exprs[bit].eval(q);
            }
        }
        for &bit in &self.order {
            next[bit] = self.exprs[bit].eval(&next);
        }
        next
    }

    /// `F` then closure under `F`.
    fn macro_clock(&self, q: &[bool]) -> Result<Vec<bool>, CircuitError> {
        let mut cur = self.clock(q);
        for _ in 0..=self.iteration_bound() {
            let next = self.clock(&cur);
            if next == cur {
                return Ok(cur);
            }
            cur = next;
        }
        Err(CircuitError::NoSettle {
            max_cycles: self.iteration_bound(),
        })
    }

    fn to_stage(&self, q: &[bool]) -> StageValue {
        let mut v = StageValue::new(self.subformulas, self.states);
        for (bit, &b) in q.iter().enumerate() {
            v.set(bit / self.states, bit % self.states, b);
        }
        v
    }
}

/// Clocks the circuit from reset until two consecutive vectors agree.
pub fn simulate(c: &Circuit, max_cycles: usize) -> Result<SettleReport, CircuitError> {
    let mut q = c.reset.clone();
    let mut stages = vec![c.to_stage(&q)];
    let mut toggle_log = vec![None; c.len()];
    let mut toggle_counts = vec![0; c.len()];
    let mut metastable = Vec::new();
    for t in 0..=max_cycles {
        let next = if c.macro_step {
            c.macro_clock(&q)?
        } else {
            c.clock(&q)
        };
        let mut changed = false;
        for bit in 0..c.len() {
            if next[bit] != q[bit] {
                changed = true;
                toggle_log[bit] = Some(t);
                toggle_counts[bit] += 1;
            }
        }
        metastable.push(!changed);
        stages.push(c.to_stage(&next));
        if !changed {
            return Ok(SettleReport {
                settle_time: t,
                toggle_log,
                toggle_counts,
                metastable,
                stages,
                quiescent: next,
            });
        }
        q = next;
    }
    Err(CircuitError::NoSettle { max_cycles })
}

/// Macro-step variant: each cycle applies `F` and then iterates `F` to closure.
pub fn compress(c: &Circuit) -> Circuit {
    Circuit {
        macro_step: true,
        ..c.clone()
    }
}

/// One line per bit: `index sub state kind reset expression`.
pub fn emit_netlist(c: &Circuit) -> String {
    let mut out = String::new();
    if c.macro_step {
        out.push_str("# macro-step\n");
    }
    for bit in 0..c.len() {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            bit,
            bit / c.states,
            bit % c.states,
            c.kinds[bit].name(),
            c.reset[bit] as u8,
            c.exprs[bit]
        );
    }
    out
}

struct ExprParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl ExprParser<'_> {
    fn number(&mut self) -> Option<usize> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.s[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Option<Expr> {
        if self.eat("reg:") {
            return self.number().map(Expr::Reg);
        }
        if self.eat("comb:") {
            return self.number().map(Expr::Comb);
        }
        let and = self.eat("and(");
        if and || self.eat("or(") {
            let mut xs = vec![self.expr()?];
            while self.eat(",") {
                xs.push(self.expr()?);
            }
            if !self.eat(")") {
                return None;
            }
            return Some(if and { Expr::And(xs) } else { Expr::Or(xs) });
        }
        if self.eat("0") {
            return Some(Expr::Const(false));
        }
        if self.eat("1") {
            return Some(Expr::Const(true));
        }
        None
    }
}

/// Inverse of [`emit_netlist`].
pub fn load_netlist(text: &str) -> Result<Circuit, CircuitError> {
    let err = |line: usize, message: &str| CircuitError::Netlist {
        line,
        message: message.to_string(),
    };
    let mut macro_step = false;
    let mut rows = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line == "# macro-step" {
            macro_step = true;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(err(ln + 1, "expected 6 fields"));
        }
        let num = |i: usize| fields[i].parse::<usize>().map_err(|_| err(ln + 1, "bad number"));
        let (idx, sub, state) = (num(0)?, num(1)?, num(2)?);
        if idx != rows.len() {
            return Err(err(ln + 1, "bit indices must be consecutive from 0"));
        }
        let kind = BitKind::from_name(fields[3]).ok_or_else(|| err(ln + 1, "unknown bit kind"))?;
        let reset = match fields[4] {
            "0" => false,
            "1" => true,
            _ => return Err(err(ln + 1, "reset must be 0 or 1")),
        };
        let mut p = ExprParser {
            s: fields[5].as_bytes(),
            pos: 0,
        };
        let expr = p
            .expr()
            .filter(|_| p.pos == p.s.len())
            .ok_or_else(|| err(ln + 1, "malformed expression"))?;
        rows.push((sub, state, kind, reset, expr, ln + 1));
    }
    if rows.is_empty() {
        return Err(err(0, "empty netlist"));
    }
    let states = rows.iter().map(|r| r.1).max().unwrap() + 1;
    if rows.len() % states != 0 {
        return Err(err(0, "bit count is not a multiple of the state count"));
    }
    let mut kinds = Vec::new();
    let mut exprs = Vec::new();
    let mut reset = Vec::new();
    for (i, (sub, state, kind, r, e, ln)) in rows.into_iter().enumerate() {
        if sub * states + state != i {
            return Err(err(ln, "bit index does not match (sub, state)"));
        }
        kinds.push(kind);
        reset.push(r);
        exprs.push(e);
    }
    for (ln, e) in exprs.iter().enumerate() {
        let mut reads = Vec::new();
        collect_reads(e, &mut reads);
        for (bit, tagged_reg) in reads {
            if bit >= kinds.len() || kinds[bit].is_register() != tagged_reg {
                return Err(err(ln + 1, "read tag does not match the bit kind"));
            }
        }
    }
    let order = topo_order(&kinds, &exprs)?;
    Ok(Circuit {
        subformulas: kinds.len() / states,
        states,
        kinds,
        exprs,
        reset,
        order,
        macro_step,
    })
}

fn collect_reads(e: &Expr, out: &mut Vec<(usize, bool)>) {
    match e {
        Expr::Reg(i) => out.push((*i, true)),
        Expr::Comb(i) => out.push((*i, false)),
        Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| collect_reads(x, out)),
        Expr::Const(_) => {}
    }
}
