//! A deliberately naive reference interpreter.
//!
//! It walks the syntax tree recursively and keeps each stage as a vector of
//! state sets, one per pre-order position. Nothing here is shared with the
//! bit-matrix evaluator apart from the output container.

use std::collections::{BTreeSet, HashMap};

use super::{EngineError, StageTrace, StageValue};
use crate::formula::{Fixpoint, Formula, Node};
use crate::model::{Frame, KripkeModel};

type Sets = Vec<BTreeSet<usize>>;

struct Oracle<'a> {
    m: &'a KripkeModel,
    all: BTreeSet<usize>,
}

impl Oracle<'_> {
    /// Fills `cur[idx..]` for the subtree rooted at `node`; returns the
    /// index one past the subtree. `binders` maps variable names to the
    /// position of the binder currently in scope.
    fn eval(
        &self,
        node: &Node,
        idx: usize,
        prev: Option<&Sets>,
        cur: &mut Sets,
        binders: &mut HashMap<String, usize>,
    ) -> usize {
        match node {
            Node::Atom(a) => {
                cur[idx] = self.all.iter().copied().filter(|&s| self.m.holds(a, s)).collect();
                idx + 1
            }
            Node::Var(x) => {
                let b = binders[x];
                cur[idx] = cur[b].clone();
                idx + 1
            }
            Node::Not(c) => {
                let end = self.eval(c, idx + 1, prev, cur, binders);
                cur[idx] = self.all.difference(&cur[idx + 1]).copied().collect();
                end
            }
            Node::And(l, r) | Node::Or(l, r) => {
                let mid = self.eval(l, idx + 1, prev, cur, binders);
                let end = self.eval(r, mid, prev, cur, binders);
                cur[idx] = if matches!(node, Node::And(..)) {
                    cur[idx + 1].intersection(&cur[mid]).copied().collect()
                } else {
                    cur[idx + 1].union(&cur[mid]).copied().collect()
                };
                end
            }
            Node::Diamond(c) | Node::Necessity(c) => {
                let end = self.eval(c, idx + 1, prev, cur, binders);
                let inner = cur[idx + 1].clone();
                let diamond = matches!(node, Node::Diamond(_));
                cur[idx] = self
                    .all
                    .iter()
                    .copied()
                    .filter(|&s| {
                        let succ = self.m.succ(s);
                        if diamond {
                            succ.iter().any(|t| inner.contains(t))
                        } else {
                            succ.iter().all(|t| inner.contains(t))
                        }
                    })
                    .collect();
                end
            }
            Node::Delay(c) => {
                let end = self.eval(c, idx + 1, prev, cur, binders);
                cur[idx] = match prev {
                    Some(p) => p[idx + 1].clone(),
                    None => cur[idx + 1].clone(),
                };
                end
            }
            Node::Fix(k, x, body) => {
                cur[idx] = match (prev, k) {
                    (None, Fixpoint::Mu) => BTreeSet::new(),
                    (None, Fixpoint::Nu) => self.all.clone(),
                    (Some(p), Fixpoint::Mu) => p[idx].union(&p[idx + 1]).copied().collect(),
                    (Some(p), Fixpoint::Nu) => p[idx].intersection(&p[idx + 1]).copied().collect(),
                };
                let shadowed = binders.insert(x.clone(), idx);
                let end = self.eval(body, idx + 1, prev, cur, binders);
                match shadowed {
                    Some(old) => binders.insert(x.clone(), old),
                    None => binders.remove(x),
                };
                end
            }
        }
    }

    fn stage(&self, f: &Formula, prev: Option<&Sets>) -> Sets {
        let mut cur = vec![BTreeSet::new(); f.size()];
        self.eval(f.root(), 0, prev, &mut cur, &mut HashMap::new());
        cur
    }
}

fn to_matrix(sets: &Sets, n: usize) -> StageValue {
    let mut v = StageValue::new(sets.len(), n);
    for (row, set) in sets.iter().enumerate() {
        for &s in set {
            v.set(row, s, true);
        }
    }
    v
}

/// Reference evaluation with the same stage semantics as [`super::evaluate`].
pub fn oracle_evaluate(f: &Formula, m: &KripkeModel) -> Result<StageTrace, EngineError> {
    let oracle = Oracle {
        m,
        all: (0..m.len()).collect(),
    };
    let bound = 2 * m.len() * f.size();
    let mut history = vec![oracle.stage(f, None)];
    let mut deltas = Vec::new();
    for t in 0..=bound {
        let next = oracle.stage(f, Some(&history[t]));
        let same = next == history[t];
        let mut delta = Vec::new();
        for (row, (a, b)) in history[t].iter().zip(&next).enumerate() {
            for s in a.symmetric_difference(b) {
                delta.push((row, *s));
            }
        }
        delta.sort();
        history.push(next);
        if same {
            let top_truth = history[t][0].contains(&m.initial());
            return Ok(StageTrace {
                stages: history.iter().map(|h| to_matrix(h, m.len())).collect(),
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
