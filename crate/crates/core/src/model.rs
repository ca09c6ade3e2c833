//! Finite Kripke models: loading, saving, fixture families and DOT export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("state {state} out of range (model has {states} states)")]
    OutOfRange { state: usize, states: usize },
    #[error("a model needs at least one state")]
    Empty,
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("fixture size must be at least 1")]
    FixtureSize,
    #[error("invalid model document: {0}")]
    Json(String),
}

/// A finite Kripke frame with an atom valuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KripkeModel {
    succ: Vec<Vec<usize>>,
    valuation: BTreeMap<String, BTreeSet<usize>>,
    designated: Option<usize>,
}

/// Something a formula can be evaluated over: a finite set of states where
/// some states may not have had their successors explored yet.
pub trait Frame {
    fn num_states(&self) -> usize;
    /// Successors of `s`, or `None` when `s` has not been expanded.
    fn successors(&self, s: usize) -> Option<&[usize]>;
    fn holds(&self, atom: &str, s: usize) -> bool;
}

impl Frame for KripkeModel {
    fn num_states(&self) -> usize {
        self.succ.len()
    }

    fn successors(&self, s: usize) -> Option<&[usize]> {
        Some(&self.succ[s])
    }

    fn holds(&self, atom: &str, s: usize) -> bool {
        self.valuation.get(atom).is_some_and(|set| set.contains(&s))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    states: usize,
    #[serde(default)]
    edges: Vec<(usize, usize)>,
    #[serde(default)]
    valuation: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    designated: Option<usize>,
}

impl KripkeModel {
    pub fn new(
        states: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        valuation: impl IntoIterator<Item = (String, Vec<usize>)>,
        designated: Option<usize>,
    ) -> Result<Self, ModelError> {
        if states == 0 {
            return Err(ModelError::Empty);
        }
        let check = |s: usize| {
            if s < states {
                Ok(s)
            } else {
                Err(ModelError::OutOfRange { state: s, states })
            }
        };
        let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); states];
        for (a, b) in edges {
            succ[check(a)?].insert(check(b)?);
        }
        let mut val = BTreeMap::new();
        for (atom, members) in valuation {
            let set: &mut BTreeSet<usize> = val.entry(atom).or_default();
            for s in members {
                set.insert(check(s)?);
            }
        }
        if let Some(d) = designated {
            check(d)?;
        }
        Ok(KripkeModel {
            succ: succ.into_iter().map(|s| s.into_iter().collect()).collect(),
            valuation: val,
            designated,
        })
    }

    /// `N`.
    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn succ(&self, s: usize) -> &[usize] {
        &self.succ[s]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, ts)| ts.iter().map(move |&b| (a, b)))
    }

    pub fn valuation(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.valuation
    }

    pub fn designated(&self) -> Option<usize> {
        self.designated
    }

    /// The designated state, defaulting to state 0.
    pub fn initial(&self) -> usize {
        self.designated.unwrap_or(0)
    }

    pub fn with_designated(mut self, s: usize) -> Result<Self, ModelError> {
        if s >= self.len() {
            return Err(ModelError::OutOfRange {
                state: s,
                states: self.len(),
            });
        }
        self.designated = Some(s);
        Ok(self)
    }

    /// Parses the sectioned text format, or the JSON object form when the
    /// document starts with `{`.
    pub fn load(text: &str) -> Result<Self, ModelError> {
        if text.trim_start().starts_with('{') {
            let doc: ModelDoc =
                serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
            return KripkeModel::new(doc.states, doc.edges, doc.valuation, doc.designated);
        }

        #[derive(PartialEq)]
        enum Section {
            None,
            Edges,
            Valuation,
        }
        let mut section = Section::None;
        let mut states = None;
        let mut edges = Vec::new();
        let mut valuation: Vec<(String, Vec<usize>)> = Vec::new();
        let mut designated = None;
        let malformed = |line: usize, message: String| ModelError::Malformed { line, message };
        let num = |line: usize, tok: &str| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| malformed(line, format!("expected a state index, found `{}`", tok.trim())))
        };

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("states:") {
                states = Some(num(line_no, rest)?);
                section = Section::None;
            } else if let Some(rest) = line.strip_prefix("designated:") {
                designated = Some(num(line_no, rest)?);
                section = Section::None;
            } else if line == "edges:" {
                section = Section::Edges;
            } else if line == "valuation:" {
                section = Section::Valuation;
            } else if section == Section::Edges {
                let (a, b) = line
                    .split_once("->")
                    .ok_or_else(|| malformed(line_no, format!("expected `src -> dst`, found `{line}`")))?;
                edges.push((num(line_no, a)?, num(line_no, b)?));
            } else if section == Section::Valuation {
                let (atom, members) = line
                    .split_once(':')
                    .ok_or_else(|| malformed(line_no, format!("expected `atom: states`, found `{line}`")))?;
                let atom = atom.trim();
                let valid = atom.starts_with(|c: char| c.is_ascii_lowercase())
                    && atom
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
                if !valid {
                    return Err(malformed(line_no, format!("invalid atom name `{atom}`")));
                }
                let members = members
                    .split_whitespace()
                    .map(|t| num(line_no, t))
                    .collect::<Result<Vec<_>, _>>()?;
                valuation.push((atom.to_string(), members));
            } else {
                return Err(malformed(line_no, format!("unexpected line `{line}`")));
            }
        }
        let states = states.ok_or_else(|| malformed(0, "missing `states:` line".into()))?;
        KripkeModel::new(states, edges, valuation, designated)
    }

    /// Writes the sectioned text format accepted by [`KripkeModel::load`].
    pub fn save(&self) -> String {
        let mut out = format!("states: {}\nedges:\n", self.len());
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} -> {b}");
        }
        out.push_str("valuation:\n");
        for (atom, set) in &self.valuation {
            let members: Vec<String> = set.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{atom}: {}", members.join(" "));
        }
        if let Some(d) = self.designated {
            let _ = writeln!(out, "designated: {d}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            states: self.len(),
            edges: self.edges().collect(),
            valuation: self
                .valuation
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().copied().collect()))
                .collect(),
            designated: self.designated,
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Graphviz digraph; nodes in index order, edges sorted.
    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph kripke {\n");
        for s in 0..self.len() {
            let atoms: Vec<&str> = self
                .valuation
                .iter()
                .filter(|(_, set)| set.contains(&s))
                .map(|(a, _)| a.as_str())
                .collect();
            let shape = if Some(s) == self.designated {
                ", shape=doublecircle"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "  s{s} [label=\"{s}: {{{}}}\"{shape}];",
                atoms.join(",")
            );
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "  s{a} -> s{b};");
        }
        out.push_str("}\n");
        out
    }
}

/// Generator families used in tests and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    /// `n+1` states `0 -> 1 -> ... -> n`, `p` only at `n`.
    Chain,
    /// `n` states on a cycle, `p` everywhere except 0.
    Ring,
    /// `n` states, all edges including self-loops, `p` at 0.
    Clique,
    /// `n` chain states each with an exit to an absorbing sink `n` where
    /// `p` (the win) holds.
    Fig2Truncation,
}

impl std::str::FromStr for FixtureKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(FixtureKind::Chain),
            "ring" => Ok(FixtureKind::Ring),
            "clique" => Ok(FixtureKind::Clique),
            "fig2-truncation" => Ok(FixtureKind::Fig2Truncation),
            other => Err(ModelError::UnknownFixture(other.to_string())),
        }
    }
}

pub fn fixture(kind: FixtureKind, n: usize) -> Result<KripkeModel, ModelError> {
    if n == 0 {
        return Err(ModelError::FixtureSize);
    }
    let p = |states: Vec<usize>| vec![("p".to_string(), states)];
    match kind {
        FixtureKind::Chain => KripkeModel::new(n + 1, (0..n).map(|i| (i, i + 1)), p(vec![n]), Some(0)),
        FixtureKind::Ring => KripkeModel::new(n, (0..n).map(|i| (i, (i + 1) % n)), p((1..n).collect()), Some(0)),
        FixtureKind::Clique => KripkeModel::new(
            n,
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))),
            p(vec![0]),
            Some(0),
        ),
        FixtureKind::Fig2Truncation => {
            let sink = n;
            let chain = (0..n.saturating_sub(1)).map(|i| (i, i + 1));
            let exits = (0..n).map(|i| (i, sink));
            KripkeModel::new(
                n + 1,
                chain.chain(exits).chain([(sink, sink)]),
                p(vec![sink]),
                Some(0),
            )
        }
    }
}

/// Parses `kind:n` (e.g. `chain:3`).
pub fn fixture_from_spec(spec: &str) -> Result<KripkeModel, ModelError> {
    let (kind, n) = spec
        .split_once(':')
        .ok_or_else(|| ModelError::UnknownFixture(spec.to_string()))?;
    let n = n
        .parse::<usize>()
        .map_err(|_| ModelError::UnknownFixture(spec.to_string()))?;
    fixture(kind.parse()?, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_chain_document() {
        let m = KripkeModel::load("states: 3\nedges:\n0 -> 1\n1 -> 2\nvaluation:\np: 2\n").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.succ(0), &[1]);
        assert!(m.holds("p", 2));
        assert!(!m.holds("q", 2));
    }

    #[test]
    fn load_errors() {
        assert_eq!(
            KripkeModel::load("states: 3\nedges:\n0 -> 5\n").unwrap_err(),
            ModelError::OutOfRange { state: 5, states: 3 }
        );
        assert_eq!(KripkeModel::load("states: 0\n").unwrap_err(), ModelError::Empty);
        assert_eq!(
            KripkeModel::load(r#"{"states": 0, "edges": []}"#).unwrap_err(),
            ModelError::Empty
        );
        assert!(matches!(
            KripkeModel::load("states: 2\nedges:\n0 => 1\n"),
            Err(ModelError::Malformed { line: 3, .. })
        ));
        assert!(matches!(KripkeModel::load("edges:\n"), Err(ModelError::Malformed { .. })));
        assert!(matches!(KripkeModel::load("{ nope"), Err(ModelError::Json(_))));
    }

    #[test]
    fn json_form() {
        let m = KripkeModel::load(
            r#"{"states": 2, "edges": [[0, 1]], "valuation": {"p": [1]}, "designated": 1}"#,
        )
        .unwrap();
        assert_eq!(m.designated(), Some(1));
        assert_eq!(KripkeModel::load(&m.to_json()).unwrap(), m);
        assert_eq!(KripkeModel::load(&m.save()).unwrap(), m);
    }

    #[test]
    fn fixtures() {
        let c = fixture(FixtureKind::Chain, 3).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.valuation()["p"], BTreeSet::from([3]));
        let r = fixture(FixtureKind::Ring, 4).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.valuation()["p"], BTreeSet::from([1, 2, 3]));
        assert_eq!(r.succ(3), &[0]);
        let k = fixture(FixtureKind::Clique, 2).unwrap();
        assert_eq!(k.edges().count(), 4);
        let g = fixture(FixtureKind::Fig2Truncation, 5).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.succ(4), &[5]);
        assert_eq!(g.succ(0), &[1, 5]);
        assert!(matches!("torus".parse::<FixtureKind>(), Err(ModelError::UnknownFixture(_))));
        assert_eq!(fixture(FixtureKind::Chain, 0), Err(ModelError::FixtureSize));
        assert_eq!(fixture_from_spec("ring:4").unwrap(), r);
    }

    #[test]
    fn dot_export() {
        let d = fixture(FixtureKind::Chain, 1).unwrap().export_dot();
        assert_eq!(
            d,
            "digraph kripke {\n  s0 [label=\"0: {}\", shape=doublecircle];\n  s1 [label=\"1: {p}\"];\n  s0 -> s1;\n}\n"
        );
        let ring = fixture(FixtureKind::Ring, 3).unwrap().export_dot();
        assert_eq!(ring.matches("->").count(), 3);
        assert!(ring.contains("s2 -> s0;"));
        let clique = fixture(FixtureKind::Clique, 2).unwrap().export_dot();
        assert_eq!(clique.matches("->").count(), 4);
        assert!(clique.contains("s1 -> s1;"));
    }
}
