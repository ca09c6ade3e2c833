//! Proptest strategies shared by the integration tests.
#![allow(dead_code)]

use ofi_core::formula::{Fixpoint, Formula, Node};
use ofi_core::model::KripkeModel;
use proptest::prelude::*;

fn fixpoint() -> impl Strategy<Value = Fixpoint> {
    prop_oneof![Just(Fixpoint::Mu), Just(Fixpoint::Nu)]
}

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        Just(Node::atom("p")),
        Just(Node::atom("q")),
        Just(Node::not(Node::atom("p"))),
        Just(Node::var("X")),
        Just(Node::var("Y")),
    ]
}

/// Bodies over `X`, `Y` with inner binders that may shadow them.
fn body() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(4, 10, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Node::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Node::or(l, r)),
            inner.clone().prop_map(Node::diamond),
            inner.clone().prop_map(Node::necessity),
            inner.clone().prop_map(Node::delay),
            (fixpoint(), prop_oneof![Just("X"), Just("Y")], inner)
                .prop_map(|(k, v, b)| Node::Fix(k, v.to_string(), Box::new(b))),
        ]
    })
}

/// Closed formulas, binders of both kinds allowed.
pub fn formula() -> impl Strategy<Value = Formula> {
    (fixpoint(), fixpoint(), body()).prop_map(|(kx, ky, b)| {
        let node = Node::Fix(kx, "X".into(), Box::new(Node::Fix(ky, "Y".into(), Box::new(b))));
        Formula::new(node).expect("closed by construction")
    })
}

/// Closed formulas whose binders all share one kind.
pub fn uniform_formula() -> impl Strategy<Value = Formula> {
    (fixpoint(), body()).prop_map(|(k, b)| {
        let node = Node::Fix(k, "X".into(), Box::new(Node::Fix(k, "Y".into(), Box::new(retag(b, k)))));
        Formula::new(node).expect("closed by construction")
    })
}

fn retag(n: Node, k: Fixpoint) -> Node {
    let r = |b: Box<Node>| Box::new(retag(*b, k));
    match n {
        Node::And(a, b) => Node::And(r(a), r(b)),
        Node::Or(a, b) => Node::Or(r(a), r(b)),
        Node::Diamond(c) => Node::Diamond(r(c)),
        Node::Necessity(c) => Node::Necessity(r(c)),
        Node::Delay(c) => Node::Delay(r(c)),
        Node::Fix(_, v, b) => Node::Fix(k, v, r(b)),
        other => other,
    }
}

/// Swaps the operands of every conjunction and disjunction.
pub fn swap_operands(n: &Node) -> Node {
    let s = |b: &Node| Box::new(swap_operands(b));
    match n {
        Node::And(a, b) => Node::And(s(b), s(a)),
        Node::Or(a, b) => Node::Or(s(b), s(a)),
        Node::Diamond(c) => Node::Diamond(s(c)),
        Node::Necessity(c) => Node::Necessity(s(c)),
        Node::Delay(c) => Node::Delay(s(c)),
        Node::Fix(k, v, b) => Node::Fix(*k, v.clone(), s(b)),
        other => other.clone(),
    }
}

/// Up to five states; deadlocks allowed.
pub fn model() -> impl Strategy<Value = KripkeModel> {
    (1usize..=5)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(any::<bool>(), n * n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(n, adj, p, q)| {
            let edges: Vec<(usize, usize)> = (0..n * n).filter(|&i| adj[i]).map(|i| (i / n, i % n)).collect();
            let members = |bits: &[bool]| (0..n).filter(|&i| bits[i]).collect::<Vec<_>>();
            KripkeModel::new(n, edges, [("p".to_string(), members(&p)), ("q".to_string(), members(&q))], Some(0))
                .expect("indices in range")
        })
}
