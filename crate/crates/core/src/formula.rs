//! Delayed modal μ-calculus: syntax tree, parser, printer and syntactic analyses.
//!
//! Surface grammar (ASCII):
//!
//! ```text
//! atoms      [a-z][a-z0-9_]*        (except the keywords `mu`, `nu`)
//! variables  [A-Z][A-Za-z0-9_]*
//! ~p  a /\ b  a \/ b  <>a  []a  @a  mu X. a  nu X. a  ( a )
//! ```
//!
//! Unary operators bind tightest, then `/\`, then `\/`; a binder's scope
//! extends as far right as possible. Negation is only accepted directly on
//! atoms, which keeps every operator monotone.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Fixed-point binder kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fixpoint {
    /// Least fixed point.
    Mu,
    /// Greatest fixed point.
    Nu,
}

impl Fixpoint {
    pub fn keyword(self) -> &'static str {
        match self {
            Fixpoint::Mu => "mu",
            Fixpoint::Nu => "nu",
        }
    }

    pub fn dual(self) -> Self {
        match self {
            Fixpoint::Mu => Fixpoint::Nu,
            Fixpoint::Nu => Fixpoint::Mu,
        }
    }
}

/// One node of a formula tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Atom(String),
    /// Negated atom; the child is always an `Atom`.
    Not(Box<Node>),
    Var(String),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    /// `<>φ`: some successor satisfies φ.
    Diamond(Box<Node>),
    /// `[]φ`: every successor satisfies φ.
    Necessity(Box<Node>),
    /// `@φ`: φ read one stage late.
    Delay(Box<Node>),
    Fix(Fixpoint, String, Box<Node>),
}

impl Node {
    pub fn atom(name: &str) -> Node {
        Node::Atom(name.to_string())
    }

    pub fn var(name: &str) -> Node {
        Node::Var(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(atom: Node) -> Node {
        Node::Not(Box::new(atom))
    }

    pub fn and(l: Node, r: Node) -> Node {
        Node::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Node, r: Node) -> Node {
        Node::Or(Box::new(l), Box::new(r))
    }

    pub fn diamond(c: Node) -> Node {
        Node::Diamond(Box::new(c))
    }

    pub fn necessity(c: Node) -> Node {
        Node::Necessity(Box::new(c))
    }

    pub fn delay(c: Node) -> Node {
        Node::Delay(Box::new(c))
    }

    pub fn mu(var: &str, body: Node) -> Node {
        Node::Fix(Fixpoint::Mu, var.to_string(), Box::new(body))
    }

    pub fn nu(var: &str, body: Node) -> Node {
        Node::Fix(Fixpoint::Nu, var.to_string(), Box::new(body))
    }

    /// Direct children, left to right.
    pub fn children(&self) -> Vec<&Node> {
        match self {
            Node::Atom(_) | Node::Var(_) => vec![],
            Node::Not(c) | Node::Diamond(c) | Node::Necessity(c) | Node::Delay(c) => vec![c],
            Node::Fix(_, _, b) => vec![b],
            Node::And(l, r) | Node::Or(l, r) => vec![l, r],
        }
    }

    /// Syntactic size: number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut HashSet<String>) {
        match self {
            Node::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            Node::Fix(_, v, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            other => {
                for c in other.children() {
                    c.collect_free(bound, out);
                }
            }
        }
    }

    /// Variables occurring free in this node.
    pub fn free_vars(&self) -> HashSet<String> {
        let mut out = HashSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("free variable `{name}` at {line}:{column}")]
    FreeVariable {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("negation applied to a non-atom at {line}:{column}")]
    NegationOnNonAtom { line: usize, column: usize },
}

/// A closed formula in positive normal form with canonical binder names.
///
/// Bound variables are renamed `X0`, `X1`, ... in pre-order of their
/// binders, so two α-equivalent inputs produce equal values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    root: Node,
}

impl Formula {
    /// Validates and canonicalizes a tree built in code.
    pub fn new(root: Node) -> Result<Formula, FormulaError> {
        check_pnf(&root)?;
        if let Some(name) = root.free_vars().into_iter().min() {
            return Err(FormulaError::FreeVariable {
                name,
                line: 0,
                column: 0,
            });
        }
        let mut counter = 0;
        let root = canonicalize(&root, &mut Vec::new(), &mut counter);
        Ok(Formula { root })
    }

    pub fn parse(text: &str) -> Result<Formula, FormulaError> {
        parse(text)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// `|φ|`, the number of syntax nodes.
    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn closure(&self) -> SubformulaClosure {
        closure(self)
    }

    pub fn alternation_depth(&self) -> usize {
        alternation_depth(self)
    }

    /// Binder kinds occurring anywhere in the formula.
    pub fn binder_kinds(&self) -> HashSet<Fixpoint> {
        fn walk(n: &Node, out: &mut HashSet<Fixpoint>) {
            if let Node::Fix(k, _, _) = n {
                out.insert(*k);
            }
            for c in n.children() {
                walk(c, out);
            }
        }
        let mut out = HashSet::new();
        walk(&self.root, &mut out);
        out
    }

    /// The single binder kind of a polarity-uniform formula, `None` when
    /// the formula is fixpoint-free or mixes μ and ν.
    pub fn polarity(&self) -> Option<Fixpoint> {
        let kinds = self.binder_kinds();
        if kinds.len() == 1 {
            kinds.into_iter().next()
        } else {
            None
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print(&self.root))
    }
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

fn check_pnf(node: &Node) -> Result<(), FormulaError> {
    if let Node::Not(c) = node {
        if !matches!(**c, Node::Atom(_)) {
            return Err(FormulaError::NegationOnNonAtom { line: 0, column: 0 });
        }
    }
    node.children().into_iter().try_for_each(check_pnf)
}

fn canonicalize(node: &Node, scope: &mut Vec<(String, String)>, counter: &mut usize) -> Node {
    match node {
        Node::Atom(a) => Node::Atom(a.clone()),
        Node::Var(v) => {
            let renamed = scope
                .iter()
                .rev()
                .find(|(orig, _)| orig == v)
                .map(|(_, new)| new.clone())
                .unwrap_or_else(|| v.clone());
            Node::Var(renamed)
        }
        Node::Not(c) => Node::Not(Box::new(canonicalize(c, scope, counter))),
        Node::And(l, r) => {
            let l = canonicalize(l, scope, counter);
            Node::And(Box::new(l), Box::new(canonicalize(r, scope, counter)))
        }
        Node::Or(l, r) => {
            let l = canonicalize(l, scope, counter);
            Node::Or(Box::new(l), Box::new(canonicalize(r, scope, counter)))
        }
        Node::Diamond(c) => Node::Diamond(Box::new(canonicalize(c, scope, counter))),
        Node::Necessity(c) => Node::Necessity(Box::new(canonicalize(c, scope, counter))),
        Node::Delay(c) => Node::Delay(Box::new(canonicalize(c, scope, counter))),
        Node::Fix(k, v, body) => {
            let fresh = format!("X{}", *counter);
            *counter += 1;
            scope.push((v.clone(), fresh.clone()));
            let body = canonicalize(body, scope, counter);
            scope.pop();
            Node::Fix(*k, fresh, Box::new(body))
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

fn print(node: &Node) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

// Precedence levels: binder 0, or 1, and 2, unary/primary 3.
fn level(node: &Node) -> u8 {
    match node {
        Node::Fix(..) => 0,
        Node::Or(..) => 1,
        Node::And(..) => 2,
        _ => 3,
    }
}

fn write_operand(node: &Node, min_level: u8, out: &mut String) {
    if level(node) < min_level {
        out.push('(');
        write_node(node, out);
        out.push(')');
    } else {
        write_node(node, out);
    }
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Atom(a) => out.push_str(a),
        Node::Var(v) => out.push_str(v),
        Node::Not(c) => {
            out.push('~');
            write_operand(c, 3, out);
        }
        Node::And(l, r) => {
            write_operand(l, 2, out);
            out.push_str(" /\\ ");
            write_operand(r, 3, out);
        }
        Node::Or(l, r) => {
            write_operand(l, 1, out);
            out.push_str(" \\/ ");
            write_operand(r, 2, out);
        }
        Node::Diamond(c) => {
            out.push_str("<>");
            write_operand(c, 3, out);
        }
        Node::Necessity(c) => {
            out.push_str("[]");
            write_operand(c, 3, out);
        }
        Node::Delay(c) => {
            out.push('@');
            write_operand(c, 3, out);
        }
        Node::Fix(k, v, body) => {
            out.push_str(k.keyword());
            out.push(' ');
            out.push_str(v);
            out.push_str(". ");
            write_node(body, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Lexing and parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(String),
    Var(String),
    Mu,
    Nu,
    Not,
    And,
    Or,
    Diamond,
    Necessity,
    Delay,
    Dot,
    LParen,
    RParen,
    Eof,
}

#[derive(Debug, Clone)]
struct Lexeme {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Lexeme>, FormulaError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let two = |j: usize| chars.get(i + j).copied();
        let mut push = |tok: Tok, width: usize, i: &mut usize, col: &mut usize| {
            out.push(Lexeme {
                tok,
                line: l0,
                column: c0,
            });
            *i += width;
            *col += width;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '~' => push(Tok::Not, 1, &mut i, &mut col),
            '@' => push(Tok::Delay, 1, &mut i, &mut col),
            '.' => push(Tok::Dot, 1, &mut i, &mut col),
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '/' if two(1) == Some('\\') => push(Tok::And, 2, &mut i, &mut col),
            '\\' if two(1) == Some('/') => push(Tok::Or, 2, &mut i, &mut col),
            '<' if two(1) == Some('>') => push(Tok::Diamond, 2, &mut i, &mut col),
            '[' if two(1) == Some(']') => push(Tok::Necessity, 2, &mut i, &mut col),
            c if c.is_ascii_lowercase() => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_lowercase() || chars[i].is_ascii_digit() || chars[i] == '_')
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "mu" => Tok::Mu,
                    "nu" => Tok::Nu,
                    _ => Tok::Atom(word.clone()),
                };
                out.push(Lexeme {
                    tok,
                    line: l0,
                    column: c0,
                });
                col += i - start;
            }
            c if c.is_ascii_uppercase() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push(Lexeme {
                    tok: Tok::Var(word),
                    line: l0,
                    column: c0,
                });
                col += i - start;
            }
            other => {
                return Err(FormulaError::Syntax {
                    line,
                    column: col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    out.push(Lexeme {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Lexeme>,
    pos: usize,
    scope: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Lexeme {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Lexeme {
        let lx = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        lx
    }

    fn error(&self, message: impl Into<String>) -> FormulaError {
        let lx = self.peek();
        FormulaError::Syntax {
            line: lx.line,
            column: lx.column,
            message: message.into(),
        }
    }

    fn at_binder(&self) -> bool {
        matches!(self.peek().tok, Tok::Mu | Tok::Nu)
    }

    fn expr(&mut self) -> Result<Node, FormulaError> {
        if self.at_binder() {
            self.binder()
        } else {
            self.disjunction()
        }
    }

    fn binder(&mut self) -> Result<Node, FormulaError> {
        let kind = match self.bump().tok {
            Tok::Mu => Fixpoint::Mu,
            _ => Fixpoint::Nu,
        };
        let var = match self.peek().tok.clone() {
            Tok::Var(v) => {
                self.bump();
                v
            }
            _ => return Err(self.error("expected a variable after binder")),
        };
        if self.peek().tok != Tok::Dot {
            return Err(self.error("expected `.` after bound variable"));
        }
        self.bump();
        self.scope.push(var.clone());
        let body = self.expr();
        self.scope.pop();
        Ok(Node::Fix(kind, var, Box::new(body?)))
    }

    fn disjunction(&mut self) -> Result<Node, FormulaError> {
        let mut lhs = self.conjunction()?;
        while self.peek().tok == Tok::Or {
            self.bump();
            if self.at_binder() {
                let rhs = self.binder()?;
                return Ok(Node::or(lhs, rhs));
            }
            let rhs = self.conjunction()?;
            lhs = Node::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Node, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek().tok == Tok::And {
            self.bump();
            if self.at_binder() {
                let rhs = self.binder()?;
                return Ok(Node::and(lhs, rhs));
            }
            let rhs = self.unary()?;
            lhs = Node::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, FormulaError> {
        let lx = self.peek().clone();
        let wrap: fn(Node) -> Node = match lx.tok {
            Tok::Diamond => Node::diamond,
            Tok::Necessity => Node::necessity,
            Tok::Delay => Node::delay,
            Tok::Not => {
                self.bump();
                let operand = if self.at_binder() {
                    self.binder()?
                } else {
                    self.unary()?
                };
                return match operand {
                    Node::Atom(_) => Ok(Node::not(operand)),
                    _ => Err(FormulaError::NegationOnNonAtom {
                        line: lx.line,
                        column: lx.column,
                    }),
                };
            }
            _ => return self.primary(),
        };
        self.bump();
        let operand = if self.at_binder() {
            self.binder()?
        } else {
            self.unary()?
        };
        Ok(wrap(operand))
    }

    fn primary(&mut self) -> Result<Node, FormulaError> {
        let lx = self.peek().clone();
        match lx.tok {
            Tok::Atom(a) => {
                self.bump();
                Ok(Node::Atom(a))
            }
            Tok::Var(v) => {
                self.bump();
                if !self.scope.contains(&v) {
                    return Err(FormulaError::FreeVariable {
                        name: v,
                        line: lx.line,
                        column: lx.column,
                    });
                }
                Ok(Node::Var(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if self.peek().tok != Tok::RParen {
                    return Err(self.error("expected `)`"));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Eof => Err(self.error("unexpected end of input")),
            _ => Err(self.error("expected a formula")),
        }
    }
}

/// Parses and canonicalizes a formula.
pub fn parse(text: &str) -> Result<Formula, FormulaError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        scope: Vec::new(),
    };
    let root = p.expr()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error("trailing input"));
    }
    let mut counter = 0;
    Ok(Formula {
        root: canonicalize(&root, &mut Vec::new(), &mut counter),
    })
}

// ---------------------------------------------------------------------------
// Alternation depth

/// Length of the longest chain of binders `σ1 X1 ⊃ σ2 X2 ⊃ ...` where
/// consecutive kinds differ and each `X_i` occurs free in the next binder's
/// subformula. 0 for fixpoint-free formulas.
pub fn alternation_depth(f: &Formula) -> usize {
    fn binders<'a>(n: &'a Node, out: &mut Vec<&'a Node>) {
        if let Node::Fix(..) = n {
            out.push(n);
        }
        for c in n.children() {
            binders(c, out);
        }
    }

    fn chain(b: &Node) -> usize {
        let Node::Fix(kind, var, body) = b else {
            return 0;
        };
        let mut inner = Vec::new();
        binders(body, &mut inner);
        1 + inner
            .into_iter()
            .filter(|c| matches!(c, Node::Fix(k, _, _) if *k != *kind))
            .filter(|c| c.free_vars().contains(var))
            .map(chain)
            .max()
            .unwrap_or(0)
    }

    let mut all = Vec::new();
    binders(&f.root, &mut all);
    all.into_iter().map(chain).max().unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Subformula closure

/// Flattened operator of one closure item. Child references are closure
/// positions; children always sit at larger positions than their parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Atom(String),
    Not(usize),
    /// Variable occurrence, pointing at its binder.
    Var(usize),
    And(usize, usize),
    Or(usize, usize),
    Diamond(usize),
    Necessity(usize),
    Delay(usize),
    Fix(Fixpoint, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subformula {
    pub op: Op,
    /// Printed text of this occurrence.
    pub text: String,
    /// Kind of the innermost enclosing binder (including the item itself if
    /// it is a binder), if any.
    pub scope: Option<Fixpoint>,
    /// Binder nesting depth.
    pub binder_depth: usize,
}

/// Subformula occurrences `ψ_0..ψ_{m-1}` in pre-order (top-down, left to right).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubformulaClosure {
    pub items: Vec<Subformula>,
}

impl SubformulaClosure {
    /// `m`, the number of occurrences.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn op(&self, i: usize) -> &Op {
        &self.items[i].op
    }

    /// Position of the occurrence reached by following `path` (child
    /// indices) from the root.
    pub fn position(&self, path: &[usize]) -> Option<usize> {
        let mut at = 0;
        for &step in path {
            let kids = self.children(at);
            at = *kids.get(step)?;
        }
        Some(at)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        match self.items[i].op {
            Op::Atom(_) | Op::Var(_) => vec![],
            Op::Not(c) | Op::Diamond(c) | Op::Necessity(c) | Op::Delay(c) | Op::Fix(_, c) => {
                vec![c]
            }
            Op::And(l, r) | Op::Or(l, r) => vec![l, r],
        }
    }
}

pub fn closure(f: &Formula) -> SubformulaClosure {
    fn walk(
        n: &Node,
        binders: &mut Vec<(String, usize, Fixpoint)>,
        items: &mut Vec<Subformula>,
    ) -> usize {
        let at = items.len();
        let scope = match n {
            Node::Fix(k, _, _) => Some(*k),
            _ => binders.last().map(|b| b.2),
        };
        items.push(Subformula {
            op: Op::Atom(String::new()),
            text: print(n),
            scope,
            binder_depth: binders.len(),
        });
        let op = match n {
            Node::Atom(a) => Op::Atom(a.clone()),
            Node::Var(v) => {
                let b = binders
                    .iter()
                    .rev()
                    .find(|b| &b.0 == v)
                    .expect("closed formula");
                Op::Var(b.1)
            }
            Node::Not(c) => Op::Not(walk(c, binders, items)),
            Node::And(l, r) => {
                let l = walk(l, binders, items);
                Op::And(l, walk(r, binders, items))
            }
            Node::Or(l, r) => {
                let l = walk(l, binders, items);
                Op::Or(l, walk(r, binders, items))
            }
            Node::Diamond(c) => Op::Diamond(walk(c, binders, items)),
            Node::Necessity(c) => Op::Necessity(walk(c, binders, items)),
            Node::Delay(c) => Op::Delay(walk(c, binders, items)),
            Node::Fix(k, v, body) => {
                binders.push((v.clone(), at, *k));
                let b = walk(body, binders, items);
                binders.pop();
                Op::Fix(*k, b)
            }
        };
        items[at].op = op;
        at
    }

    let mut items = Vec::new();
    walk(&f.root, &mut Vec::new(), &mut items);
    SubformulaClosure { items }
}
