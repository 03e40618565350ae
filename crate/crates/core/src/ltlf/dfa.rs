//! LTLf to DFA translation by formula progression.
//!
//! Automaton states are residual obligations in a canonical disjunctive
//! normal form over "elementary" formulas (literals and temporal nodes in
//! negation normal form). Clauses are sets, the disjunction is a set of
//! clauses, contradictory clauses are dropped and subsumed clauses removed.
//! Since every elementary formula is a subformula of the input (plus the two
//! end-of-trace markers `F true` and `G false`), the state space is finite.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::formula::{Alphabet, Formula, Symbol};
use super::LtlfError;

/// Default cap on the number of DFA states.
pub const DEFAULT_MAX_STATES: usize = 100_000;

/// Distance sentinel for states that cannot reach an accepting state.
pub const INFINITE_DISTANCE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Node {
    True,
    False,
    Lit(usize, bool),
    And(Vec<Node>),
    Or(Vec<Node>),
    Next(Box<Node>),
    WeakNext(Box<Node>),
    Until(Box<Node>, Box<Node>),
    Release(Box<Node>, Box<Node>),
    Eventually(Box<Node>),
    Globally(Box<Node>),
}

type Clause = BTreeSet<Node>;
type Dnf = BTreeSet<Clause>;

fn non_empty_marker() -> Node {
    Node::Eventually(Box::new(Node::True))
}

fn empty_marker() -> Node {
    Node::Globally(Box::new(Node::False))
}

fn mk_and(parts: Vec<Node>) -> Node {
    let mut flat = Vec::new();
    for p in parts {
        match p {
            Node::True => {}
            Node::False => return Node::False,
            Node::And(xs) => flat.extend(xs),
            other => flat.push(other),
        }
    }
    flat.sort();
    flat.dedup();
    match flat.len() {
        0 => Node::True,
        1 => flat.pop().unwrap(),
        _ => Node::And(flat),
    }
}

fn mk_or(parts: Vec<Node>) -> Node {
    let mut flat = Vec::new();
    for p in parts {
        match p {
            Node::False => {}
            Node::True => return Node::True,
            Node::Or(xs) => flat.extend(xs),
            other => flat.push(other),
        }
    }
    flat.sort();
    flat.dedup();
    match flat.len() {
        0 => Node::False,
        1 => flat.pop().unwrap(),
        _ => Node::Or(flat),
    }
}

/// Negation normal form; `neg` pushes a pending negation inward.
fn nnf(f: &Formula, neg: bool) -> Node {
    use Formula as F;
    let b = |n: Node| Box::new(n);
    match (f, neg) {
        (F::True, false) | (F::False, true) => Node::True,
        (F::True, true) | (F::False, false) => Node::False,
        (F::Atom(p), n) => Node::Lit(*p, !n),
        (F::Not(a), n) => nnf(a, !n),
        (F::And(a, c), false) | (F::Or(a, c), true) => mk_and(vec![nnf(a, neg), nnf(c, neg)]),
        (F::Or(a, c), false) | (F::And(a, c), true) => mk_or(vec![nnf(a, neg), nnf(c, neg)]),
        (F::Next(a), false) | (F::WeakNext(a), true) => Node::Next(b(nnf(a, neg))),
        (F::WeakNext(a), false) | (F::Next(a), true) => Node::WeakNext(b(nnf(a, neg))),
        (F::Until(a, c), false) | (F::Release(a, c), true) => Node::Until(b(nnf(a, neg)), b(nnf(c, neg))),
        (F::Release(a, c), false) | (F::Until(a, c), true) => Node::Release(b(nnf(a, neg)), b(nnf(c, neg))),
        (F::Eventually(a), false) | (F::Globally(a), true) => Node::Eventually(b(nnf(a, neg))),
        (F::Globally(a), false) | (F::Eventually(a), true) => Node::Globally(b(nnf(a, neg))),
    }
}

fn dnf_true() -> Dnf {
    let mut d = Dnf::new();
    d.insert(Clause::new());
    d
}

fn dnf_elem(n: Node) -> Dnf {
    let mut c = Clause::new();
    c.insert(n);
    let mut d = Dnf::new();
    d.insert(c);
    d
}

fn contradictory(c: &Clause) -> bool {
    if c.contains(&non_empty_marker()) && c.contains(&empty_marker()) {
        return true;
    }
    c.iter().any(|n| matches!(n, Node::Lit(p, true) if c.contains(&Node::Lit(*p, false))))
}

fn minimize(d: Dnf) -> Dnf {
    let clauses: Vec<Clause> = d.into_iter().filter(|c| !contradictory(c)).collect();
    let mut keep = Dnf::new();
    for (i, c) in clauses.iter().enumerate() {
        let subsumed = clauses.iter().enumerate().any(|(j, o)| j != i && o.len() < c.len() && o.is_subset(c));
        if !subsumed {
            keep.insert(c.clone());
        }
    }
    keep
}

fn dnf_or(a: Dnf, b: Dnf) -> Dnf {
    let mut out = a;
    out.extend(b);
    minimize(out)
}

fn dnf_and(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Dnf::new();
    for x in a {
        for y in b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.insert(c);
        }
    }
    minimize(out)
}

fn dnf_of(n: &Node) -> Dnf {
    match n {
        Node::True => dnf_true(),
        Node::False => Dnf::new(),
        Node::And(xs) => xs.iter().fold(dnf_true(), |acc, x| dnf_and(&acc, &dnf_of(x))),
        Node::Or(xs) => xs.iter().fold(Dnf::new(), |acc, x| dnf_or(acc, dnf_of(x))),
        other => dnf_elem(other.clone()),
    }
}

struct Progressor {
    cache: HashMap<(Node, Symbol), Dnf>,
}

impl Progressor {
    /// Residual obligation on the suffix after consuming `sym`.
    fn prog(&mut self, n: &Node, sym: Symbol) -> Dnf {
        if let Some(d) = self.cache.get(&(n.clone(), sym)) {
            return d.clone();
        }
        let out = match n {
            Node::True => dnf_true(),
            Node::False => Dnf::new(),
            Node::Lit(p, pos) => {
                if ((sym >> p) & 1 == 1) == *pos {
                    dnf_true()
                } else {
                    Dnf::new()
                }
            }
            Node::And(xs) => {
                let mut acc = dnf_true();
                for x in xs {
                    acc = dnf_and(&acc, &self.prog(x, sym));
                    if acc.is_empty() {
                        break;
                    }
                }
                acc
            }
            Node::Or(xs) => {
                let mut acc = Dnf::new();
                for x in xs {
                    acc = dnf_or(acc, self.prog(x, sym));
                }
                acc
            }
            // the remaining suffix must be non-empty and satisfy the operand
            Node::Next(a) => dnf_and(&dnf_of(a), &dnf_elem(non_empty_marker())),
            // either the suffix is empty or it satisfies the operand
            Node::WeakNext(a) => dnf_or(dnf_of(a), dnf_elem(empty_marker())),
            Node::Until(a, b) => {
                let now = self.prog(b, sym);
                let hold = dnf_and(&self.prog(a, sym), &dnf_elem(n.clone()));
                dnf_or(now, hold)
            }
            Node::Release(a, b) => {
                let hold = dnf_or(self.prog(a, sym), dnf_elem(n.clone()));
                dnf_and(&self.prog(b, sym), &hold)
            }
            Node::Eventually(a) => dnf_or(self.prog(a, sym), dnf_elem(n.clone())),
            Node::Globally(a) => dnf_and(&self.prog(a, sym), &dnf_elem(n.clone())),
        };
        self.cache.insert((n.clone(), sym), out.clone());
        out
    }

    fn prog_dnf(&mut self, d: &Dnf, sym: Symbol) -> Dnf {
        let mut acc = Dnf::new();
        for clause in d {
            let mut c = dnf_true();
            for e in clause {
                c = dnf_and(&c, &self.prog(e, sym));
                if c.is_empty() {
                    break;
                }
            }
            acc = dnf_or(acc, c);
        }
        acc
    }
}

fn holds_on_empty(n: &Node) -> bool {
    match n {
        Node::True => true,
        Node::False => false,
        Node::Lit(_, pos) => !pos,
        Node::And(xs) => xs.iter().all(holds_on_empty),
        Node::Or(xs) => xs.iter().any(holds_on_empty),
        Node::Next(_) | Node::Until(..) | Node::Eventually(_) => false,
        Node::WeakNext(_) | Node::Release(..) | Node::Globally(_) => true,
    }
}

fn dnf_holds_on_empty(d: &Dnf) -> bool {
    d.iter().any(|c| c.iter().all(holds_on_empty))
}

fn node_text(n: &Node, ap: &Alphabet) -> String {
    let name = |p: usize| ap.props().get(p).cloned().unwrap_or_else(|| format!("p{p}"));
    match n {
        Node::True => "true".into(),
        Node::False => "false".into(),
        Node::Lit(p, true) => name(*p),
        Node::Lit(p, false) => format!("!{}", name(*p)),
        Node::And(xs) => format!("({})", xs.iter().map(|x| node_text(x, ap)).collect::<Vec<_>>().join(" & ")),
        Node::Or(xs) => format!("({})", xs.iter().map(|x| node_text(x, ap)).collect::<Vec<_>>().join(" | ")),
        Node::Next(a) => format!("X {}", node_text(a, ap)),
        Node::WeakNext(a) => format!("WX {}", node_text(a, ap)),
        Node::Until(a, b) => format!("({} U {})", node_text(a, ap), node_text(b, ap)),
        Node::Release(a, b) => format!("({} R {})", node_text(a, ap), node_text(b, ap)),
        Node::Eventually(a) => format!("F {}", node_text(a, ap)),
        Node::Globally(a) => format!("G {}", node_text(a, ap)),
    }
}

fn dnf_text(d: &Dnf, ap: &Alphabet) -> String {
    if d.is_empty() {
        return "false".into();
    }
    let mut s = String::new();
    for (i, c) in d.iter().enumerate() {
        if i > 0 {
            s.push_str(" | ");
        }
        if c.is_empty() {
            s.push_str("true");
            continue;
        }
        let parts: Vec<String> = c.iter().map(|n| node_text(n, ap)).collect();
        let _ = write!(s, "{}", parts.join(" & "));
    }
    s
}

/// Total deterministic automaton over the dense alphabet `2^|AP|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dfa {
    ap: Alphabet,
    delta: Vec<u32>,
    initial: usize,
    accepting: Vec<bool>,
    sink: Vec<bool>,
    state_formulas: Vec<String>,
}

impl Dfa {
    /// Compiles `f` with the default state cap.
    pub fn from_formula(f: &Formula, ap: &Alphabet) -> Result<Self, LtlfError> {
        Self::from_formula_capped(f, ap, DEFAULT_MAX_STATES)
    }

    pub fn from_formula_capped(f: &Formula, ap: &Alphabet, max_states: usize) -> Result<Self, LtlfError> {
        if let Some(i) = f.max_atom() {
            if i >= ap.len() {
                return Err(LtlfError::UnknownProp { name: format!("p{i}"), pos: 0 });
            }
        }
        let nsym = ap.num_symbols();
        let init = dnf_of(&nnf(f, false));
        let mut prog = Progressor { cache: HashMap::new() };
        let mut index: HashMap<Dnf, usize> = HashMap::new();
        let mut states: Vec<Dnf> = vec![init.clone()];
        index.insert(init, 0);
        let mut delta: Vec<u32> = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(z) = queue.pop_front() {
            let row_start = z * nsym;
            if delta.len() < row_start + nsym {
                delta.resize(row_start + nsym, 0);
            }
            let current = states[z].clone();
            for sym in 0..nsym as Symbol {
                let next = prog.prog_dnf(&current, sym);
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        if id >= max_states {
                            return Err(LtlfError::Capacity(max_states));
                        }
                        index.insert(next.clone(), id);
                        states.push(next);
                        queue.push_back(id);
                        id
                    }
                };
                delta[row_start + sym as usize] = id as u32;
            }
        }
        delta.resize(states.len() * nsym, 0);
        let accepting: Vec<bool> = states.iter().map(dnf_holds_on_empty).collect();
        let state_formulas = states.iter().map(|d| dnf_text(d, ap)).collect();
        let mut dfa = Dfa { ap: ap.clone(), delta, initial: 0, accepting, sink: Vec::new(), state_formulas };
        dfa.sink = dfa.compute_sinks();
        Ok(dfa)
    }

    /// One-state automaton accepting every trace.
    pub fn universal(ap: &Alphabet) -> Self {
        Self::from_formula(&Formula::True, ap).expect("universal automaton")
    }

    /// Builds an automaton from an explicit transition table (row-major by state).
    pub fn from_table(ap: Alphabet, delta: Vec<u32>, initial: usize, accepting: Vec<bool>) -> Result<Self, LtlfError> {
        let n = accepting.len();
        if n == 0 || delta.len() != n * ap.num_symbols() || initial >= n || delta.iter().any(|&d| d as usize >= n) {
            return Err(LtlfError::MalformedDfa);
        }
        let state_formulas = (0..n).map(|i| format!("q{i}")).collect();
        let mut dfa = Dfa { ap, delta, initial, accepting, sink: Vec::new(), state_formulas };
        dfa.sink = dfa.compute_sinks();
        Ok(dfa)
    }

    fn compute_sinks(&self) -> Vec<bool> {
        let n = self.num_states();
        let nsym = self.ap.num_symbols();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for z in 0..n {
            for s in 0..nsym {
                preds[self.delta[z * nsym + s] as usize].push(z);
            }
        }
        let mut live = self.accepting.clone();
        let mut queue: VecDeque<usize> = (0..n).filter(|&z| live[z]).collect();
        while let Some(z) = queue.pop_front() {
            for &p in &preds[z] {
                if !live[p] {
                    live[p] = true;
                    queue.push_back(p);
                }
            }
        }
        live.iter().map(|l| !l).collect()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.ap
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, z: usize) -> bool {
        self.accepting[z]
    }

    pub fn is_sink(&self, z: usize) -> bool {
        self.sink[z]
    }

    pub fn state_formula(&self, z: usize) -> &str {
        &self.state_formulas[z]
    }

    #[inline]
    pub fn step(&self, z: usize, sym: Symbol) -> usize {
        self.delta[z * self.ap.num_symbols() + sym as usize] as usize
    }

    /// State reached after consuming the whole trace from the initial state.
    pub fn run(&self, trace: &[Symbol]) -> usize {
        trace.iter().fold(self.initial, |z, &s| self.step(z, s))
    }

    pub fn accepts(&self, trace: &[Symbol]) -> bool {
        self.accepting[self.run(trace)]
    }

    /// Hop distance from every state to the accepting set (backward BFS).
    pub fn distances(&self) -> Vec<u32> {
        let n = self.num_states();
        let nsym = self.ap.num_symbols();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for z in 0..n {
            for s in 0..nsym {
                preds[self.delta[z * nsym + s] as usize].push(z);
            }
        }
        let mut dist = vec![INFINITE_DISTANCE; n];
        let mut queue = VecDeque::new();
        for z in 0..n {
            if self.accepting[z] {
                dist[z] = 0;
                queue.push_back(z);
            }
        }
        while let Some(z) = queue.pop_front() {
            for &p in &preds[z] {
                if dist[p] == INFINITE_DISTANCE {
                    dist[p] = dist[z] + 1;
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    pub fn to_export(&self) -> DfaExport {
        let nsym = self.ap.num_symbols();
        DfaExport {
            ap: self.ap.props().to_vec(),
            initial: self.initial,
            accepting: (0..self.num_states()).filter(|&z| self.accepting[z]).collect(),
            sinks: (0..self.num_states()).filter(|&z| self.sink[z]).collect(),
            states: (0..self.num_states())
                .map(|z| DfaStateExport {
                    id: z,
                    formula: self.state_formulas[z].clone(),
                    transitions: (0..nsym).map(|s| (s.to_string(), self.delta[z * nsym + s] as usize)).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfaExport {
    pub ap: Vec<String>,
    pub initial: usize,
    pub accepting: Vec<usize>,
    pub sinks: Vec<usize>,
    pub states: Vec<DfaStateExport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfaStateExport {
    pub id: usize,
    pub formula: String,
    /// Successor keyed by symbol bitmask (decimal string).
    pub transitions: std::collections::BTreeMap<String, usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltlf::{eval_trace, parse};

    fn spec_dfa() -> (Alphabet, Dfa) {
        let ap = Alphabet::new(["O", "D1", "D2"]).unwrap();
        let f = parse("G(!O) & F(D1) & F(D2)", &ap).unwrap();
        let dfa = Dfa::from_formula(&f, &ap).unwrap();
        (ap, dfa)
    }

    #[test]
    fn true_is_single_accepting_state() {
        let ap = Alphabet::new(["a"]).unwrap();
        let d = Dfa::universal(&ap);
        assert_eq!(d.num_states(), 1);
        assert!(d.is_accepting(0));
        assert!(!d.is_sink(0));
        assert!(d.accepts(&[]));
        assert!(d.accepts(&[0, 1, 1]));
    }

    #[test]
    fn benchmark_formula_structure() {
        let (ap, d) = spec_dfa();
        let o = ap.symbol(["O"]).unwrap();
        let d1 = ap.symbol(["D1"]).unwrap();
        let d2 = ap.symbol(["D2"]).unwrap();
        // every symbol containing O leads to a sink, from every live state
        for z in 0..d.num_states() {
            if d.is_sink(z) {
                continue;
            }
            for s in 0..8u32 {
                if s & o != 0 {
                    assert!(d.is_sink(d.step(z, s)));
                }
            }
        }
        assert!(!d.accepts(&[d1]));
        assert!(d.accepts(&[d1, 0, d2]));
        assert!(d.accepts(&[d2 | d1]));
        assert!(!d.accepts(&[d2, o, d1]));
        let dist = d.distances();
        // {D1, D2} satisfies both reach obligations in one step
        assert_eq!(dist[d.initial()], 1);
        assert_eq!(dist[d.step(d.initial(), d1)], 1);
        let acc = d.run(&[d1, d2]);
        assert_eq!(dist[acc], 0);
        let sink = d.run(&[o]);
        assert_eq!(dist[sink], INFINITE_DISTANCE);
        // init, saw D1, saw D2, done, violated
        assert_eq!(d.num_states(), 5);
    }

    #[test]
    fn sinks_never_recover() {
        let (_, d) = spec_dfa();
        for z in 0..d.num_states() {
            if d.is_sink(z) {
                assert!(!d.is_accepting(z));
                for s in 0..8 {
                    assert!(d.is_sink(d.step(z, s)));
                }
            }
        }
    }

    #[test]
    fn next_requires_another_step() {
        let ap = Alphabet::new(["a"]).unwrap();
        let f = parse("X a", &ap).unwrap();
        let d = Dfa::from_formula(&f, &ap).unwrap();
        assert!(!d.accepts(&[1]));
        assert!(d.accepts(&[0, 1]));
        assert!(d.accepts(&[0, 1, 0]));
        assert!(!d.accepts(&[]));
        let g = parse("WX a", &ap).unwrap();
        let d = Dfa::from_formula(&g, &ap).unwrap();
        assert!(d.accepts(&[0]));
        assert!(!d.accepts(&[0, 0]));
        assert!(d.accepts(&[]));
    }

    #[test]
    fn capacity_error() {
        let ap = Alphabet::new(["a", "b"]).unwrap();
        let f = parse("F(a & X b)", &ap).unwrap();
        assert!(matches!(Dfa::from_formula_capped(&f, &ap, 1), Err(LtlfError::Capacity(1))));
    }

    #[test]
    fn agrees_with_evaluator_on_short_traces() {
        let ap = Alphabet::new(["a", "b"]).unwrap();
        for text in ["a U b", "G(!a | b)", "X X a", "F G a", "a R b", "WX(a & X b)"] {
            let f = parse(text, &ap).unwrap();
            let d = Dfa::from_formula(&f, &ap).unwrap();
            for len in 0..=5u32 {
                for code in 0..4u32.pow(len) {
                    let trace: Vec<Symbol> = (0..len).map(|k| (code >> (2 * k)) & 3).collect();
                    assert_eq!(d.accepts(&trace), eval_trace(&f, &trace, 0), "{text} on {trace:?}");
                }
            }
        }
    }

    #[test]
    fn export_is_total() {
        let (_, d) = spec_dfa();
        let e = d.to_export();
        assert_eq!(e.states.len(), d.num_states());
        assert!(e.states.iter().all(|s| s.transitions.len() == 8));
        let text = serde_json::to_string(&e).unwrap();
        assert!(text.contains("\"initial\":0"));
    }
}
