//! Interval MDP over a grid partition and its product with a DFA.

mod product;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractionError, Partition};
use crate::geometry::Aabb;
use crate::ltlf::Alphabet;

pub use product::{Pimdp, PimdpExport, PimdpStateExport, NO_STATE};

/// Slack used when checking the interval sum conditions.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ImdpError {
    #[error("state {src}, action {action}: {msg}")]
    BadRow { src: usize, action: usize, msg: String },
    #[error("alphabet mismatch: model has {model:?}, automaton has {dfa:?}")]
    AlphabetMismatch { model: Vec<String>, dfa: Vec<String> },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Partition(#[from] AbstractionError),
}

/// One explicit interval `[lower, upper]` towards `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub dst: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Transition intervals of one state-action pair. Every destination not listed
/// in `entries` has the interval `[0, tail]`. Entries are sorted by `dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub action: usize,
    pub entries: Vec<Transition>,
    pub tail: f64,
}

impl Row {
    /// Deterministic move to `dst`.
    pub fn certain(action: usize, dst: usize) -> Self {
        Row { action, entries: vec![Transition { dst, lower: 1.0, upper: 1.0 }], tail: 0.0 }
    }

    pub fn interval(&self, dst: usize) -> (f64, f64) {
        match self.entries.binary_search_by_key(&dst, |t| t.dst) {
            Ok(i) => (self.entries[i].lower, self.entries[i].upper),
            Err(_) => (0.0, self.tail),
        }
    }

    pub fn lower_sum(&self) -> f64 {
        self.entries.iter().map(|t| t.lower).sum()
    }

    /// Sum of upper bounds over a model with `num_states` destinations.
    pub fn upper_sum(&self, num_states: usize) -> f64 {
        let explicit: f64 = self.entries.iter().map(|t| t.upper).sum();
        explicit + self.tail * num_states.saturating_sub(self.entries.len()) as f64
    }

    pub fn is_feasible(&self, num_states: usize) -> bool {
        self.lower_sum() <= 1.0 + SUM_TOL && self.upper_sum(num_states) >= 1.0 - SUM_TOL
    }

    /// All `num_states` destinations with their intervals, including implicit ones.
    pub fn dense(&self, num_states: usize) -> Vec<Transition> {
        let mut out = Vec::with_capacity(num_states);
        let mut it = self.entries.iter().peekable();
        for dst in 0..num_states {
            match it.peek() {
                Some(t) if t.dst == dst => {
                    out.push(**t);
                    it.next();
                }
                _ => out.push(Transition { dst, lower: 0.0, upper: self.tail }),
            }
        }
        out
    }

    /// Destinations that can be reached with positive probability.
    pub fn support(&self, num_states: usize) -> Vec<usize> {
        if self.tail > 0.0 {
            (0..num_states).filter(|&d| self.interval(d).1 > 0.0).collect()
        } else {
            self.entries.iter().filter(|t| t.upper > 0.0).map(|t| t.dst).collect()
        }
    }

    /// Destinations whose upper bound exceeds the uniform tail, i.e. those the
    /// predicted image actually reaches.
    pub fn likely(&self) -> impl Iterator<Item = usize> + '_ {
        let cut = self.tail + 1e-12;
        self.entries.iter().filter(move |t| t.upper > cut).map(|t| t.dst)
    }

    fn check(&self, src: usize, num_states: usize) -> Result<(), ImdpError> {
        let bad = |msg: String| ImdpError::BadRow { src, action: self.action, msg };
        if !(0.0..=1.0).contains(&self.tail) {
            return Err(bad(format!("tail {} outside [0, 1]", self.tail)));
        }
        for w in self.entries.windows(2) {
            if w[0].dst >= w[1].dst {
                return Err(bad("entries not strictly sorted by destination".into()));
            }
        }
        for t in &self.entries {
            if t.dst >= num_states {
                return Err(bad(format!("destination {} out of range", t.dst)));
            }
            if !(0.0 <= t.lower && t.lower <= t.upper && t.upper <= 1.0) {
                return Err(bad(format!("interval [{}, {}] to {} is malformed", t.lower, t.upper, t.dst)));
            }
        }
        if !self.is_feasible(num_states) {
            return Err(bad(format!(
                "sum conditions violated: lower sum {}, upper sum {}",
                self.lower_sum(),
                self.upper_sum(num_states)
            )));
        }
        Ok(())
    }
}

/// Interval MDP whose states are the cells of a partition plus the outside
/// state. Every action is available everywhere; the outside state is absorbing.
#[derive(Debug, Clone)]
pub struct Imdp {
    partition: Arc<Partition>,
    num_actions: usize,
    rows: Vec<Arc<Vec<Row>>>,
}

impl Imdp {
    /// `rows[q][u]` must be the row of action `u` at cell `q`; the outside
    /// state's self loops are added here.
    pub fn new(partition: Arc<Partition>, num_actions: usize, mut rows: Vec<Vec<Row>>) -> Result<Self, ImdpError> {
        let out = partition.outside();
        if rows.len() != partition.num_cells() {
            return Err(ImdpError::Malformed(format!("{} row sets for {} cells", rows.len(), partition.num_cells())));
        }
        rows.push((0..num_actions).map(|u| Row::certain(u, out)).collect());
        let imdp = Imdp { partition, num_actions, rows: rows.into_iter().map(Arc::new).collect() };
        imdp.validate()?;
        Ok(imdp)
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn outside(&self) -> usize {
        self.partition.outside()
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.partition.alphabet()
    }

    pub fn rows(&self, q: usize) -> &[Row] {
        &self.rows[q]
    }

    pub fn row(&self, q: usize, u: usize) -> &Row {
        &self.rows[q][u]
    }

    /// Replaces one row, copying the state's row set only if it is shared.
    pub fn set_row(&mut self, q: usize, row: Row) {
        let u = row.action;
        Arc::make_mut(&mut self.rows[q])[u] = row;
    }

    pub fn validate(&self) -> Result<(), ImdpError> {
        let n = self.num_states();
        for (q, rows) in self.rows.iter().enumerate() {
            if rows.len() != self.num_actions {
                return Err(ImdpError::Malformed(format!("state {q} has {} actions", rows.len())));
            }
            for (u, r) in rows.iter().enumerate() {
                if r.action != u {
                    return Err(ImdpError::Malformed(format!("state {q}: row {u} labelled {}", r.action)));
                }
                r.check(q, n)?;
            }
        }
        Ok(())
    }

    pub fn to_export(&self) -> ImdpExport {
        let p = &self.partition;
        let ap = p.alphabet();
        let mut states = Vec::with_capacity(self.num_states());
        for q in 0..p.num_cells() {
            let b = p.cell_box(q);
            states.push(StateExport {
                id: q,
                outside: false,
                lo: Some(b.lo),
                hi: Some(b.hi),
                labels: ap.symbol_names(p.label(q)).into_iter().map(String::from).collect(),
            });
        }
        states.push(StateExport { id: p.outside(), outside: true, lo: None, hi: None, labels: vec![] });
        let mut transitions = Vec::new();
        let mut tails = Vec::new();
        for (q, rows) in self.rows.iter().enumerate() {
            for r in rows.iter() {
                transitions.extend(r.entries.iter().map(|t| (q, r.action, t.dst, t.lower, t.upper)));
                tails.push((q, r.action, r.tail));
            }
        }
        ImdpExport {
            ap: ap.props().to_vec(),
            num_actions: self.num_actions,
            bounds: p.bounds().clone(),
            breakpoints: p.breakpoints().to_vec(),
            states,
            transitions,
            tails,
        }
    }

    pub fn from_export(e: &ImdpExport) -> Result<Self, ImdpError> {
        let ap = Alphabet::new(e.ap.iter().cloned()).map_err(|err| ImdpError::Malformed(err.to_string()))?;
        let cells: Vec<&StateExport> = e.states.iter().filter(|s| !s.outside).collect();
        let mut labels = vec![0; cells.len()];
        for s in &cells {
            if s.id >= labels.len() {
                return Err(ImdpError::Malformed(format!("cell id {} out of range", s.id)));
            }
            labels[s.id] =
                ap.symbol(s.labels.iter().map(String::as_str)).map_err(|err| ImdpError::Malformed(err.to_string()))?;
        }
        let partition = Arc::new(Partition::from_parts(e.bounds.clone(), e.breakpoints.clone(), labels, ap)?);
        let n = partition.num_states();
        let mut rows: Vec<Vec<Row>> = (0..n)
            .map(|_| (0..e.num_actions).map(|u| Row { action: u, entries: vec![], tail: 0.0 }).collect())
            .collect();
        for &(q, u, tail) in &e.tails {
            let r = rows
                .get_mut(q)
                .and_then(|r| r.get_mut(u))
                .ok_or_else(|| ImdpError::Malformed(format!("tail for unknown pair ({q}, {u})")))?;
            r.tail = tail;
        }
        for &(q, u, dst, lower, upper) in &e.transitions {
            let r = rows
                .get_mut(q)
                .and_then(|r| r.get_mut(u))
                .ok_or_else(|| ImdpError::Malformed(format!("transition from unknown pair ({q}, {u})")))?;
            r.entries.push(Transition { dst, lower, upper });
        }
        for r in rows.iter_mut().flatten() {
            r.entries.sort_by_key(|t| t.dst);
        }
        rows.pop();
        let imdp = Imdp::new(partition, e.num_actions, rows)?;
        // the outside rows in the file must agree with the absorbing convention
        let out = imdp.outside();
        for &(q, u, dst, lower, upper) in &e.transitions {
            if q == out && (dst != out || lower != 1.0 || upper != 1.0 || u >= e.num_actions) {
                return Err(ImdpError::Malformed("outside state must be absorbing".into()));
            }
        }
        Ok(imdp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateExport {
    pub id: usize,
    pub outside: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hi: Option<Vec<f64>>,
    pub labels: Vec<String>,
}

/// JSON form of an [`Imdp`]. `transitions` holds `(src, action, dst, lower, upper)`;
/// any destination not listed for a pair has interval `[0, tail]`, with the
/// tail given per pair in `tails` as `(src, action, tail)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImdpExport {
    pub ap: Vec<String>,
    pub num_actions: usize,
    pub bounds: Aabb,
    pub breakpoints: Vec<Vec<f64>>,
    pub states: Vec<StateExport>,
    pub transitions: Vec<(usize, usize, usize, f64, f64)>,
    pub tails: Vec<(usize, usize, f64)>,
}
