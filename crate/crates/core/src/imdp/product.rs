use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Imdp, ImdpError, Row, Transition, SUM_TOL};
use crate::ltlf::{Dfa, INFINITE_DISTANCE};

/// Marker for a pruned product state in index tables.
pub const NO_STATE: u32 = u32::MAX;

/// Product of an [`Imdp`] with a DFA. A move into cell `q'` from `(q, z)` lands
/// in `(q', δ(z, L(q')))`, so every visited label is read exactly once, and the
/// initial state of cell `q` is `(q, δ(z0, L(q)))`. Accepting states and
/// violating states (DFA sinks and everything outside `X`) are absorbing.
/// Only states reachable from some initial state are kept.
#[derive(Debug, Clone)]
pub struct Pimdp {
    imdp: Imdp,
    dfa: Arc<Dfa>,
    num_q: usize,
    next_z: Vec<u32>,
    index: Vec<u32>,
    states: Vec<(usize, usize)>,
    initial: Vec<u32>,
    accepting: Vec<bool>,
    violating: Vec<bool>,
}

impl Pimdp {
    pub fn build(imdp: Imdp, dfa: Arc<Dfa>) -> Result<Self, ImdpError> {
        if imdp.alphabet() != dfa.alphabet() {
            return Err(ImdpError::AlphabetMismatch {
                model: imdp.alphabet().props().to_vec(),
                dfa: dfa.alphabet().props().to_vec(),
            });
        }
        let num_q = imdp.num_states();
        let num_z = dfa.num_states();
        let out = imdp.outside();
        let p = imdp.partition().clone();
        let mut next_z = vec![0u32; num_z * num_q];
        for z in 0..num_z {
            for q in 0..num_q {
                next_z[z * num_q + q] = dfa.step(z, p.label(q)) as u32;
            }
        }
        let absorbing = |q: usize, z: usize| q == out || dfa.is_accepting(z) || dfa.is_sink(z);

        let mut seen = vec![false; num_z * num_q];
        let mut queue = VecDeque::new();
        let mut initial = vec![0u32; p.num_cells()];
        for (q, init) in initial.iter_mut().enumerate() {
            let z = next_z[dfa.initial() * num_q + q] as usize;
            *init = (z * num_q + q) as u32;
            if !seen[z * num_q + q] {
                seen[z * num_q + q] = true;
                queue.push_back((q, z));
            }
        }
        // once every cell has been pushed for some z there is no need to repeat it
        let mut flooded = vec![false; num_z];
        while let Some((q, z)) = queue.pop_front() {
            if absorbing(q, z) {
                continue;
            }
            for r in imdp.rows(q) {
                if r.tail > 0.0 && !flooded[z] {
                    flooded[z] = true;
                    for q2 in 0..num_q {
                        let key = next_z[z * num_q + q2] as usize * num_q + q2;
                        if !seen[key] {
                            seen[key] = true;
                            queue.push_back((q2, key / num_q));
                        }
                    }
                }
                for t in r.entries.iter().filter(|t| t.upper > 0.0) {
                    let key = next_z[z * num_q + t.dst] as usize * num_q + t.dst;
                    if !seen[key] {
                        seen[key] = true;
                        queue.push_back((t.dst, key / num_q));
                    }
                }
            }
        }

        let mut index = vec![NO_STATE; num_z * num_q];
        let mut states = Vec::new();
        for q in 0..num_q {
            for z in 0..num_z {
                if seen[z * num_q + q] {
                    index[z * num_q + q] = states.len() as u32;
                    states.push((q, z));
                }
            }
        }
        for init in &mut initial {
            *init = index[*init as usize];
        }
        let accepting = states.iter().map(|&(q, z)| q != out && dfa.is_accepting(z)).collect();
        let violating = states.iter().map(|&(q, z)| q == out || dfa.is_sink(z)).collect();
        Ok(Pimdp { imdp, dfa, num_q, next_z, index, states, initial, accepting, violating })
    }

    pub fn imdp(&self) -> &Imdp {
        &self.imdp
    }

    /// Mutable access for in-place row refinement. Rows may only be tightened,
    /// which keeps the reachable set closed.
    pub fn imdp_mut(&mut self) -> &mut Imdp {
        &mut self.imdp
    }

    pub fn dfa(&self) -> &Arc<Dfa> {
        &self.dfa
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.imdp.num_actions()
    }

    /// `(region, dfa state)` of product state `s`.
    pub fn state(&self, s: usize) -> (usize, usize) {
        self.states[s]
    }

    pub fn index_of(&self, q: usize, z: usize) -> Option<usize> {
        match self.index.get(z * self.num_q + q) {
            Some(&i) if i != NO_STATE => Some(i as usize),
            _ => None,
        }
    }

    /// Initial product state of cell `q`.
    pub fn initial_state(&self, q: usize) -> Option<usize> {
        self.initial.get(q).and_then(|&i| if i == NO_STATE { None } else { Some(i as usize) })
    }

    /// DFA state after moving into `q'` while in DFA state `z`.
    pub fn dfa_successor(&self, z: usize, q_next: usize) -> usize {
        self.next_z[z * self.num_q + q_next] as usize
    }

    /// Product state reached by moving into `q'` from DFA state `z`.
    pub fn successor(&self, z: usize, q_next: usize) -> Option<usize> {
        self.index_of(q_next, self.dfa_successor(z, q_next))
    }

    /// Raw successor table: entry `z·|Q| + q'` is the product id of
    /// `(q', δ(z, L(q')))` or [`NO_STATE`].
    pub fn successor_table(&self, z: usize) -> impl Iterator<Item = u32> + '_ {
        (0..self.num_q).map(move |q| self.index[self.next_z[z * self.num_q + q] as usize * self.num_q + q])
    }

    pub fn num_regions(&self) -> usize {
        self.num_q
    }

    pub fn is_accepting(&self, s: usize) -> bool {
        self.accepting[s]
    }

    pub fn is_violating(&self, s: usize) -> bool {
        self.violating[s]
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        self.accepting[s] || self.violating[s]
    }

    /// IMDP row behind `(s, u)`; `None` for absorbing states.
    pub fn row(&self, s: usize, u: usize) -> Option<&Row> {
        if self.is_absorbing(s) {
            None
        } else {
            Some(self.imdp.row(self.states[s].0, u))
        }
    }

    /// All destinations of `(s, u)` in product ids, sorted, including the
    /// implicit `[0, tail]` ones. Absorbing states self-loop.
    pub fn dense_row(&self, s: usize, u: usize) -> Vec<Transition> {
        let Some(row) = self.row(s, u) else {
            return vec![Transition { dst: s, lower: 1.0, upper: 1.0 }];
        };
        let z = self.states[s].1;
        let mut out: Vec<Transition> = row
            .dense(self.num_q)
            .into_iter()
            .filter(|t| t.upper > 0.0)
            .map(|t| Transition {
                dst: self.successor(z, t.dst).expect("successor of a reachable state is reachable"),
                ..t
            })
            .collect();
        out.sort_by_key(|t| t.dst);
        out
    }

    /// Hop distance to the accepting set along transitions whose upper bound
    /// exceeds the row's uniform tail. Unreachable states get
    /// [`INFINITE_DISTANCE`].
    pub fn distances(&self) -> Vec<u32> {
        let n = self.num_states();
        let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
        for s in 0..n {
            if self.is_absorbing(s) {
                continue;
            }
            let (q, z) = self.states[s];
            for r in self.imdp.rows(q) {
                for q2 in r.likely() {
                    if let Some(t) = self.successor(z, q2) {
                        preds[t].push(s as u32);
                    }
                }
            }
        }
        let mut dist = vec![INFINITE_DISTANCE; n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            if self.accepting[s] {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &p in &preds[s] {
                let p = p as usize;
                if dist[p] == INFINITE_DISTANCE {
                    dist[p] = dist[s] + 1;
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    pub fn to_export(&self) -> PimdpExport {
        let n = self.num_states();
        let mut states = Vec::with_capacity(n);
        let initial: std::collections::BTreeSet<usize> =
            self.initial.iter().filter(|&&i| i != NO_STATE).map(|&i| i as usize).collect();
        for s in 0..n {
            let (q, z) = self.states[s];
            states.push(PimdpStateExport {
                id: s,
                region: q,
                dfa_state: z,
                initial: initial.contains(&s),
                accepting: self.accepting[s],
                violating: self.violating[s],
            });
        }
        let mut transitions = Vec::new();
        let mut tails = Vec::new();
        for s in 0..n {
            for u in 0..self.num_actions() {
                match self.row(s, u) {
                    None => transitions.push((s, u, s, 1.0, 1.0)),
                    Some(r) => {
                        let z = self.states[s].1;
                        for t in &r.entries {
                            if let Some(d) = self.successor(z, t.dst) {
                                transitions.push((s, u, d, t.lower, t.upper));
                            }
                        }
                        tails.push((s, u, r.tail));
                    }
                }
            }
        }
        PimdpExport {
            ap: self.imdp.alphabet().props().to_vec(),
            num_actions: self.num_actions(),
            dfa_initial: self.dfa.initial(),
            num_regions: self.num_q,
            states,
            accepting: (0..n).filter(|&s| self.accepting[s]).collect(),
            transitions,
            tails,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimdpStateExport {
    pub id: usize,
    pub region: usize,
    pub dfa_state: usize,
    pub initial: bool,
    pub accepting: bool,
    pub violating: bool,
}

/// JSON form of a [`Pimdp`]: explicit transitions `(src, action, dst, lower, upper)`
/// in product ids and per-pair tails `(src, action, tail)`. From `(q, z)` every
/// region `q'` without an explicit entry is reached in `(q', δ(z, L(q')))` with
/// interval `[0, tail]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimdpExport {
    pub ap: Vec<String>,
    pub num_actions: usize,
    pub dfa_initial: usize,
    /// Regions of the underlying IMDP, including the outside one.
    pub num_regions: usize,
    pub states: Vec<PimdpStateExport>,
    pub accepting: Vec<usize>,
    pub transitions: Vec<(usize, usize, usize, f64, f64)>,
    pub tails: Vec<(usize, usize, f64)>,
}

impl PimdpExport {
    /// Checks ids, interval ordering and the sum conditions of every row.
    pub fn validate(&self) -> Result<(), ImdpError> {
        let n = self.states.len();
        let bad = |msg: String| ImdpError::Malformed(msg);
        for (i, s) in self.states.iter().enumerate() {
            if s.id != i || s.region >= self.num_regions {
                return Err(bad(format!("state {i} has id {} and region {}", s.id, s.region)));
            }
        }
        let mut lower = vec![0.0; n * self.num_actions];
        let mut upper = vec![0.0; n * self.num_actions];
        let mut count = vec![0usize; n * self.num_actions];
        for &(s, u, d, lo, hi) in &self.transitions {
            if s >= n || d >= n || u >= self.num_actions {
                return Err(bad(format!("transition ({s}, {u}, {d}) out of range")));
            }
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(ImdpError::BadRow { src: s, action: u, msg: format!("interval [{lo}, {hi}] to {d}") });
            }
            let k = s * self.num_actions + u;
            lower[k] += lo;
            upper[k] += hi;
            count[k] += 1;
        }
        let mut tail = vec![0.0; n * self.num_actions];
        for &(s, u, t) in &self.tails {
            if s >= n || u >= self.num_actions || !(0.0..=1.0).contains(&t) {
                return Err(bad(format!("tail ({s}, {u}, {t}) out of range")));
            }
            tail[s * self.num_actions + u] = t;
        }
        for k in 0..n * self.num_actions {
            let hi = upper[k] + tail[k] * self.num_regions.saturating_sub(count[k]) as f64;
            if lower[k] > 1.0 + SUM_TOL || hi < 1.0 - SUM_TOL {
                return Err(ImdpError::BadRow {
                    src: k / self.num_actions,
                    action: k % self.num_actions,
                    msg: format!("lower sum {} and upper sum {hi} do not bracket 1", lower[k]),
                });
            }
        }
        Ok(())
    }
}
