//! Robust interval value iteration on the product and strategy extraction.

mod extremal;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::imdp::{Pimdp, NO_STATE};

pub use extremal::{extremal_distribution, extremal_expectation, Objective};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthesisError {
    #[error("infeasible interval row: lower sum {lower_sum}, upper sum {upper_sum}")]
    InfeasibleRow { lower_sum: f64, upper_sum: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("strategy has no action for state {0}")]
    IncompleteStrategy(usize),
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSettings {
    /// Sup-norm residual at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        SynthesisSettings { tolerance: 1e-6, max_iterations: 10_000 }
    }
}

/// Outcome of a fixed-point computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixpoint {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Values and strategy on a product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueResult {
    /// Best worst-case reachability probability, `max_π min_ξ`.
    pub lower: Vec<f64>,
    /// Best best-case reachability probability, `max_π max_ξ`.
    pub upper: Vec<f64>,
    /// Worst-case probability under `strategy`.
    pub policy_lower: Vec<f64>,
    /// Best-case probability under `strategy`.
    pub policy_upper: Vec<f64>,
    pub strategy: Vec<usize>,
    /// Iterations of the four fixed points, in field order.
    pub iterations: [usize; 4],
    /// Largest final residual of the four fixed points.
    pub residual: f64,
    pub converged: bool,
}

/// Product rows flattened to product ids.
struct Compiled {
    /// `row_start[s]..row_start[s + 1]` are the rows of state `s`, one per action.
    row_start: Vec<u32>,
    rows: Vec<CRow>,
    entries: Vec<(u32, f64, f64)>,
    /// Per DFA state, the product ids reached through implicit entries.
    implicit: Vec<Vec<u32>>,
    accepting: Vec<bool>,
    absorbing: Vec<bool>,
}

#[derive(Clone, Copy)]
struct CRow {
    start: u32,
    end: u32,
    tail: f64,
    z: u32,
}

impl Compiled {
    fn new(p: &Pimdp) -> Self {
        let n = p.num_states();
        let num_z = p.dfa().num_states();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut rows = Vec::new();
        let mut entries = Vec::new();
        let mut used_z = vec![false; num_z];
        for s in 0..n {
            row_start.push(rows.len() as u32);
            if p.is_absorbing(s) {
                continue;
            }
            let z = p.state(s).1;
            for u in 0..p.num_actions() {
                let r = p.row(s, u).expect("non-absorbing state has rows");
                let start = entries.len() as u32;
                for t in &r.entries {
                    if let Some(d) = p.successor(z, t.dst) {
                        entries.push((d as u32, t.lower, t.upper));
                    }
                }
                if r.tail > 0.0 {
                    used_z[z] = true;
                }
                rows.push(CRow { start, end: entries.len() as u32, tail: r.tail, z: z as u32 });
            }
        }
        row_start.push(rows.len() as u32);
        let implicit = (0..num_z)
            .map(|z| if used_z[z] { p.successor_table(z).filter(|&d| d != NO_STATE).collect() } else { Vec::new() })
            .collect();
        Compiled {
            row_start,
            rows,
            entries,
            implicit,
            accepting: (0..n).map(|s| p.is_accepting(s)).collect(),
            absorbing: (0..n).map(|s| p.is_absorbing(s)).collect(),
        }
    }

    fn num_states(&self) -> usize {
        self.accepting.len()
    }

    fn rows_of(&self, s: usize) -> &[CRow] {
        &self.rows[self.row_start[s] as usize..self.row_start[s + 1] as usize]
    }
}

/// Scratch space and per-iteration orderings for row evaluation.
struct Evaluator<'a> {
    c: &'a Compiled,
    /// Per DFA state, implicit destinations sorted by ascending value.
    order: Vec<Vec<u32>>,
    stamp: Vec<u32>,
    gen: u32,
    buf: Vec<(f64, f64, u32)>,
}

impl<'a> Evaluator<'a> {
    fn new(c: &'a Compiled) -> Self {
        Evaluator { c, order: c.implicit.clone(), stamp: vec![0; c.num_states()], gen: 0, buf: Vec::new() }
    }

    fn prepare(&mut self, v: &[f64]) {
        for o in &mut self.order {
            o.sort_by(|&a, &b| v[a as usize].total_cmp(&v[b as usize]).then(a.cmp(&b)));
        }
    }

    /// Extremal expectation of `v` over the feasible distributions of `r`.
    /// Requires [`Evaluator::prepare`] with the same `v` when `r.tail > 0`.
    fn eval(&mut self, r: &CRow, v: &[f64], obj: Objective) -> f64 {
        let ent = &self.c.entries[r.start as usize..r.end as usize];
        let mut total = 0.0;
        let mut rem = 1.0;
        self.buf.clear();
        for &(d, lo, hi) in ent {
            total += lo * v[d as usize];
            rem -= lo;
            self.buf.push((v[d as usize], hi - lo, d));
        }
        if rem <= 0.0 {
            return total;
        }
        match obj {
            Objective::Minimize => self.buf.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2))),
            Objective::Maximize => self.buf.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2))),
        }
        if r.tail <= 0.0 {
            for &(val, cap, _) in &self.buf {
                let m = cap.min(rem);
                total += m * val;
                rem -= m;
                if rem <= 0.0 {
                    break;
                }
            }
            return total;
        }
        self.gen = self.gen.wrapping_add(1);
        if self.gen == 0 {
            self.stamp.iter_mut().for_each(|x| *x = 0);
            self.gen = 1;
        }
        for &(_, _, d) in &self.buf {
            self.stamp[d as usize] = self.gen;
        }
        let order = &self.order[r.z as usize];
        let mut i = 0;
        let next_implicit = |i: &mut usize| -> Option<u32> {
            loop {
                let k = *i;
                if k >= order.len() {
                    return None;
                }
                *i += 1;
                let d = match obj {
                    Objective::Minimize => order[k],
                    Objective::Maximize => order[order.len() - 1 - k],
                };
                if self.stamp[d as usize] != self.gen {
                    return Some(d);
                }
            }
        };
        let mut imp = next_implicit(&mut i);
        let mut j = 0;
        while rem > 0.0 {
            let take_explicit = match (self.buf.get(j), imp) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(e), Some(d)) => {
                    let vd = v[d as usize];
                    match obj {
                        Objective::Minimize => e.0 < vd || (e.0 == vd && e.2 < d),
                        Objective::Maximize => e.0 > vd || (e.0 == vd && e.2 < d),
                    }
                }
            };
            if take_explicit {
                let (val, cap, _) = self.buf[j];
                let m = cap.min(rem);
                total += m * val;
                rem -= m;
                j += 1;
            } else {
                let d = imp.unwrap();
                let m = r.tail.min(rem);
                total += m * v[d as usize];
                rem -= m;
                imp = next_implicit(&mut i);
            }
        }
        total
    }
}

/// One step of the Bellman operator into `out`. With `policy`, only that
/// action is evaluated.
fn bellman(ev: &mut Evaluator<'_>, v: &[f64], obj: Objective, policy: Option<&[usize]>, out: &mut [f64]) {
    ev.prepare(v);
    let c = ev.c;
    for s in 0..c.num_states() {
        out[s] = if c.accepting[s] {
            1.0
        } else if c.absorbing[s] {
            0.0
        } else {
            let rows = c.rows_of(s);
            match policy {
                Some(pi) => ev.eval(&rows[pi[s]], v, obj),
                None => rows.iter().map(|r| ev.eval(r, v, obj)).fold(f64::NEG_INFINITY, f64::max),
            }
        };
    }
}

/// Value iteration from `start`, which must lie below the least fixed point
/// for the result to converge to it. Iterates are kept nondecreasing and,
/// when `cap` is given, pointwise below it.
fn iterate(
    c: &Compiled,
    obj: Objective,
    policy: Option<&[usize]>,
    start: Vec<f64>,
    cap: Option<&[f64]>,
    settings: &SynthesisSettings,
) -> Fixpoint {
    let n = c.num_states();
    let mut ev = Evaluator::new(c);
    let mut v = start;
    for s in 0..n {
        if c.accepting[s] {
            v[s] = 1.0;
        } else if c.absorbing[s] {
            v[s] = 0.0;
        }
    }
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        bellman(&mut ev, &v, obj, policy, &mut next);
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            let mut x = next[s].max(v[s]).clamp(0.0, 1.0);
            if let Some(cap) = cap {
                x = x.min(cap[s].max(v[s]));
            }
            residual = f64::max(residual, (x - v[s]).abs());
            v[s] = x;
        }
        if residual < settings.tolerance {
            break;
        }
    }
    Fixpoint { values: v, iterations, residual, converged: residual < settings.tolerance }
}

/// Reachability values of the accepting set against the given adversary,
/// maximized over actions, from the all-zero start.
pub fn robust_reach(p: &Pimdp, obj: Objective, settings: &SynthesisSettings) -> Fixpoint {
    let c = Compiled::new(p);
    iterate(&c, obj, None, vec![0.0; p.num_states()], None, settings)
}

/// `[p̲_π, p̄_π]` per state for a fixed stationary strategy.
pub fn satisfaction_intervals(
    p: &Pimdp,
    strategy: &[usize],
    settings: &SynthesisSettings,
) -> Result<(Fixpoint, Fixpoint), SynthesisError> {
    if strategy.len() != p.num_states() {
        return Err(SynthesisError::LengthMismatch(format!(
            "strategy covers {} of {} states",
            strategy.len(),
            p.num_states()
        )));
    }
    if let Some(s) = (0..p.num_states()).find(|&s| strategy[s] >= p.num_actions()) {
        return Err(SynthesisError::IncompleteStrategy(s));
    }
    let c = Compiled::new(p);
    let lo = iterate(&c, Objective::Minimize, Some(strategy), vec![0.0; p.num_states()], None, settings);
    let hi = iterate(&c, Objective::Maximize, Some(strategy), lo.values.clone(), None, settings);
    Ok((lo, hi))
}

/// Full synthesis: pessimistic and optimistic optima, a strategy attaining the
/// pessimistic optimum, and its satisfaction intervals.
///
/// With `previous` (a result on the same product before some intervals were
/// tightened), the pessimistic iteration resumes from the previous values and
/// the optimistic values are capped by the previous ones, so both bounds move
/// monotonically.
pub fn synthesize(p: &Pimdp, settings: &SynthesisSettings, previous: Option<&ValueResult>) -> ValueResult {
    let n = p.num_states();
    let c = Compiled::new(p);
    let prev = previous.filter(|r| r.lower.len() == n);
    let start = prev.map_or_else(|| vec![0.0; n], |r| r.lower.clone());
    let lower = iterate(&c, Objective::Minimize, None, start, None, settings);
    let upper =
        iterate(&c, Objective::Maximize, None, lower.values.clone(), prev.map(|r| r.upper.as_slice()), settings);
    let strategy = extract_strategy(&c, &lower.values, &upper.values, settings.tolerance);
    let pl = iterate(&c, Objective::Minimize, Some(&strategy), vec![0.0; n], None, settings);
    let pu = iterate(&c, Objective::Maximize, Some(&strategy), pl.values.clone(), None, settings);
    let fps = [&lower, &upper, &pl, &pu];
    ValueResult {
        iterations: [lower.iterations, upper.iterations, pl.iterations, pu.iterations],
        residual: fps.iter().map(|f| f.residual).fold(0.0, f64::max),
        converged: fps.iter().all(|f| f.converged),
        lower: lower.values,
        upper: upper.values,
        policy_lower: pl.values,
        policy_upper: pu.values,
        strategy,
    }
}

/// Chooses among the pessimistically optimal actions so that the strategy
/// cannot stall: states are assigned in layers outward from the accepting
/// set, each taking an optimal action that moves positive worst-case mass
/// into already assigned states. Ties go to the higher optimistic value, then
/// the lowest action id. States never assigned this way take the optimal
/// action with the highest optimistic value.
fn extract_strategy(c: &Compiled, lower: &[f64], upper: &[f64], tol: f64) -> Vec<usize> {
    let n = c.num_states();
    let mut ev = Evaluator::new(c);
    ev.prepare(lower);
    let mut q_lo: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in 0..n {
        if !c.absorbing[s] {
            q_lo[s] = c.rows_of(s).iter().map(|r| ev.eval(r, lower, Objective::Minimize)).collect();
        }
    }
    ev.prepare(upper);
    let mut q_hi: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in 0..n {
        if !c.absorbing[s] {
            q_hi[s] = c.rows_of(s).iter().map(|r| ev.eval(r, upper, Objective::Maximize)).collect();
        }
    }
    let optimal: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let best = q_lo[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0..q_lo[s].len()).filter(|&u| q_lo[s][u] >= best - tol).collect()
        })
        .collect();
    let pick = |s: usize, candidates: &mut dyn Iterator<Item = usize>| -> Option<usize> {
        candidates.fold(None, |acc: Option<usize>, u| match acc {
            Some(b) if q_hi[s][b] >= q_hi[s][u] => Some(b),
            _ => Some(u),
        })
    };

    let mut strategy = vec![usize::MAX; n];
    let mut assigned: Vec<f64> = (0..n).map(|s| if c.accepting[s] { 1.0 } else { 0.0 }).collect();
    loop {
        ev.prepare(&assigned);
        let mut layer = Vec::new();
        for s in 0..n {
            if c.absorbing[s] || strategy[s] != usize::MAX || lower[s] <= 0.0 {
                continue;
            }
            let rows = c.rows_of(s);
            let mut progressing =
                optimal[s].iter().copied().filter(|&u| ev.eval(&rows[u], &assigned, Objective::Minimize) > 1e-12);
            if let Some(u) = pick(s, &mut progressing) {
                layer.push((s, u));
            }
        }
        if layer.is_empty() {
            break;
        }
        for (s, u) in layer {
            strategy[s] = u;
            assigned[s] = 1.0;
        }
    }
    for s in 0..n {
        if strategy[s] == usize::MAX {
            strategy[s] = if c.absorbing[s] { 0 } else { pick(s, &mut optimal[s].iter().copied()).unwrap_or(0) };
        }
    }
    strategy
}

/// Writes `state,region,dfa_state,action,p_lower,p_upper` with the strategy's
/// satisfaction intervals.
pub fn write_strategy_csv<W: Write>(p: &Pimdp, r: &ValueResult, w: W) -> Result<(), SynthesisError> {
    let io = |e: std::io::Error| SynthesisError::Io(e.to_string());
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "state,region,dfa_state,action,p_lower,p_upper").map_err(io)?;
    for s in 0..p.num_states() {
        let (q, z) = p.state(s);
        writeln!(w, "{s},{q},{z},{},{},{}", r.strategy[s], r.policy_lower[s], r.policy_upper[s]).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::imdp::tests::two_cells;
    use crate::imdp::{Imdp, Row, Transition};
    use crate::ltlf::{parse, Alphabet, Dfa};

    fn product(imdp: Imdp, formula: &str) -> Pimdp {
        let ap = Alphabet::new(["a", "b"]).unwrap();
        let d = Arc::new(Dfa::from_formula(&parse(formula, &ap).unwrap(), &ap).unwrap());
        Pimdp::build(imdp, d).unwrap()
    }

    #[test]
    fn all_accepting_in_one_iteration() {
        let p = product(two_cells(), "true");
        let r = synthesize(&p, &SynthesisSettings::default(), None);
        assert!(r.lower.iter().all(|&v| v == 1.0));
        assert_eq!(r.iterations[0], 1);
    }

    #[test]
    fn certain_failure_has_zero_value() {
        let m = two_cells();
        let part = m.partition().clone();
        let out = part.outside();
        let rows =
            vec![vec![Row::certain(0, out), Row::certain(1, out)], vec![Row::certain(0, out), Row::certain(1, out)]];
        let p = product(Imdp::new(part, 2, rows).unwrap(), "F a");
        let r = synthesize(&p, &SynthesisSettings::default(), None);
        let s0 = p.initial_state(0).unwrap();
        assert_eq!((r.lower[s0], r.upper[s0]), (0.0, 0.0));
    }

    #[test]
    fn two_cell_values() {
        // from cell 0 under action 0: [0.3, 0.7] into the goal, [0.2, 0.6] stay,
        // [0, 0.1] outside; action 1 stays forever
        let p = product(two_cells(), "F a");
        let r = synthesize(&p, &SynthesisSettings { tolerance: 1e-12, max_iterations: 100_000 }, None);
        let s0 = p.initial_state(0).unwrap();
        // worst case each step: 0.3 to goal, 0.1 outside, 0.6 stay, so 0.3 / 0.4
        assert!((r.lower[s0] - 0.75).abs() < 1e-9);
        // best case: 0.7 to goal, 0.3 stay, so 1
        assert!((r.upper[s0] - 1.0).abs() < 1e-9);
        assert_eq!(r.strategy[s0], 0);
        assert!((r.policy_lower[s0] - r.lower[s0]).abs() < 1e-9);
    }

    #[test]
    fn warm_start_keeps_nesting() {
        let m = two_cells();
        let p = product(m.clone(), "F a");
        let s = SynthesisSettings::default();
        let first = synthesize(&p, &s, None);
        let mut tighter = p.clone();
        tighter.imdp_mut().set_row(
            0,
            Row {
                action: 0,
                entries: vec![
                    Transition { dst: 0, lower: 0.2, upper: 0.5 },
                    Transition { dst: 1, lower: 0.4, upper: 0.7 },
                ],
                tail: 0.1,
            },
        );
        let second = synthesize(&tighter, &s, Some(&first));
        for i in 0..p.num_states() {
            assert!(second.lower[i] >= first.lower[i] - 1e-12);
            assert!(second.upper[i] <= first.upper[i] + 1e-12);
        }
    }

    #[test]
    fn strategy_csv_shape() {
        let p = product(two_cells(), "F a");
        let r = synthesize(&p, &SynthesisSettings::default(), None);
        let mut buf = Vec::new();
        write_strategy_csv(&p, &r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), p.num_states() + 1);
        assert!(text.starts_with("state,region,dfa_state,action,p_lower,p_upper\n"));
    }
}
