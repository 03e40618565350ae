mod common;

use std::sync::Arc;

use olsynth::imdp::{Imdp, Pimdp, Row, Transition};
use olsynth::ltlf::{parse, Alphabet, Dfa};
use olsynth::online::merge_rows;
use olsynth::synthesis::{synthesize, SynthesisSettings};
use proptest::prelude::*;
use rand::Rng;

/// Copy of `imdp` with every interval pulled halfway towards a feasible point
/// inside it, so each new interval is a sub-interval of the old one.
fn tighten(imdp: &Imdp, seed: u64) -> Imdp {
    let mut r = common::rng(seed);
    let n = imdp.num_states();
    let rows = (0..imdp.partition().num_cells())
        .map(|q| {
            imdp.rows(q)
                .iter()
                .map(|row| {
                    // lower bounds plus the slack spread over the explicit entries
                    let dense = row.dense(n);
                    let slack = 1.0 - row.lower_sum();
                    let mut p: Vec<f64> = dense.iter().map(|t| t.lower).collect();
                    let mut left = slack;
                    for t in &dense {
                        let add = (t.upper - t.lower).min(left);
                        p[t.dst] += add;
                        left -= add;
                    }
                    let w = if r.random_bool(0.5) { 0.5 } else { 1.0 };
                    let entries: Vec<Transition> = dense
                        .iter()
                        .filter(|t| t.upper > 0.0)
                        .map(|t| Transition {
                            dst: t.dst,
                            lower: t.lower + w * (p[t.dst] - t.lower) * 0.5,
                            upper: t.upper - w * (t.upper - p[t.dst]) * 0.5,
                        })
                        .collect();
                    Row { action: row.action, entries, tail: 0.0 }
                })
                .collect()
        })
        .collect();
    Imdp::new(imdp.partition().clone(), imdp.num_actions(), rows).unwrap()
}

fn product(imdp: Imdp, formula: &str) -> Pimdp {
    let ap = Alphabet::new(["a", "b"]).unwrap();
    let dfa = Arc::new(Dfa::from_formula(&parse(formula, &ap).unwrap(), &ap).unwrap());
    Pimdp::build(imdp, dfa).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Shrinking every transition interval can only narrow the satisfaction
    /// interval of every product state.
    #[test]
    fn tightening_nests_value_intervals(seed in any::<u64>(), cells in 1usize..6, f in 0usize..5) {
        let mut r = common::rng(seed);
        let imdp = common::random_imdp(&mut r, cells, 2);
        let tight = tighten(&imdp, seed ^ 1);
        let formula = common::VI_FORMULAS[f];
        let settings = SynthesisSettings { tolerance: 1e-12, max_iterations: 1_000_000 };
        let p0 = product(imdp, formula);
        let p1 = product(tight, formula);
        let v0 = synthesize(&p0, &settings, None);
        let v1 = synthesize(&p1, &settings, None);
        let warm = synthesize(&p1, &settings, Some(&v0).filter(|v| v.lower.len() == p1.num_states()));
        for s in 0..p1.num_states() {
            let (q, z) = p1.state(s);
            // the tightened product may prune states the loose one kept
            let Some(t) = p0.index_of(q, z) else { continue };
            prop_assert!(v1.lower[s] >= v0.lower[t] - 1e-9);
            prop_assert!(v1.upper[s] <= v0.upper[t] + 1e-9);
            prop_assert!(v1.lower[s] <= v1.upper[s] + 1e-12);
            prop_assert!((warm.lower[s] - v1.lower[s]).abs() < 1e-8);
            prop_assert!((warm.upper[s] - v1.upper[s]).abs() < 1e-8);
        }
    }

    /// A merged row only ever replaces an interval by a sub-interval.
    #[test]
    fn merges_only_shrink(seed in any::<u64>(), k in 1usize..6) {
        let mut r = common::rng(seed);
        let n = 6;
        let row = |r: &mut rand_chacha::ChaCha8Rng| {
            let (lo, hi) = common::random_row(r, k);
            let entries = (0..k).map(|d| Transition { dst: d, lower: lo[d], upper: hi[d] }).collect();
            Row { action: 0, entries, tail: if r.random_bool(0.5) { r.random_range(0.0..0.05) } else { 0.0 } }
        };
        let old = row(&mut r);
        let new = row(&mut r);
        let m = merge_rows(&old, &new, n);
        if let Some(merged) = m.row {
            prop_assert!(merged.is_feasible(n));
            for d in 0..n {
                let (ol, ou) = old.interval(d);
                let (ml, mu) = merged.interval(d);
                prop_assert!(ml >= ol && mu <= ou, "dst {d}: [{ml}, {mu}] not inside [{ol}, {ou}]");
            }
        }
        for (_, o, nw) in &m.changes {
            prop_assert!(nw.0 >= o.0 && nw.1 <= o.1);
        }
    }

    /// Every point of the state space lies in the cell it is located in.
    #[test]
    fn located_cell_contains_the_point(x in -2.5f64..2.5, y in -2.5f64..2.5) {
        let cfg = olsynth::config::Config::from_toml("[space]\ncells_per_dim = [7, 5]\n").unwrap();
        let ap = olsynth::pipeline::alphabet(&cfg).unwrap();
        let p = olsynth::pipeline::partition(&cfg, &ap).unwrap();
        let q = p.locate(&[x, y]);
        if cfg.bounds().contains(&[x, y]) {
            prop_assert!(q < p.num_cells());
            let b = p.cell_box(q);
            prop_assert!(b.lo[0] <= x && x <= b.hi[0] && b.lo[1] <= y && y <= b.hi[1]);
        } else {
            prop_assert_eq!(q, p.outside());
        }
    }
}
