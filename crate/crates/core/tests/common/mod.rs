//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use olsynth::abstraction::Partition;
use olsynth::geometry::Aabb;
use olsynth::gp::{BoundParams, GpModel, KernelParams};
use olsynth::imdp::{Imdp, Pimdp, Row, Transition};
use olsynth::ltlf::{parse, Alphabet, Dfa, Formula, Symbol};
use olsynth::synthesis::{extremal_expectation, synthesize, Objective, SynthesisSettings};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- LTLf

/// Formulas over `a, b, c` exercised against the DFA construction.
pub const CORPUS: &[&str] = &[
    "G(!a) & F(b) & F(c)",
    "a",
    "!a",
    "true",
    "false",
    "X a",
    "WX a",
    "X X b",
    "F a",
    "G a",
    "a U b",
    "a R b",
    "F G a",
    "G F a",
    "G(!a | X b)",
    "G(!a | WX b)",
    "F(a & X(b & X c))",
    "(a U b) U c",
    "!(a U b) | G c",
    "F a & F b & F c",
    "G(a | b) & F(!c)",
    "X(a R (b | c))",
    "(G !a | F b) & G(!c | X true)",
    "a U (b R c)",
    "G((a & X !a) | (!a & X a))",
    "F(a & WX false)",
];

/// `sat[i]` for every suffix start `i` in `0..=n`, computed bottom up.
fn sat_table(f: &Formula, trace: &[Symbol]) -> Vec<bool> {
    use Formula::*;
    let n = trace.len();
    match f {
        True => vec![true; n + 1],
        False => vec![false; n + 1],
        Atom(p) => (0..=n).map(|i| i < n && trace[i] >> p & 1 == 1).collect(),
        Not(a) => sat_table(a, trace).into_iter().map(|v| !v).collect(),
        And(a, b) => sat_table(a, trace).iter().zip(sat_table(b, trace)).map(|(x, y)| *x && y).collect(),
        Or(a, b) => sat_table(a, trace).iter().zip(sat_table(b, trace)).map(|(x, y)| *x || y).collect(),
        Next(a) => {
            let s = sat_table(a, trace);
            (0..=n).map(|i| i + 1 < n && s[i + 1]).collect()
        }
        WeakNext(a) => {
            let s = sat_table(a, trace);
            (0..=n).map(|i| i + 1 >= n || s[i + 1]).collect()
        }
        Until(a, b) => {
            let (sa, sb) = (sat_table(a, trace), sat_table(b, trace));
            let mut out = vec![false; n + 1];
            for i in (0..n).rev() {
                out[i] = sb[i] || (sa[i] && out[i + 1]);
            }
            out
        }
        Release(a, b) => {
            let (sa, sb) = (sat_table(a, trace), sat_table(b, trace));
            let mut out = vec![true; n + 1];
            for i in (0..n).rev() {
                out[i] = sb[i] && (sa[i] || out[i + 1]);
            }
            out
        }
        Eventually(a) => sat_table(&Until(Box::new(True), a.clone()), trace),
        Globally(a) => sat_table(&Release(Box::new(False), a.clone()), trace),
    }
}

pub fn holds(f: &Formula, trace: &[Symbol]) -> bool {
    sat_table(f, trace)[0]
}

/// Number of traces up to `max_len` over `ap` where the DFA disagrees with the
/// oracle, and the number of traces checked.
pub fn dfa_mismatches(text: &str, ap: &Alphabet, max_len: usize) -> (usize, usize) {
    let f = parse(text, ap).unwrap_or_else(|e| panic!("{text}: {e}"));
    let dfa = Dfa::from_formula(&f, ap).unwrap();
    let k = ap.num_symbols() as u32;
    let (mut bad, mut total) = (0, 0);
    for len in 0..=max_len {
        let count = (k as usize).pow(len as u32);
        let mut trace = vec![0 as Symbol; len];
        for mut code in 0..count {
            for t in trace.iter_mut() {
                *t = (code % k as usize) as Symbol;
                code /= k as usize;
            }
            total += 1;
            if dfa.accepts(&trace) != holds(&f, &trace) {
                bad += 1;
            }
        }
    }
    (bad, total)
}

// ---------------------------------------------------------------- GP

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn se_kernel(p: &KernelParams, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(&p.lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    p.signal_variance * (-r2 / 2.0).exp()
}

/// Posterior mean and variance by explicit inversion of `K + σ²I`.
pub fn gp_direct(p: &KernelParams, xs: &[Vec<f64>], ys: &[f64], x: &[f64]) -> (f64, f64) {
    let m = xs.len();
    let k: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| se_kernel(p, &xs[i], &xs[j]) + if i == j { p.noise_variance } else { 0.0 }).collect())
        .collect();
    let kinv = invert(&k);
    let kx: Vec<f64> = xs.iter().map(|xi| se_kernel(p, x, xi)).collect();
    let w: Vec<f64> = (0..m).map(|i| (0..m).map(|j| kinv[i][j] * kx[j]).sum()).collect();
    let mean = w.iter().zip(ys).map(|(a, b)| a * b).sum();
    let var = se_kernel(p, x, x) - w.iter().zip(&kx).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

/// Worst absolute deviation of mean and variance from the oracle over `trials`
/// random datasets with `m ≤ max_m` points in `n ≤ 3` dimensions.
pub fn gp_worst_error(trials: usize, max_m: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut dm, mut dv) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let n = r.random_range(1..=3);
        let m = r.random_range(1..=max_m);
        let params = KernelParams {
            lengthscales: (0..n).map(|_| r.random_range(0.3..2.0)).collect(),
            signal_variance: r.random_range(0.1..2.0),
            noise_variance: r.random_range(0.01..0.5),
        };
        let xs: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let bound = BoundParams { rkhs_bound: 1.0, noise_scale: 0.1, info_gain: None };
        let gp = GpModel::fit(0, 0, xs.clone(), ys.clone(), params.clone(), bound).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.5..2.5)).collect();
            let (mean, std) = gp.posterior(&x);
            let (om, ov) = gp_direct(&params, &xs, &ys, &x);
            dm = dm.max((mean - om).abs());
            dv = dv.max((std * std - ov.max(0.0)).abs());
        }
    }
    (dm, dv)
}

// ---------------------------------------------------------------- adversary

/// Extremum of `Σ p·v` over the polytope `{l ≤ p ≤ u, Σp = 1}` by vertex
/// enumeration: at a vertex all but at most one coordinate sit at a bound.
pub fn vertex_extremum(v: &[f64], l: &[f64], u: &[f64], maximize: bool) -> f64 {
    let k = v.len();
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    for free in 0..k {
        for mask in 0..1usize << (k - 1) {
            let mut p = vec![0.0; k];
            let mut bit = 0;
            let mut s = 0.0;
            for i in (0..k).filter(|&i| i != free) {
                p[i] = if mask >> bit & 1 == 1 { u[i] } else { l[i] };
                s += p[i];
                bit += 1;
            }
            p[free] = 1.0 - s;
            if p[free] < l[free] - 1e-12 || p[free] > u[free] + 1e-12 {
                continue;
            }
            let e: f64 = p.iter().zip(v).map(|(a, b)| a * b).sum();
            best = if maximize { best.max(e) } else { best.min(e) };
        }
    }
    best
}

/// Random feasible interval row over `k` destinations.
pub fn random_row<R: Rng>(r: &mut R, k: usize) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    let mut lo = Vec::with_capacity(k);
    let mut hi = Vec::with_capacity(k);
    for x in w {
        let p = x / s;
        // some bounds pinned exactly, some loose
        let l = if r.random_bool(0.2) { p } else { p * r.random::<f64>() };
        let h = if r.random_bool(0.2) { p } else { (p + r.random::<f64>() * 0.4).min(1.0) };
        lo.push(l);
        hi.push(h);
    }
    (lo, hi)
}

/// Worst gap between the greedy extremum and vertex enumeration.
pub fn extremal_worst_error(rows: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..rows {
        let k = r.random_range(1..=6);
        let (lo, hi) = random_row(&mut r, k);
        let v: Vec<f64> =
            (0..k).map(|_| if r.random_bool(0.3) { (r.random_range(0..3) as f64) / 2.0 } else { r.random() }).collect();
        for (obj, max) in [(Objective::Minimize, false), (Objective::Maximize, true)] {
            let got = extremal_expectation(&v, &lo, &hi, obj).unwrap();
            worst = worst.max((got - vertex_extremum(&v, &lo, &hi, max)).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------- value iteration

/// Random interval MDP on a line of `cells` cells labelled from `{a, b}`.
pub fn random_imdp<R: Rng>(r: &mut R, cells: usize, actions: usize) -> Imdp {
    let ap = Alphabet::new(["a", "b"]).unwrap();
    let bounds = Aabb::new(vec![0.0], vec![cells as f64]).unwrap();
    let breaks = vec![(0..=cells).map(|i| i as f64).collect()];
    let labels: Vec<Symbol> = (0..cells).map(|_| r.random_range(0..4)).collect();
    let partition = Arc::new(Partition::from_parts(bounds, breaks, labels, ap).unwrap());
    let n = cells + 1;
    let rows = (0..cells)
        .map(|_| {
            (0..actions)
                .map(|u| {
                    let k = r.random_range(1..=n.min(4));
                    let mut dst: Vec<usize> = (0..n).collect();
                    for i in 0..k {
                        let j = r.random_range(i..n);
                        dst.swap(i, j);
                    }
                    let mut dst = dst[..k].to_vec();
                    dst.sort();
                    let (lo, hi) = random_row(r, k);
                    let tail = if r.random_bool(0.3) { r.random_range(0.0..0.1) } else { 0.0 };
                    let entries = dst
                        .iter()
                        .zip(lo.iter().zip(&hi))
                        .map(|(&d, (&l, &h))| Transition { dst: d, lower: l, upper: h })
                        .collect();
                    Row { action: u, entries, tail }
                })
                .collect()
        })
        .collect();
    Imdp::new(partition, actions, rows).unwrap()
}

/// Product values computed from scratch on all `(q, z)` pairs: the maximum over
/// every stationary deterministic policy of that policy's value, each found by
/// value iteration whose adversary step enumerates polytope vertices.
pub struct BruteForce {
    pub num_q: usize,
    /// `lower[z * num_q + q]`
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn brute_force(imdp: &Imdp, dfa: &Dfa) -> BruteForce {
    let nq = imdp.num_states();
    let nz = dfa.num_states();
    let out = imdp.outside();
    let p = imdp.partition();
    let id = |q: usize, z: usize| z * nq + q;
    let acc = |q: usize, z: usize| q != out && dfa.is_accepting(z);
    let absorbing = |q: usize, z: usize| q == out || dfa.is_accepting(z) || dfa.is_sink(z);
    let free: Vec<(usize, usize)> =
        (0..nz).flat_map(|z| (0..nq).map(move |q| (q, z))).filter(|&(q, z)| !absorbing(q, z)).collect();
    // per free state and action: destinations (product ids) and intervals
    let rows: Vec<Vec<(Vec<usize>, Vec<f64>, Vec<f64>)>> = free
        .iter()
        .map(|&(q, z)| {
            (0..imdp.num_actions())
                .map(|u| {
                    let dense = imdp.row(q, u).dense(nq);
                    let ds = dense.iter().map(|t| id(t.dst, dfa.step(z, p.label(t.dst)))).collect();
                    (ds, dense.iter().map(|t| t.lower).collect(), dense.iter().map(|t| t.upper).collect())
                })
                .collect()
        })
        .collect();
    let total = nq * nz;
    let policies = imdp.num_actions().pow(free.len() as u32);
    assert!(policies <= 1 << 12, "too many policies to enumerate");
    let mut best_lo = vec![0.0f64; total];
    let mut best_hi = vec![0.0f64; total];
    for code in 0..policies {
        let mut c = code;
        let pol: Vec<usize> = free
            .iter()
            .map(|_| {
                let a = c % imdp.num_actions();
                c /= imdp.num_actions();
                a
            })
            .collect();
        for (maximize, best) in [(false, &mut best_lo), (true, &mut best_hi)] {
            let mut v: Vec<f64> = (0..total).map(|s| if acc(s % nq, s / nq) { 1.0 } else { 0.0 }).collect();
            for _ in 0..200_000 {
                let mut delta = 0.0f64;
                let prev = v.clone();
                for (i, &(q, z)) in free.iter().enumerate() {
                    let (ds, lo, hi) = &rows[i][pol[i]];
                    let vals: Vec<f64> = ds.iter().map(|&d| prev[d]).collect();
                    let x = extremum_dense(&vals, lo, hi, maximize);
                    delta = delta.max((x - v[id(q, z)]).abs());
                    v[id(q, z)] = x;
                }
                if delta < 1e-13 {
                    break;
                }
            }
            for s in 0..total {
                best[s] = best[s].max(v[s]);
            }
        }
    }
    BruteForce { num_q: nq, lower: best_lo, upper: best_hi }
}

fn extremum_dense(v: &[f64], lo: &[f64], hi: &[f64], maximize: bool) -> f64 {
    vertex_extremum(v, lo, hi, maximize)
}

/// `max_u min_ξ` Bellman update on the product, adversary by vertex enumeration.
fn bellman_min(p: &Pimdp, v: &[f64]) -> Vec<f64> {
    (0..p.num_states())
        .map(|s| {
            if p.is_accepting(s) {
                return 1.0;
            }
            if p.is_absorbing(s) {
                return v[s];
            }
            (0..p.num_actions())
                .map(|u| {
                    let row = p.dense_row(s, u);
                    let vals: Vec<f64> = row.iter().map(|t| v[t.dst]).collect();
                    let lo: Vec<f64> = row.iter().map(|t| t.lower).collect();
                    let hi: Vec<f64> = row.iter().map(|t| t.upper).collect();
                    vertex_extremum(&vals, &lo, &hi, false)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Largest disagreement between the library's product values and the brute
/// force, over `instances` random products, plus whether iterates were monotone
/// and the bounds ordered.
pub struct ViReport {
    pub worst: f64,
    pub monotone: bool,
    pub ordered: bool,
    pub max_states: usize,
    /// Product states compared whose lower value lies strictly inside (0, 1).
    pub interior: usize,
}

pub const VI_FORMULAS: &[&str] = &["F a", "!b U a", "F a & F b", "G(!b) & F a", "F(a & X b)"];

pub fn vi_check(instances: usize, seed: u64) -> ViReport {
    let mut r = rng(seed);
    let ap = Alphabet::new(["a", "b"]).unwrap();
    let settings = SynthesisSettings { tolerance: 1e-13, max_iterations: 1_000_000 };
    let mut rep = ViReport { worst: 0.0, monotone: true, ordered: true, max_states: 0, interior: 0 };
    let mut done = 0;
    while done < instances {
        let text = VI_FORMULAS[r.random_range(0..VI_FORMULAS.len())];
        let dfa = Arc::new(Dfa::from_formula(&parse(text, &ap).unwrap(), &ap).unwrap());
        let cells = r.random_range(1..=5);
        let imdp = random_imdp(&mut r, cells, 2);
        let nz = dfa.num_states();
        let free = (0..nz)
            .flat_map(|z| (0..cells).map(move |q| (q, z)))
            .filter(|&(_, z)| !dfa.is_accepting(z) && !dfa.is_sink(z))
            .count();
        if free > 10 {
            continue;
        }
        let p = Pimdp::build(imdp.clone(), dfa.clone()).unwrap();
        if p.num_states() > 30 {
            continue;
        }
        let bf = brute_force(&imdp, &dfa);
        rep.max_states = rep.max_states.max(p.num_states());
        let res = synthesize(&p, &settings, None);
        for s in 0..p.num_states() {
            let (q, z) = p.state(s);
            let k = z * bf.num_q + q;
            if res.lower[s] > 1e-9 && res.lower[s] < 1.0 - 1e-9 {
                rep.interior += 1;
            }
            rep.worst = rep.worst.max((res.lower[s] - bf.lower[k]).abs()).max((res.upper[s] - bf.upper[k]).abs());
            if res.lower[s] > res.upper[s] + 1e-12 || res.policy_lower[s] > res.policy_upper[s] + 1e-12 {
                rep.ordered = false;
            }
        }
        // every iterate must be a sub-solution, T(v) ≥ v, so the sequence
        // increases without the clamp ever acting
        let mut prev = vec![0.0; p.num_states()];
        for k in 1..=30 {
            let cut = SynthesisSettings { tolerance: 0.0, max_iterations: k };
            let f = olsynth::synthesis::robust_reach(&p, Objective::Minimize, &cut);
            let t = bellman_min(&p, &f.values);
            if f.values.iter().zip(&prev).any(|(a, b)| a < b) || t.iter().zip(&f.values).any(|(a, b)| *a < b - 1e-12) {
                rep.monotone = false;
            }
            prev = f.values;
        }
        done += 1;
    }
    rep
}
