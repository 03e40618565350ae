use serde::{Deserialize, Serialize};

use super::{InfiniteDistance, Metrics, OnlineSettings};
use crate::imdp::{Pimdp, Row};
use crate::ltlf::INFINITE_DISTANCE;
use crate::synthesis::{extremal_expectation, Objective, ValueResult};

/// Criteria of one action at the current augmented state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScore {
    pub action: usize,
    /// Worst-case expectation of the lower satisfaction bound.
    pub lower: f64,
    /// Worst-case expectation of the strategy's upper satisfaction bound.
    pub upper: f64,
    /// Largest probability of entering a sink or leaving the state space.
    pub sink: f64,
    /// Largest expected hop distance to acceptance; `None` when infinite.
    pub distance: Option<f64>,
}

struct Successor {
    lower: f64,
    upper: f64,
    sink: f64,
    distance: Option<u32>,
}

/// Scores each augmented row from DFA state `z` against the current synthesis.
/// Successors missing from the product count as lower 0, upper 1 and
/// unreachable acceptance.
pub fn score_actions(
    rows: &[Row],
    z: usize,
    pimdp: &Pimdp,
    values: &ValueResult,
    distances: &[u32],
    settings: &OnlineSettings,
) -> Vec<ActionScore> {
    let dfa = pimdp.dfa();
    let nq = pimdp.num_regions();
    let out = pimdp.imdp().outside();
    let succ: Vec<Successor> = (0..nq)
        .map(|q| {
            let z2 = pimdp.dfa_successor(z, q);
            if q == out || dfa.is_sink(z2) {
                return Successor { lower: 0.0, upper: 0.0, sink: 1.0, distance: None };
            }
            if dfa.is_accepting(z2) {
                return Successor { lower: 1.0, upper: 1.0, sink: 0.0, distance: Some(0) };
            }
            match pimdp.index_of(q, z2) {
                Some(s) => Successor {
                    lower: values.lower[s],
                    upper: values.policy_upper[s],
                    sink: 0.0,
                    distance: Some(distances[s]).filter(|d| *d != INFINITE_DISTANCE),
                },
                None => Successor { lower: 0.0, upper: 1.0, sink: 0.0, distance: None },
            }
        })
        .collect();
    let max_finite = distances.iter().filter(|d| **d != INFINITE_DISTANCE).max().copied().unwrap_or(0);
    let penalty = f64::from(max_finite) + 1.0;
    let lower_v: Vec<f64> = succ.iter().map(|s| s.lower).collect();
    let upper_v: Vec<f64> = succ.iter().map(|s| s.upper).collect();
    let sink_v: Vec<f64> = succ.iter().map(|s| s.sink).collect();
    let dist_v: Vec<f64> = succ.iter().map(|s| s.distance.map_or(penalty, f64::from)).collect();

    rows.iter()
        .enumerate()
        .map(|(u, row)| {
            let dense = row.dense(nq);
            let lo: Vec<f64> = dense.iter().map(|t| t.lower).collect();
            let hi: Vec<f64> = dense.iter().map(|t| t.upper).collect();
            let ex = |v: &[f64], obj, worst: f64| extremal_expectation(v, &lo, &hi, obj).unwrap_or(worst);
            let distance = match settings.infinite_distance {
                InfiniteDistance::Dominant
                    if succ.iter().zip(&hi).any(|(s, h)| s.distance.is_none() && s.sink == 0.0 && *h > 0.0) =>
                {
                    None
                }
                _ => Some(ex(&dist_v, Objective::Maximize, penalty)),
            };
            ActionScore {
                action: u,
                lower: ex(&lower_v, Objective::Minimize, 0.0),
                upper: ex(&upper_v, Objective::Minimize, 0.0),
                sink: ex(&sink_v, Objective::Maximize, 1.0),
                distance,
            }
        })
        .collect()
}

/// Lexicographic choice: highest lower bound, then highest upper bound, then
/// (when enabled) lowest sink mass and lowest expected distance, then lowest
/// action id. Scores within `tol` of the best are tied at each tier.
pub fn select_action(scores: &[ActionScore], metrics: Metrics, tol: f64) -> usize {
    let mut cand: Vec<&ActionScore> = scores.iter().collect();
    let mut keep = |key: &dyn Fn(&ActionScore) -> f64| {
        let best = cand.iter().map(|s| key(s)).fold(f64::NEG_INFINITY, f64::max);
        cand.retain(|s| key(s) >= best - tol);
    };
    keep(&|s| s.lower);
    keep(&|s| s.upper);
    if metrics != Metrics::Offline {
        keep(&|s| -s.sink);
    }
    if metrics == Metrics::SinkProg {
        keep(&|s| -s.distance.unwrap_or(f64::INFINITY));
    }
    cand.iter().map(|s| s.action).min().unwrap_or(0)
}
