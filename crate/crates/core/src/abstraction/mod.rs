//! Grid abstraction of the learned dynamics into an interval MDP.

mod partition;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Aabb;
use crate::gp::{ActionModel, GpError};
use crate::imdp::{Imdp, ImdpError, Row, Transition};

pub use partition::{Partition, RegionOfInterest, DEFAULT_CELL_CAP};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AbstractionError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("region of interest '{0}' does not lie within the state bounds")]
    RoiOutOfBounds(String),
    #[error("unknown proposition '{0}'")]
    UnknownProp(String),
    #[error("partition exceeds the cap of {cap} cells")]
    TooManyCells { cap: usize },
    #[error("invalid noise model: {0}")]
    BadNoise(String),
    #[error("invalid bound settings: {0}")]
    BadSettings(String),
    #[error("expected {expected} action models, got {got}")]
    ModelCount { expected: usize, got: usize },
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Componentwise independent zero-mean Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub std: Vec<f64>,
}

impl NoiseModel {
    pub fn new(std: Vec<f64>) -> Result<Self, AbstractionError> {
        if std.is_empty() || std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(AbstractionError::BadNoise("standard deviations must be positive".into()));
        }
        Ok(NoiseModel { std })
    }

    /// `P[|w_i| ≤ η]`.
    pub fn interval_prob(&self, i: usize, eta: f64) -> f64 {
        libm::erf(eta / (self.std[i] * std::f64::consts::SQRT_2))
    }

    /// `∏ P[|w_i| ≤ η_i]`.
    pub fn box_prob(&self, eta: &[f64]) -> f64 {
        eta.iter().enumerate().map(|(i, &e)| self.interval_prob(i, e)).product()
    }
}

/// How the probability of the complementary events is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailBound {
    /// `∏ P[|w_i| > η_i]` and `∏ P[‖f̂_i − f_i‖ > ε_i]`.
    #[default]
    Product,
    /// `1 − ∏ P[|w_i| ≤ η_i]` and `1 − ∏ P[‖f̂_i − f_i‖ ≤ ε_i]`, valid for any dimension.
    Union,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSettings {
    /// Candidate confidences for the regression error radius.
    pub deltas: Vec<f64>,
    /// Candidate noise radii in units of the per-dimension noise scale.
    pub eta_multipliers: Vec<f64>,
    /// Lattice points per dimension for the posterior-std supremum.
    pub std_lattice: usize,
    /// Lattice points per dimension for the image box.
    pub image_lattice: usize,
    pub tail: TailBound,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            deltas: vec![0.2, 0.1, 0.05, 0.01],
            eta_multipliers: vec![1.0, 2.0, 3.0],
            std_lattice: 4,
            image_lattice: 3,
            tail: TailBound::Product,
        }
    }
}

impl BoundSettings {
    pub fn validate(&self) -> Result<(), AbstractionError> {
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(AbstractionError::BadSettings("deltas must be nonempty and lie in (0, 1)".into()));
        }
        if self.eta_multipliers.is_empty() || self.eta_multipliers.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(AbstractionError::BadSettings("eta multipliers must be positive".into()));
        }
        if self.std_lattice < 2 || self.image_lattice < 2 {
            return Err(AbstractionError::BadSettings("lattices need at least 2 points per dimension".into()));
        }
        Ok(())
    }
}

/// Probabilities entering the interval formulas for one `(ε, η)` choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailProbs {
    /// `∏ P[‖f̂_i − f_i‖ ≤ ε_i]`.
    pub err_prob: f64,
    /// Bound on the probability that some regression error exceeds its radius.
    pub err_tail: f64,
    /// `∏ P[|w_i| ≤ η_i]`.
    pub noise_prob: f64,
    /// Bound on the probability that some noise component exceeds its radius.
    pub noise_tail: f64,
}

impl TailProbs {
    pub fn new(deltas: &[f64], noise: &NoiseModel, eta: &[f64], tail: TailBound) -> Self {
        let err_prob: f64 = deltas.iter().map(|d| 1.0 - d).product();
        let probs: Vec<f64> = eta.iter().enumerate().map(|(i, &e)| noise.interval_prob(i, e)).collect();
        let noise_prob: f64 = probs.iter().product();
        let (err_tail, noise_tail) = match tail {
            TailBound::Product => (deltas.iter().product(), probs.iter().map(|p| 1.0 - p).product()),
            TailBound::Union => (1.0 - err_prob, 1.0 - noise_prob),
        };
        TailProbs { err_prob, err_tail, noise_prob, noise_tail }
    }

    /// Upper bound for a destination the image cannot reach.
    pub fn far_upper(&self) -> f64 {
        (self.noise_tail * self.err_prob + self.err_tail).clamp(0.0, 1.0)
    }

    /// `[p̌, p̂]` given whether the expanded destination meets the image and
    /// whether the image lies inside the shrunk destination.
    pub fn interval(&self, hit: bool, contained: bool) -> (f64, f64) {
        let hit = if hit { 1.0 } else { 0.0 };
        let upper = ((hit * self.noise_prob + self.noise_tail) * self.err_prob + self.err_tail).clamp(0.0, 1.0);
        let lower = if contained { (self.err_prob * self.noise_prob).clamp(0.0, 1.0) } else { 0.0 };
        debug_assert!(lower <= upper + 1e-15);
        (lower, upper.max(lower))
    }
}

/// Interval towards one cell `dest` for a predicted image box and margin `ε + η`.
pub fn cell_bounds(dest: &Aabb, image: &Aabb, margin: &[f64], probs: &TailProbs) -> (f64, f64) {
    let hit = dest.expand(margin).intersects(image);
    let contained = dest.shrink(margin).is_some_and(|s| s.contains_box(image));
    probs.interval(hit, contained)
}

/// Interval towards `R^n \ X`.
pub fn outside_bounds(x: &Aabb, image: &Aabb, margin: &[f64], probs: &TailProbs) -> (f64, f64) {
    let hit = !x.shrink(margin).is_some_and(|s| s.contains_box(image));
    let contained = !x.expand(margin).intersects(image);
    probs.interval(hit, contained)
}

/// Row of transition intervals out of `source` under one action, with the
/// `(δ, η)` pair that was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedRow {
    pub row: Row,
    pub delta: f64,
    pub eta: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// `false` when no candidate satisfied the sum conditions and the
    /// reachable entries were widened to upper bound 1.
    pub feasible: bool,
}

/// Computes the transition intervals from `source` (a cell or a single point)
/// under `model`, searching the configured `(δ, η)` grid for the largest total
/// lower bound, ties going to the smallest total upper bound.
pub fn bound_row(
    partition: &Partition,
    model: &ActionModel,
    action: usize,
    noise: &NoiseModel,
    settings: &BoundSettings,
    source: &Aabb,
) -> Result<BoundedRow, AbstractionError> {
    let n = partition.dim();
    let image = model.image_box(source, settings.image_lattice);
    let sup = model.dims()[0].sup_std(source, settings.std_lattice);
    let num_states = partition.num_states();
    let mut best: Option<(f64, f64, BoundedRow)> = None;
    let mut fallback: Option<(f64, BoundedRow)> = None;
    for &delta in &settings.deltas {
        let epsilon =
            model.dims().iter().map(|g| g.beta(delta).map(|b| b * sup)).collect::<Result<Vec<f64>, GpError>>()?;
        let deltas = vec![delta; n];
        for &k in &settings.eta_multipliers {
            let eta: Vec<f64> = noise.std.iter().map(|s| k * s).collect();
            let margin: Vec<f64> = epsilon.iter().zip(&eta).map(|(e, h)| e + h).collect();
            let probs = TailProbs::new(&deltas, noise, &eta, settings.tail);
            let row = row_for(partition, action, &image, &margin, &probs);
            let lo = row.lower_sum();
            let hi = row.upper_sum(num_states);
            let candidate = BoundedRow { row, delta, eta, epsilon: epsilon.clone(), feasible: true };
            if row_feasible(lo, hi) {
                let better = match &best {
                    None => true,
                    Some((blo, bhi, _)) => lo > blo + 1e-12 || (lo >= blo - 1e-12 && hi < bhi - 1e-12),
                };
                if better {
                    best = Some((lo, hi, candidate));
                }
            } else if fallback.as_ref().is_none_or(|(flo, _)| lo > flo + 1e-12) {
                fallback = Some((lo, candidate));
            }
        }
    }
    if let Some((_, _, b)) = best {
        return Ok(b);
    }
    let (_, mut b) = fallback.expect("at least one candidate");
    let tail = b.row.tail;
    for t in &mut b.row.entries {
        if t.upper > tail {
            t.upper = 1.0;
        }
    }
    b.feasible = false;
    Ok(b)
}

fn row_feasible(lower_sum: f64, upper_sum: f64) -> bool {
    lower_sum <= 1.0 + 1e-12 && upper_sum >= 1.0 - 1e-12
}

fn row_for(partition: &Partition, action: usize, image: &Aabb, margin: &[f64], probs: &TailProbs) -> Row {
    let tail = probs.far_upper();
    let mut entries = Vec::new();
    if let Some(ranges) = partition.hit_ranges(image, margin) {
        for q in partition.cells_in(&ranges) {
            let (lower, upper) = cell_bounds(&partition.cell_box(q), image, margin, probs);
            entries.push(Transition { dst: q, lower, upper });
        }
    }
    let (lower, upper) = outside_bounds(partition.bounds(), image, margin, probs);
    entries.push(Transition { dst: partition.outside(), lower, upper });
    Row { action, entries, tail }
}

/// Summary of an abstraction build.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    /// `(cell, action)` pairs whose rows had to be widened.
    pub infeasible: Vec<(usize, usize)>,
    /// Selected `(δ, η multiplier index)` counts, for diagnostics.
    pub chosen_deltas: Vec<f64>,
}

/// Builds the interval MDP over `partition` with one model per action.
pub fn build_imdp(
    partition: Arc<Partition>,
    models: &[ActionModel],
    noise: &NoiseModel,
    settings: &BoundSettings,
) -> Result<(Imdp, BuildReport), AbstractionError> {
    settings.validate()?;
    if noise.std.len() != partition.dim() {
        return Err(AbstractionError::BadNoise(format!(
            "{} noise scales for a {}-dimensional state",
            noise.std.len(),
            partition.dim()
        )));
    }
    if models.is_empty() {
        return Err(AbstractionError::ModelCount { expected: 1, got: 0 });
    }
    let mut report = BuildReport::default();
    let mut rows = Vec::with_capacity(partition.num_cells());
    for q in 0..partition.num_cells() {
        let cell = partition.cell_box(q);
        let mut qrows = Vec::with_capacity(models.len());
        for (u, m) in models.iter().enumerate() {
            let b = bound_row(&partition, m, u, noise, settings, &cell)?;
            if !b.feasible {
                report.infeasible.push((q, u));
            }
            report.chosen_deltas.push(b.delta);
            qrows.push(b.row);
        }
        rows.push(qrows);
    }
    let imdp = Imdp::new(partition, models.len(), rows).map_err(|e| match e {
        ImdpError::Partition(p) => p,
        other => AbstractionError::BadGrid(other.to_string()),
    })?;
    Ok((imdp, report))
}
