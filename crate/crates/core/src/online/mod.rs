//! Online control: singleton augmentation of the current state, lexicographic
//! action selection, local-GP refinement of the abstraction and periodic
//! strategy re-synthesis.

mod select;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{bound_row, AbstractionError, BoundSettings, NoiseModel, Partition};
use crate::geometry::Aabb;
use crate::gp::{ActionModel, Dataset, GpError, GpSettings};
use crate::imdp::{Pimdp, Row, Transition};
use crate::sim::{Plant, SimError};
use crate::synthesis::{synthesize, SynthesisSettings, ValueResult};

pub use select::{score_actions, select_action, ActionScore};

#[derive(Debug, thiserror::Error)]
pub enum OnlineError {
    #[error("initial state {0:?} lies outside the state bounds")]
    StartOutside(Vec<f64>),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Which regression models drive the online loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GpMode {
    /// Offline global GPs, never refit.
    #[serde(rename = "global-static")]
    GlobalStatic,
    /// Local GPs on the offline dataset.
    #[serde(rename = "local-static")]
    LocalStatic,
    /// Local GPs on the dataset extended with every observed transition; the
    /// abstraction is refined around every visited state.
    #[serde(rename = "local-update")]
    LocalUpdate,
    /// Global GPs refit on the extended dataset after every step.
    #[serde(rename = "global-update")]
    GlobalUpdate,
}

impl GpMode {
    pub fn name(self) -> &'static str {
        match self {
            GpMode::GlobalStatic => "global-static",
            GpMode::LocalStatic => "local-static",
            GpMode::LocalUpdate => "local-update",
            GpMode::GlobalUpdate => "global-update",
        }
    }

    fn grows_data(self) -> bool {
        matches!(self, GpMode::LocalUpdate | GpMode::GlobalUpdate)
    }
}

impl std::str::FromStr for GpMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "global-static" => Ok(GpMode::GlobalStatic),
            "local-static" => Ok(GpMode::LocalStatic),
            "local-update" => Ok(GpMode::LocalUpdate),
            "global-update" => Ok(GpMode::GlobalUpdate),
            _ => Err(format!("unknown GP mode '{s}'")),
        }
    }
}

/// Which criteria the action selector uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metrics {
    /// Follow the offline strategy of the containing cell.
    #[serde(rename = "offline")]
    Offline,
    /// Lower-bound, upper-bound and sink-mass tiers.
    #[serde(rename = "sink")]
    Sink,
    /// All tiers including the expected distance to acceptance.
    #[serde(rename = "sink+prog")]
    SinkProg,
}

impl Metrics {
    pub fn name(self) -> &'static str {
        match self {
            Metrics::Offline => "offline",
            Metrics::Sink => "sink",
            Metrics::SinkProg => "sink+prog",
        }
    }
}

impl std::str::FromStr for Metrics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "offline" => Ok(Metrics::Offline),
            "sink" => Ok(Metrics::Sink),
            "sink+prog" | "sink-prog" => Ok(Metrics::SinkProg),
            _ => Err(format!("unknown metric set '{s}'")),
        }
    }
}

/// Treatment of successors that cannot reach acceptance in the distance tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InfiniteDistance {
    /// Count them as one hop beyond the largest finite distance.
    #[default]
    Penalty,
    /// Any reachable mass on them makes the expected distance infinite.
    Dominant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSettings {
    /// Neighbours used by each local GP.
    pub local_size: usize,
    /// Accepted transition updates between re-syntheses.
    pub resynth_every: usize,
    /// Chebyshev radius, in cells, of the refined neighbourhood.
    pub neighborhood_radius: usize,
    pub step_bound: usize,
    /// Scores closer than this are tied.
    pub tie_tolerance: f64,
    pub infinite_distance: InfiniteDistance,
    /// Re-synthesize once more when an episode ends with pending updates.
    pub resynth_at_end: bool,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        OnlineSettings {
            local_size: 75,
            resynth_every: 50,
            neighborhood_radius: 1,
            step_bound: 500,
            tie_tolerance: 1e-9,
            infinite_distance: InfiniteDistance::Penalty,
            resynth_at_end: true,
        }
    }
}

/// Transition rows out of the single point `x`, one per model.
pub fn augment(
    x: &[f64],
    partition: &Partition,
    models: &[ActionModel],
    noise: &NoiseModel,
    settings: &BoundSettings,
) -> Result<Vec<Row>, OnlineError> {
    let point = Aabb::point(x);
    models.iter().enumerate().map(|(u, m)| Ok(bound_row(partition, m, u, noise, settings, &point)?.row)).collect()
}

/// One accepted interval replacement. `dst = None` stands for every
/// destination without an explicit entry in either row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEntry {
    pub step: usize,
    pub src: usize,
    pub action: usize,
    pub dst: Option<usize>,
    pub old: (f64, f64),
    pub new: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementLog {
    pub entries: Vec<RefinementEntry>,
    pub attempted: usize,
    pub accepted: usize,
    /// Rows whose merged update would have broken the sum conditions.
    pub rejected_rows: usize,
}

fn subset(new: (f64, f64), old: (f64, f64)) -> bool {
    new.0 >= old.0 && new.1 <= old.1
}

/// Result of merging a recomputed row into the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    /// The merged row, when something strictly tightened and the sum
    /// conditions still hold.
    pub row: Option<Row>,
    /// Strict replacements `(dst, old, new)`; `dst = None` is the implicit tail.
    pub changes: Vec<(Option<usize>, (f64, f64), (f64, f64))>,
    /// Destinations compared.
    pub attempted: usize,
    /// Tightened, but the merged row broke the sum conditions.
    pub rejected: bool,
}

/// Keeps, per destination, the new interval when it lies inside the old one.
pub fn merge_rows(old: &Row, new: &Row, num_states: usize) -> Merge {
    let mut dsts: Vec<usize> = old.entries.iter().chain(&new.entries).map(|t| t.dst).collect();
    dsts.sort_unstable();
    dsts.dedup();
    let mut entries = Vec::with_capacity(dsts.len());
    let mut changes = Vec::new();
    for &d in &dsts {
        let o = old.interval(d);
        let n = new.interval(d);
        let keep = if subset(n, o) {
            if n != o {
                changes.push((Some(d), o, n));
            }
            n
        } else {
            o
        };
        entries.push(Transition { dst: d, lower: keep.0, upper: keep.1 });
    }
    let mut attempted = dsts.len();
    let mut tail = old.tail;
    if dsts.len() < num_states {
        attempted += 1;
        if new.tail < old.tail {
            changes.push((None, (0.0, old.tail), (0.0, new.tail)));
            tail = new.tail;
        }
    }
    if changes.is_empty() {
        return Merge { row: None, changes, attempted, rejected: false };
    }
    let merged = Row { action: old.action, entries, tail };
    if !merged.is_feasible(num_states) {
        return Merge { row: None, changes: Vec::new(), attempted, rejected: true };
    }
    Merge { row: Some(merged), changes, attempted, rejected: false }
}

/// Recomputes the rows of `action` for every cell within the configured
/// radius of the cell containing `x` and applies the tightening merges.
/// Returns the number of accepted interval replacements.
#[allow(clippy::too_many_arguments)]
pub fn refine_transitions(
    pimdp: &mut Pimdp,
    model: &ActionModel,
    action: usize,
    x: &[f64],
    radius: usize,
    noise: &NoiseModel,
    settings: &BoundSettings,
    log: &mut RefinementLog,
    step: usize,
) -> Result<usize, OnlineError> {
    let partition = pimdp.imdp().partition().clone();
    let q = partition.locate(x);
    let n = partition.num_states();
    let mut accepted = 0;
    for c in partition.neighbors(q, radius) {
        let new = bound_row(&partition, model, action, noise, settings, &partition.cell_box(c))?.row;
        let old = pimdp.imdp().row(c, action);
        let m = merge_rows(old, &new, n);
        log.attempted += m.attempted;
        if m.rejected {
            log.rejected_rows += 1;
        }
        if let Some(row) = m.row {
            accepted += m.changes.len();
            log.accepted += m.changes.len();
            log.entries.extend(m.changes.into_iter().map(|(dst, o, nw)| RefinementEntry {
                step,
                src: c,
                action,
                dst,
                old: o,
                new: nw,
            }));
            pimdp.imdp_mut().set_row(c, row);
        }
    }
    Ok(accepted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Satisfied,
    Violated,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub x: Vec<f64>,
    pub region: usize,
    pub dfa_state: usize,
    pub action: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub scores: Vec<ActionScore>,
    /// Accepted transition updates so far in the episode.
    pub accepted_updates: usize,
}

/// Interval containment check between two consecutive syntheses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NestingCheck {
    pub resyntheses: usize,
    /// States whose new `[lower, upper]` is not inside the previous one.
    pub violations: usize,
    /// Largest amount by which a bound moved the wrong way.
    pub worst_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub mode: GpMode,
    pub metrics: Metrics,
    pub start: Vec<f64>,
    pub outcome: Outcome,
    pub steps: Vec<StepRecord>,
    pub final_state: Vec<f64>,
    pub final_dfa_state: usize,
    pub updates_attempted: usize,
    pub updates_accepted: usize,
    pub rejected_rows: usize,
    pub nesting: NestingCheck,
    /// Wall time per step in seconds; not serialized so records stay reproducible.
    #[serde(skip)]
    pub step_seconds: Vec<f64>,
    #[serde(skip)]
    pub log: RefinementLog,
}

/// Everything the online loop reads and mutates during an episode.
#[derive(Debug, Clone)]
pub struct Controller {
    pub pimdp: Pimdp,
    pub values: ValueResult,
    pub distances: Vec<u32>,
    pub data: Dataset,
    /// Offline models, one per action.
    pub global: Vec<ActionModel>,
    /// Fitting parameters, one entry per action.
    pub gp: Vec<GpSettings>,
    pub noise: NoiseModel,
    pub bounds: BoundSettings,
    pub synthesis: SynthesisSettings,
    pub online: OnlineSettings,
}

impl Controller {
    fn models_at(&self, x: &[f64], mode: GpMode) -> Result<Vec<ActionModel>, OnlineError> {
        let na = self.pimdp.num_actions();
        Ok(match mode {
            GpMode::GlobalStatic | GpMode::GlobalUpdate => self.global.clone(),
            GpMode::LocalStatic | GpMode::LocalUpdate => (0..na)
                .map(|u| {
                    let g = &self.gp[u];
                    ActionModel::fit_local(&self.data, x, u, self.online.local_size, &g.kernel, &g.bounds, g.target)
                })
                .collect::<Result<_, _>>()?,
        })
    }

    /// Re-synthesizes from the current values and records interval nesting.
    pub fn resynthesize(&mut self, check: &mut NestingCheck) {
        let next = synthesize(&self.pimdp, &self.synthesis, Some(&self.values));
        for s in 0..next.lower.len() {
            let gap = (self.values.lower[s] - next.lower[s]).max(next.upper[s] - self.values.upper[s]);
            if gap > 1e-9 {
                check.violations += 1;
            }
            check.worst_gap = check.worst_gap.max(gap);
        }
        check.resyntheses += 1;
        self.values = next;
        self.distances = self.pimdp.distances();
    }

    /// Runs one episode from `x0` until acceptance, violation or the step bound.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        plant: &Plant,
        x0: &[f64],
        mode: GpMode,
        metrics: Metrics,
        run: usize,
        rng: &mut R,
    ) -> Result<RunRecord, OnlineError> {
        let partition = self.pimdp.imdp().partition().clone();
        if !partition.bounds().contains(x0) {
            return Err(OnlineError::StartOutside(x0.to_vec()));
        }
        let dfa = self.pimdp.dfa().clone();
        let out = partition.outside();
        let mut x = x0.to_vec();
        let mut q = partition.locate(&x);
        let mut z = dfa.step(dfa.initial(), partition.label(q));
        let mut steps = Vec::new();
        let mut step_seconds = Vec::new();
        let mut log = RefinementLog::default();
        let mut nesting = NestingCheck::default();
        let mut pending = 0usize;
        let outcome = loop {
            if q == out || dfa.is_sink(z) {
                break Outcome::Violated;
            }
            if dfa.is_accepting(z) {
                break Outcome::Satisfied;
            }
            if steps.len() >= self.online.step_bound {
                break Outcome::Timeout;
            }
            let k = steps.len();
            let t0 = Instant::now();
            let (u, scores) = if metrics == Metrics::Offline {
                let s = self.pimdp.index_of(q, z);
                (s.map_or(0, |s| self.values.strategy[s]), Vec::new())
            } else {
                let models = self.models_at(&x, mode)?;
                let rows = augment(&x, &partition, &models, &self.noise, &self.bounds)?;
                let scores = score_actions(&rows, z, &self.pimdp, &self.values, &self.distances, &self.online);
                let u = select_action(&scores, metrics, self.online.tie_tolerance);
                if !mode.grows_data() {
                    (u, scores)
                } else {
                    let accepted = refine_transitions(
                        &mut self.pimdp,
                        &models[u],
                        u,
                        &x,
                        self.online.neighborhood_radius,
                        &self.noise,
                        &self.bounds,
                        &mut log,
                        k,
                    )?;
                    pending += accepted;
                    (u, scores)
                }
            };
            let next = plant.step(&x, u, rng)?;
            if mode.grows_data() && metrics != Metrics::Offline {
                self.data.push(x.clone(), u, next.clone())?;
                if mode == GpMode::GlobalUpdate {
                    let g = &self.gp[u];
                    self.global[u] = ActionModel::fit_global(&self.data, u, &g.kernel, &g.bounds, g.target)?;
                }
            }
            if pending >= self.online.resynth_every.max(1) {
                self.resynthesize(&mut nesting);
                pending = 0;
            }
            step_seconds.push(t0.elapsed().as_secs_f64());
            steps.push(StepRecord {
                step: k,
                x: x.clone(),
                region: q,
                dfa_state: z,
                action: u,
                scores,
                accepted_updates: log.accepted,
            });
            x = next;
            q = partition.locate(&x);
            z = dfa.step(z, partition.label(q));
        };
        if self.online.resynth_at_end && pending > 0 {
            self.resynthesize(&mut nesting);
        }
        Ok(RunRecord {
            run,
            mode,
            metrics,
            start: x0.to_vec(),
            outcome,
            steps,
            final_state: x,
            final_dfa_state: z,
            updates_attempted: log.attempted,
            updates_accepted: log.accepted,
            rejected_rows: log.rejected_rows,
            nesting,
            step_seconds,
            log,
        })
    }
}
