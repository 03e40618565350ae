use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Plant;
use crate::online::{Controller, GpMode, Metrics, OnlineError, Outcome, RunRecord};

/// Noise stream of episode `episode` from start `start`. Every mode and metric
/// set sees the same stream for the same pair.
pub fn episode_rng(seed: u64, start: usize, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((start as u64) << 32) | episode as u64);
    rng
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub satisfied: usize,
    pub violated: usize,
    pub timeout: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Satisfied => self.satisfied += 1,
            Outcome::Violated => self.violated += 1,
            Outcome::Timeout => self.timeout += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.satisfied + self.violated + self.timeout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub start: Vec<f64>,
    pub mode: GpMode,
    pub metrics: Metrics,
    pub counts: OutcomeCounts,
    pub mean_steps: f64,
    pub mean_accepted_updates: f64,
    pub nesting_violations: usize,
    /// Mean wall time per step; left out of the CSV.
    #[serde(skip)]
    pub mean_step_seconds: f64,
}

impl BatchStats {
    fn rate(&self, n: usize) -> f64 {
        n as f64 / self.counts.total().max(1) as f64
    }

    pub fn p_sat(&self) -> f64 {
        self.rate(self.counts.satisfied)
    }

    pub fn p_viol(&self) -> f64 {
        self.rate(self.counts.violated)
    }

    pub fn p_timeout(&self) -> f64 {
        self.rate(self.counts.timeout)
    }
}

/// Runs `episodes` independent episodes from `x0`, each starting from a fresh
/// copy of `base`. `on_record` sees every finished run in order.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    base: &Controller,
    plant: &Plant,
    x0: &[f64],
    start_index: usize,
    mode: GpMode,
    metrics: Metrics,
    episodes: usize,
    seed: u64,
    mut on_record: impl FnMut(&RunRecord),
) -> Result<BatchStats, OnlineError> {
    let mut counts = OutcomeCounts::default();
    let (mut steps, mut updates, mut nesting, mut secs, mut nsteps) = (0usize, 0usize, 0usize, 0.0, 0usize);
    for e in 0..episodes {
        let mut c = base.clone();
        let mut rng = episode_rng(seed, start_index, e);
        let r = c.run(plant, x0, mode, metrics, e, &mut rng)?;
        counts.add(r.outcome);
        steps += r.steps.len();
        updates += r.updates_accepted;
        nesting += r.nesting.violations;
        secs += r.step_seconds.iter().sum::<f64>();
        nsteps += r.step_seconds.len();
        on_record(&r);
    }
    let n = episodes.max(1) as f64;
    Ok(BatchStats {
        start: x0.to_vec(),
        mode,
        metrics,
        counts,
        mean_steps: steps as f64 / n,
        mean_accepted_updates: updates as f64 / n,
        nesting_violations: nesting,
        mean_step_seconds: if nsteps > 0 { secs / nsteps as f64 } else { 0.0 },
    })
}

/// Writes one row per batch after `#`-prefixed header lines.
pub fn write_stats_csv<W: Write>(stats: &[BatchStats], header: &[String], mut w: W) -> std::io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "start,mode,metrics,episodes,satisfied,violated,timeout,p_sat,p_viol,p_timeout,mean_steps,mean_accepted_updates,nesting_violations")?;
    for s in stats {
        let start: Vec<String> = s.start.iter().map(|v| format!("{v}")).collect();
        writeln!(
            w,
            "\"({})\",{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.3},{:.3},{}",
            start.join(" "),
            s.mode.name(),
            s.metrics.name(),
            s.counts.total(),
            s.counts.satisfied,
            s.counts.violated,
            s.counts.timeout,
            s.p_sat(),
            s.p_viol(),
            s.p_timeout(),
            s.mean_steps,
            s.mean_accepted_updates,
            s.nesting_violations
        )?;
    }
    Ok(())
}
