//! Plant simulation and Monte Carlo evaluation of the online controller.

mod monte_carlo;
mod plant;

pub use monte_carlo::{episode_rng, run_batch, write_stats_csv, BatchStats, OutcomeCounts};
pub use plant::{sample_dataset, Dynamics, DynamicsKind, Plant, Table};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("drift table: {0}")]
    Table(String),
    #[error("io: {0}")]
    Io(String),
    #[error("noise standard deviations must be {0} finite nonnegative numbers")]
    BadNoise(usize),
    #[error("unknown action {0}")]
    UnknownAction(usize),
    #[error("state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}
