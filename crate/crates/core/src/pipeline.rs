//! End-to-end assembly from a [`Config`]: plant, dataset, GPs, abstraction,
//! product and offline strategy.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::abstraction::{build_imdp, AbstractionError, BuildReport, NoiseModel, Partition};
use crate::config::{Config, ConfigError};
use crate::gp::{ActionModel, Dataset, GpError, GpSettings};
use crate::imdp::{ImdpError, Pimdp};
use crate::ltlf::{parse, Alphabet, Dfa, LtlfError};
use crate::online::{Controller, OnlineError};
use crate::sim::{sample_dataset, Dynamics, DynamicsKind, Plant, SimError, Table};
use crate::synthesis::{synthesize, ValueResult};

/// Errors tagged with the stage that raised them.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("ltlf: {0}")]
    Ltlf(#[from] LtlfError),
    #[error("gp: {0}")]
    Gp(#[from] GpError),
    #[error("abstraction: {0}")]
    Abstraction(#[from] AbstractionError),
    #[error("imdp: {0}")]
    Imdp(#[from] ImdpError),
    #[error("sim: {0}")]
    Sim(#[from] SimError),
    #[error("online: {0}")]
    Online(#[from] OnlineError),
}

/// Stream reserved for dataset generation; episodes use streams below it.
pub const DATASET_STREAM: u64 = u64::MAX;

pub fn plant(cfg: &Config) -> Result<Plant, PipelineError> {
    let dynamics = match cfg.system.dynamics {
        DynamicsKind::Benchmark => Dynamics::Benchmark,
        DynamicsKind::Tabulated => {
            let p = cfg.system.table.as_ref().expect("validated");
            let p = cfg.resolve(p);
            if !p.exists() {
                return Err(ConfigError::MissingFile(p).into());
            }
            Dynamics::Tabulated(Table::load(&p)?)
        }
    };
    Ok(Plant::new(dynamics, cfg.system.noise_std.clone())?)
}

/// Loads the configured dataset, or samples one from the plant.
pub fn dataset(cfg: &Config, plant: &Plant) -> Result<Dataset, PipelineError> {
    match &cfg.data.path {
        Some(p) => {
            let p = cfg.resolve(p);
            if !p.exists() {
                return Err(ConfigError::MissingFile(p).into());
            }
            let d = Dataset::load(&p, plant.num_actions())?;
            if d.dim() != cfg.dim() {
                return Err(GpError::DimensionMismatch { expected: cfg.dim(), got: d.dim() }.into());
            }
            Ok(d)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(DATASET_STREAM);
            Ok(sample_dataset(plant, cfg.data.samples_per_action, &cfg.bounds(), &mut rng)?)
        }
    }
}

pub fn alphabet(cfg: &Config) -> Result<Alphabet, PipelineError> {
    Ok(Alphabet::new(cfg.props())?)
}

pub fn dfa(cfg: &Config, ap: &Alphabet) -> Result<Dfa, PipelineError> {
    let f = parse(&cfg.spec.formula, ap)?;
    Ok(Dfa::from_formula_capped(&f, ap, cfg.spec.max_dfa_states)?)
}

pub fn partition(cfg: &Config, ap: &Alphabet) -> Result<Partition, PipelineError> {
    Ok(Partition::build(cfg.bounds(), &cfg.space.cells_per_dim, &cfg.space.regions, ap, cfg.space.max_cells)?)
}

pub fn fit_models(data: &Dataset, gp: &[GpSettings]) -> Result<Vec<ActionModel>, PipelineError> {
    gp.iter().enumerate().map(|(u, g)| Ok(ActionModel::fit_global(data, u, &g.kernel, &g.bounds, g.target)?)).collect()
}

/// Everything the offline stage produces.
#[derive(Debug, Clone)]
pub struct Offline {
    pub data: Dataset,
    pub gp: Vec<GpSettings>,
    pub models: Vec<ActionModel>,
    pub noise: NoiseModel,
    pub pimdp: Pimdp,
    pub values: ValueResult,
    pub report: BuildReport,
}

impl Offline {
    pub fn build(cfg: &Config, plant: &Plant, data: Dataset) -> Result<Self, PipelineError> {
        let ap = alphabet(cfg)?;
        let dfa = Arc::new(dfa(cfg, &ap)?);
        let partition = Arc::new(partition(cfg, &ap)?);
        let gp = cfg.gp_settings(plant.num_actions());
        let models = fit_models(&data, &gp)?;
        let noise = NoiseModel::new(cfg.system.noise_std.clone())?;
        let (imdp, report) = build_imdp(partition, &models, &noise, &cfg.abstraction)?;
        let pimdp = Pimdp::build(imdp, dfa)?;
        let values = synthesize(&pimdp, &cfg.synthesis, None);
        Ok(Offline { data, gp, models, noise, pimdp, values, report })
    }

    /// Offline lower and upper bounds at the initial product state of `x`.
    pub fn bounds_at(&self, x: &[f64]) -> Option<(f64, f64)> {
        let q = self.pimdp.imdp().partition().locate(x);
        let s = self.pimdp.initial_state(q)?;
        Some((self.values.policy_lower[s], self.values.policy_upper[s]))
    }

    pub fn controller(&self, cfg: &Config) -> Controller {
        Controller {
            distances: self.pimdp.distances(),
            pimdp: self.pimdp.clone(),
            values: self.values.clone(),
            data: self.data.clone(),
            global: self.models.clone(),
            gp: self.gp.clone(),
            noise: self.noise.clone(),
            bounds: cfg.abstraction.clone(),
            synthesis: cfg.synthesis.clone(),
            online: cfg.online.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Config {
        Config::from_toml(
            "[space]\ncells_per_dim = [2, 2]\nregions = []\n[spec]\nformula = \"F a\"\nprops = [\"a\"]\n[data]\nsamples_per_action = 10\n",
        )
        .unwrap()
    }

    #[test]
    fn tiny_pipeline_runs() {
        let cfg = tiny();
        let p = plant(&cfg).unwrap();
        let d = dataset(&cfg, &p).unwrap();
        assert_eq!(d.len(), 40);
        let off = Offline::build(&cfg, &p, d).unwrap();
        assert_eq!(off.pimdp.imdp().num_states(), 5);
        // nothing is labelled a, so acceptance is unreachable
        assert!(off.values.upper.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dataset_is_seeded() {
        let cfg = tiny();
        let p = plant(&cfg).unwrap();
        assert_eq!(dataset(&cfg, &p).unwrap(), dataset(&cfg, &p).unwrap());
    }

    #[test]
    fn missing_dataset_names_path() {
        let mut cfg = tiny();
        cfg.data.path = Some("/no/such/data.csv".into());
        let p = plant(&cfg).unwrap();
        let e = dataset(&cfg, &p).unwrap_err();
        assert!(matches!(e, PipelineError::Config(ConfigError::MissingFile(_))));
        assert!(e.to_string().contains("/no/such/data.csv"));
    }
}
