//! TOML configuration of the whole pipeline. Every field has a default that
//! reproduces the planar benchmark; relative paths resolve against the
//! directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abstraction::{BoundSettings, RegionOfInterest, DEFAULT_CELL_CAP};
use crate::geometry::Aabb;
use crate::gp::{BoundParams, GpSettings, KernelParams, TargetMode};
use crate::ltlf::DEFAULT_MAX_STATES;
use crate::online::{GpMode, Metrics, OnlineSettings};
use crate::sim::DynamicsKind;
use crate::synthesis::SynthesisSettings;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
}

fn field(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub dynamics: DynamicsKind,
    /// Drift table for tabulated dynamics.
    pub table: Option<PathBuf>,
    pub noise_std: Vec<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig { dynamics: DynamicsKind::Benchmark, table: None, noise_std: vec![0.1, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Existing dataset; when absent one is sampled from the plant.
    pub path: Option<PathBuf>,
    pub samples_per_action: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: None, samples_per_action: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells_per_dim: Vec<usize>,
    pub max_cells: usize,
    pub regions: Vec<RegionOfInterest>,
}

fn roi(prop: &str, lo: [f64; 2], hi: [f64; 2]) -> RegionOfInterest {
    RegionOfInterest { prop: prop.into(), region: Aabb { lo: lo.to_vec(), hi: hi.to_vec() } }
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
            cells_per_dim: vec![20, 20],
            max_cells: DEFAULT_CELL_CAP,
            regions: vec![
                roi("O", [-0.4, -0.4], [0.4, 0.4]),
                roi("D1", [-1.6, 0.8], [-0.8, 1.6]),
                roi("D2", [0.8, -1.6], [1.6, -0.8]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecConfig {
    pub formula: String,
    /// Atomic propositions in symbol-bit order; empty means the region
    /// propositions in order of first appearance.
    pub props: Vec<String>,
    pub max_dfa_states: usize,
}

impl Default for SpecConfig {
    fn default() -> Self {
        SpecConfig { formula: "G(!O) & F(D1) & F(D2)".into(), props: Vec::new(), max_dfa_states: DEFAULT_MAX_STATES }
    }
}

/// Per-action replacement of any of the shared GP fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GpOverride {
    pub action: usize,
    pub lengthscales: Option<Vec<f64>>,
    pub signal_variance: Option<f64>,
    pub noise_variance: Option<f64>,
    pub rkhs_bound: Option<f64>,
    pub noise_scale: Option<f64>,
    pub info_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// `B` in the error bound.
    pub rkhs_bound: f64,
    /// `R` in the error bound; defaults to the noise standard deviation.
    pub noise_scale: Option<f64>,
    /// Information gain; defaults to `m·ln(1+m)` for `m` training points.
    pub info_gain: Option<f64>,
    pub target: TargetMode,
    pub actions: Vec<GpOverride>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            lengthscales: vec![1.0, 1.0],
            signal_variance: 0.1,
            noise_variance: 0.01,
            rkhs_bound: 2.0,
            noise_scale: None,
            info_gain: None,
            target: TargetMode::Increment,
            actions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub starts: Vec<Vec<f64>>,
    pub episodes: usize,
    pub modes: Vec<GpMode>,
    pub metrics: Vec<Metrics>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            starts: vec![vec![-1.5, -1.5], vec![1.5, 1.5], vec![0.0, -0.9]],
            episodes: 500,
            modes: vec![GpMode::GlobalStatic, GpMode::LocalStatic, GpMode::LocalUpdate],
            metrics: vec![Metrics::Offline, Metrics::Sink, Metrics::SinkProg],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub system: SystemConfig,
    pub data: DataConfig,
    pub space: SpaceConfig,
    pub spec: SpecConfig,
    pub gp: GpConfig,
    pub abstraction: BoundSettings,
    pub synthesis: SynthesisSettings,
    pub online: OnlineSettings,
    pub simulation: SimulationConfig,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            system: SystemConfig::default(),
            data: DataConfig::default(),
            space: SpaceConfig::default(),
            spec: SpecConfig::default(),
            gp: GpConfig::default(),
            abstraction: BoundSettings::default(),
            synthesis: SynthesisSettings::default(),
            online: OnlineSettings::default(),
            simulation: SimulationConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    /// Parses and validates; file references are not checked here.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::MissingFile(path.to_path_buf()));
        }
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), msg: e.to_string() })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// The fully defaulted configuration, for manifests and hashing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dim(&self) -> usize {
        self.space.lo.len()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb { lo: self.space.lo.clone(), hi: self.space.hi.clone() }
    }

    /// Proposition order used for symbols.
    pub fn props(&self) -> Vec<String> {
        if !self.spec.props.is_empty() {
            return self.spec.props.clone();
        }
        let mut out: Vec<String> = Vec::new();
        for r in &self.space.regions {
            if !out.contains(&r.prop) {
                out.push(r.prop.clone());
            }
        }
        out
    }

    /// GP settings of every action, overrides applied.
    pub fn gp_settings(&self, num_actions: usize) -> Vec<GpSettings> {
        let n = self.dim();
        (0..num_actions)
            .map(|u| {
                let o = self.gp.actions.iter().find(|o| o.action == u).cloned().unwrap_or_default();
                let noise_variance = o.noise_variance.unwrap_or(self.gp.noise_variance);
                let bound = BoundParams {
                    rkhs_bound: o.rkhs_bound.unwrap_or(self.gp.rkhs_bound),
                    noise_scale: o.noise_scale.or(self.gp.noise_scale).unwrap_or(noise_variance.sqrt()),
                    info_gain: o.info_gain.or(self.gp.info_gain),
                };
                GpSettings {
                    kernel: KernelParams {
                        lengthscales: o.lengthscales.unwrap_or_else(|| self.gp.lengthscales.clone()),
                        signal_variance: o.signal_variance.unwrap_or(self.gp.signal_variance),
                        noise_variance,
                    },
                    bounds: vec![bound; n],
                    target: self.gp.target,
                }
            })
            .collect()
    }

    /// Field-level checks that need no files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.space.lo.len();
        if n == 0 || self.space.hi.len() != n {
            return Err(field("space.hi", format!("needs {n} entries to match space.lo")));
        }
        if self.space.lo.iter().zip(&self.space.hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(field("space", "every lo must be finite and below hi"));
        }
        if self.space.cells_per_dim.len() != n || self.space.cells_per_dim.contains(&0) {
            return Err(field("space.cells_per_dim", format!("needs {n} positive entries")));
        }
        for (i, r) in self.space.regions.iter().enumerate() {
            if r.region.dim() != n || Aabb::new(r.region.lo.clone(), r.region.hi.clone()).is_none() {
                return Err(field(&format!("space.regions[{i}]"), "malformed box"));
            }
        }
        if self.system.noise_std.len() != n || self.system.noise_std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(field("system.noise_std", format!("needs {n} positive entries")));
        }
        match self.system.dynamics {
            DynamicsKind::Benchmark if n != 2 => {
                return Err(field("system.dynamics", "the benchmark plant is 2-dimensional"))
            }
            DynamicsKind::Tabulated if self.system.table.is_none() => {
                return Err(field("system.table", "required for tabulated dynamics"))
            }
            _ => {}
        }
        if self.spec.formula.trim().is_empty() {
            return Err(field("spec.formula", "empty"));
        }
        if self.gp.lengthscales.len() != n {
            return Err(field("gp.lengthscales", format!("needs {n} entries")));
        }
        let actions = self.gp.actions.iter().map(|o| o.action + 1).max().unwrap_or(1);
        for (i, s) in self.gp_settings(actions).iter().enumerate() {
            s.kernel.validate(n).map_err(|e| field(&format!("gp (action {i})"), e.to_string()))?;
            let b = &s.bounds[0];
            if !(b.rkhs_bound >= 0.0) || !(b.noise_scale >= 0.0) || b.info_gain.is_some_and(|g| !(g >= 0.0)) {
                return Err(field(&format!("gp (action {i})"), "error-bound constants must be nonnegative"));
            }
        }
        self.abstraction.validate().map_err(|e| field("abstraction", e.to_string()))?;
        if !(self.synthesis.tolerance > 0.0) || self.synthesis.max_iterations == 0 {
            return Err(field("synthesis", "tolerance and max_iterations must be positive"));
        }
        let o = &self.online;
        if o.local_size == 0 {
            return Err(field("online.local_size", "must be positive"));
        }
        if o.resynth_every == 0 {
            return Err(field("online.resynth_every", "must be positive"));
        }
        if !(o.tie_tolerance >= 0.0) {
            return Err(field("online.tie_tolerance", "must be nonnegative"));
        }
        for (i, s) in self.simulation.starts.iter().enumerate() {
            if s.len() != n || !self.bounds().contains(s) {
                return Err(field(&format!("simulation.starts[{i}]"), "must be a point inside the state bounds"));
            }
        }
        Ok(())
    }

    /// Checks that every referenced file exists.
    pub fn check_files(&self) -> Result<(), ConfigError> {
        for p in self.data.path.iter().chain(&self.system.table) {
            let r = self.resolve(p);
            if !r.exists() {
                return Err(ConfigError::MissingFile(r));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_benchmark() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.props(), vec!["O", "D1", "D2"]);
        let s = c.gp_settings(4);
        assert_eq!(s.len(), 4);
        assert!((s[0].bounds[1].noise_scale - 0.1).abs() < 1e-15);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn field_errors_name_the_field() {
        let e = Config::from_toml("[space]\ncells_per_dim = [3]\n").unwrap_err();
        assert!(e.to_string().starts_with("space.cells_per_dim"), "{e}");
        let e = Config::from_toml("[online]\nlocal_sise = 5\n").unwrap_err();
        assert!(e.to_string().contains("local_sise"), "{e}");
        let e = Config::from_toml("[simulation]\nstarts = [[3.0, 0.0]]\n").unwrap_err();
        assert!(e.to_string().contains("simulation.starts[0]"), "{e}");
    }

    #[test]
    fn overrides_apply_per_action() {
        let c = Config::from_toml("[[gp.actions]]\naction = 2\nsignal_variance = 0.5\n").unwrap();
        let s = c.gp_settings(4);
        assert_eq!(s[2].kernel.signal_variance, 0.5);
        assert_eq!(s[1].kernel.signal_variance, 0.1);
    }

    #[test]
    fn missing_files_reported() {
        let c = Config::from_toml("[data]\npath = \"/nonexistent/data.csv\"\n").unwrap();
        assert!(matches!(c.check_files(), Err(ConfigError::MissingFile(_))));
    }
}
