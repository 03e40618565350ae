//! Gaussian-process regression of the unknown dynamics with high-probability
//! error bounds, plus local GPs fit on nearest neighbours.

mod dataset;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::Aabb;

pub use dataset::{Dataset, Sample};

/// Floor applied to posterior variances.
pub const VARIANCE_FLOOR: f64 = 1e-12;

const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GpError {
    #[error("kernel matrix is not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("no data for action {0}")]
    EmptyAction(usize),
    #[error("unknown action {0}")]
    UnknownAction(usize),
    #[error("confidence {0} must lie in (0, 1)")]
    BadDelta(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("dataset parse error: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<csv::Error> for GpError {
    fn from(e: csv::Error) -> Self {
        GpError::Parse(e.to_string())
    }
}

/// Squared-exponential kernel with automatic relevance determination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn validate(&self, dim: usize) -> Result<(), GpError> {
        if self.lengthscales.len() != dim {
            return Err(GpError::InvalidParams(format!(
                "{} lengthscales for a {dim}-dimensional state",
                self.lengthscales.len()
            )));
        }
        if self.lengthscales.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(GpError::InvalidParams("lengthscales must be positive".into()));
        }
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(GpError::InvalidParams("signal variance must be positive".into()));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(GpError::InvalidParams("noise variance must be nonnegative".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }

    pub fn signal_std(&self) -> f64 {
        self.signal_variance.sqrt()
    }

    pub fn min_lengthscale(&self) -> f64 {
        self.lengthscales.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Constants of the uniform error bound `|μ − f| ≤ β(δ)·σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// RKHS-norm bound `B` on the learned component.
    pub rkhs_bound: f64,
    /// Sub-Gaussian noise scale `R`.
    pub noise_scale: f64,
    /// Information-gain term; `None` uses the surrogate `m·ln(1+m)`.
    pub info_gain: Option<f64>,
}

impl BoundParams {
    pub fn beta(&self, m: usize, delta: f64) -> Result<f64, GpError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(GpError::BadDelta(delta));
        }
        let gamma = self.info_gain.unwrap_or_else(|| {
            let m = m as f64;
            m * (1.0 + m).ln()
        });
        Ok(self.rkhs_bound + self.noise_scale * (2.0 * (gamma + 1.0 + (1.0 / delta).ln())).sqrt())
    }
}

/// What the per-dimension GPs regress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Learn `x⁺` directly.
    #[default]
    Full,
    /// Learn `x⁺ − x`; the identity is added back at prediction time.
    Increment,
}

/// Everything needed to fit the models of one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSettings {
    pub kernel: KernelParams,
    /// One entry per output dimension.
    pub bounds: Vec<BoundParams>,
    pub target: TargetMode,
}

/// Cholesky factorization of `K(X,X) + σ²I` shared by all output dimensions.
#[derive(Debug)]
struct Factor {
    inputs: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    params: KernelParams,
    jitter: f64,
}

impl Factor {
    fn new(inputs: Vec<Vec<f64>>, params: KernelParams) -> Result<Self, GpError> {
        let m = inputs.len();
        let mut k = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = params.kernel(&inputs[i], &inputs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += params.noise_variance;
        }
        for &jitter in &JITTERS {
            let mut kj = k.clone();
            for i in 0..m {
                kj[(i, i)] += jitter;
            }
            if let Some(c) = nalgebra::Cholesky::new(kj) {
                let chol = c.unpack();
                if (0..m).all(|i| chol[(i, i)] > 0.0) {
                    return Ok(Factor { inputs, chol, params, jitter });
                }
            }
        }
        Err(GpError::NotPositiveDefinite(*JITTERS.last().unwrap()))
    }

    fn len(&self) -> usize {
        self.inputs.len()
    }

    /// `‖k(x,·) − k(y,·)‖_H` for points whose coordinates differ by `offset`.
    fn kernel_distance(&self, offset: &[f64]) -> f64 {
        let r2: f64 = offset.iter().zip(&self.params.lengthscales).map(|(h, l)| (h / l).powi(2)).sum();
        (2.0 * self.params.signal_variance * -(-0.5 * r2).exp_m1()).max(0.0).sqrt()
    }

    fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let z = self.forward(y.as_slice());
        // back substitution with Lᵀ
        let m = self.len();
        let mut out = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = z[i];
            for j in i + 1..m {
                s -= self.chol[(j, i)] * out[j];
            }
            out[i] = s / self.chol[(i, i)];
        }
        DVector::from_vec(out)
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut z = vec![0.0; m];
        for i in 0..m {
            let mut s = b[i];
            let row = self.chol.row(i);
            for j in 0..i {
                s -= row[j] * z[j];
            }
            z[i] = s / self.chol[(i, i)];
        }
        z
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|xi| self.params.kernel(x, xi)).collect()
    }

    fn variance(&self, x: &[f64], kx: &[f64]) -> f64 {
        let v = self.forward(kx);
        let prior = self.params.kernel(x, x);
        (prior - v.iter().map(|a| a * a).sum::<f64>()).max(VARIANCE_FLOOR)
    }
}

/// Posterior of one output dimension of one action.
#[derive(Debug, Clone)]
pub struct GpModel {
    action: usize,
    dim: usize,
    factor: Arc<Factor>,
    targets: DVector<f64>,
    alpha: DVector<f64>,
    bound: BoundParams,
    mean_norm: f64,
}

impl GpModel {
    /// Fits a single-output GP on `inputs → targets`.
    pub fn fit(
        action: usize,
        dim: usize,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        params: KernelParams,
        bound: BoundParams,
    ) -> Result<Self, GpError> {
        let n = inputs.first().map_or(params.lengthscales.len(), Vec::len);
        params.validate(n)?;
        if targets.len() != inputs.len() {
            return Err(GpError::DimensionMismatch { expected: inputs.len(), got: targets.len() });
        }
        let factor = Arc::new(Factor::new(inputs, params)?);
        Ok(Self::from_factor(action, dim, factor, targets, bound))
    }

    fn from_factor(action: usize, dim: usize, factor: Arc<Factor>, targets: Vec<f64>, bound: BoundParams) -> Self {
        let targets = DVector::from_vec(targets);
        let alpha = factor.solve(&targets);
        let shift = factor.params.noise_variance + factor.jitter;
        let rkhs = (targets.dot(&alpha) - shift * alpha.dot(&alpha)).max(0.0);
        GpModel { action, dim, factor, targets, alpha, bound, mean_norm: rkhs.sqrt() }
    }

    pub fn action(&self) -> usize {
        self.action
    }

    pub fn output_dim(&self) -> usize {
        self.dim
    }

    pub fn num_data(&self) -> usize {
        self.factor.len()
    }

    pub fn params(&self) -> &KernelParams {
        &self.factor.params
    }

    pub fn bound_params(&self) -> &BoundParams {
        &self.bound
    }

    pub fn targets(&self) -> &[f64] {
        self.targets.as_slice()
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        let kx = self.factor.cross(x);
        kx.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum()
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let kx = self.factor.cross(x);
        let mean = kx.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();
        (mean, self.factor.variance(x, &kx).sqrt())
    }

    pub fn std(&self, x: &[f64]) -> f64 {
        let kx = self.factor.cross(x);
        self.factor.variance(x, &kx).sqrt()
    }

    /// Upper bound on `sup σ_D` over `region`: lattice maximum plus a
    /// Lipschitz pad. For the SE kernel `|σ(x) − σ(y)| ≤ ‖k(x,·) − k(y,·)‖ ≤ σ_f·|x − y|/ℓ_min`.
    pub fn sup_std(&self, region: &Aabb, lattice: usize) -> f64 {
        let sf = self.params().signal_std();
        if self.num_data() == 0 {
            return sf;
        }
        let max = region.lattice(lattice).iter().map(|p| self.std(p)).fold(0.0, f64::max);
        let half = region.lattice_half_spacing(lattice);
        let radius = half.iter().map(|h| h * h).sum::<f64>().sqrt();
        (max + sf / self.params().min_lengthscale() * radius).min(sf)
    }

    /// Per-input-dimension bound on `|∂μ/∂x_d|` over `region`, from the SE
    /// kernel derivative `σ_f²·|x_d − x_jd|/ℓ_d²·exp(−r²/2)` bounded termwise.
    pub fn mean_gradient_bound(&self, region: &Aabb) -> Vec<f64> {
        let p = self.params();
        let n = region.dim();
        let mut out = vec![0.0; n];
        for (xj, a) in self.factor.inputs.iter().zip(self.alpha.iter()) {
            let mut min_r2 = 0.0;
            for d in 0..n {
                let gap = if xj[d] < region.lo[d] {
                    region.lo[d] - xj[d]
                } else if xj[d] > region.hi[d] {
                    xj[d] - region.hi[d]
                } else {
                    0.0
                };
                min_r2 += (gap / p.lengthscales[d]).powi(2);
            }
            let decay = p.signal_variance * a.abs() * (-0.5 * min_r2).exp();
            for d in 0..n {
                let far = (region.lo[d] - xj[d]).abs().max((region.hi[d] - xj[d]).abs());
                out[d] += decay * far / (p.lengthscales[d] * p.lengthscales[d]);
            }
        }
        out
    }

    /// RKHS norm of the posterior mean, `sqrt(αᵀKα)`.
    pub fn mean_norm(&self) -> f64 {
        self.mean_norm
    }

    /// Bound on `|μ(x) − μ(y)|` over `region` when `|x_d − y_d| ≤ offset[d]`:
    /// the smaller of the termwise derivative bound and `‖μ‖_H·‖k(x,·) − k(y,·)‖_H`.
    pub fn mean_variation(&self, region: &Aabb, offset: &[f64]) -> f64 {
        if offset.iter().all(|h| *h == 0.0) {
            return 0.0;
        }
        let termwise: f64 = self.mean_gradient_bound(region).iter().zip(offset).map(|(l, h)| l * h).sum();
        termwise.min(self.mean_norm * self.factor.kernel_distance(offset))
    }

    pub fn beta(&self, delta: f64) -> Result<f64, GpError> {
        self.bound.beta(self.num_data(), delta)
    }

    /// `ε = β(δ)·supStd(region)` for this output dimension.
    pub fn error_epsilon(&self, region: &Aabb, delta: f64, lattice: usize) -> Result<ErrorBound, GpError> {
        let beta = self.beta(delta)?;
        Ok(ErrorBound { action: self.action, dim: self.dim, epsilon: beta * self.sup_std(region, lattice), delta })
    }
}

/// High-probability regression error radius on a region for one output dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    pub action: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub delta: f64,
}

/// All output dimensions of one action, sharing one factorization.
#[derive(Debug, Clone)]
pub struct ActionModel {
    dims: Vec<GpModel>,
    mode: TargetMode,
}

impl ActionModel {
    /// Fits every output dimension of action `u` on the given samples.
    pub fn fit<'a, I>(
        u: usize,
        samples: I,
        state_dim: usize,
        params: &KernelParams,
        bounds: &[BoundParams],
        mode: TargetMode,
    ) -> Result<Self, GpError>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        params.validate(state_dim)?;
        if bounds.len() != state_dim {
            return Err(GpError::DimensionMismatch { expected: state_dim, got: bounds.len() });
        }
        let samples: Vec<&Sample> = samples.into_iter().collect();
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        let factor = Arc::new(Factor::new(inputs, params.clone())?);
        let dims = (0..state_dim)
            .map(|i| {
                let targets = samples
                    .iter()
                    .map(|s| match mode {
                        TargetMode::Full => s.x_plus[i],
                        TargetMode::Increment => s.x_plus[i] - s.x[i],
                    })
                    .collect();
                GpModel::from_factor(u, i, factor.clone(), targets, bounds[i].clone())
            })
            .collect();
        Ok(ActionModel { dims, mode })
    }

    /// Global model on every sample of action `u`.
    pub fn fit_global(
        data: &Dataset,
        u: usize,
        params: &KernelParams,
        bounds: &[BoundParams],
        mode: TargetMode,
    ) -> Result<Self, GpError> {
        if u >= data.num_actions() {
            return Err(GpError::UnknownAction(u));
        }
        Self::fit(u, data.for_action(u), data.dim(), params, bounds, mode)
    }

    /// Local model on the `l` nearest samples of action `u` to `x`, with the
    /// same hyperparameters as the global one.
    pub fn fit_local(
        data: &Dataset,
        x: &[f64],
        u: usize,
        l: usize,
        params: &KernelParams,
        bounds: &[BoundParams],
        mode: TargetMode,
    ) -> Result<Self, GpError> {
        if u >= data.num_actions() {
            return Err(GpError::UnknownAction(u));
        }
        if data.count(u) == 0 {
            return Err(GpError::EmptyAction(u));
        }
        if l == 0 {
            return Err(GpError::InvalidParams("local GP needs at least one neighbour".into()));
        }
        Self::fit(u, data.nearest(u, x, l), data.dim(), params, bounds, mode)
    }

    pub fn dims(&self) -> &[GpModel] {
        &self.dims
    }

    pub fn mode(&self) -> TargetMode {
        self.mode
    }

    pub fn num_data(&self) -> usize {
        self.dims.first().map_or(0, GpModel::num_data)
    }

    /// Predicted next state `f̂(x, u)`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let factor = &self.dims[0].factor;
        let kx = factor.cross(x);
        self.dims
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let m: f64 = kx.iter().zip(g.alpha.iter()).map(|(a, b)| a * b).sum();
                match self.mode {
                    TargetMode::Full => m,
                    TargetMode::Increment => x[i] + m,
                }
            })
            .collect()
    }

    /// Predicted next state and the (shared) posterior standard deviation.
    pub fn predict_with_std(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let factor = &self.dims[0].factor;
        let kx = factor.cross(x);
        let mean = self
            .dims
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let m: f64 = kx.iter().zip(g.alpha.iter()).map(|(a, b)| a * b).sum();
                match self.mode {
                    TargetMode::Full => m,
                    TargetMode::Increment => x[i] + m,
                }
            })
            .collect();
        (mean, factor.variance(x, &kx).sqrt())
    }

    /// Axis-aligned box containing `{f̂(x,u) : x ∈ region}`: lattice extremes of
    /// the posterior means padded by a local Lipschitz bound times the lattice
    /// half spacing. In increment mode the identity part is added as an interval.
    pub fn image_box(&self, region: &Aabb, lattice: usize) -> Aabb {
        let n = region.dim();
        let pts = region.lattice(lattice);
        let half = region.lattice_half_spacing(lattice);
        let factor = &self.dims[0].factor;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for p in &pts {
            let kx = factor.cross(p);
            for (i, g) in self.dims.iter().enumerate() {
                let m: f64 = kx.iter().zip(g.alpha.iter()).map(|(a, b)| a * b).sum();
                lo[i] = lo[i].min(m);
                hi[i] = hi[i].max(m);
            }
        }
        for (i, g) in self.dims.iter().enumerate() {
            let pad = g.mean_variation(region, &half);
            lo[i] -= pad;
            hi[i] += pad;
            if self.mode == TargetMode::Increment {
                lo[i] += region.lo[i];
                hi[i] += region.hi[i];
            }
        }
        Aabb { lo, hi }
    }
}
