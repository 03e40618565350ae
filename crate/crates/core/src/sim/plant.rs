use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Aabb;
use crate::gp::Dataset;

/// Drift `g(x, u)` tabulated on a full tensor grid and interpolated
/// multilinearly; queries outside the grid are clamped to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    axes: Vec<Vec<f64>>,
    num_actions: usize,
    /// `values[u][point * n + i]` is `g_i` at grid point `point` under `u`.
    values: Vec<Vec<f64>>,
}

impl Table {
    /// Reads `x_1..x_n,u,g_1..g_n` rows covering every grid point for every action.
    pub fn from_csv<R: std::io::Read>(r: R) -> Result<Self, SimError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(|e| SimError::Table(e.to_string()))?.clone();
        if header.len() < 3 || header.len() % 2 == 0 {
            return Err(SimError::Table(format!("expected 2n+1 columns, found {}", header.len())));
        }
        let n = (header.len() - 1) / 2;
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| SimError::Table(e.to_string()))?;
            let num = |i: usize| rec[i].trim().parse::<f64>().map_err(|e| SimError::Table(format!("{e}")));
            let x = (0..n).map(num).collect::<Result<Vec<_>, _>>()?;
            let u = rec[n].trim().parse::<usize>().map_err(|e| SimError::Table(format!("action: {e}")))?;
            let g = (n + 1..2 * n + 1).map(num).collect::<Result<Vec<_>, _>>()?;
            rows.push((x, u, g));
        }
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (x, _, _) in &rows {
            for d in 0..n {
                axes[d].push(x[d]);
            }
        }
        for a in &mut axes {
            a.sort_by(f64::total_cmp);
            a.dedup();
            if a.len() < 2 {
                return Err(SimError::Table("every axis needs at least two grid values".into()));
            }
        }
        let num_actions = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let points: usize = axes.iter().map(Vec::len).product();
        let mut values = vec![vec![f64::NAN; points * n]; num_actions];
        for (x, u, g) in rows {
            let mut idx = 0;
            for d in 0..n {
                idx = idx * axes[d].len() + axes[d].partition_point(|v| *v < x[d]);
            }
            values[u][idx * n..(idx + 1) * n].copy_from_slice(&g);
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(SimError::Table("grid is incomplete".into()));
        }
        Ok(Table { axes, num_actions, values })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }

    fn eval(&self, x: &[f64], u: usize) -> Vec<f64> {
        let n = self.axes.len();
        // lower grid index and weight of the upper neighbour per dimension
        let mut base = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for d in 0..n {
            let a = &self.axes[d];
            let v = x[d].clamp(a[0], a[a.len() - 1]);
            let i = a.partition_point(|p| *p <= v).clamp(1, a.len() - 1) - 1;
            base.push(i);
            w.push((v - a[i]) / (a[i + 1] - a[i]));
        }
        let mut out = vec![0.0; n];
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut idx = 0;
            for d in 0..n {
                let up = corner >> (n - 1 - d) & 1;
                weight *= if up == 1 { w[d] } else { 1.0 - w[d] };
                idx = idx * self.axes[d].len() + base[d] + up;
            }
            if weight == 0.0 {
                continue;
            }
            for i in 0..n {
                out[i] += weight * self.values[u][idx * n + i];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// The four-action planar benchmark.
    Benchmark,
    Tabulated(Table),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    #[default]
    Benchmark,
    Tabulated,
}

/// `x⁺ = x + g(x, u) + w` with componentwise independent Gaussian `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    dynamics: Dynamics,
    noise_std: Vec<f64>,
}

impl Plant {
    pub fn new(dynamics: Dynamics, noise_std: Vec<f64>) -> Result<Self, SimError> {
        let dim = match &dynamics {
            Dynamics::Benchmark => 2,
            Dynamics::Tabulated(t) => t.axes.len(),
        };
        if noise_std.len() != dim || noise_std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SimError::BadNoise(dim));
        }
        Ok(Plant { dynamics, noise_std })
    }

    /// The benchmark with noise covariance `0.01·I`.
    pub fn benchmark() -> Self {
        Plant { dynamics: Dynamics::Benchmark, noise_std: vec![0.1, 0.1] }
    }

    pub fn dim(&self) -> usize {
        self.noise_std.len()
    }

    pub fn num_actions(&self) -> usize {
        match &self.dynamics {
            Dynamics::Benchmark => 4,
            Dynamics::Tabulated(t) => t.num_actions,
        }
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn drift(&self, x: &[f64], u: usize) -> Result<Vec<f64>, SimError> {
        if u >= self.num_actions() {
            return Err(SimError::UnknownAction(u));
        }
        if x.len() != self.dim() {
            return Err(SimError::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(match &self.dynamics {
            Dynamics::Benchmark => match u {
                0 => vec![0.25 + 0.05 * x[1].sin(), 0.1 * x[0].cos()],
                1 => vec![-0.25 + 0.05 * x[1].sin(), 0.1 * x[0].cos()],
                2 => vec![0.1 * x[1].cos(), 0.25 + 0.05 * x[0].sin()],
                _ => vec![0.1 * x[1].cos(), -0.25 + 0.05 * x[0].sin()],
            },
            Dynamics::Tabulated(t) => t.eval(x, u),
        })
    }

    /// Noise-free successor `x + g(x, u)`.
    pub fn mean_next(&self, x: &[f64], u: usize) -> Result<Vec<f64>, SimError> {
        Ok(self.drift(x, u)?.iter().zip(x).map(|(g, v)| v + g).collect())
    }

    pub fn step<R: Rng + ?Sized>(&self, x: &[f64], u: usize, rng: &mut R) -> Result<Vec<f64>, SimError> {
        let mut next = self.mean_next(x, u)?;
        for (v, s) in next.iter_mut().zip(&self.noise_std) {
            let w: f64 = rng.sample(StandardNormal);
            *v += s * w;
        }
        Ok(next)
    }
}

/// `m` uniformly drawn states per action in `bounds`, each stepped once.
/// Actions are sampled in order, states drawn before the noise of each step.
pub fn sample_dataset<R: Rng + ?Sized>(
    plant: &Plant,
    m: usize,
    bounds: &Aabb,
    rng: &mut R,
) -> Result<Dataset, SimError> {
    let mut ds = Dataset::new(plant.dim(), plant.num_actions());
    for u in 0..plant.num_actions() {
        for _ in 0..m {
            let x = bounds.sample(rng);
            let next = plant.step(&x, u, rng)?;
            ds.push(x, u, next).map_err(|e| SimError::Table(e.to_string()))?;
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn benchmark_drift_at_origin() {
        let p = Plant::benchmark();
        assert_eq!(p.mean_next(&[0.0, 0.0], 0).unwrap(), vec![0.25, 0.1]);
        assert_eq!(p.mean_next(&[0.0, 0.0], 1).unwrap(), vec![-0.25, 0.1]);
        assert_eq!(p.mean_next(&[0.0, 0.0], 2).unwrap(), vec![0.1, 0.25]);
        assert_eq!(p.mean_next(&[0.0, 0.0], 3).unwrap(), vec![0.1, -0.25]);
        assert!(matches!(p.drift(&[0.0, 0.0], 4), Err(SimError::UnknownAction(4))));
    }

    #[test]
    fn seeded_steps_repeat() {
        let p = Plant::benchmark();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut x = vec![0.0, 0.0];
            for k in 0..20 {
                x = p.step(&x, k % 4, &mut rng).unwrap();
            }
            x
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dataset_counts_and_bounds() {
        let p = Plant::benchmark();
        let b = Aabb::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = sample_dataset(&p, 200, &b, &mut rng).unwrap();
        assert_eq!(ds.len(), 800);
        assert!(ds.samples().iter().all(|s| b.contains(&s.x)));
        assert!(sample_dataset(&p, 0, &b, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn tabulated_reproduces_linear_drift() {
        let mut text = String::from("x_1,u,g_1\n");
        for x in [-1.0, 0.0, 2.0] {
            text.push_str(&format!("{x},0,{}\n", 0.5 * x + 0.1));
        }
        let t = Table::from_csv(text.as_bytes()).unwrap();
        let p = Plant::new(Dynamics::Tabulated(t), vec![0.0]).unwrap();
        for x in [-1.0, -0.3, 0.7, 2.0] {
            assert!((p.drift(&[x], 0).unwrap()[0] - (0.5 * x + 0.1)).abs() < 1e-12);
        }
        // clamped outside the grid
        assert!((p.drift(&[5.0], 0).unwrap()[0] - 1.1).abs() < 1e-12);
        let incomplete = "x_1,x_2,u,g_1,g_2\n0,0,0,1,1\n1,1,0,1,1\n";
        assert!(Table::from_csv(incomplete.as_bytes()).is_err());
    }
}
