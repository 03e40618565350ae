use serde::{Deserialize, Serialize};

/// Closed axis-aligned box in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    /// Returns `None` when the corners disagree in dimension or `lo > hi` somewhere.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Option<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return None;
        }
        Some(Aabb { lo, hi })
    }

    pub fn point(x: &[f64]) -> Self {
        Aabb { lo: x.to_vec(), hi: x.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(d, v)| self.lo[d] <= *v && *v <= self.hi[d])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|d| self.lo[d] <= other.lo[d] && other.hi[d] <= self.hi[d])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|d| self.lo[d] <= other.hi[d] && other.lo[d] <= self.hi[d])
    }

    /// Grows every face outward by `margin[d]`.
    pub fn expand(&self, margin: &[f64]) -> Aabb {
        Aabb {
            lo: self.lo.iter().zip(margin).map(|(a, m)| a - m).collect(),
            hi: self.hi.iter().zip(margin).map(|(b, m)| b + m).collect(),
        }
    }

    /// Moves every face inward by `margin[d]`; `None` if the result is empty.
    pub fn shrink(&self, margin: &[f64]) -> Option<Aabb> {
        let lo: Vec<f64> = self.lo.iter().zip(margin).map(|(a, m)| a + m).collect();
        let hi: Vec<f64> = self.hi.iter().zip(margin).map(|(b, m)| b - m).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            None
        } else {
            Some(Aabb { lo, hi })
        }
    }

    /// Regular lattice with `k` points per non-degenerate dimension
    /// (corners included) and a single point along degenerate ones.
    pub fn lattice(&self, k: usize) -> Vec<Vec<f64>> {
        let k = k.max(2);
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|d| {
                let w = self.width(d);
                if w == 0.0 {
                    vec![self.lo[d]]
                } else {
                    (0..k).map(|i| self.lo[d] + w * i as f64 / (k - 1) as f64).collect()
                }
            })
            .collect();
        let mut pts = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            let mut next = Vec::with_capacity(pts.len() * axis.len());
            for p in &pts {
                for v in axis {
                    let mut q = p.clone();
                    q.push(*v);
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    }

    /// Per-dimension half spacing of [`Aabb::lattice`]: the largest
    /// coordinate offset from any point of the box to its nearest lattice point.
    pub fn lattice_half_spacing(&self, k: usize) -> Vec<f64> {
        let k = k.max(2);
        (0..self.dim()).map(|d| 0.5 * self.width(d) / (k - 1) as f64).collect()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|d| if self.width(d) == 0.0 { self.lo[d] } else { rng.random_range(self.lo[d]..=self.hi[d]) })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_operations() {
        let a = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let b = Aabb::new(vec![1.0, 0.5], vec![2.0, 2.0]).unwrap();
        assert!(a.intersects(&b));
        assert!(!a.intersects(&b.expand(&[-0.1, 0.0]).shrink(&[0.0, 0.0]).unwrap()));
        assert!(a.shrink(&[0.6, 0.0]).is_none());
        assert!(a.expand(&[0.1, 0.1]).contains_box(&a));
        assert!(Aabb::new(vec![1.0], vec![0.0]).is_none());
    }

    #[test]
    fn lattice_covers_corners() {
        let a = Aabb::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = a.lattice(3);
        assert_eq!(pts.len(), 9);
        assert!(pts.contains(&vec![1.0, 2.0]));
        assert!(pts.contains(&vec![0.5, 1.0]));
        assert_eq!(Aabb::point(&[0.3, 0.4]).lattice(4), vec![vec![0.3, 0.4]]);
        assert_eq!(a.lattice_half_spacing(3), vec![0.25, 0.5]);
    }
}
