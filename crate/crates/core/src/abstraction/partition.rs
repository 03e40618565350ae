use serde::{Deserialize, Serialize};

use super::AbstractionError;
use crate::geometry::Aabb;
use crate::ltlf::{Alphabet, Symbol};

/// Default upper bound on the number of grid cells.
pub const DEFAULT_CELL_CAP: usize = 100_000;

/// Breakpoints closer than this are merged.
const MERGE_TOL: f64 = 1e-12;

/// A labelled box; several boxes may carry the same proposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub prop: String,
    #[serde(flatten)]
    pub region: Aabb,
}

/// Rectilinear grid over `X` whose faces include every region-of-interest face,
/// plus one extra state for `R^n \ X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    bounds: Aabb,
    breakpoints: Vec<Vec<f64>>,
    strides: Vec<usize>,
    labels: Vec<Symbol>,
    ap: Alphabet,
}

impl Partition {
    /// Uniform `cells_per_dim` grid refined along every face of `rois`.
    pub fn build(
        bounds: Aabb,
        cells_per_dim: &[usize],
        rois: &[RegionOfInterest],
        ap: &Alphabet,
        cap: usize,
    ) -> Result<Self, AbstractionError> {
        let n = bounds.dim();
        if cells_per_dim.len() != n || cells_per_dim.contains(&0) || (0..n).any(|d| bounds.width(d) <= 0.0) {
            return Err(AbstractionError::BadGrid(format!(
                "need a positive cell count and width in each of {n} dimensions"
            )));
        }
        let mut masks = Vec::with_capacity(rois.len());
        for roi in rois {
            let i = ap.index_of(&roi.prop).ok_or_else(|| AbstractionError::UnknownProp(roi.prop.clone()))?;
            if roi.region.dim() != n || !bounds.contains_box(&roi.region) {
                return Err(AbstractionError::RoiOutOfBounds(roi.prop.clone()));
            }
            masks.push(1u32 << i);
        }
        let mut breakpoints = Vec::with_capacity(n);
        for d in 0..n {
            let k = cells_per_dim[d];
            let mut b: Vec<f64> = (0..=k).map(|i| bounds.lo[d] + bounds.width(d) * i as f64 / k as f64).collect();
            b[k] = bounds.hi[d];
            for roi in rois {
                b.push(roi.region.lo[d]);
                b.push(roi.region.hi[d]);
            }
            b.sort_by(f64::total_cmp);
            let mut merged: Vec<f64> = Vec::with_capacity(b.len());
            for v in b {
                match merged.last() {
                    Some(&last) if v - last <= MERGE_TOL => {}
                    _ => merged.push(v),
                }
            }
            // keep the exact outer faces
            *merged.last_mut().unwrap() = bounds.hi[d];
            breakpoints.push(merged);
        }
        let total = breakpoints.iter().try_fold(1usize, |acc, b| acc.checked_mul(b.len() - 1));
        match total {
            Some(t) if t <= cap => {}
            _ => return Err(AbstractionError::TooManyCells { cap }),
        }
        let mut p =
            Partition { strides: strides(&breakpoints), bounds, breakpoints, labels: Vec::new(), ap: ap.clone() };
        p.labels = (0..p.num_cells())
            .map(|c| {
                let center = p.cell_box(c).center();
                rois.iter().zip(&masks).filter(|(r, _)| r.region.contains(&center)).fold(0, |acc, (_, m)| acc | m)
            })
            .collect();
        Ok(p)
    }

    /// Reassembles a partition from its breakpoints and per-cell labels.
    pub fn from_parts(
        bounds: Aabb,
        breakpoints: Vec<Vec<f64>>,
        labels: Vec<Symbol>,
        ap: Alphabet,
    ) -> Result<Self, AbstractionError> {
        let n = bounds.dim();
        if breakpoints.len() != n {
            return Err(AbstractionError::BadGrid("breakpoint dimension mismatch".into()));
        }
        for (d, b) in breakpoints.iter().enumerate() {
            if b.len() < 2
                || b[0] != bounds.lo[d]
                || b[b.len() - 1] != bounds.hi[d]
                || b.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(AbstractionError::BadGrid(format!(
                    "breakpoints of dimension {d} are not an increasing cover"
                )));
            }
        }
        let p = Partition { strides: strides(&breakpoints), bounds, breakpoints, labels, ap };
        if p.labels.len() != p.num_cells() {
            return Err(AbstractionError::BadGrid(format!("{} labels for {} cells", p.labels.len(), p.num_cells())));
        }
        let full = if p.ap.len() >= 32 { u32::MAX } else { (1u32 << p.ap.len()) - 1 };
        if p.labels.iter().any(|l| l & !full != 0) {
            return Err(AbstractionError::BadGrid("label outside the alphabet".into()));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn breakpoints(&self) -> &[Vec<f64>] {
        &self.breakpoints
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.ap
    }

    pub fn shape(&self) -> Vec<usize> {
        self.breakpoints.iter().map(|b| b.len() - 1).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.breakpoints.iter().map(|b| b.len() - 1).product()
    }

    /// Cells plus the outside state.
    pub fn num_states(&self) -> usize {
        self.num_cells() + 1
    }

    /// Id of the state representing `R^n \ X`.
    pub fn outside(&self) -> usize {
        self.num_cells()
    }

    /// Label of a state; the outside state carries no proposition.
    pub fn label(&self, q: usize) -> Symbol {
        self.labels.get(q).copied().unwrap_or(0)
    }

    pub fn labels(&self) -> &[Symbol] {
        &self.labels
    }

    pub fn cell_index(&self, id: usize) -> Vec<usize> {
        self.strides.iter().zip(self.shape()).map(|(s, k)| (id / s) % k).collect()
    }

    pub fn cell_id(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn cell_box(&self, id: usize) -> Aabb {
        let idx = self.cell_index(id);
        Aabb {
            lo: idx.iter().zip(&self.breakpoints).map(|(&i, b)| b[i]).collect(),
            hi: idx.iter().zip(&self.breakpoints).map(|(&i, b)| b[i + 1]).collect(),
        }
    }

    /// Containing state of `x`. Points on shared faces go to the cell with the
    /// lexicographically smallest lower corner.
    pub fn locate(&self, x: &[f64]) -> usize {
        if !self.bounds.contains(x) {
            return self.outside();
        }
        let idx: Vec<usize> = x
            .iter()
            .zip(&self.breakpoints)
            .map(|(v, b)| b.partition_point(|p| p < v).saturating_sub(1).min(b.len() - 2))
            .collect();
        self.cell_id(&idx)
    }

    /// Cells within Chebyshev index distance `radius` of `id`, including `id`.
    pub fn neighbors(&self, id: usize, radius: usize) -> Vec<usize> {
        if id >= self.num_cells() {
            return Vec::new();
        }
        let center = self.cell_index(id);
        let ranges: Vec<(usize, usize)> = center
            .iter()
            .zip(self.shape())
            .map(|(&c, k)| (c.saturating_sub(radius), (c + radius).min(k - 1)))
            .collect();
        self.cells_in(&ranges)
    }

    /// Per-dimension inclusive index ranges of the cells whose box expanded by
    /// `margin` meets `image`; `None` if there are none.
    pub fn hit_ranges(&self, image: &Aabb, margin: &[f64]) -> Option<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.dim());
        for (d, b) in self.breakpoints.iter().enumerate() {
            // cell j is hit when b[j] - m <= hi and lo <= b[j+1] + m
            let lo = image.lo[d] - margin[d];
            let hi = image.hi[d] + margin[d];
            let first = b.partition_point(|&p| p < lo).saturating_sub(1);
            let last = b.partition_point(|&p| p <= hi);
            if last == 0 || first >= b.len() - 1 {
                return None;
            }
            let last = (last - 1).min(b.len() - 2);
            let mut first = first;
            while first <= last && b[first + 1] < lo {
                first += 1;
            }
            if first > last {
                return None;
            }
            out.push((first, last));
        }
        Some(out)
    }

    /// Ids of all cells in a product of inclusive index ranges, ascending.
    pub fn cells_in(&self, ranges: &[(usize, usize)]) -> Vec<usize> {
        let mut ids = vec![0usize];
        for (&(a, b), &s) in ranges.iter().zip(&self.strides) {
            let mut next = Vec::with_capacity(ids.len() * (b + 1 - a));
            for base in &ids {
                for i in a..=b {
                    next.push(base + i * s);
                }
            }
            ids = next;
        }
        ids.sort_unstable();
        ids
    }
}

fn strides(breakpoints: &[Vec<f64>]) -> Vec<usize> {
    let n = breakpoints.len();
    let mut s = vec![1usize; n];
    for d in (0..n.saturating_sub(1)).rev() {
        s[d] = s[d + 1] * (breakpoints[d + 1].len() - 1);
    }
    s
}
