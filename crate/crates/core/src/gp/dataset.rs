use std::io::{Read, Write};
use std::path::Path;

use super::GpError;

/// One observed transition `(x, u, x⁺)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub u: usize,
    pub x_plus: Vec<f64>,
}

/// State-action-state measurements, indexed by action for neighbour queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_actions: usize,
    samples: Vec<Sample>,
    by_action: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(dim: usize, num_actions: usize) -> Self {
        Dataset { dim, num_actions, samples: Vec::new(), by_action: vec![Vec::new(); num_actions] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn push(&mut self, x: Vec<f64>, u: usize, x_plus: Vec<f64>) -> Result<(), GpError> {
        if x.len() != self.dim || x_plus.len() != self.dim {
            return Err(GpError::DimensionMismatch { expected: self.dim, got: x.len().max(x_plus.len()) });
        }
        if u >= self.num_actions {
            return Err(GpError::UnknownAction(u));
        }
        self.by_action[u].push(self.samples.len());
        self.samples.push(Sample { x, u, x_plus });
        Ok(())
    }

    pub fn count(&self, u: usize) -> usize {
        self.by_action.get(u).map_or(0, Vec::len)
    }

    pub fn for_action(&self, u: usize) -> impl Iterator<Item = &Sample> + '_ {
        self.by_action[u].iter().map(move |&i| &self.samples[i])
    }

    /// Indices (into `for_action(u)` order) of the `l` samples nearest to `x`,
    /// ordered by distance with ties broken by insertion order.
    pub fn nearest(&self, u: usize, x: &[f64], l: usize) -> Vec<&Sample> {
        let idx = &self.by_action[u];
        let mut scored: Vec<(f64, usize)> = idx
            .iter()
            .map(|&i| {
                let s = &self.samples[i];
                let d2: f64 = s.x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let l = l.min(scored.len());
        if l < scored.len() && l > 0 {
            scored.select_nth_unstable_by(l - 1, cmp);
            scored.truncate(l);
        }
        scored.sort_by(cmp);
        scored.truncate(l);
        scored.into_iter().map(|(_, i)| &self.samples[i]).collect()
    }

    /// CSV with header `x_1..x_n,u,xplus_1..xplus_n`; `u` is a zero-based action index.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GpError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        header.push("u".into());
        header.extend((1..=self.dim).map(|i| format!("xplus_{i}")));
        wr.write_record(&header)?;
        for s in &self.samples {
            let mut rec: Vec<String> = s.x.iter().map(|v| format!("{v:?}")).collect();
            rec.push(s.u.to_string());
            rec.extend(s.x_plus.iter().map(|v| format!("{v:?}")));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| GpError::Io(e.to_string()))?;
        Ok(())
    }

    /// Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(r: R, num_actions: usize) -> Result<Self, GpError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers()?.clone();
        if header.len() < 3 || header.len() % 2 == 0 {
            return Err(GpError::Parse(format!("expected 2n+1 columns, found {}", header.len())));
        }
        let dim = (header.len() - 1) / 2;
        let mut ds = Dataset::new(dim, num_actions);
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, GpError> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| GpError::Parse(format!("row {}: column {}: {e}", line + 1, i + 1)))
            };
            let x = (0..dim).map(num).collect::<Result<Vec<_>, _>>()?;
            let u = rec[dim]
                .trim()
                .parse::<usize>()
                .map_err(|e| GpError::Parse(format!("row {}: action: {e}", line + 1)))?;
            let x_plus = (dim + 1..2 * dim + 1).map(num).collect::<Result<Vec<_>, _>>()?;
            ds.push(x, u, x_plus)?;
        }
        Ok(ds)
    }

    pub fn load(path: &Path, num_actions: usize) -> Result<Self, GpError> {
        let f = std::fs::File::open(path).map_err(|e| GpError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f, num_actions)
    }

    pub fn save(&self, path: &Path) -> Result<(), GpError> {
        let f = std::fs::File::create(path).map_err(|e| GpError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut ds = Dataset::new(2, 2);
        ds.push(vec![0.1, -0.2], 1, vec![0.35, -0.1]).unwrap();
        ds.push(vec![1.0, 2.0], 0, vec![1.25, 2.1]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,u,xplus_1,xplus_2\n"));
        let back = Dataset::read_csv(buf.as_slice(), 2).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut ds = Dataset::new(2, 2);
        assert!(ds.push(vec![0.0], 0, vec![0.0, 0.0]).is_err());
        assert!(matches!(ds.push(vec![0.0, 0.0], 5, vec![0.0, 0.0]), Err(GpError::UnknownAction(5))));
        let text = "x_1,u,xplus_1\n0.5,0,abc\n";
        assert!(matches!(Dataset::read_csv(text.as_bytes(), 1), Err(GpError::Parse(_))));
    }

    #[test]
    fn nearest_is_ordered_and_capped() {
        let mut ds = Dataset::new(1, 1);
        for v in [3.0, -1.0, 0.5, 2.0, 0.4] {
            ds.push(vec![v], 0, vec![v]).unwrap();
        }
        let near: Vec<f64> = ds.nearest(0, &[0.0], 3).iter().map(|s| s.x[0]).collect();
        assert_eq!(near, vec![0.4, 0.5, -1.0]);
        assert_eq!(ds.nearest(0, &[0.0], 10).len(), 5);
    }
}
