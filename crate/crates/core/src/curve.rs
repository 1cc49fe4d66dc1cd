use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    K,
    LCentered,
    Pcf,
    G,
    Numvar,
    LVariance,
    StructureFactor,
    Other,
}

/// A function of distance sampled on an increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCurve {
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CurveKind,
}

impl SummaryCurve {
    pub fn new(r_grid: Vec<f64>, values: Vec<f64>, kind: CurveKind) -> Result<Self> {
        check_grid(&r_grid)?;
        if values.len() != r_grid.len() {
            return Err(Error::Grid(format!(
                "{} values for {} grid points",
                values.len(),
                r_grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at r = {}", r_grid[i])));
        }
        Ok(Self {
            r_grid,
            values,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.r_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_grid.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.r_grid.iter().copied().zip(self.values.iter().copied())
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn interpolate(&self, r: f64) -> Option<f64> {
        let g = &self.r_grid;
        let tol = 1e-9 * (1.0 + r.abs());
        if g.is_empty() || r < g[0] - tol || r > g[g.len() - 1] + tol {
            return None;
        }
        let i = g.partition_point(|&x| x < r);
        if i < g.len() && (g[i] - r).abs() <= tol {
            return Some(self.values[i]);
        }
        if i == 0 {
            return Some(self.values[0]);
        }
        if i == g.len() {
            return Some(self.values[g.len() - 1]);
        }
        if (g[i - 1] - r).abs() <= tol {
            return Some(self.values[i - 1]);
        }
        let t = (r - g[i - 1]) / (g[i] - g[i - 1]);
        Some(self.values[i - 1] + t * (self.values[i] - self.values[i - 1]))
    }

    pub fn map(&self, kind: CurveKind, f: impl Fn(f64, f64) -> f64) -> Result<SummaryCurve> {
        SummaryCurve::new(
            self.r_grid.clone(),
            self.iter().map(|(r, v)| f(r, v)).collect(),
            kind,
        )
    }
}

/// Rejects empty, non-finite, negative or non-increasing grids.
pub fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    if r_grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Grid("grid values must be finite and non-negative".into()));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `start, start + step, ...` up to and including `end` (within rounding).
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(Error::Grid(format!("bad grid spec [{start}, {end}] step {step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_checks() {
        assert!(check_grid(&[0.0, 0.1, 0.1]).is_err());
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[-0.1, 0.0]).is_err());
        let g = uniform_grid(0.0, 3.0, 0.02).unwrap();
        assert_eq!(g.len(), 151);
        assert!((g[150] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation() {
        let c = SummaryCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 10.0, 30.0], CurveKind::Other).unwrap();
        assert_eq!(c.interpolate(0.5), Some(5.0));
        assert_eq!(c.interpolate(2.0), Some(30.0));
        assert_eq!(c.interpolate(1.0), Some(10.0));
        assert_eq!(c.interpolate(2.5), None);
        assert!(SummaryCurve::new(vec![0.0], vec![f64::NAN], CurveKind::K).is_err());
    }
}
