//! Lattices, box windows and point patterns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of points produced by a lattice enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;

/// Volume of the unit ball in dimension `dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        d => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// A lattice generated by integer combinations of the columns of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    basis: DMatrix<f64>,
}

impl Lattice {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if !basis.is_square() || basis.nrows() == 0 {
            return Err(Error::param("lattice basis must be a non-empty square matrix"));
        }
        let det = basis.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(Error::DegenerateLattice(det));
        }
        Ok(Self { basis })
    }

    /// The integer lattice Z^d.
    pub fn integer(dim: usize) -> Self {
        assert!(dim > 0, "lattice dimension must be positive");
        Self {
            basis: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Volume of the fundamental domain.
    pub fn covolume(&self) -> f64 {
        self.basis.determinant().abs()
    }

    pub fn is_integer(&self) -> bool {
        self.basis == DMatrix::identity(self.dim(), self.dim())
    }
}

/// Dual lattice with basis `(B^T)^{-1}`.
pub fn dual_lattice(lat: &Lattice) -> Result<Lattice> {
    let det = lat.basis.determinant();
    if det.abs() <= 1e-12 {
        return Err(Error::DegenerateLattice(det));
    }
    let inv = lat
        .basis
        .transpose()
        .try_inverse()
        .ok_or(Error::DegenerateLattice(det))?;
    Lattice::new(inv)
}

/// All lattice points `x != 0` with `|x| <= radius`, found by scanning the
/// bounding box of integer coefficients.
pub fn lattice_points_in_ball(lat: &Lattice, radius: f64) -> Result<Vec<Vec<f64>>> {
    lattice_points_in_ball_capped(lat, radius, DEFAULT_ENUMERATION_CAP)
}

pub fn lattice_points_in_ball_capped(
    lat: &Lattice,
    radius: f64,
    cap: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::param(format!("radius must be finite and >= 0, got {radius}")));
    }
    let dim = lat.dim();
    // Coefficient bounds: |c_k| <= radius * ||row k of B^{-1}||.
    let inv = lat
        .basis
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateLattice(lat.basis.determinant()))?;
    let bounds: Vec<i64> = (0..dim)
        .map(|k| (radius * inv.row(k).norm() + 1e-9).floor() as i64)
        .collect();
    let scanned: f64 = bounds.iter().map(|&b| (2 * b + 1) as f64).product();
    let estimate = unit_ball_volume(dim) * radius.powi(dim as i32) / lat.covolume();
    if estimate > cap as f64 || scanned > 64.0 * cap as f64 {
        return Err(Error::EnumerationTooLarge {
            count: estimate.max(scanned) as u64,
            cap,
        });
    }
    let r2 = radius * radius;
    let mut out = Vec::new();
    let mut coef: Vec<i64> = bounds.iter().map(|&b| -b).collect();
    let mut x = vec![0.0; dim];
    loop {
        if coef.iter().any(|&c| c != 0) {
            for (row, xr) in x.iter_mut().enumerate() {
                *xr = (0..dim).map(|k| lat.basis[(row, k)] * coef[k] as f64).sum();
            }
            let n2: f64 = x.iter().map(|v| v * v).sum();
            if n2 <= r2 * (1.0 + 1e-12) {
                out.push(x.clone());
                if out.len() as u64 > cap {
                    return Err(Error::EnumerationTooLarge {
                        count: out.len() as u64,
                        cap,
                    });
                }
            }
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == dim {
                return Ok(out);
            }
            if coef[k] < bounds[k] {
                coef[k] += 1;
                break;
            }
            coef[k] = -bounds[k];
            k += 1;
        }
    }
}

/// Counts of nonzero integer vectors by squared norm: `result[n] = #{i in Z^d \ {0}: |i|^2 = n}`
/// for `n <= max_sq`.
pub fn integer_shell_counts(dim: usize, max_sq: u64) -> Vec<u64> {
    let m = max_sq as usize;
    let mut one = vec![0u64; m + 1];
    one[0] = 1;
    let mut k = 1usize;
    while k * k <= m {
        one[k * k] = 2;
        k += 1;
    }
    let mut counts = one.clone();
    for _ in 1..dim {
        let mut next = vec![0u64; m + 1];
        for (a, &ca) in counts.iter().enumerate() {
            if ca == 0 {
                continue;
            }
            let mut k = 0usize;
            while a + k * k <= m {
                next[a + k * k] += ca * one[k * k];
                k += 1;
            }
        }
        counts = next;
    }
    counts[0] -= 1;
    counts
}

/// Closed axis-aligned box `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxWindow {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoxWindow {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        let w = Self { min, max };
        w.validate()?;
        Ok(w)
    }

    /// Cube `[-half, half]^dim`.
    pub fn centered_cube(dim: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    /// Cube `[0, side]^dim`.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![side; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_empty() || self.min.len() != self.max.len() {
            return Err(Error::InvalidWindow(format!(
                "min/max lengths {} and {}",
                self.min.len(),
                self.max.len()
            )));
        }
        for (k, (a, b)) in self.min.iter().zip(&self.max).enumerate() {
            if !a.is_finite() || !b.is_finite() || b <= a {
                return Err(Error::InvalidWindow(format!(
                    "axis {k}: [{a}, {b}] is empty or not finite"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn side(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }

    pub fn sides(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.side(k)).collect()
    }

    pub fn min_side(&self) -> f64 {
        self.sides().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn contains_window(&self, other: &BoxWindow) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|k| other.min[k] >= self.min[k] && other.max[k] <= self.max[k])
    }

    /// Distance from `x` (inside) to the nearest face.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| (x[k] - self.min[k]).min(self.max[k] - x[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume of `W ∩ (W + h)`.
    pub fn translated_overlap(&self, h: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| (self.side(k) - h[k].abs()).max(0.0))
            .product()
    }

    /// Box grown by `margin` on every side (shrunk if negative).
    pub fn inflate(&self, margin: f64) -> Result<BoxWindow> {
        BoxWindow::new(
            self.min.iter().map(|a| a - margin).collect(),
            self.max.iter().map(|b| b + margin).collect(),
        )
    }

    pub fn translate(&self, shift: &[f64]) -> BoxWindow {
        BoxWindow {
            min: self.min.iter().zip(shift).map(|(a, s)| a + s).collect(),
            max: self.max.iter().zip(shift).map(|(b, s)| b + s).collect(),
        }
    }
}

/// Finite set of points in a box window, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    dim: usize,
    coords: Vec<f64>,
    window: BoxWindow,
}

impl PointPattern {
    /// Builds a pattern, rejecting points outside the (closed) window.
    pub fn new(window: BoxWindow, points: Vec<Vec<f64>>) -> Result<Self> {
        window.validate()?;
        let dim = window.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (row, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::param(format!("point {row} has non-finite coordinates")));
            }
            if !window.contains(p) {
                return Err(Error::param(format!("point {row} {p:?} lies outside the window")));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self {
            dim,
            coords,
            window,
        })
    }

    pub fn empty(window: BoxWindow) -> Self {
        Self {
            dim: window.dim(),
            coords: Vec::new(),
            window,
        }
    }

    /// Builds from flat coordinates; caller guarantees containment.
    pub(crate) fn from_flat_unchecked(window: BoxWindow, coords: Vec<f64>) -> Self {
        let dim = window.dim();
        debug_assert_eq!(coords.len() % dim, 0);
        Self {
            dim,
            coords,
            window,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn window(&self) -> &BoxWindow {
        &self.window
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Intensity estimate `count / volume`.
    pub fn intensity(&self) -> f64 {
        self.len() as f64 / self.window.volume()
    }

    /// Applies `x -> scale * (x - center) + new_center` to points and window.
    pub fn affine(&self, scale: f64, center: &[f64], new_center: &[f64]) -> Result<PointPattern> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::param(format!("scale must be positive, got {scale}")));
        }
        let map = |v: f64, k: usize| scale * (v - center[k]) + new_center[k];
        let window = BoxWindow::new(
            (0..self.dim).map(|k| map(self.window.min[k], k)).collect(),
            (0..self.dim).map(|k| map(self.window.max[k], k)).collect(),
        )?;
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let k = j % self.dim;
                map(v, k).clamp(window.min[k], window.max[k])
            })
            .collect();
        Ok(PointPattern::from_flat_unchecked(window, coords))
    }

    /// Reorders points by `perm` (a permutation of `0..len`).
    pub fn permuted(&self, perm: &[usize]) -> PointPattern {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &i in perm {
            coords.extend_from_slice(self.point(i));
        }
        PointPattern::from_flat_unchecked(self.window.clone(), coords)
    }
}

/// Restricts a pattern to `target`, which must lie inside the pattern's window.
pub fn crop(pattern: &PointPattern, target: &BoxWindow) -> Result<PointPattern> {
    target.validate()?;
    if !pattern.window.contains_window(target) {
        return Err(Error::WindowNotContained);
    }
    let coords = pattern
        .points()
        .filter(|p| target.contains(p))
        .flatten()
        .copied()
        .collect();
    Ok(PointPattern::from_flat_unchecked(target.clone(), coords))
}
