//! Uniform cell grid over a box window for fixed-radius pair and
//! nearest-neighbour queries.

use crate::geometry::PointPattern;

pub struct CellGrid<'a> {
    pattern: &'a PointPattern,
    cell: f64,
    shape: Vec<usize>,
    /// `starts[c]..starts[c + 1]` indexes `order` for cell `c`.
    starts: Vec<usize>,
    order: Vec<usize>,
}

const MAX_CELLS: usize = 1 << 22;

impl<'a> CellGrid<'a> {
    /// Grid with cells of side at least `min_cell`.
    pub fn new(pattern: &'a PointPattern, min_cell: f64) -> Self {
        let w = pattern.window();
        let d = pattern.dim();
        let mut cell = min_cell.max(1e-9);
        loop {
            let total: f64 = (0..d).map(|k| (w.side(k) / cell).floor().max(1.0)).product();
            if total <= MAX_CELLS as f64 {
                break;
            }
            cell *= 1.5;
        }
        let shape: Vec<usize> = (0..d).map(|k| ((w.side(k) / cell).floor() as usize).max(1)).collect();
        let ncell: usize = shape.iter().product();
        let cell_of: Vec<usize> = pattern.points().map(|p| Self::index(w, &shape, p)).collect();
        let mut starts = vec![0usize; ncell + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for c in 0..ncell {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut order = vec![0usize; cell_of.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        Self {
            pattern,
            cell,
            shape,
            starts,
            order,
        }
    }

    fn axis_index(w: &crate::geometry::BoxWindow, shape: &[usize], k: usize, v: f64) -> usize {
        let t = (v - w.min[k]) / w.side(k) * shape[k] as f64;
        (t.max(0.0) as usize).min(shape[k] - 1)
    }

    fn index(w: &crate::geometry::BoxWindow, shape: &[usize], p: &[f64]) -> usize {
        let mut idx = 0;
        for k in 0..shape.len() {
            idx = idx * shape[k] + Self::axis_index(w, shape, k, p[k]);
        }
        idx
    }

    fn cell_width(&self, k: usize) -> f64 {
        self.pattern.window().side(k) / self.shape[k] as f64
    }

    /// Visits each point index in cells overlapping the cube of half-side
    /// `reach` around `x`, in a fixed order.
    fn visit_near(&self, x: &[f64], reach: f64, mut f: impl FnMut(usize)) {
        let w = self.pattern.window();
        let d = self.shape.len();
        let lo: Vec<usize> = (0..d).map(|k| Self::axis_index(w, &self.shape, k, x[k] - reach)).collect();
        let hi: Vec<usize> = (0..d).map(|k| Self::axis_index(w, &self.shape, k, x[k] + reach)).collect();
        let mut cur = lo.clone();
        loop {
            let mut idx = 0;
            for k in 0..d {
                idx = idx * self.shape[k] + cur[k];
            }
            for &j in &self.order[self.starts[idx]..self.starts[idx + 1]] {
                f(j);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }

    /// Calls `f(i, j, h, dist)` for every unordered pair `i < j` with
    /// `|x_j - x_i| <= radius`, where `h = x_j - x_i`.
    pub fn for_each_pair(&self, radius: f64, mut f: impl FnMut(usize, usize, &[f64], f64)) {
        let p = self.pattern;
        let d = p.dim();
        let r2 = radius * radius;
        let mut h = vec![0.0; d];
        for i in 0..p.len() {
            let xi = p.point(i);
            self.visit_near(xi, radius, |j| {
                if j <= i {
                    return;
                }
                let xj = p.point(j);
                let mut s = 0.0;
                for k in 0..d {
                    h[k] = xj[k] - xi[k];
                    s += h[k] * h[k];
                }
                if s <= r2 {
                    f(i, j, &h, s.sqrt());
                }
            });
        }
    }

    /// Nearest other point to point `i` within `max_dist`, as `(j, dist)`.
    /// Ties go to the lower index.
    pub fn nearest_within(&self, i: usize, max_dist: f64) -> Option<(usize, f64)> {
        let p = self.pattern;
        let xi = p.point(i);
        let mut best: Option<(usize, f64)> = None;
        self.visit_near(xi, max_dist, |j| {
            if j == i {
                return;
            }
            let s: f64 = xi.iter().zip(p.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let better = match best {
                None => true,
                Some((bj, bs)) => s < bs || (s == bs && j < bj),
            };
            if better {
                best = Some((j, s));
            }
        });
        best.filter(|b| b.1 <= max_dist * max_dist).map(|(j, s)| (j, s.sqrt()))
    }

    /// Nearest other point to `i` over the whole pattern.
    pub fn nearest(&self, i: usize) -> Option<(usize, f64)> {
        if self.pattern.len() < 2 {
            return None;
        }
        let w = self.pattern.window();
        let diag = w.sides().iter().map(|s| s * s).sum::<f64>().sqrt();
        let mut reach = (0..self.shape.len()).map(|k| self.cell_width(k)).fold(self.cell, f64::max);
        loop {
            if let Some(found) = self.nearest_within(i, reach) {
                return Some(found);
            }
            if reach >= diag {
                return self.nearest_within(i, diag * 1.0001);
            }
            reach *= 2.0;
        }
    }
}
