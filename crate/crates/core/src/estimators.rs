//! Nonparametric summary statistics of observed point patterns.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::{check_grid, CurveKind, SummaryCurve};
use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, BoxWindow, PointPattern};
use crate::neighbors::CellGrid;
use crate::quadrature::unit_sphere_area;

/// Isotropic rescaling to unit intensity, recentred at the origin.
pub fn rescale_to_unit_intensity(p: &PointPattern) -> Result<PointPattern> {
    if p.is_empty() {
        return Err(Error::InsufficientData("cannot rescale an empty pattern".into()));
    }
    let mut scale = p.intensity().powf(1.0 / p.dim() as f64);
    if (scale - 1.0).abs() <= 1e-12 {
        scale = 1.0;
    }
    let w = p.window();
    let center: Vec<f64> = (0..p.dim())
        .map(|k| {
            let c = 0.5 * (w.min[k] + w.max[k]);
            if c.abs() <= 1e-12 * w.side(k) {
                0.0
            } else {
                c
            }
        })
        .collect();
    let origin = vec![0.0; p.dim()];
    p.affine(scale, &center, &origin)
}

fn check_radius(w: &BoxWindow, r_max: f64) -> Result<()> {
    let limit = 0.5 * w.min_side();
    if r_max >= limit {
        return Err(Error::RadiusTooLarge { r: r_max, limit });
    }
    Ok(())
}

/// Index of the first grid value `>= d`.
fn grid_slot(r_grid: &[f64], d: f64) -> usize {
    r_grid.partition_point(|&r| r < d)
}

/// Translation-corrected K-function estimate
/// `K̂(r) = |W|/(n(n-1)) Σ_{x≠y} 1{|x-y| <= r} |W| / |W ∩ (W + x - y)|`.
pub fn k_empirical(p: &PointPattern, r_grid: &[f64]) -> Result<SummaryCurve> {
    check_grid(r_grid)?;
    let n = p.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("K estimate needs at least 2 points, got {n}")));
    }
    let w = p.window();
    let r_max = r_grid[r_grid.len() - 1];
    check_radius(w, r_max)?;
    let vol = w.volume();
    let mut bins = vec![0.0; r_grid.len() + 1];
    CellGrid::new(p, r_max).for_each_pair(r_max, |_, _, h, dist| {
        bins[grid_slot(r_grid, dist)] += 2.0 * vol / w.translated_overlap(h);
    });
    let norm = vol / (n as f64 * (n as f64 - 1.0));
    let mut acc = 0.0;
    let values = bins[..r_grid.len()]
        .iter()
        .map(|b| {
            acc += b;
            acc * norm
        })
        .collect();
    SummaryCurve::new(r_grid.to_vec(), values, CurveKind::K)
}

/// Centered L-function estimate `(K̂/κ_d)^{1/d} - r`.
pub fn l_centered_empirical(p: &PointPattern, r_grid: &[f64]) -> Result<SummaryCurve> {
    crate::ktheory::l_centered_from_k(&k_empirical(p, r_grid)?, p.dim())
}

/// Default Epanechnikov bandwidth `0.15 ρ̂^{-1/d}`.
pub fn default_bandwidth(p: &PointPattern) -> f64 {
    0.15 * p.intensity().powf(-1.0 / p.dim() as f64)
}

/// Epanechnikov kernel estimate of the pair correlation function with
/// translation edge correction. Radii must be positive.
pub fn pcf_empirical(p: &PointPattern, r_grid: &[f64], bandwidth: f64) -> Result<SummaryCurve> {
    check_grid(r_grid)?;
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::param(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if r_grid[0] <= 0.0 {
        return Err(Error::param("pair correlation radii must be positive"));
    }
    let n = p.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("pcf estimate needs at least 2 points, got {n}")));
    }
    let w = p.window();
    let reach = r_grid[r_grid.len() - 1] + bandwidth;
    check_radius(w, reach)?;
    let vol = w.volume();
    let d = p.dim();
    let mut sums = vec![0.0; r_grid.len()];
    CellGrid::new(p, reach).for_each_pair(reach, |_, _, h, dist| {
        let weight = 2.0 * vol / w.translated_overlap(h);
        let lo = grid_slot(r_grid, dist - bandwidth);
        for (k, &r) in r_grid.iter().enumerate().skip(lo) {
            let u = (r - dist) / bandwidth;
            if u >= 1.0 {
                break;
            }
            if u > -1.0 {
                sums[k] += weight * 0.75 * (1.0 - u * u) / bandwidth;
            }
        }
    });
    let norm = vol / (n as f64 * (n as f64 - 1.0)) / unit_sphere_area(d);
    let values = sums
        .iter()
        .zip(r_grid)
        .map(|(s, &r)| s * norm / r.powi(d as i32 - 1))
        .collect();
    SummaryCurve::new(r_grid.to_vec(), values, CurveKind::Pcf)
}

/// Nearest-neighbour distance distribution with the border method: the
/// reference points are those at distance at least `max(r_grid)` from the
/// window boundary, fixed across the grid so the estimate is monotone.
pub fn g_nearest_neighbor(p: &PointPattern, r_grid: &[f64]) -> Result<SummaryCurve> {
    check_grid(r_grid)?;
    if p.len() < 2 {
        return Err(Error::InsufficientData(format!("G estimate needs at least 2 points, got {}", p.len())));
    }
    let r_max = r_grid[r_grid.len() - 1].max(0.0);
    let w = p.window();
    let grid = CellGrid::new(p, r_max.max(w.min_side() / 64.0));
    let mut reference = 0usize;
    let mut bins = vec![0usize; r_grid.len() + 1];
    for i in 0..p.len() {
        if w.distance_to_boundary(p.point(i)) < r_max {
            continue;
        }
        reference += 1;
        match grid.nearest_within(i, r_max) {
            Some((_, dist)) => bins[grid_slot(r_grid, dist)] += 1,
            None => bins[r_grid.len()] += 1,
        }
    }
    if reference == 0 {
        return Err(Error::InsufficientData(format!(
            "no points farther than {r_max} from the window boundary"
        )));
    }
    let mut acc = 0usize;
    let values = bins[..r_grid.len()]
        .iter()
        .map(|&b| {
            acc += b;
            acc as f64 / reference as f64
        })
        .collect();
    SummaryCurve::new(r_grid.to_vec(), values, CurveKind::G)
}

/// Disjoint cubic boxes of side `side` separated by `gap`, laid out as a
/// grid centred in the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDesign {
    pub side: f64,
    pub gap: f64,
}

impl Default for BoxDesign {
    fn default() -> Self {
        Self { side: 2.7, gap: 1.5 }
    }
}

pub const MIN_BOXES: usize = 8;

impl BoxDesign {
    /// Boxes per axis for a window.
    pub fn layout(&self, w: &BoxWindow) -> Result<Vec<usize>> {
        if !(self.side > 0.0) || !(self.gap >= 0.0) {
            return Err(Error::param(format!("invalid box design {self:?}")));
        }
        let per_axis: Vec<usize> = w
            .sides()
            .iter()
            .map(|&l| ((l + self.gap) / (self.side + self.gap) + 1e-9).floor().max(0.0) as usize)
            .collect();
        let total: usize = per_axis.iter().product();
        if total < MIN_BOXES {
            return Err(Error::InsufficientData(format!(
                "only {total} boxes of side {} with gap {} fit in the window (need {MIN_BOXES})",
                self.side, self.gap
            )));
        }
        Ok(per_axis)
    }

    /// Lower corners of all boxes, last axis fastest.
    pub fn corners(&self, w: &BoxWindow) -> Result<Vec<Vec<f64>>> {
        let per_axis = self.layout(w)?;
        let d = w.dim();
        let pitch = self.side + self.gap;
        let start: Vec<f64> = (0..d)
            .map(|k| {
                let span = per_axis[k] as f64 * pitch - self.gap;
                w.min[k] + 0.5 * (w.side(k) - span)
            })
            .collect();
        let total: usize = per_axis.iter().product();
        Ok((0..total)
            .map(|mut idx| {
                let mut c = vec![0.0; d];
                for k in (0..d).rev() {
                    c[k] = start[k] + (idx % per_axis[k]) as f64 * pitch;
                    idx /= per_axis[k];
                }
                c
            })
            .collect())
    }
}

/// Point counts in the boxes of `design`, in the order of [`BoxDesign::corners`].
pub fn box_counts(p: &PointPattern, design: &BoxDesign) -> Result<Vec<u64>> {
    let w = p.window();
    let per_axis = design.layout(w)?;
    let corners = design.corners(w)?;
    let d = p.dim();
    let pitch = design.side + design.gap;
    let origin = &corners[0];
    let mut counts = vec![0u64; corners.len()];
    'points: for x in p.points() {
        let mut idx = 0;
        for k in 0..d {
            let t = x[k] - origin[k];
            if t < 0.0 {
                continue 'points;
            }
            let slot = (t / pitch).floor() as usize;
            if slot >= per_axis[k] || t - slot as f64 * pitch >= design.side {
                continue 'points;
            }
            idx = idx * per_axis[k] + slot;
        }
        counts[idx] += 1;
    }
    Ok(counts)
}

fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Number variance from disjoint boxes in one pattern: for every box side,
/// the sample variance of the counts divided by the box volume.
pub fn number_variance_boxes(p: &PointPattern, sides: &[f64], gap: f64) -> Result<SummaryCurve> {
    check_grid(sides)?;
    let d = p.dim() as i32;
    let values = sides
        .iter()
        .map(|&side| {
            let counts = box_counts(p, &BoxDesign { side, gap })?;
            let (_, var) = sample_variance(counts.iter().map(|&c| c as f64));
            Ok(var / side.powi(d))
        })
        .collect::<Result<_>>()?;
    SummaryCurve::new(sides.to_vec(), values, CurveKind::Numvar)
}

pub const MIN_BATCH_REPLICATES: usize = 30;

/// Number variance across replicates: variance of the count in the ball of
/// radius `r` about each window centre, divided by the ball volume.
pub fn number_variance_batch(batch: &[PointPattern], radii: &[f64]) -> Result<SummaryCurve> {
    check_grid(radii)?;
    if batch.len() < MIN_BATCH_REPLICATES {
        return Err(Error::InsufficientData(format!(
            "batch number variance needs at least {MIN_BATCH_REPLICATES} replicates, got {}",
            batch.len()
        )));
    }
    let d = batch[0].dim();
    let r_max = radii[radii.len() - 1];
    let counts: Vec<Vec<f64>> = batch
        .iter()
        .map(|p| {
            if p.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
            }
            let w = p.window();
            let c = w.center();
            if w.distance_to_boundary(&c) < r_max {
                return Err(Error::RadiusTooLarge {
                    r: r_max,
                    limit: w.distance_to_boundary(&c),
                });
            }
            let mut bins = vec![0.0; radii.len() + 1];
            for x in p.points() {
                let s: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                bins[grid_slot(radii, s.sqrt())] += 1.0;
            }
            let mut acc = 0.0;
            Ok(bins[..radii.len()]
                .iter()
                .map(|b| {
                    acc += b;
                    acc
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let kd = unit_ball_volume(d);
    let values = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| sample_variance(counts.iter().map(|c| c[k])).1 / (kd * r.powi(d as i32)))
        .collect();
    SummaryCurve::new(radii.to_vec(), values, CurveKind::Numvar)
}

/// Data taper applied before the Fourier sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    /// Plain scattering intensity.
    #[default]
    None,
    /// Product of half-period sines vanishing on the window faces, with the
    /// taper's own transform times `ρ̂` subtracted.
    Sine,
}

/// Scattering intensity on the allowed modes of a box window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSpectrum {
    pub wavevectors: Vec<Vec<f64>>,
    pub intensities: Vec<f64>,
    pub pattern_count: usize,
    /// Window side lengths the modes were built for.
    pub sides: Vec<f64>,
    #[serde(default)]
    pub taper: Taper,
}

/// Radially binned spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSpectrum {
    pub bin_lo: Vec<f64>,
    pub bin_hi: Vec<f64>,
    pub mean_k: Vec<f64>,
    pub mean_s: Vec<f64>,
    pub modes: Vec<usize>,
}

/// Default cutoff for computed modes.
pub const DEFAULT_K_CUTOFF: f64 = 1.5;

/// `Ŝ(k) = |Σ_j exp(-i k·x_j)|² / n` on `k = 2π z / L` (componentwise),
/// `z ≠ 0`, `|k| <= cutoff`.
pub fn scattering_intensity(p: &PointPattern, cutoff: f64) -> Result<ScatteringSpectrum> {
    scattering_intensity_with(p, cutoff, Taper::None)
}

/// Sine taper `h(x) = Π_k sin(π (x_k - a_k) / L_k)` and its transform at the
/// allowed mode `z`, `Π_k 2 L_k / (π (1 - 4 z_k²))`.
fn sine_taper(x: &[f64], w: &BoxWindow) -> f64 {
    (0..x.len()).map(|k| (PI * (x[k] - w.min[k]) / w.side(k)).sin()).product()
}

fn sine_taper_transform(z: &[i64], sides: &[f64]) -> f64 {
    z.iter()
        .zip(sides)
        .map(|(&zk, &l)| 2.0 * l / (PI * (1.0 - 4.0 * (zk * zk) as f64)))
        .product()
}

/// Scattering intensity with an optional data taper. The tapered estimate is
/// `|Σ_j h(x_j) e^{-ik·x_j} - ρ̂ ĥ(k)|² / (ρ̂ ∫ h²)`, which removes the
/// surface noise of points crossing the window faces.
pub fn scattering_intensity_with(p: &PointPattern, cutoff: f64, taper: Taper) -> Result<ScatteringSpectrum> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::param(format!("cutoff must be positive, got {cutoff}")));
    }
    if p.is_empty() {
        return Err(Error::InsufficientData("scattering intensity of an empty pattern".into()));
    }
    let w = p.window();
    let d = p.dim();
    let sides = w.sides();
    let zmax: Vec<i64> = sides.iter().map(|l| (cutoff * l / (2.0 * PI)).floor() as i64).collect();
    let mut modes: Vec<Vec<i64>> = Vec::new();
    let mut z: Vec<i64> = zmax.iter().map(|m| -m).collect();
    loop {
        let k2: f64 = (0..d).map(|k| (2.0 * PI * z[k] as f64 / sides[k]).powi(2)).sum();
        if z.iter().any(|&v| v != 0) && k2 <= cutoff * cutoff {
            modes.push(z.clone());
        }
        let mut k = d;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if z[k] < zmax[k] {
                z[k] += 1;
                break;
            }
            z[k] = -zmax[k];
            if k == 0 {
                k = usize::MAX;
                break;
            }
        }
        if k == usize::MAX {
            break;
        }
    }

    // per-point powers of exp(-i 2π x_k / L_k), indexed by z_k + zmax_k
    let n = p.len();
    let mut re = vec![0.0; modes.len()];
    let mut im = vec![0.0; modes.len()];
    let mut tables: Vec<Vec<(f64, f64)>> = zmax.iter().map(|&m| vec![(0.0, 0.0); 2 * m as usize + 1]).collect();
    for x in p.points() {
        let weight = match taper {
            Taper::None => 1.0,
            Taper::Sine => sine_taper(x, w),
        };
        for k in 0..d {
            let m = zmax[k];
            for zk in -m..=m {
                let phase = -2.0 * PI * zk as f64 * (x[k] - w.min[k]) / sides[k];
                tables[k][(zk + m) as usize] = (phase.cos(), phase.sin());
            }
        }
        for (slot, z) in modes.iter().enumerate() {
            let (mut a, mut b) = (1.0, 0.0);
            for k in 0..d {
                let (c, s) = tables[k][(z[k] + zmax[k]) as usize];
                let na = a * c - b * s;
                b = a * s + b * c;
                a = na;
            }
            re[slot] += weight * a;
            im[slot] += weight * b;
        }
    }
    let norm = match taper {
        Taper::None => n as f64,
        Taper::Sine => {
            let rho = p.intensity();
            for (slot, z) in modes.iter().enumerate() {
                re[slot] -= rho * sine_taper_transform(z, &sides);
            }
            rho * sides.iter().map(|l| 0.5 * l).product::<f64>()
        }
    };
    let wavevectors = modes
        .iter()
        .map(|z| (0..d).map(|k| 2.0 * PI * z[k] as f64 / sides[k]).collect())
        .collect();
    let intensities = re.iter().zip(&im).map(|(a, b)| (a * a + b * b) / norm).collect();
    Ok(ScatteringSpectrum {
        wavevectors,
        intensities,
        pattern_count: 1,
        sides,
        taper,
    })
}

impl ScatteringSpectrum {
    pub fn k_norms(&self) -> Vec<f64> {
        self.wavevectors.iter().map(|k| k.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    /// Averages spectra computed on identical modes.
    pub fn pool(spectra: &[ScatteringSpectrum]) -> Result<ScatteringSpectrum> {
        let first = spectra
            .first()
            .ok_or_else(|| Error::InsufficientData("no spectra to pool".into()))?;
        let total: usize = spectra.iter().map(|s| s.pattern_count).sum();
        let mut intensities = vec![0.0; first.intensities.len()];
        for s in spectra {
            if s.wavevectors != first.wavevectors || s.taper != first.taper {
                return Err(Error::param("spectra were computed on different modes"));
            }
            for (acc, v) in intensities.iter_mut().zip(&s.intensities) {
                *acc += v * s.pattern_count as f64;
            }
        }
        intensities.iter_mut().for_each(|v| *v /= total as f64);
        Ok(ScatteringSpectrum {
            wavevectors: first.wavevectors.clone(),
            intensities,
            pattern_count: total,
            sides: first.sides.clone(),
            taper: first.taper,
        })
    }

    /// Bins of width `π / min(L)` starting at zero; empty bins dropped.
    pub fn radial(&self) -> RadialSpectrum {
        let width = PI / self.sides.iter().copied().fold(f64::INFINITY, f64::min);
        let norms = self.k_norms();
        let nbins = norms.iter().map(|k| (k / width) as usize + 1).max().unwrap_or(0);
        let mut sk = vec![0.0; nbins];
        let mut ss = vec![0.0; nbins];
        let mut cnt = vec![0usize; nbins];
        for (k, s) in norms.iter().zip(&self.intensities) {
            let b = (k / width) as usize;
            sk[b] += k;
            ss[b] += s;
            cnt[b] += 1;
        }
        let mut out = RadialSpectrum {
            bin_lo: vec![],
            bin_hi: vec![],
            mean_k: vec![],
            mean_s: vec![],
            modes: vec![],
        };
        for b in (0..nbins).filter(|&b| cnt[b] > 0) {
            out.bin_lo.push(b as f64 * width);
            out.bin_hi.push((b + 1) as f64 * width);
            out.mean_k.push(sk[b] / cnt[b] as f64);
            out.mean_s.push(ss[b] / cnt[b] as f64);
            out.modes.push(cnt[b]);
        }
        out
    }
}

/// Log-log regression of the radially binned structure factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha_hat: f64,
    pub intercept: f64,
    pub k_max: f64,
    pub stderr: f64,
    pub bins: usize,
}

pub const MIN_EXPONENT_BINS: usize = 8;

/// Least-squares slope of `log S̄` against `log k̄` over bins with mean
/// wavenumber in `(0, k_max]`.
pub fn exponent_fit(spec: &ScatteringSpectrum, k_max: f64) -> Result<ExponentFit> {
    let radial = spec.radial();
    let pts: Vec<(f64, f64)> = radial
        .mean_k
        .iter()
        .zip(&radial.mean_s)
        .filter(|&(&k, &s)| k > 0.0 && k <= k_max && s > 0.0)
        .map(|(k, s)| (k.ln(), s.ln()))
        .collect();
    if pts.len() < MIN_EXPONENT_BINS {
        return Err(Error::InsufficientData(format!(
            "exponent fit needs at least {MIN_EXPONENT_BINS} spectral bins below k = {k_max}, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(ExponentFit {
        alpha_hat: slope,
        intercept,
        k_max,
        stderr: (rss / (n - 2.0) / sxx).sqrt(),
        bins: pts.len(),
    })
}

fn slab_axes(dim: usize, axis_pair: (usize, usize)) -> Result<Vec<usize>> {
    let (a, b) = axis_pair;
    if a >= dim || b >= dim || a == b {
        return Err(Error::param(format!("invalid axis pair {axis_pair:?} for dimension {dim}")));
    }
    Ok((0..dim).filter(|&k| k != a && k != b).collect())
}

/// Fry points: all displacements `x_i - x_j` (both orientations) whose
/// remaining coordinates lie within `±slab_halfwidth`, projected onto the
/// plane of `axis_pair`.
pub fn fry_slab(p: &PointPattern, axis_pair: (usize, usize), slab_halfwidth: f64) -> Result<Vec<[f64; 2]>> {
    if !(slab_halfwidth > 0.0) {
        return Err(Error::param(format!("slab half-width must be positive, got {slab_halfwidth}")));
    }
    let rest = slab_axes(p.dim(), axis_pair)?;
    let (a, b) = axis_pair;
    let mut out = Vec::new();
    for i in 0..p.len() {
        let xi = p.point(i);
        for j in 0..p.len() {
            if i == j {
                continue;
            }
            let xj = p.point(j);
            if rest.iter().all(|&k| (xi[k] - xj[k]).abs() <= slab_halfwidth) {
                out.push([xi[a] - xj[a], xi[b] - xj[b]]);
            }
        }
    }
    Ok(out)
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::param(format!("invalid histogram range [{lo}, {hi}) with {bins} bins")));
        }
        let step = (hi - lo) / bins as f64;
        Ok(Self {
            edges: (0..=bins).map(|i| lo + i as f64 * step).collect(),
            counts: vec![0.0; bins],
        })
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let lo = self.edges[0];
        let hi = self.edges[bins];
        if v < lo || v > hi {
            return;
        }
        let b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        self.counts[b.min(bins - 1)] += 1.0;
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (self.edges[i], self.edges[i + 1], c))
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Angles in `[0, 2π)` of nearest-neighbour vectors projected onto the plane
/// of `axis_pair`; zero-length projections are skipped.
pub fn nn_angle_histogram(p: &PointPattern, axis_pair: (usize, usize), bins: usize) -> Result<Histogram> {
    if p.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 points, got {}", p.len())));
    }
    if p.dim() < 2 {
        return Err(Error::param("angle histogram needs at least two dimensions"));
    }
    slab_axes(p.dim(), axis_pair)?;
    let mut hist = Histogram::uniform(0.0, 2.0 * PI, bins)?;
    let spacing = p.intensity().powf(-1.0 / p.dim() as f64);
    let grid = CellGrid::new(p, spacing);
    let (a, b) = axis_pair;
    for i in 0..p.len() {
        let (j, _) = grid.nearest(i).expect("pattern has a second point");
        let (xi, xj) = (p.point(i), p.point(j));
        let (u, v) = (xj[a] - xi[a], xj[b] - xi[b]);
        if u == 0.0 && v == 0.0 {
            continue;
        }
        hist.add(v.atan2(u).rem_euclid(2.0 * PI));
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rescale_examples() {
        let w = BoxWindow::cube(3, 1.0).unwrap();
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    pts.push(vec![(i as f64 + 0.5) / 10.0, (j as f64 + 0.5) / 10.0, (k as f64 + 0.5) / 10.0]);
                }
            }
        }
        let p = PointPattern::new(w, pts).unwrap();
        let q = rescale_to_unit_intensity(&p).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(q.window().max[k], 5.0, epsilon = 1e-12);
            assert_abs_diff_eq!(q.window().min[k], -5.0, epsilon = 1e-12);
        }
        let again = rescale_to_unit_intensity(&q).unwrap();
        assert_eq!(again, q);
        assert!(rescale_to_unit_intensity(&PointPattern::empty(BoxWindow::cube(3, 1.0).unwrap())).is_err());
    }

    #[test]
    fn two_point_k() {
        let w = BoxWindow::cube(3, 10.0).unwrap();
        let p = PointPattern::new(w.clone(), vec![vec![5.0, 5.0, 5.0], vec![5.5, 5.0, 5.0]]).unwrap();
        let k = k_empirical(&p, &[0.4, 0.5, 0.6]).unwrap();
        let jump = 2.0 * 1000.0 * 1000.0 / 2.0 / (9.5 * 100.0);
        assert_eq!(k.values[0], 0.0);
        assert_abs_diff_eq!(k.values[1], jump, epsilon = 1e-9);
        assert_abs_diff_eq!(k.values[2], jump, epsilon = 1e-9);
        assert!(matches!(k_empirical(&p, &[5.0]), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn scattering_single_point() {
        let w = BoxWindow::cube(3, 10.0).unwrap();
        let p = PointPattern::new(w, vec![vec![1.3, 2.0, 7.1]]).unwrap();
        let s = scattering_intensity(&p, 2.0).unwrap();
        assert!(!s.intensities.is_empty());
        for v in &s.intensities {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        assert!(s.wavevectors.iter().all(|k| k.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn scattering_matches_direct_sum() {
        let w = BoxWindow::new(vec![0.0, 0.0], vec![7.0, 9.0]).unwrap();
        let pts = vec![vec![0.3, 1.0], vec![4.2, 8.7], vec![6.9, 0.1], vec![2.2, 3.3]];
        let p = PointPattern::new(w, pts.clone()).unwrap();
        let s = scattering_intensity(&p, 3.0).unwrap();
        for (k, v) in s.wavevectors.iter().zip(&s.intensities) {
            let (mut re, mut im) = (0.0, 0.0);
            for x in &pts {
                let ph = -(k[0] * x[0] + k[1] * x[1]);
                re += ph.cos();
                im += ph.sin();
            }
            assert_abs_diff_eq!(*v, (re * re + im * im) / 4.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn fry_two_points() {
        let w = BoxWindow::cube(3, 4.0).unwrap();
        let p = PointPattern::new(w, vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let f = fry_slab(&p, (0, 1), 0.1).unwrap();
        assert_eq!(f, vec![[-1.0, 0.0], [1.0, 0.0]]);
        assert!(fry_slab(&p, (0, 0), 0.1).is_err());
        assert!(fry_slab(&p, (0, 1), 0.0).is_err());
    }

    #[test]
    fn right_triangle_angles() {
        let w = BoxWindow::cube(2, 10.0).unwrap();
        let p = PointPattern::new(w, vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let h = nn_angle_histogram(&p, (0, 1), 4).unwrap();
        // 0 -> 1 at angle 0, 1 -> 0 at π, 2 -> 0 at 3π/2
        assert_eq!(h.counts, vec![1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn box_layout() {
        let w = BoxWindow::centered_cube(3, 8.4384).unwrap();
        let design = BoxDesign::default();
        assert_eq!(design.layout(&w).unwrap(), vec![4, 4, 4]);
        let corners = design.corners(&w).unwrap();
        assert_eq!(corners.len(), 64);
        assert_abs_diff_eq!(corners[0][0], -(4.0 * 2.7 + 3.0 * 1.5) / 2.0, epsilon = 1e-12);
        let small = BoxWindow::cube(3, 5.0).unwrap();
        assert!(design.layout(&small).is_err());
    }

    #[test]
    fn box_counts_on_grid() {
        let w = BoxWindow::cube(2, 10.0).unwrap();
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(vec![i as f64 + 0.5, j as f64 + 0.5]);
            }
        }
        let p = PointPattern::new(w, pts).unwrap();
        let counts = box_counts(&p, &BoxDesign { side: 2.0, gap: 1.0 }).unwrap();
        assert_eq!(counts.len(), 9);
        assert!(counts.iter().all(|&c| c == 4));
    }

    #[test]
    fn histogram_bins() {
        let mut h = Histogram::uniform(0.0, 1.0, 4).unwrap();
        for v in [0.0, 0.1, 0.3, 0.99, 1.0, 1.5, -0.1] {
            h.add(v);
        }
        assert_eq!(h.counts, vec![2.0, 1.0, 0.0, 2.0]);
    }
}
