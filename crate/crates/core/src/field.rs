//! Stationary Gaussian perturbation fields on integer lattice blocks.
//!
//! Each of the `d` coordinates of the displacement field is an independent
//! copy of a scalar stationary Gaussian field with covariance `c(h)`, so
//! `cov(p_i, p_j) = d c(i - j)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::integer_shell_counts;
use crate::seed::SeedSpec;

/// Largest block (in sites) drawn by dense Cholesky factorization.
pub const CHOLESKY_SITE_CAP: usize = 4096;
/// Default cap on the number of sites in a simulated block.
pub const DEFAULT_SITE_CAP: usize = 20_000_000;
/// Largest circulant torus (in sites) attempted.
pub const TORUS_SITE_CAP: usize = 1 << 26;
/// Relative tolerance on negative circulant eigenvalues.
pub const EMBEDDING_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    /// No perturbation: the stationarized lattice.
    Stationarized,
    /// Independent centered Gaussian displacements.
    Iid,
    /// Powered-exponential covariance `σ² exp(-|h|^γ / range)`.
    Powexp,
}

fn default_range() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    2.0
}

/// Parametric covariance of a symmetric Gaussian perturbation field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub kind: CovarianceKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub dim: usize,
}

impl CovarianceModel {
    pub fn stationarized(dim: usize) -> Self {
        Self {
            kind: CovarianceKind::Stationarized,
            sigma: 0.0,
            range: default_range(),
            gamma: default_gamma(),
            dim,
        }
    }

    pub fn iid(dim: usize, sigma: f64) -> Result<Self> {
        let m = Self {
            kind: CovarianceKind::Iid,
            sigma,
            range: default_range(),
            gamma: default_gamma(),
            dim,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn powexp(dim: usize, sigma: f64, range: f64, gamma: f64) -> Result<Self> {
        let m = Self {
            kind: CovarianceKind::Powexp,
            sigma,
            range,
            gamma,
            dim,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::param("model dimension must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::param(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if self.kind == CovarianceKind::Powexp {
            if !(self.range > 0.0) || !self.range.is_finite() {
                return Err(Error::param(format!("range must be positive, got {}", self.range)));
            }
            if !(0.0..=2.0).contains(&self.gamma) {
                return Err(Error::NotPositiveDefinite(format!(
                    "exponent gamma = {} outside [0, 2]",
                    self.gamma
                )));
            }
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            CovarianceKind::Stationarized => 0.0,
            _ => self.sigma * self.sigma,
        }
    }

    /// Per-coordinate covariance `c(h)` at a lag of Euclidean norm `lag_norm`.
    pub fn coord_cov(&self, lag_norm: f64) -> f64 {
        match self.kind {
            CovarianceKind::Stationarized => 0.0,
            CovarianceKind::Iid => {
                if lag_norm == 0.0 {
                    self.sigma * self.sigma
                } else {
                    0.0
                }
            }
            CovarianceKind::Powexp => {
                self.sigma * self.sigma * (-lag_norm.powf(self.gamma) / self.range).exp()
            }
        }
    }

    /// `c` at a lag with squared norm `n2` (avoids a square root for even `γ`).
    pub fn coord_cov_sq(&self, n2: f64) -> f64 {
        match self.kind {
            CovarianceKind::Powexp => {
                self.sigma * self.sigma * (-n2.powf(0.5 * self.gamma) / self.range).exp()
            }
            _ => self.coord_cov(n2.sqrt()),
        }
    }
}

/// `cov(p_0, p_lag) = d c(lag)`.
pub fn covariance(model: &CovarianceModel, lag: &[i64]) -> f64 {
    let n2: f64 = lag.iter().map(|&v| (v * v) as f64).sum();
    model.dim as f64 * model.coord_cov_sq(n2)
}

/// Axis-aligned block of integer sites `origin + [0, shape)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteBlock {
    pub origin: Vec<i64>,
    pub shape: Vec<usize>,
}

impl SiteBlock {
    pub fn new(origin: Vec<i64>, shape: Vec<usize>) -> Result<Self> {
        if origin.len() != shape.len() || shape.is_empty() {
            return Err(Error::param("block origin and shape must have equal positive length"));
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::param("block is empty"));
        }
        Ok(Self { origin, shape })
    }

    pub fn cube(dim: usize, side: usize) -> Result<Self> {
        Self::new(vec![0; dim], vec![side; dim])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Site with row-major index `idx` (last axis fastest).
    pub fn site(&self, mut idx: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = self.origin[k] + (idx % self.shape[k]) as i64;
            idx /= self.shape[k];
        }
        out
    }
}

/// Simulated displacements on a block: `values[s * d + k]` is coordinate `k`
/// of the displacement at site `s` (row-major site order).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    pub block: SiteBlock,
    pub values: Vec<f64>,
    pub model: CovarianceModel,
    pub seed: SeedSpec,
    pub method: SimulationMethod,
}

impl FieldBlock {
    pub fn displacement(&self, site: usize) -> &[f64] {
        let d = self.model.dim;
        &self.values[site * d..(site + 1) * d]
    }

    /// Scalar field of coordinate `k`, in site order.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(k)
            .step_by(self.model.dim)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMethod {
    /// Field identically zero.
    Zero,
    /// Independent normal draws.
    Direct,
    /// Circulant embedding on a padded torus.
    Fft,
    /// Dense Cholesky factorization.
    Cholesky,
}

/// Spectrum summary of a circulant embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub torus_shape: Vec<usize>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub method: SimulationMethod,
}

/// Default padding per axis: `max(side, ceil(8 range))`.
pub fn default_padding(model: &CovarianceModel, side: usize) -> usize {
    match model.kind {
        CovarianceKind::Powexp => side.max((8.0 * model.range).ceil() as usize),
        _ => 0,
    }
}

/// Minimum eigenvalue of the circulant embedding of a cubic block of side
/// `block_side` on a torus of side `block_side + padding`.
pub fn check_embedding(model: &CovarianceModel, block_side: usize, padding: usize) -> EmbeddingReport {
    let shape = vec![block_side + padding; model.dim];
    match model.kind {
        CovarianceKind::Stationarized => EmbeddingReport {
            torus_shape: shape,
            min_eigenvalue: 0.0,
            max_eigenvalue: 0.0,
            method: SimulationMethod::Zero,
        },
        CovarianceKind::Iid => {
            let v = model.variance();
            EmbeddingReport {
                torus_shape: shape,
                min_eigenvalue: v,
                max_eigenvalue: v,
                method: SimulationMethod::Fft,
            }
        }
        CovarianceKind::Powexp => {
            let eig = circulant_eigenvalues(model, &shape);
            let (lo, hi) = min_max(&eig);
            let method = if embedding_ok(lo, hi) {
                SimulationMethod::Fft
            } else {
                SimulationMethod::Cholesky
            };
            EmbeddingReport {
                torus_shape: shape,
                min_eigenvalue: lo,
                max_eigenvalue: hi,
                method,
            }
        }
    }
}

fn embedding_ok(lo: f64, hi: f64) -> bool {
    lo >= -EMBEDDING_TOLERANCE * hi.abs().max(f64::MIN_POSITIVE)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Draws the field on `block` with the default size caps.
pub fn simulate_block(model: &CovarianceModel, block: &SiteBlock, seed: SeedSpec) -> Result<FieldBlock> {
    simulate_block_capped(model, block, seed, DEFAULT_SITE_CAP)
}

pub fn simulate_block_capped(
    model: &CovarianceModel,
    block: &SiteBlock,
    seed: SeedSpec,
    site_cap: usize,
) -> Result<FieldBlock> {
    Ok(FieldSampler::new(model, &block.shape, site_cap)?.sample(block, seed))
}

/// Precomputed factorization for repeated draws on blocks of one shape.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    model: CovarianceModel,
    shape: Vec<usize>,
    plan: Plan,
}

#[derive(Debug, Clone)]
enum Plan {
    Zero,
    Direct,
    Fft { torus: Vec<usize>, amp: Vec<f64> },
    Cholesky { lower: DMatrix<f64> },
}

impl FieldSampler {
    pub fn new(model: &CovarianceModel, shape: &[usize], site_cap: usize) -> Result<Self> {
        model.validate()?;
        if shape.len() != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                got: shape.len(),
            });
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::param("block is empty"));
        }
        let n: usize = shape.iter().product();
        if n > site_cap {
            return Err(Error::param(format!("block has {n} sites, cap is {site_cap}")));
        }
        let plan = match model.kind {
            _ if model.variance() == 0.0 => Plan::Zero,
            CovarianceKind::Stationarized => Plan::Zero,
            CovarianceKind::Iid => Plan::Direct,
            CovarianceKind::Powexp => powexp_plan(model, shape)?,
        };
        Ok(Self {
            model: *model,
            shape: shape.to_vec(),
            plan,
        })
    }

    pub fn method(&self) -> SimulationMethod {
        match self.plan {
            Plan::Zero => SimulationMethod::Zero,
            Plan::Direct => SimulationMethod::Direct,
            Plan::Fft { .. } => SimulationMethod::Fft,
            Plan::Cholesky { .. } => SimulationMethod::Cholesky,
        }
    }

    /// One draw on `block`, whose shape must match the sampler's.
    pub fn sample(&self, block: &SiteBlock, seed: SeedSpec) -> FieldBlock {
        assert_eq!(block.shape, self.shape, "block shape differs from sampler shape");
        let d = self.model.dim;
        let n = block.len();
        let mut rng = seed.rng();
        let values = match &self.plan {
            Plan::Zero => vec![0.0; n * d],
            Plan::Direct => {
                let s = self.model.sigma;
                (0..n * d)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            Plan::Fft { torus, amp } => circulant_sample(d, block, torus, amp, &mut rng),
            Plan::Cholesky { lower } => cholesky_sample(d, lower, &mut rng),
        };
        FieldBlock {
            block: block.clone(),
            values,
            model: self.model,
            seed,
            method: self.method(),
        }
    }
}

fn powexp_plan(model: &CovarianceModel, shape: &[usize]) -> Result<Plan> {
    let mut pads: Vec<usize> = shape.iter().map(|&s| default_padding(model, s)).collect();
    let mut last_min = f64::NAN;
    for _attempt in 0..4 {
        let torus: Vec<usize> = shape.iter().zip(&pads).map(|(s, p)| s + p).collect();
        if torus.iter().product::<usize>() > TORUS_SITE_CAP {
            break;
        }
        let eig = circulant_eigenvalues(model, &torus);
        let (lo, hi) = min_max(&eig);
        last_min = lo;
        if embedding_ok(lo, hi) {
            let total = eig.len() as f64;
            let amp = eig.iter().map(|&l| (l.max(0.0) / total).sqrt()).collect();
            return Ok(Plan::Fft { torus, amp });
        }
        for p in pads.iter_mut() {
            *p *= 2;
        }
    }
    let n: usize = shape.iter().product();
    if n > CHOLESKY_SITE_CAP {
        return Err(Error::NotEmbeddable(format!(
            "minimum circulant eigenvalue {last_min:e} after padding; {n} sites exceed the Cholesky cap {CHOLESKY_SITE_CAP}"
        )));
    }
    Ok(Plan::Cholesky {
        lower: cholesky_factor(model, shape)?,
    })
}

/// Eigenvalues of the circulant matrix obtained by wrapping `c` on a torus.
pub fn circulant_eigenvalues(model: &CovarianceModel, torus: &[usize]) -> Vec<f64> {
    let total: usize = torus.iter().product();
    let mut data = vec![Complex::new(0.0, 0.0); total];
    let mut idx = vec![0usize; torus.len()];
    for cell in data.iter_mut() {
        let n2: f64 = idx
            .iter()
            .zip(torus)
            .map(|(&m, &t)| {
                let w = m.min(t - m) as f64;
                w * w
            })
            .sum();
        *cell = Complex::new(model.coord_cov_sq(n2), 0.0);
        increment(&mut idx, torus);
    }
    fft_nd(&mut data, torus);
    data.into_iter().map(|c| c.re).collect()
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..shape.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// In-place unnormalized forward DFT over a row-major array.
fn fft_nd(data: &mut [Complex<f64>], shape: &[usize]) {
    let mut planner = FftPlanner::new();
    let total = data.len();
    let mut stride = 1;
    for k in (0..shape.len()).rev() {
        let len = shape[k];
        let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(len);
        let mut line = vec![Complex::new(0.0, 0.0); len];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let block = len * stride;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
        stride *= len;
    }
}

fn circulant_sample<R: Rng>(
    dim: usize,
    block: &SiteBlock,
    torus: &[usize],
    amp: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let n = block.len();
    let mut values = vec![0.0; n * dim];
    let mut k = 0;
    while k < dim {
        let mut data: Vec<Complex<f64>> = amp
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(a * re, a * im)
            })
            .collect();
        fft_nd(&mut data, torus);
        let mut idx = vec![0usize; dim];
        for s in 0..n {
            let flat = idx.iter().zip(torus).fold(0, |acc, (&i, &t)| acc * t + i);
            values[s * dim + k] = data[flat].re;
            if k + 1 < dim {
                values[s * dim + k + 1] = data[flat].im;
            }
            increment(&mut idx, &block.shape);
        }
        k += 2;
    }
    values
}

fn cholesky_factor(model: &CovarianceModel, shape: &[usize]) -> Result<DMatrix<f64>> {
    let block = SiteBlock::new(vec![0; shape.len()], shape.to_vec())?;
    let n = block.len();
    let sites: Vec<Vec<i64>> = (0..n).map(|s| block.site(s)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let n2: f64 = sites[i]
            .iter()
            .zip(&sites[j])
            .map(|(a, b)| ((a - b) * (a - b)) as f64)
            .sum();
        model.coord_cov_sq(n2)
    });
    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None => {
            let mut jittered = cov;
            let jitter = 1e-10 * model.variance();
            for i in 0..n {
                jittered[(i, i)] += jitter;
            }
            jittered.cholesky().ok_or_else(|| {
                Error::NotEmbeddable(format!(
                    "covariance matrix of {n} sites is not positive definite within jitter {jitter:e}"
                ))
            })?
        }
    };
    Ok(chol.l())
}

fn cholesky_sample<R: Rng>(dim: usize, lower: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = lower.nrows();
    let mut values = vec![0.0; n * dim];
    for k in 0..dim {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = lower * z;
        for s in 0..n {
            values[s * dim + k] = x[s];
        }
    }
    values
}

/// Convergence diagnostics for `Σ_{|i| <= R} |cov(p_0, p_i)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    /// `(R, partial sum)` pairs for `R = 1, 2, ...`.
    pub partial_sums: Vec<(f64, f64)>,
    /// Smallest `R` beyond which relative increments stay below `1e-8`.
    pub converged_at: Option<f64>,
}

/// Partial sums of `|d c(i)|` over growing balls, up to `max_radius`.
pub fn summability(model: &CovarianceModel, max_radius: usize) -> SummabilityReport {
    let max_sq = (max_radius * max_radius) as u64;
    let shells = integer_shell_counts(model.dim, max_sq);
    let d = model.dim as f64;
    let mut partial = d * model.coord_cov(0.0).abs();
    let mut sums = Vec::with_capacity(max_radius);
    let mut sq = 1u64;
    for radius in 1..=max_radius {
        let lim = (radius * radius) as u64;
        while sq <= lim {
            if shells[sq as usize] > 0 {
                partial += shells[sq as usize] as f64 * d * model.coord_cov_sq(sq as f64).abs();
            }
            sq += 1;
        }
        sums.push((radius as f64, partial));
    }
    let mut converged_at = None;
    for w in (1..sums.len()).rev() {
        let (r, s) = sums[w];
        let prev = sums[w - 1].1;
        let rel = if s == 0.0 { 0.0 } else { (s - prev).abs() / s.abs() };
        if rel >= 1e-8 {
            break;
        }
        converged_at = Some(r);
    }
    SummabilityReport {
        partial_sums: sums,
        converged_at,
    }
}
