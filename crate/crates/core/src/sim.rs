//! Realizations of perturbed lattices `{i + U + p_i : i in Z^d}` in a window.

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CovarianceKind, CovarianceModel, FieldSampler, SimulationMethod, SiteBlock, DEFAULT_SITE_CAP};
use crate::geometry::{BoxWindow, PointPattern};
use crate::seed::SeedSpec;

const FIELD_TAG: u64 = 0x6669_656c_64;

/// What to simulate and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedLatticeSpec {
    pub model: CovarianceModel,
    pub target_window: BoxWindow,
    /// Extra margin of lattice sites on every side of the window.
    pub buffer: f64,
    pub seed: SeedSpec,
}

impl PerturbedLatticeSpec {
    /// Spec with the default buffer `ceil(3σ + 3)`.
    pub fn new(model: CovarianceModel, target_window: BoxWindow, seed: SeedSpec) -> Self {
        let buffer = default_buffer(&model);
        Self {
            model,
            target_window,
            buffer,
            seed,
        }
    }

    pub fn with_buffer(mut self, buffer: f64) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn with_seed(mut self, seed: SeedSpec) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.target_window.validate()?;
        if self.target_window.dim() != self.model.dim {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim,
                got: self.target_window.dim(),
            });
        }
        if !(self.buffer >= 0.0) || !self.buffer.is_finite() {
            return Err(Error::param(format!("buffer must be finite and >= 0, got {}", self.buffer)));
        }
        Ok(())
    }

    /// Sites whose displaced positions can reach the buffered window.
    pub fn site_block(&self) -> Result<SiteBlock> {
        let w = &self.target_window;
        let origin: Vec<i64> = w.min.iter().map(|a| (a - self.buffer).floor() as i64 - 1).collect();
        let shape: Vec<usize> = w
            .max
            .iter()
            .zip(&origin)
            .map(|(b, &o)| ((b + self.buffer).ceil() as i64 - o + 1) as usize)
            .collect();
        SiteBlock::new(origin, shape)
    }
}

/// `ceil(3σ + 3)` lattice units.
pub fn default_buffer(model: &CovarianceModel) -> f64 {
    (3.0 * model.sigma + 3.0).ceil()
}

/// Suggested minimum buffer: three standard deviations plus the lag at which
/// the correlation drops below `1e-3`.
pub fn recommended_buffer(model: &CovarianceModel) -> f64 {
    let margin = match model.kind {
        CovarianceKind::Powexp if model.gamma > 0.0 => {
            (model.range * (1e3f64).ln()).powf(1.0 / model.gamma)
        }
        _ => 0.0,
    };
    3.0 * model.sigma + margin
}

/// Realization plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub pattern: PointPattern,
    pub shift: Vec<f64>,
    pub sites: usize,
    pub method: SimulationMethod,
    pub recommended_buffer: f64,
}

/// Reusable simulator for one spec; the field factorization is shared by
/// all replicates.
#[derive(Debug, Clone)]
pub struct LatticeSimulator {
    spec: PerturbedLatticeSpec,
    block: SiteBlock,
    sampler: FieldSampler,
}

impl LatticeSimulator {
    pub fn new(spec: &PerturbedLatticeSpec) -> Result<Self> {
        spec.validate()?;
        let block = spec.site_block()?;
        let sampler = FieldSampler::new(&spec.model, &block.shape, DEFAULT_SITE_CAP)?;
        Ok(Self {
            spec: spec.clone(),
            block,
            sampler,
        })
    }

    pub fn spec(&self) -> &PerturbedLatticeSpec {
        &self.spec
    }

    pub fn run(&self, seed: SeedSpec) -> Simulation {
        let d = self.spec.model.dim;
        let mut rng = seed.rng();
        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let field = self.sampler.sample(&self.block, seed.derive(FIELD_TAG));
        let window = &self.spec.target_window;
        let mut coords = Vec::new();
        let mut x = vec![0.0; d];
        let mut idx = vec![0usize; d];
        for s in 0..self.block.len() {
            let p = field.displacement(s);
            for k in 0..d {
                x[k] = (self.block.origin[k] + idx[k] as i64) as f64 + shift[k] + p[k];
            }
            if window.contains(&x) {
                coords.extend_from_slice(&x);
            }
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < self.block.shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Simulation {
            pattern: PointPattern::from_flat_unchecked(window.clone(), coords),
            shift,
            sites: self.block.len(),
            method: self.sampler.method(),
            recommended_buffer: recommended_buffer(&self.spec.model),
        }
    }

    /// `n` replicates on streams `stream_id .. stream_id + n`.
    pub fn batch(&self, n: usize) -> Vec<PointPattern> {
        (0..n as u64)
            .into_par_iter()
            .map(|j| self.run(self.spec.seed.offset(j)).pattern)
            .collect()
    }
}

/// One realization cropped to the target window.
pub fn simulate(spec: &PerturbedLatticeSpec) -> Result<PointPattern> {
    Ok(simulate_detailed(spec)?.pattern)
}

pub fn simulate_detailed(spec: &PerturbedLatticeSpec) -> Result<Simulation> {
    Ok(LatticeSimulator::new(spec)?.run(spec.seed))
}

/// `n` independent realizations on consecutive streams.
pub fn simulate_batch(spec: &PerturbedLatticeSpec, n: usize) -> Result<Vec<PointPattern>> {
    if n == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    Ok(LatticeSimulator::new(spec)?.batch(n))
}

/// Homogeneous Poisson process of the given intensity in `window`.
pub fn simulate_poisson(window: &BoxWindow, intensity: f64, seed: SeedSpec) -> Result<PointPattern> {
    window.validate()?;
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::param(format!("intensity must be positive, got {intensity}")));
    }
    let mut rng = seed.rng();
    let mean = intensity * window.volume();
    let n = rand_distr::Poisson::new(mean)
        .map_err(|e| Error::param(format!("Poisson mean {mean}: {e}")))?
        .sample(&mut rng) as usize;
    let d = window.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for k in 0..d {
            coords.push(window.min[k] + rng.random::<f64>() * window.side(k));
        }
    }
    Ok(PointPattern::from_flat_unchecked(window.clone(), coords))
}
