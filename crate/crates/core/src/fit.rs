//! Minimum contrast estimation of perturbed-lattice parameters from an
//! empirical K-function, with the variance-weighted second stage.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{check_grid, CurveKind, SummaryCurve};
use crate::error::{Error, Result};
use crate::estimators::l_centered_empirical;
use crate::field::{CovarianceKind, CovarianceModel};
use crate::geometry::{BoxWindow, PointPattern};
use crate::ktheory::k_theoretical;
use crate::seed::SeedSpec;
use crate::sim::{LatticeSimulator, PerturbedLatticeSpec};

pub const WEIGHT_FLOOR: f64 = 1e-12;
pub const MIN_L_REPLICATES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub r1: f64,
    pub r2: f64,
    pub transform_power: f64,
    /// Pointwise variance `l̂(r)` of the centered L-function; weights are
    /// `1 / sqrt(l̂)`.
    pub weight: Option<SummaryCurve>,
    pub grid_step: f64,
    /// Lattice-shell truncation radius of the theoretical K.
    pub q: f64,
}

impl ContrastSpec {
    pub fn new(r1: f64, r2: f64) -> Self {
        Self {
            r1,
            r2,
            transform_power: 0.25,
            weight: None,
            grid_step: 0.02,
            q: 15.0,
        }
    }

    pub fn with_weight(mut self, weight: SummaryCurve) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r1 >= 0.0) || !(self.r2 > self.r1) || !self.r2.is_finite() {
            return Err(Error::param(format!("need 0 <= r1 < r2, got [{}, {}]", self.r1, self.r2)));
        }
        if !(self.grid_step > 0.0) || !(self.transform_power > 0.0) || !(self.q > 0.0) {
            return Err(Error::param("grid step, transform power and q must be positive"));
        }
        Ok(())
    }

    /// Integration nodes `r1, r1 + step, ..., r2`.
    pub fn nodes(&self) -> Vec<f64> {
        let n = ((self.r2 - self.r1) / self.grid_step - 1e-9).ceil().max(1.0) as usize;
        let h = (self.r2 - self.r1) / n as f64;
        (0..=n).map(|j| self.r1 + j as f64 * h).collect()
    }
}

/// Box constraints on `(σ, range, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub sigma: (f64, f64),
    pub range: (f64, f64),
    pub gamma: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            sigma: (1e-3, 1.0),
            range: (0.1, 10.0),
            gamma: (0.05, 2.0),
        }
    }
}

impl Bounds {
    fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a > 0.0 && b >= a && b.is_finite();
        if !ok(self.sigma) || !ok(self.range) || !ok(self.gamma) || self.gamma.1 > 2.0 {
            return Err(Error::param(format!("invalid bounds {self:?}")));
        }
        Ok(())
    }

    fn contains(&self, model: &CovarianceModel) -> bool {
        let inside = |v: f64, (a, b): (f64, f64)| v >= a && v <= b;
        inside(model.sigma, self.sigma)
            && (model.kind != CovarianceKind::Powexp
                || (inside(model.range, self.range) && inside(model.gamma, self.gamma)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_kind: CovarianceKind,
    /// `[σ]` for iid, `[σ, range, γ]` for powexp.
    pub theta_hat: Vec<f64>,
    pub model: CovarianceModel,
    pub contrast_value: f64,
    pub n_evals: usize,
    pub converged: bool,
    pub trace: Vec<(Vec<f64>, f64)>,
    /// Stage-1 result of a two-stage fit.
    pub stage1: Option<Box<FitResult>>,
}

fn interpolate_on(curve: &SummaryCurve, nodes: &[f64], what: &str) -> Result<Vec<f64>> {
    nodes
        .iter()
        .map(|&r| {
            curve.interpolate(r).ok_or_else(|| {
                Error::Grid(format!(
                    "{what} grid [{}, {}] does not cover r = {r}",
                    curve.r_grid[0],
                    curve.r_grid[curve.len() - 1]
                ))
            })
        })
        .collect()
}

/// Precomputed data side of the contrast.
struct Contrast {
    nodes: Vec<f64>,
    k_hat_pow: Vec<f64>,
    /// Trapezoid weight times `w(r)`.
    weights: Vec<f64>,
    power: f64,
    q: f64,
}

impl Contrast {
    fn new(k_hat: &SummaryCurve, spec: &ContrastSpec) -> Result<Self> {
        spec.validate()?;
        if k_hat.kind != CurveKind::K {
            return Err(Error::param(format!("contrast needs a K curve, got {:?}", k_hat.kind)));
        }
        let nodes = spec.nodes();
        let k = interpolate_on(k_hat, &nodes, "empirical K")?;
        if let Some((r, v)) = nodes.iter().zip(&k).find(|(_, &v)| v < 0.0) {
            return Err(Error::param(format!("negative empirical K value {v} at r = {r}")));
        }
        let w = match &spec.weight {
            None => vec![1.0; nodes.len()],
            Some(l) => interpolate_on(l, &nodes, "weight")?
                .into_iter()
                .map(|v| 1.0 / v.max(WEIGHT_FLOOR).sqrt())
                .collect(),
        };
        let h = (spec.r2 - spec.r1) / (nodes.len() - 1) as f64;
        let last = nodes.len() - 1;
        let weights = w
            .iter()
            .enumerate()
            .map(|(j, wj)| if j == 0 || j == last { 0.5 * h * wj } else { h * wj })
            .collect();
        Ok(Self {
            k_hat_pow: k.iter().map(|v| v.powf(spec.transform_power)).collect(),
            nodes,
            weights,
            power: spec.transform_power,
            q: spec.q,
        })
    }

    fn eval(&self, model: &CovarianceModel) -> Result<f64> {
        let kt = k_theoretical(model, &self.nodes, self.q)?;
        Ok(kt
            .values
            .iter()
            .zip(&self.k_hat_pow)
            .zip(&self.weights)
            .map(|((kt, kh), w)| w * (kt.max(0.0).powf(self.power) - kh).powi(2))
            .sum())
    }
}

/// `D(θ) = ∫_{r1}^{r2} w(r) |K_θ(r)^p - K̂(r)^p|² dr` by the trapezoid rule.
pub fn contrast(model: &CovarianceModel, k_hat: &SummaryCurve, spec: &ContrastSpec) -> Result<f64> {
    model.validate()?;
    Contrast::new(k_hat, spec)?.eval(model)
}

fn theta_of(model: &CovarianceModel) -> Vec<f64> {
    match model.kind {
        CovarianceKind::Powexp => vec![model.sigma, model.range, model.gamma],
        _ => vec![model.sigma],
    }
}

/// Optimisation coordinates: `ln σ`, `ln range`, and `γ` itself. A logit
/// of `γ / 2` could never reach the boundary value `γ = 2`.
struct Coordinates {
    kind: CovarianceKind,
    dim: usize,
    bounds: Bounds,
}

impl Coordinates {
    fn to_internal(&self, m: &CovarianceModel) -> Vec<f64> {
        match self.kind {
            CovarianceKind::Powexp => vec![m.sigma.ln(), m.range.ln(), m.gamma],
            _ => vec![m.sigma.ln()],
        }
    }

    fn to_model(&self, u: &[f64]) -> CovarianceModel {
        let b = &self.bounds;
        let clamp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
        let sigma = clamp(u[0].exp(), b.sigma);
        match self.kind {
            CovarianceKind::Powexp => CovarianceModel {
                kind: CovarianceKind::Powexp,
                sigma,
                range: clamp(u[1].exp(), b.range),
                gamma: clamp(u[2], b.gamma),
                dim: self.dim,
            },
            _ => CovarianceModel {
                kind: CovarianceKind::Iid,
                sigma,
                range: 1.0,
                gamma: 2.0,
                dim: self.dim,
            },
        }
    }

    fn steps(&self) -> Vec<f64> {
        match self.kind {
            CovarianceKind::Powexp => vec![0.2, 0.3, 0.3],
            _ => vec![0.2],
        }
    }
}

struct NelderMeadRun {
    best: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
    trace: Vec<(Vec<f64>, f64)>,
}

pub const MAX_EVALS: usize = 500;
pub const SIMPLEX_TOLERANCE: f64 = 1e-4;

fn nelder_mead(f: &dyn Fn(&[f64]) -> Result<f64>, start: &[f64], steps: &[f64]) -> Result<NelderMeadRun> {
    let n = start.len();
    let mut trace = Vec::new();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], trace: &mut Vec<(Vec<f64>, f64)>| -> Result<f64> {
        evals += 1;
        let v = f(x)?;
        trace.push((x.to_vec(), v));
        Ok(v)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(start, &mut trace)?;
    simplex.push((start.to_vec(), v0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += steps[i];
        let v = eval(&x, &mut trace)?;
        simplex.push((x, v));
    }
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < SIMPLEX_TOLERANCE {
            converged = true;
            break;
        }
        if trace.len() >= MAX_EVALS {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|s| s.0[k]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (worst.0[k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut trace)?;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut trace)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                let v = eval(&x, &mut trace)?;
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x, &mut trace)?;
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&s.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = eval(&x, &mut trace)?;
                    *s = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(NelderMeadRun {
        best: simplex[0].0.clone(),
        value: simplex[0].1,
        evals: trace.len(),
        converged,
        trace,
    })
}

pub const RESTARTS: usize = 3;
const JITTER_SEED: u64 = 0x6a09_e667_f3bc_c908;

/// Nelder–Mead minimum contrast fit from `init` and three jittered starts.
pub fn fit_min_contrast(
    k_hat: &SummaryCurve,
    init: &CovarianceModel,
    spec: &ContrastSpec,
    bounds: &Bounds,
) -> Result<FitResult> {
    init.validate()?;
    bounds.validate()?;
    if init.kind == CovarianceKind::Stationarized {
        return Err(Error::param("the stationarized lattice has no parameters to fit"));
    }
    if !bounds.contains(init) {
        return Err(Error::param(format!("initial value {:?} outside bounds", theta_of(init))));
    }
    let contrast = Contrast::new(k_hat, spec)?;
    let coords = Coordinates {
        kind: init.kind,
        dim: init.dim,
        bounds: *bounds,
    };
    let start = coords.to_internal(init);
    let init_value = contrast.eval(init)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let steps = coords.steps();
    let mut starts = vec![start.clone()];
    for _ in 0..RESTARTS {
        starts.push(
            start
                .iter()
                .zip(&steps)
                .map(|(s, h)| s + h * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        );
    }
    let objective = |u: &[f64]| contrast.eval(&coords.to_model(u));
    let runs: Vec<NelderMeadRun> = starts
        .par_iter()
        .map(|s| nelder_mead(&objective, s, &steps))
        .collect::<Result<_>>()?;

    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one run");
    let run = &runs[best];
    let (model, value, improved) = if run.value <= init_value {
        (coords.to_model(&run.best), run.value, run.value < init_value || run.value == 0.0)
    } else {
        (*init, init_value, false)
    };
    let trace = runs
        .iter()
        .flat_map(|r| r.trace.iter().map(|(u, v)| (theta_of(&coords.to_model(u)), *v)))
        .collect();
    Ok(FitResult {
        model_kind: init.kind,
        theta_hat: theta_of(&model),
        model,
        contrast_value: value,
        n_evals: runs.iter().map(|r| r.evals).sum::<usize>() + 1,
        converged: improved && runs.iter().any(|r| r.converged),
        trace,
        stage1: None,
    })
}

/// Pointwise sample variance of `L̂(r) - r` across replicates.
pub fn empirical_l_variance(batch: &[PointPattern], r_grid: &[f64]) -> Result<SummaryCurve> {
    check_grid(r_grid)?;
    if batch.len() < MIN_L_REPLICATES {
        return Err(Error::InsufficientData(format!(
            "L variance needs at least {MIN_L_REPLICATES} replicates, got {}",
            batch.len()
        )));
    }
    let curves: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|p| l_centered_empirical(p, r_grid).map(|c| c.values))
        .collect::<Result<_>>()?;
    let n = curves.len() as f64;
    let values = (0..r_grid.len())
        .map(|j| {
            let mean = curves.iter().map(|c| c[j]).sum::<f64>() / n;
            curves.iter().map(|c| (c[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    SummaryCurve::new(r_grid.to_vec(), values, CurveKind::LVariance)
}

/// Settings of the simulation-based second stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTwo {
    pub r1: f64,
    pub r2: f64,
    pub n_sims: usize,
    /// Window of the replicates (normally the data window).
    pub window: BoxWindow,
    pub seed: SeedSpec,
}

impl StageTwo {
    pub fn new(window: BoxWindow, seed: SeedSpec) -> Self {
        Self {
            r1: 0.2,
            r2: 2.0,
            n_sims: 100,
            window,
            seed,
        }
    }
}

/// Unweighted stage-1 fit, then a fit weighted by the L variance of
/// `n_sims` replicates simulated at the stage-1 estimate.
pub fn fit_two_stage(
    k_hat: &SummaryCurve,
    init: &CovarianceModel,
    stage1: &ContrastSpec,
    stage2: &StageTwo,
    bounds: &Bounds,
) -> Result<FitResult> {
    let first = fit_min_contrast(k_hat, init, stage1, bounds).map_err(|e| e.staged("stage 1"))?;
    let weighted = || -> Result<FitResult> {
        let spec = PerturbedLatticeSpec::new(first.model, stage2.window.clone(), stage2.seed);
        let batch = LatticeSimulator::new(&spec)?.batch(stage2.n_sims);
        let mut spec2 = ContrastSpec::new(stage2.r1, stage2.r2);
        spec2.transform_power = stage1.transform_power;
        spec2.grid_step = stage1.grid_step;
        spec2.q = stage1.q;
        let l_var = empirical_l_variance(&batch, &spec2.nodes())?;
        fit_min_contrast(k_hat, &first.model, &spec2.with_weight(l_var), bounds)
    };
    let mut second = weighted().map_err(|e| e.staged("stage 2"))?;
    second.stage1 = Some(Box::new(first));
    Ok(second)
}
