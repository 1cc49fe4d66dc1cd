//! Global rank envelope tests of a null model against the centered
//! L-function of observed data.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::check_grid;
use crate::error::{Error, Result};
use crate::estimators::{box_counts, l_centered_empirical, BoxDesign};
use crate::field::CovarianceModel;
use crate::geometry::PointPattern;
use crate::seed::SeedSpec;
use crate::sim::{simulate_poisson, LatticeSimulator, PerturbedLatticeSpec};
use crate::special::ln_gamma;

/// Ordering of whole curves by extremeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMeasure {
    /// Extreme rank length: sorted pointwise ranks compared lexicographically.
    #[default]
    Erl,
    /// Mean of continuous pointwise ranks capped at the extreme rank.
    Area,
}

/// Model the data are tested against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullModel {
    Lattice(CovarianceModel),
    /// Homogeneous Poisson process; intensity defaults to the data's.
    Poisson { intensity: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub r_grid: Vec<f64>,
    pub data_curve: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    /// `(p_lower, p_upper)`; the conservative p-value is `p_upper`.
    pub p_interval: (f64, f64),
    pub measure: RankMeasure,
    pub n_sims: usize,
    pub rejected: bool,
}

/// Minimum number of simulations for a test at level `alpha`.
pub fn min_sims(alpha: f64) -> usize {
    ((1.0 / alpha) - 1.0 - 1e-9).ceil().max(1.0) as usize
}

/// Pointwise two-sided integer ranks `min(#{T_j <= T_i}, #{T_j >= T_i})`.
fn pointwise_ranks(curves: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = curves.len();
    let m = curves[0].len();
    let mut ranks = vec![vec![0.0; m]; n];
    let mut col: Vec<f64> = vec![0.0; n];
    for r in 0..m {
        for i in 0..n {
            col[i] = curves[i][r];
        }
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        for i in 0..n {
            let le = sorted.partition_point(|&v| v <= col[i]);
            let ge = n - sorted.partition_point(|&v| v < col[i]);
            ranks[i][r] = le.min(ge) as f64;
        }
    }
    ranks
}

/// Continuous two-sided ranks: the ascending rank of the value at sorted
/// position `j` (1-based) is `j - 1 + g_below / (g_below + g_above)` with
/// `g` the gaps to its sorted neighbours; at the extremes the missing gap is
/// replaced by the adjacent interior gap. The descending rank is the same
/// construction on `-T`.
fn continuous_ranks(curves: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = curves.len();
    let m = curves[0].len();
    let mut out = vec![vec![0.0; m]; n];
    let ascending = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let v: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        let gap = |j: usize| v[j + 1] - v[j];
        let mut res = vec![0.0; n];
        for (pos, &i) in order.iter().enumerate() {
            let (below, above) = if n < 3 {
                (1.0, 1.0)
            } else if pos == 0 {
                (gap(0), gap(1))
            } else if pos == n - 1 {
                (gap(n - 3), gap(n - 2))
            } else {
                (gap(pos - 1), gap(pos))
            };
            let frac = if pos == 0 {
                // a lone minimum far below the rest gets a rank near 0
                if below + above > 0.0 { above / (below + above) } else { 1.0 }
            } else if below + above > 0.0 {
                below / (below + above)
            } else {
                1.0
            };
            // tied values share the rank of the first of them
            let first = v.partition_point(|&x| x < v[pos]);
            res[i] = if first < pos { first as f64 + 1.0 } else { pos as f64 + frac };
        }
        res
    };
    let mut col = vec![0.0; n];
    for r in 0..m {
        for i in 0..n {
            col[i] = curves[i][r];
        }
        let asc = ascending(&col);
        let neg: Vec<f64> = col.iter().map(|v| -v).collect();
        let desc = ascending(&neg);
        for i in 0..n {
            out[i][r] = asc[i].min(desc[i]);
        }
    }
    out
}

/// Per-curve measure; `cmp(a, b) == Less` means `a` is more extreme.
enum Measures {
    Erl(Vec<Vec<f64>>),
    Area(Vec<f64>),
}

impl Measures {
    fn new(curves: &[Vec<f64>], measure: RankMeasure) -> Self {
        let ranks = pointwise_ranks(curves);
        match measure {
            RankMeasure::Erl => Measures::Erl(
                ranks
                    .into_iter()
                    .map(|mut r| {
                        r.sort_by(f64::total_cmp);
                        r
                    })
                    .collect(),
            ),
            RankMeasure::Area => {
                let cont = continuous_ranks(curves);
                Measures::Area(
                    ranks
                        .iter()
                        .zip(&cont)
                        .map(|(r, c)| {
                            let extreme = r.iter().copied().fold(f64::INFINITY, f64::min);
                            c.iter().map(|&v| v.min(extreme)).sum::<f64>() / c.len() as f64
                        })
                        .collect(),
                )
            }
        }
    }

    fn cmp(&self, a: usize, b: usize) -> Ordering {
        match self {
            Measures::Erl(v) => {
                for (x, y) in v[a].iter().zip(&v[b]) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                Ordering::Equal
            }
            Measures::Area(v) => v[a].total_cmp(&v[b]),
        }
    }
}

/// Ranks the data curve (index 0) among simulated curves and builds the
/// global envelope from all curves whose own conservative p-value is at
/// least `alpha`.
pub fn rank_envelope(
    r_grid: &[f64],
    data: &[f64],
    sims: &[Vec<f64>],
    measure: RankMeasure,
    alpha: f64,
) -> Result<EnvelopeResult> {
    check_grid(r_grid)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("level must lie in (0, 1), got {alpha}")));
    }
    let need = min_sims(alpha);
    if sims.len() < need {
        return Err(Error::InsufficientData(format!(
            "a level-{alpha} test needs at least {need} simulations, got {}",
            sims.len()
        )));
    }
    let m = r_grid.len();
    if data.len() != m || sims.iter().any(|s| s.len() != m) {
        return Err(Error::Grid("curves must be sampled on the r grid".into()));
    }
    let mut curves = Vec::with_capacity(sims.len() + 1);
    curves.push(data.to_vec());
    curves.extend(sims.iter().cloned());
    let total = curves.len();
    let measures = Measures::new(&curves, measure);

    let as_extreme = |i: usize| (0..total).filter(|&j| measures.cmp(j, i) != Ordering::Greater).count();
    let strictly = (1..total).filter(|&j| measures.cmp(j, 0) == Ordering::Less).count();
    let p_upper = as_extreme(0) as f64 / total as f64;
    let p_lower = strictly as f64 / total as f64;

    let mut lower = vec![f64::INFINITY; m];
    let mut upper = vec![f64::NEG_INFINITY; m];
    for i in 0..total {
        if (as_extreme(i) as f64) / (total as f64) < alpha {
            continue;
        }
        for r in 0..m {
            lower[r] = lower[r].min(curves[i][r]);
            upper[r] = upper[r].max(curves[i][r]);
        }
    }
    Ok(EnvelopeResult {
        r_grid: r_grid.to_vec(),
        data_curve: data.to_vec(),
        lower,
        upper,
        alpha,
        p_interval: (p_lower, p_upper),
        measure,
        n_sims: sims.len(),
        rejected: p_upper < alpha,
    })
}

/// Simulated replicates of the null model in the data window.
pub fn simulate_null(data: &PointPattern, model: &NullModel, n: usize, seed: SeedSpec) -> Result<Vec<PointPattern>> {
    match model {
        NullModel::Lattice(m) => {
            if m.dim != data.dim() {
                return Err(Error::DimensionMismatch {
                    expected: data.dim(),
                    got: m.dim,
                });
            }
            let spec = PerturbedLatticeSpec::new(*m, data.window().clone(), seed);
            Ok(LatticeSimulator::new(&spec)?.batch(n))
        }
        NullModel::Poisson { intensity } => {
            let rho = intensity.unwrap_or_else(|| data.intensity());
            (0..n as u64)
                .into_par_iter()
                .map(|j| simulate_poisson(data.window(), rho, seed.offset(j)))
                .collect()
        }
    }
}

/// Monte Carlo global envelope test on `L̂(r) - r`.
pub fn global_envelope_test(
    data: &PointPattern,
    model: &NullModel,
    r_grid: &[f64],
    n_sims: usize,
    seed: SeedSpec,
    measure: RankMeasure,
    alpha: f64,
) -> Result<EnvelopeResult> {
    if n_sims < min_sims(alpha) {
        return Err(Error::InsufficientData(format!(
            "a level-{alpha} test needs at least {} simulations, got {n_sims}",
            min_sims(alpha)
        )));
    }
    let data_curve = l_centered_empirical(data, r_grid)?.values;
    let sims = simulate_null(data, model, n_sims, seed)?;
    let curves: Vec<Vec<f64>> = sims
        .par_iter()
        .map(|p| l_centered_empirical(p, r_grid).map(|c| c.values))
        .collect::<Result<_>>()?;
    rank_envelope(r_grid, &data_curve, &curves, measure, alpha)
}

/// Box counts with a Poisson reference of equal mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub counts: Vec<u64>,
    /// Count values `0..=max`.
    pub values: Vec<u64>,
    pub observed: Vec<f64>,
    /// Expected number of boxes per value under Poisson with the sample mean.
    pub poisson: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

pub fn count_histogram(p: &PointPattern, box_side: f64, gap: f64) -> Result<CountHistogram> {
    let counts = box_counts(p, &BoxDesign { side: box_side, gap })?;
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let variance = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let max = *counts.iter().max().unwrap_or(&0);
    let top = max.max((mean + 4.0 * mean.sqrt()).ceil() as u64);
    let values: Vec<u64> = (0..=top).collect();
    let mut observed = vec![0.0; values.len()];
    for &c in &counts {
        observed[c as usize] += 1.0;
    }
    let poisson = values
        .iter()
        .map(|&k| {
            if mean == 0.0 {
                if k == 0 { n } else { 0.0 }
            } else {
                n * (k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)).exp()
            }
        })
        .collect();
    Ok(CountHistogram {
        counts,
        values,
        observed,
        poisson,
        mean,
        variance,
    })
}
