//! Theoretical second-order quantities of Gaussian perturbed lattices: the
//! K-function as a sum of non-central chi-squared CDFs over lattice shells,
//! the centered L-function, spectral number-variance formulas and a
//! covariance-decay diagnostic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::{check_grid, CurveKind, SummaryCurve};
use crate::error::{Error, Result};
use crate::field::{summability, CovarianceKind, CovarianceModel, SummabilityReport};
use crate::geometry::{integer_shell_counts, unit_ball_volume};
use crate::special::{gauss_charfn_sq, jr_kernel, jr_weighted_shell_mass, ncx2_cdf_unchecked, KernelJr};

/// Truncation radius: 15 in three dimensions, 8 otherwise.
pub fn default_truncation(dim: usize) -> f64 {
    if dim == 3 {
        15.0
    } else {
        8.0
    }
}

/// `κ_i = 2σ² - 2c(i)`, the per-coordinate variance of `p_i - p_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaField {
    pub model: CovarianceModel,
}

impl KappaField {
    pub fn new(model: CovarianceModel) -> Self {
        Self { model }
    }

    /// `κ` at a lag of squared norm `n2 > 0`.
    pub fn kappa_sq(&self, n2: f64) -> f64 {
        2.0 * (self.model.variance() - self.model.coord_cov_sq(n2))
    }

    pub fn kappa(&self, lag: &[i64]) -> f64 {
        self.kappa_sq(lag.iter().map(|&v| (v * v) as f64).sum())
    }
}

fn is_degenerate(model: &CovarianceModel) -> bool {
    model.kind == CovarianceKind::Stationarized || model.variance() == 0.0
}

/// Lattice shells `(|i|^2, multiplicity)` of `Z^dim \ {0}` up to `max_sq`.
fn shells(dim: usize, max_sq: u64) -> Vec<(u64, f64)> {
    integer_shell_counts(dim, max_sq)
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(n, c)| (n as u64, c as f64))
        .collect()
}

/// K-function of the perturbed lattice on `r_grid`, summing over lattice
/// shells with `|i| ∈ [r - q, r + q]`. Shells closer than `r - q` contribute
/// their full multiplicity (their CDF terms equal one up to `exp(-q²/2κ)`).
///
/// For the stationarized lattice the exact count `#(Z^d \ {0} ∩ B_r)` is
/// returned.
pub fn k_theoretical(model: &CovarianceModel, r_grid: &[f64], q: f64) -> Result<SummaryCurve> {
    model.validate()?;
    check_grid(r_grid)?;
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::param(format!("truncation radius must be positive, got {q}")));
    }
    let dim = model.dim;
    let r_max = r_grid[r_grid.len() - 1];
    if is_degenerate(model) {
        let sh = shells(dim, (r_max * r_max * (1.0 + 1e-12)).floor() as u64);
        let values = r_grid
            .iter()
            .map(|&r| {
                let lim = r * r * (1.0 + 1e-12);
                sh.iter().take_while(|s| s.0 as f64 <= lim).map(|s| s.1).sum()
            })
            .collect();
        return SummaryCurve::new(r_grid.to_vec(), values, CurveKind::K);
    }

    let kappa = KappaField::new(*model);
    let max_sq = ((r_max + q) * (r_max + q)).floor() as u64;
    let table: Vec<(f64, f64, f64)> = shells(dim, max_sq)
        .into_iter()
        .map(|(n, mult)| {
            let k = kappa.kappa_sq(n as f64);
            if !(k > 0.0) {
                return Err(Error::PerfectlyCorrelated {
                    lag_sq_norm: n,
                    kappa: k,
                });
            }
            Ok((n as f64, mult, k))
        })
        .collect::<Result<_>>()?;

    let dof = dim as u32;
    let mut values: Vec<f64> = r_grid
        .iter()
        .map(|&r| {
            let lo = (r - q).max(0.0);
            let (lo2, hi2) = (lo * lo, (r + q) * (r + q));
            let r2 = r * r;
            let mut sum = 0.0;
            for &(n2, mult, k) in &table {
                if n2 > hi2 {
                    break;
                }
                if n2 < lo2 {
                    sum += mult;
                } else {
                    sum += mult * ncx2_cdf_unchecked(dof, r2 / k, n2 / k);
                }
            }
            sum
        })
        .collect();
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            if values[i - 1] - values[i] > 1e-9 * values[i - 1].max(1.0) {
                return Err(Error::Grid(format!(
                    "K decreased between r = {} and r = {}",
                    r_grid[i - 1],
                    r_grid[i]
                )));
            }
            values[i] = values[i - 1];
        }
    }
    SummaryCurve::new(r_grid.to_vec(), values, CurveKind::K)
}

/// Centered Besag L-function `(K / κ_d)^{1/d} - r`.
pub fn l_centered_from_k(k: &SummaryCurve, dim: usize) -> Result<SummaryCurve> {
    if k.kind != CurveKind::K {
        return Err(Error::param(format!("expected a K curve, got {:?}", k.kind)));
    }
    if let Some((r, v)) = k.iter().find(|&(_, v)| v < 0.0) {
        return Err(Error::param(format!("negative K value {v} at r = {r}")));
    }
    let kd = unit_ball_volume(dim);
    let inv = 1.0 / dim as f64;
    k.map(CurveKind::LCentered, |r, v| (v / kd).powf(inv) - r)
}

const DUAL_START_RADIUS: f64 = 32.0;
const DUAL_MAX_RADIUS: f64 = 512.0;
const DUAL_REL_TOL: f64 = 1e-8;

/// Dual-lattice sum `(2π)^d Σ_{x ≠ 0, |x| <= R} w(|x|) j_r(2π|x|)` plus the
/// averaged asymptotic tail `d / (2π² r R)` (applied when `tail_weight`).
fn dual_sum(kernel: &KernelJr, radius: f64, weight: impl Fn(f64) -> f64, with_tail: bool) -> f64 {
    let d = kernel.dim;
    let max_sq = (radius * radius).floor() as u64;
    let scale = (2.0 * PI).powi(d as i32);
    let mut sum = 0.0;
    for (n2, mult) in shells(d, max_sq) {
        let x = (n2 as f64).sqrt();
        sum += mult * weight(x) * jr_kernel(kernel, 2.0 * PI * x);
    }
    let mut total = scale * sum;
    if with_tail {
        total += d as f64 / (2.0 * PI * PI * kernel.r * radius);
    }
    total
}

/// `⟨S, j_r⟩ = (2π)^d Σ_{x ∈ Z^d \ {0}} j_r(2πx)` for the stationarized
/// lattice, i.e. `var #(Ξ ∩ B_r) / λ(B_r)`.
///
/// The terms decay like `|x|^{-d-1}`, so the sum is taken over growing balls
/// (radius doubled from 32 up to 512) with the averaged asymptotic tail added,
/// stopping once successive estimates agree to `1e-8` relative.
pub fn spectral_variance_stationarized(dim: usize, r: f64) -> Result<f64> {
    let kernel = KernelJr::new(dim, r)?;
    let mut radius = DUAL_START_RADIUS;
    let mut prev = dual_sum(&kernel, radius, |_| 1.0, true);
    while radius < DUAL_MAX_RADIUS {
        radius *= 2.0;
        let next = dual_sum(&kernel, radius, |_| 1.0, true);
        let done = (next - prev).abs() <= DUAL_REL_TOL * next.abs();
        prev = next;
        if done {
            break;
        }
    }
    Ok(prev.max(0.0))
}

/// Real-space counterpart `1 + Σ_{k ≠ 0} ĵ_r(k) - λ(B_r)` (finite sum).
pub fn number_variance_stationarized_direct(dim: usize, r: f64) -> Result<f64> {
    let kernel = KernelJr::new(dim, r)?;
    let max_sq = (4.0 * r * r).floor() as u64;
    let mut sum = 0.0;
    for (n2, mult) in shells(dim, max_sq) {
        let t = (n2 as f64).sqrt() / (2.0 * kernel.r);
        sum += mult * crate::special::ball_overlap_fraction(dim, t);
    }
    Ok(1.0 + sum - unit_ball_volume(dim) * r.powi(dim as i32))
}

/// `⟨S, j_r⟩ = 1 - ∫ |φ(x)|² j_r(x) dx + (2π)^d Σ_{x ≠ 0} |φ(2πx)|² j_r(2πx)`
/// for independent centered Gaussian perturbations.
pub fn spectral_variance_iid(model: &CovarianceModel, r: f64) -> Result<f64> {
    model.validate()?;
    let sigma = match model.kind {
        CovarianceKind::Stationarized => 0.0,
        CovarianceKind::Iid => model.sigma,
        CovarianceKind::Powexp => {
            return Err(Error::param("spectral variance formula requires independent perturbations"))
        }
    };
    if sigma == 0.0 {
        return spectral_variance_stationarized(model.dim, r);
    }
    let kernel = KernelJr::new(model.dim, r)?;
    let d = model.dim as f64;

    // 1 - ∫ g j_r = ∫ (1 - g) j_r since j_r has unit mass.
    let cutoff = (45.0f64.sqrt() / sigma).max(200.0);
    let near = jr_weighted_shell_mass(&kernel, 0.0, cutoff, |rho| -(-(sigma * rho).powi(2)).exp_m1());
    // beyond the cutoff 1 - g = 1: averaged tail plus first oscillatory correction
    let nu = 0.5 * d;
    let tail = d / (PI * r * cutoff)
        + d / (PI * r) * (2.0 * r * cutoff - nu * PI).cos() / (2.0 * r * cutoff * cutoff);
    let deficit = near + tail;

    // dual sum damped by exp(-4π² σ² |x|²)
    let damp_radius = (45.0f64.sqrt() / (2.0 * PI * sigma)).ceil() + 1.0;
    let radius = damp_radius.min(DUAL_MAX_RADIUS);
    let dual = dual_sum(&kernel, radius, |x| gauss_charfn_sq(sigma, 2.0 * PI * x), false);
    Ok((deficit + dual).max(0.0))
}

/// How the covariance decays with the lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    /// Zero beyond some lag.
    FiniteRange,
    /// Faster than every power.
    SuperPolynomial,
    /// Power-law like `|i|^{-exponent}`.
    Polynomial,
}

/// Covariance-decay check against the `γ > 2d` sufficient condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperuniformityReport {
    pub dim: usize,
    pub threshold: f64,
    pub decay: DecayClass,
    /// Least-squares slope of `-log|cov|` against `log|i|` on `|i| ∈ [5, 50]`.
    pub fitted_exponent: Option<f64>,
    pub passes: bool,
    pub summary: String,
    pub summability: Option<SummabilityReport>,
}

const DECAY_LAGS: std::ops::RangeInclusive<u32> = 5..=50;

/// Classifies the decay of `|cov(p_0, p_i)|` given as a function of `|i|`.
pub fn decay_report(dim: usize, cov: impl Fn(f64) -> f64) -> HyperuniformityReport {
    let threshold = 2.0 * dim as f64;
    let samples: Vec<(f64, f64)> = DECAY_LAGS.map(|h| (h as f64, cov(h as f64).abs())).collect();
    let positive: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.1 > 0.0 && s.1.is_finite())
        .map(|&(h, c)| (h.ln(), -c.ln()))
        .collect();
    let slope = |pts: &[(f64, f64)]| -> Option<f64> {
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    };
    let fitted = slope(&positive);
    let underflow = positive.len() < samples.len();
    let early: Vec<_> = positive.iter().copied().filter(|p| p.0 <= 15f64.ln()).collect();
    let late: Vec<_> = positive.iter().copied().filter(|p| p.0 >= 25f64.ln()).collect();
    let accelerating = match (slope(&early), slope(&late)) {
        (Some(a), Some(b)) => a > 0.0 && b > 1.2 * a,
        _ => false,
    };
    let (decay, passes, summary) = if positive.is_empty() {
        (
            DecayClass::FiniteRange,
            true,
            "covariance vanishes on |i| in [5, 50]: finite range, condition holds".to_string(),
        )
    } else if underflow || accelerating {
        (
            DecayClass::SuperPolynomial,
            true,
            "super-polynomial decay: passes for every polynomial threshold".to_string(),
        )
    } else {
        let e = fitted.unwrap_or(0.0);
        let ok = e > threshold;
        (
            DecayClass::Polynomial,
            ok,
            format!(
                "fitted decay exponent {e:.3} {} threshold 2d = {threshold}",
                if ok { "exceeds" } else { "does not exceed" }
            ),
        )
    };
    HyperuniformityReport {
        dim,
        threshold,
        decay,
        fitted_exponent: fitted,
        passes,
        summary,
        summability: None,
    }
}

/// Decay check for a parametric model, with summability diagnostics.
pub fn hyperuniformity_condition_report(model: &CovarianceModel) -> Result<HyperuniformityReport> {
    model.validate()?;
    let d = model.dim as f64;
    let mut report = decay_report(model.dim, |h| d * model.coord_cov(h));
    report.summability = Some(summability(model, 50));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stationarized_counts() {
        let m = CovarianceModel::stationarized(3);
        let k = k_theoretical(&m, &[1.05, 1.45, 1.75, 1.9], 15.0).unwrap();
        assert_eq!(k.values, vec![6.0, 18.0, 26.0, 26.0]);
    }

    #[test]
    fn vanishing_perturbation_limit() {
        let m = CovarianceModel::iid(3, 1e-6).unwrap();
        let k = k_theoretical(&m, &[1.2], 15.0).unwrap();
        assert_abs_diff_eq!(k.values[0], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn kappa_values() {
        let iid = KappaField::new(CovarianceModel::iid(3, 0.18).unwrap());
        assert_abs_diff_eq!(iid.kappa(&[1, 2, 0]), 2.0 * 0.18 * 0.18, epsilon = 1e-15);
        let pe = KappaField::new(CovarianceModel::powexp(3, 0.3, 2.5, 2.0).unwrap());
        assert_abs_diff_eq!(pe.kappa(&[1, 0, 0]), 0.18 * (1.0 - (-0.4f64).exp()), epsilon = 1e-15);
    }

    #[test]
    fn truncation_is_stable() {
        let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
        for sigma in [0.1, 0.25, 0.5] {
            let m = CovarianceModel::iid(3, sigma).unwrap();
            let a = k_theoretical(&m, &grid, 15.0).unwrap();
            let b = k_theoretical(&m, &grid, 20.0).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn l_function_baselines() {
        let grid = vec![0.5, 1.0, 2.0];
        let poisson = SummaryCurve::new(
            grid.clone(),
            grid.iter().map(|r| unit_ball_volume(3) * r * r * r).collect(),
            CurveKind::K,
        )
        .unwrap();
        let l = l_centered_from_k(&poisson, 3).unwrap();
        assert!(l.values.iter().all(|v| v.abs() < 1e-12));
        let empty = SummaryCurve::new(grid.clone(), vec![0.0; 3], CurveKind::K).unwrap();
        let l = l_centered_from_k(&empty, 3).unwrap();
        assert_eq!(l.values, vec![-0.5, -1.0, -2.0]);
        let neg = SummaryCurve::new(grid, vec![0.0, -1.0, 0.0], CurveKind::K).unwrap();
        assert!(l_centered_from_k(&neg, 3).is_err());
    }

    #[test]
    fn spectral_routes_agree() {
        for (d, r) in [(1, 10.25), (2, 6.3), (3, 4.0), (3, 8.0)] {
            let dual = spectral_variance_stationarized(d, r).unwrap();
            let direct = number_variance_stationarized_direct(d, r).unwrap();
            assert!((dual - direct).abs() < 1e-6 * direct.abs().max(1e-3), "d={d} r={r}: {dual} vs {direct}");
        }
    }

    #[test]
    fn one_dimensional_closed_form() {
        // count in [-r, r] from Z + U is floor(2r) + Bernoulli(frac(2r))
        for r in [10.25, 10.1, 3.7] {
            let f: f64 = (2.0f64 * r).fract();
            let want = f * (1.0 - f) / (2.0 * r);
            let got = spectral_variance_stationarized(1, r).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-7);
        }
        // lattice-aligned radius: the averaged tail overestimates the vanishing remainder
        assert!(spectral_variance_stationarized(1, 10.0).unwrap() < 1e-4);
    }

    #[test]
    fn iid_reduces_to_stationarized() {
        let a = spectral_variance_iid(&CovarianceModel::stationarized(3), 5.0).unwrap();
        let b = spectral_variance_stationarized(3, 5.0).unwrap();
        assert_eq!(a, b);
        assert!(spectral_variance_iid(&CovarianceModel::powexp(3, 0.3, 2.5, 2.0).unwrap(), 4.0).is_err());
    }

    #[test]
    fn decay_reports() {
        let pe = hyperuniformity_condition_report(&CovarianceModel::powexp(3, 0.3, 2.5, 2.0).unwrap()).unwrap();
        assert!(pe.passes);
        assert_ne!(pe.decay, DecayClass::Polynomial);
        let iid = hyperuniformity_condition_report(&CovarianceModel::iid(3, 0.2).unwrap()).unwrap();
        assert!(iid.passes);
        assert_eq!(iid.decay, DecayClass::FiniteRange);
        let slow = decay_report(3, |h| h.powf(-4.0));
        assert_eq!(slow.decay, DecayClass::Polynomial);
        assert!(!slow.passes);
        assert_abs_diff_eq!(slow.fitted_exponent.unwrap(), 4.0, epsilon = 1e-9);
        let fast = decay_report(3, |h| 2.0 * h.powf(-7.5));
        assert!(fast.passes);
        let gentle = hyperuniformity_condition_report(&CovarianceModel::powexp(3, 0.3, 2.5, 0.5).unwrap()).unwrap();
        assert!(gentle.passes);
    }
}
