//! Scalar special functions: Bessel J of integer and half-integer order,
//! the non-central chi-squared CDF, and the ball kernel `j_r` with its
//! Fourier pair `ĵ_r`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::geometry::unit_ball_volume;
use crate::quadrature;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefactor).exp().min(1.0)
    } else {
        // continued fraction for Q, modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (1.0 - (log_prefactor.exp() * h)).max(0.0)
    }
}

/// Central chi-squared CDF with `dof` degrees of freedom.
pub fn chisq_cdf(dof: f64, x: f64) -> f64 {
    gamma_p(0.5 * dof, 0.5 * x)
}

/// Noncentrality above which the Poisson mixture is replaced by a normal
/// approximation (dimensions without a closed form only).
pub const NONCENTRAL_SERIES_LIMIT: f64 = 1e4;

const SERIES_TAIL_TOL: f64 = 1e-14;

/// CDF `P_d(x, η)` of the non-central chi-squared law with `dof` degrees of
/// freedom and noncentrality `η`.
///
/// One and three degrees of freedom use exact expressions in the normal CDF
/// (valid for any `η`); other dimensions sum the Poisson mixture of central
/// laws outward from the Poisson mode, switching to Sankaran's normal
/// approximation for `η > 1e4`.
pub fn noncentral_chisq_cdf(dof: u32, x: f64, noncentrality: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::param("degrees of freedom must be positive"));
    }
    if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
        return Err(Error::param(format!(
            "noncentrality must be finite and >= 0, got {noncentrality}"
        )));
    }
    if x.is_nan() {
        return Err(Error::param("x is NaN"));
    }
    Ok(ncx2_cdf_unchecked(dof, x, noncentrality))
}

/// As [`noncentral_chisq_cdf`] without argument validation.
pub(crate) fn ncx2_cdf_unchecked(dof: u32, x: f64, eta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if eta == 0.0 {
        return chisq_cdf(dof as f64, x);
    }
    match dof {
        1 => {
            let (s, a) = (x.sqrt(), eta.sqrt());
            (normal_cdf(s - a) - normal_cdf(-s - a)).clamp(0.0, 1.0)
        }
        3 if eta >= 0.25 => {
            let (s, a) = (x.sqrt(), eta.sqrt());
            let v = normal_cdf(s - a) - normal_cdf(-s - a)
                + (normal_pdf(s + a) - normal_pdf(s - a)) / a;
            v.clamp(0.0, 1.0)
        }
        _ if eta > NONCENTRAL_SERIES_LIMIT => sankaran(dof as f64, x, eta),
        _ => poisson_mixture(dof as f64, x, eta),
    }
}

fn poisson_mixture(dof: f64, x: f64, eta: f64) -> f64 {
    let lambda = 0.5 * eta;
    let y = 0.5 * x;
    let ln_y = y.ln();
    let ln_lambda = lambda.ln();
    let j0 = lambda.floor();
    let a0 = 0.5 * dof + j0;

    let ln_w0 = -lambda + j0 * ln_lambda - ln_gamma(j0 + 1.0);
    let ln_g0 = a0 * ln_y - y - ln_gamma(a0 + 1.0);
    let f0 = gamma_p(a0, y);

    let mut sum = 0.0;

    // Forward: j = j0, j0+1, ...
    let (mut j, mut a, mut ln_w, mut ln_g, mut f) = (j0, a0, ln_w0, ln_g0, f0);
    loop {
        let w = ln_w.exp();
        sum += w * f;
        // P(a+1, y) = P(a, y) - y^a e^{-y} / Γ(a+1)
        f = (f - ln_g.exp()).max(0.0);
        ln_w += ln_lambda - (j + 1.0).ln();
        ln_g += ln_y - (a + 1.0).ln();
        j += 1.0;
        a += 1.0;
        let ratio = lambda / (j + 1.0);
        let tail = if ratio < 1.0 {
            ln_w.exp() / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        if tail * f < SERIES_TAIL_TOL || f == 0.0 && ratio < 1.0 {
            break;
        }
    }

    // Backward: j = j0-1, ..., 0
    let (mut j, mut a, mut ln_w, mut ln_g, mut f) = (j0, a0, ln_w0, ln_g0, f0);
    while j > 0.0 {
        // step from j to j-1
        ln_w += j.ln() - ln_lambda;
        ln_g += a.ln() - ln_y; // g(a-1) = g(a) * a / y
        j -= 1.0;
        a -= 1.0;
        f = (f + ln_g.exp()).min(1.0);
        let w = ln_w.exp();
        sum += w * f;
        let ratio = j / lambda;
        if ratio < 1.0 && w / (1.0 - ratio) < SERIES_TAIL_TOL {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn sankaran(k: f64, x: f64, lambda: f64) -> f64 {
    let kl = k + lambda;
    let k2l = k + 2.0 * lambda;
    let h = 1.0 - 2.0 * kl * (k + 3.0 * lambda) / (3.0 * k2l * k2l);
    let p = k2l / (kl * kl);
    let m = (h - 1.0) * (1.0 - 3.0 * h);
    let num = (x / kl).powf(h) - (1.0 + h * p * (h - 1.0 - 0.5 * (2.0 - h) * m * p));
    let den = h * (2.0 * p).sqrt() * (1.0 + 0.5 * m * p);
    normal_cdf(num / den).clamp(0.0, 1.0)
}

/// `|φ(t)|^2 = exp(-σ^2 |t|^2)` for a centered isotropic Gaussian with
/// per-coordinate standard deviation `sigma`.
pub fn gauss_charfn_sq(sigma: f64, t_norm: f64) -> f64 {
    (-(sigma * t_norm).powi(2)).exp()
}

/// Bessel function of the first kind `J_order(z)` for integer or
/// half-integer `order >= 0` and `z >= 0`.
///
/// Small arguments (`z < 4` or `z < order`) use the power series. Larger
/// half-integer orders use the closed trigonometric forms with upward
/// recurrence. Integer orders use Miller's backward recurrence up to
/// `z = 50` and the Hankel asymptotic expansion beyond (when `z > 10 order^2`).
pub fn bessel_j(order: f64, z: f64) -> Result<f64> {
    let twice = 2.0 * order;
    if !(order >= 0.0) || twice.fract() != 0.0 || twice > 1e4 {
        return Err(Error::param(format!(
            "Bessel order must be a non-negative integer or half-integer, got {order}"
        )));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::param(format!("Bessel argument must be finite and >= 0, got {z}")));
    }
    Ok(bessel_j_unchecked(order, z))
}

pub(crate) fn bessel_j_unchecked(order: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if order == 0.0 { 1.0 } else { 0.0 };
    }
    let half_integer = (2.0 * order) as u64 % 2 == 1;
    if z < 4.0 || z < order {
        return bessel_series(order, z);
    }
    if half_integer {
        spherical_closed_form(order, z)
    } else {
        let n = order as u32;
        if z > 50.0 && z > 10.0 * order * order {
            bessel_asymptotic(order, z)
        } else {
            bessel_miller(n, z)
        }
    }
}

fn bessel_series(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let q = -half * half;
    let ln_first = nu * half.ln() - ln_gamma(nu + 1.0);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum * ln_first.exp()
}

/// `J_{n+1/2}(z) = sqrt(2z/π) j_n(z)` via upward recurrence of spherical
/// Bessel functions; requires `z >= order`.
fn spherical_closed_form(order: f64, z: f64) -> f64 {
    let n = (order - 0.5).round() as u32;
    let (s, c) = z.sin_cos();
    let j0 = s / z;
    let scale = (2.0 * z / PI).sqrt();
    if n == 0 {
        return scale * j0;
    }
    let mut jm = j0;
    let mut j = s / (z * z) - c / z;
    for k in 1..n {
        let next = (2 * k + 1) as f64 / z * j - jm;
        jm = j;
        j = next;
    }
    scale * j
}

fn bessel_miller(n: u32, z: f64) -> f64 {
    let big = 1e250;
    let top = (n as f64).max(z);
    let mut m = (top + 30.0 + (50.0 * top).sqrt()) as u32;
    m += m % 2;
    let (mut bjp, mut bj) = (0.0_f64, 1e-300_f64);
    let mut result = 0.0;
    let mut even_sum = 0.0;
    for k in (1..=m).rev() {
        let bjm = 2.0 * k as f64 / z * bj - bjp;
        bjp = bj;
        bj = bjm;
        if bj.abs() > big {
            bj /= big;
            bjp /= big;
            result /= big;
            even_sum /= big;
        }
        // bj now holds J_{k-1}
        if k - 1 == n {
            result = bj;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            even_sum += bj;
        }
    }
    let norm = bj + 2.0 * even_sum;
    result / norm
}

fn bessel_asymptotic(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let omega = z - (0.5 * nu + 0.25) * PI;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        }
        if term.abs() > prev && k > 2 {
            break;
        }
        prev = term.abs();
        let signed = if (k / 2) % 2 == 0 { term } else { -term };
        if k % 2 == 0 {
            p += signed;
        } else {
            q += signed;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    (2.0 / (PI * z)).sqrt() * (p * omega.cos() - q * omega.sin())
}

/// The ball kernel `j_r` in dimension `dim`: a radial, non-negative function
/// of unit mass whose Fourier transform is the normalized self-convolution of
/// the indicator of `B(0, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelJr {
    pub dim: usize,
    pub r: f64,
}

impl KernelJr {
    pub fn new(dim: usize, r: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("kernel dimension must be positive"));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::param(format!("kernel radius must be positive, got {r}")));
        }
        Ok(Self { dim, r })
    }

    /// `j_r(0)`, the limit of the kernel at the origin.
    pub fn at_origin(&self) -> f64 {
        let nu = 0.5 * self.dim as f64;
        let lg = ln_gamma(nu + 1.0);
        // J_ν(z)^2 / x^d -> r^d / (2^d Γ(ν+1)^2)
        let v = self.dim as f64 * (0.5 * self.r).ln() - 2.0 * lg;
        v.exp() / unit_ball_volume(self.dim)
    }

    /// Mean of `J_{d/2}(r ρ)^2` over a period for large `r ρ`, divided as in
    /// the kernel: `1 / (κ_d π r ρ^{d+1})`.
    pub fn asymptotic_mean(&self, rho: f64) -> f64 {
        1.0 / (unit_ball_volume(self.dim) * PI * self.r * rho.powi(self.dim as i32 + 1))
    }
}

/// `j_r(x) = J_{d/2}(r|x|)^2 / (κ_d |x|^d)` with `κ_d` the unit-ball volume;
/// this normalization gives unit mass.
pub fn jr_kernel(k: &KernelJr, x_norm: f64) -> f64 {
    let x = x_norm.abs();
    let z = k.r * x;
    if z < 1e-6 {
        return k.at_origin();
    }
    let j = bessel_j_unchecked(0.5 * k.dim as f64, z);
    j * j / (unit_ball_volume(k.dim) * x.powi(k.dim as i32))
}

/// `ĵ_r(x) = λ(B_r ∩ (B_r + x)) / λ(B_r)`.
pub fn jr_hat(k: &KernelJr, x: &[f64]) -> f64 {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    ball_overlap_fraction(k.dim, s / (2.0 * k.r))
}

/// Fraction of a ball's volume shared with a copy shifted by `2 r t`.
pub fn ball_overlap_fraction(dim: usize, t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let t = t.max(0.0);
    match dim {
        1 => 1.0 - t,
        2 => 2.0 / PI * (t.acos() - t * (1.0 - t * t).sqrt()),
        3 => 1.0 - 1.5 * t + 0.5 * t * t * t,
        d => {
            // ∫_t^1 (1-u^2)^{(d-1)/2} du over the same from 0, with u = cos θ
            let f = |th: f64| th.sin().powi(d as i32);
            quadrature::integrate(f, 0.0, t.acos(), 8)
                / quadrature::integrate(f, 0.0, 0.5 * PI, 8)
        }
    }
}

/// Mass of `j_r` on the radial shell `[a, b]`, by composite Gauss–Legendre on
/// panels shorter than a quarter oscillation period.
pub fn jr_shell_mass(k: &KernelJr, a: f64, b: f64) -> f64 {
    jr_weighted_shell_mass(k, a, b, |_| 1.0)
}

/// `∫_{a<=|x|<=b} w(|x|) j_r(x) dx`.
pub fn jr_weighted_shell_mass<W: Fn(f64) -> f64>(k: &KernelJr, a: f64, b: f64, w: W) -> f64 {
    if b <= a {
        return 0.0;
    }
    let period = PI / k.r;
    let panels = (((b - a) / (0.5 * period)).ceil() as usize).max(1);
    quadrature::radial_integral(k.dim, |rho| w(rho) * jr_kernel(k, rho), a, b, panels)
}

/// Mass of `j_r` outside the ball of radius `a`, using quadrature up to
/// `cutoff` and the averaged asymptotic tail beyond it.
pub fn jr_outer_mass(k: &KernelJr, a: f64, cutoff: f64) -> f64 {
    let cutoff = cutoff.max(a);
    let d = k.dim as f64;
    // ∫_cutoff^∞ s_{d-1} ρ^{d-1} / (κ_d π r ρ^{d+1}) dρ = d / (π r cutoff)
    jr_shell_mass(k, a, cutoff) + d / (PI * k.r * cutoff)
}
