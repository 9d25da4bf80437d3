//! Delay read-out, range solvers and the final user position.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{CVector, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub p_u_hat: Vec3,
    pub zeta_au_hat: f64,
    pub zeta_ru_hat: f64,
    pub psi_hat: f64,
    pub phi_hat: f64,
    pub alpha_au_hat: Complex64,
    pub alpha_ru_hat: Complex64,
    /// Index into the full angular grid.
    pub support_index: usize,
    pub rho_hat: f64,
    pub failure_flag: bool,
}

impl EstimationResult {
    pub fn failed(p_u_hat: Vec3) -> Self {
        Self {
            p_u_hat,
            zeta_au_hat: f64::NAN,
            zeta_ru_hat: f64::NAN,
            psi_hat: f64::NAN,
            phi_hat: f64::NAN,
            alpha_au_hat: Complex64::new(f64::NAN, f64::NAN),
            alpha_ru_hat: Complex64::new(f64::NAN, f64::NAN),
            support_index: 0,
            rho_hat: f64::NAN,
            failure_flag: true,
        }
    }
}

/// Uniform delay search grid over one unambiguous period `[0, 1/delta_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayGrid {
    /// Grid points per subcarrier, so the grid has `oversample * L` points.
    pub oversample: usize,
}

impl Default for DelayGrid {
    fn default() -> Self {
        Self { oversample: 32 }
    }
}

impl DelayGrid {
    pub fn points(&self, l: usize) -> usize {
        self.oversample * l
    }

    pub fn step(&self, l: usize, delta_f: f64) -> f64 {
        1.0 / (self.points(l) as f64 * delta_f)
    }
}

/// Correlations `phi(zeta_k)^H mu` at `zeta_k = k * step` for every grid point.
pub fn delay_profile(mu: &CVector, delta_f: f64, grid: DelayGrid) -> Result<Vec<Complex64>> {
    let n = grid.points(mu.len());
    if n == 0 || !(delta_f > 0.0) {
        return Err(Error::domain("empty delay grid"));
    }
    if n < mu.len() {
        return Err(Error::domain("delay grid coarser than the subcarrier count"));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..mu.len()].copy_from_slice(mu.as_slice());
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    Ok(buf)
}

/// Matched-filter delay estimate: grid arg-max of `|phi(zeta)^H mu|` plus a
/// three-point parabolic refinement.
pub fn extract_delay(mu: &CVector, delta_f: f64, grid: DelayGrid) -> Result<f64> {
    let profile = delay_profile(mu, delta_f, grid)?;
    let mags: Vec<f64> = profile.iter().map(|z| z.norm()).collect();
    let (k, _) = argmax(&mags);
    Ok(refine_peak(&mags, k) * grid.step(mu.len(), delta_f))
}

pub(crate) fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

/// Fractional grid position of the peak at `k`, wrapped into `[0, n)`.
pub(crate) fn refine_peak(mags: &[f64], k: usize) -> f64 {
    let n = mags.len();
    if n < 3 {
        return k as f64;
    }
    let ym = mags[(k + n - 1) % n];
    let y0 = mags[k];
    let yp = mags[(k + 1) % n];
    let curvature = ym - 2.0 * y0 + yp;
    let offset = if curvature < 0.0 {
        (0.5 * (ym - yp) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    (k as f64 + offset).rem_euclid(n as f64)
}

/// Approximate variance of a matched-filter delay estimate.
///
/// `mu` is the estimated phase vector and `entry_var` the noise variance of
/// each of its entries.
pub fn delay_variance(mu: &CVector, entry_var: f64, zeta: f64, delta_f: f64) -> f64 {
    let l = mu.len();
    let amp = mu
        .iter()
        .enumerate()
        .map(|(i, z)| z * Complex64::from_polar(1.0, 2.0 * PI * i as f64 * zeta * delta_f))
        .sum::<Complex64>()
        / l as f64;
    let mean = (l as f64 - 1.0) / 2.0;
    let spread: f64 = (0..l).map(|i| (i as f64 - mean).powi(2)).sum();
    let denom = 2.0 * amp.norm_sqr() * (2.0 * PI * delta_f).powi(2) * spread;
    if denom > 0.0 {
        entry_var / denom
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeFit {
    pub rho: f64,
    /// Objective value at `rho`.
    pub residual: f64,
    pub failed: bool,
}

impl RangeFit {
    fn failure(rho: f64, residual: f64) -> Self {
        Self {
            rho,
            residual,
            failed: true,
        }
    }
}

/// Signed residual of the path-difference constraint at range `rho`.
pub fn constraint_residual(
    zeta_au: f64,
    zeta_ru: f64,
    p_a: Vec3,
    p_r: Vec3,
    u: Vec3,
    c: f64,
    rho: f64,
) -> f64 {
    let d = p_a - p_r;
    (zeta_ru - zeta_au) * c - rho - d.norm() + (d - rho * u).norm()
}

const COARSE_POINTS: usize = 4000;

/// Minimize `objective` over `(0, rho_max]`: coarse scan, then golden section.
fn minimize_range(rho_max: f64, objective: impl Fn(f64) -> f64) -> RangeFit {
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return RangeFit::failure(f64::NAN, f64::NAN);
    }
    let step = rho_max / COARSE_POINTS as f64;
    let values: Vec<f64> = (1..=COARSE_POINTS).map(|i| objective(i as f64 * step)).collect();
    let (best, best_val) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
    if !best_val.is_finite() {
        return RangeFit::failure(f64::NAN, f64::NAN);
    }
    let top = values.iter().copied().fold(0.0, f64::max);
    let tol = 1e-12 * top.max(1e-300);
    let near: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= best_val + tol).collect();
    let flat = near.last().unwrap() - near.first().unwrap() > 2;
    let lo = best as f64 * step;
    let hi = ((best + 2) as f64 * step).min(rho_max);
    let rho = golden_section(&objective, lo.max(0.0), hi);
    let val = objective(rho);
    let on_boundary = best + 1 == COARSE_POINTS && val > tol;
    if flat || on_boundary {
        return RangeFit::failure(rho, val);
    }
    RangeFit {
        rho,
        residual: val,
        failed: false,
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Range that best satisfies the path-difference constraint.
pub fn solve_rho_numeric(
    zeta_au: f64,
    zeta_ru: f64,
    p_a: Vec3,
    p_r: Vec3,
    u: Vec3,
    c: f64,
) -> RangeFit {
    let d_ar = (p_a - p_r).norm();
    if !(zeta_ru * c > d_ar * (1.0 - 1e-9)) || !zeta_au.is_finite() {
        return RangeFit::failure(f64::NAN, f64::NAN);
    }
    let rho_max = 2.0 * zeta_ru * c;
    minimize_range(rho_max, |rho| {
        constraint_residual(zeta_au, zeta_ru, p_a, p_r, u, c, rho).powi(2)
    })
}

/// Closed-form root of the path-difference constraint.
pub fn solve_rho_closed(
    zeta_au: f64,
    zeta_ru: f64,
    p_a: Vec3,
    p_r: Vec3,
    u: Vec3,
    c: f64,
) -> RangeFit {
    let d = p_a - p_r;
    let d_ar = d.norm();
    let k = (zeta_ru - zeta_au) * c - d_ar;
    let denom = 2.0 * k * u.norm_squared() - 2.0 * d.dot(&u);
    if denom.abs() <= 1e-12 || !denom.is_finite() {
        return RangeFit::failure(f64::NAN, f64::NAN);
    }
    let rho = (k * k - d_ar * d_ar) / denom;
    let residual = constraint_residual(zeta_au, zeta_ru, p_a, p_r, u, c, rho).powi(2);
    RangeFit {
        rho,
        residual,
        failed: !(rho >= 0.0),
    }
}

/// Range from both delays, each weighted by its precision.
///
/// Minimizes
/// `(zeta_au c - |p_a - p_r - rho u|)^2 / (c^2 var_au) + (zeta_ru c - |p_a - p_r| - rho)^2 / (c^2 var_ru)`.
/// When the reflected
/// delay is far more precise than the direct one this is close to reading
/// the range straight off the reflected delay.
#[allow(clippy::too_many_arguments)]
pub fn solve_rho_weighted(
    zeta_au: f64,
    zeta_ru: f64,
    var_au: f64,
    var_ru: f64,
    p_a: Vec3,
    p_r: Vec3,
    u: Vec3,
    c: f64,
) -> RangeFit {
    let d = p_a - p_r;
    let d_ar = d.norm();
    let w_au = if var_au > 0.0 { 1.0 / (c * c * var_au) } else { 0.0 };
    let w_ru = if var_ru > 0.0 { 1.0 / (c * c * var_ru) } else { 0.0 };
    let (w_au, w_ru) = if w_au.is_finite() && w_ru.is_finite() {
        (w_au, w_ru)
    } else if w_ru.is_finite() {
        (0.0, 1.0)
    } else {
        (1.0, 0.0)
    };
    if w_au + w_ru <= 0.0 || !zeta_au.is_finite() || !zeta_ru.is_finite() {
        return RangeFit::failure(f64::NAN, f64::NAN);
    }
    let rho_max = 2.0 * (zeta_ru * c).max(d_ar);
    minimize_range(rho_max, |rho| {
        let e_au = zeta_au * c - (d - rho * u).norm();
        let e_ru = zeta_ru * c - d_ar - rho;
        w_au * e_au * e_au + w_ru * e_ru * e_ru
    })
}

pub fn user_position(p_r: Vec3, u: Vec3, rho: f64) -> Vec3 {
    p_r + rho * u
}
