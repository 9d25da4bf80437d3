use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{
    ap_angles, phase_shift_vector, ris_response_rows, unit_direction, CMatrix, CVector,
    ScenarioConfig, SnapshotSet,
};
use crate::grid::AngularDictionary;
use crate::locate::{
    argmax, delay_profile, refine_peak, solve_rho_numeric, user_position, DelayGrid,
    EstimationResult,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    /// Delay grid with `oversample * L` points; at least 16.
    pub delay_grid: DelayGrid,
    /// Second peak must exceed this fraction of the first.
    pub min_peak_ratio: f64,
    /// Detection margin of the second peak, in noise standard deviations.
    pub noise_margin: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            delay_grid: DelayGrid { oversample: 16 },
            min_peak_ratio: 1e-6,
            noise_margin: 5.0,
        }
    }
}

pub fn ml_localize(cfg: &ScenarioConfig, snap: &SnapshotSet, dict: &AngularDictionary) -> Result<EstimationResult> {
    ml_localize_with(cfg, snap, dict, &MlOptions::default())
}

/// Two-path delay estimation, LoS cancellation and a dictionary angle scan.
///
/// The first path is the peak of `sum_t |phi(zeta)^H r_t|^2`. It is removed
/// from every snapshot by least squares. The second path is searched in the
/// same profile of the residual and in the coherent profile
/// `|phi(zeta)^H sum_t r_t|^2`, which favours the snapshot-constant direct
/// path; the peak that stands further above its noise level wins. The earlier
/// of the two delays is the direct path.
pub fn ml_localize_with(
    cfg: &ScenarioConfig,
    snap: &SnapshotSet,
    dict: &AngularDictionary,
    opts: &MlOptions,
) -> Result<EstimationResult> {
    snap.check(cfg)?;
    if cfg.l < 8 {
        return Err(Error::domain("ML baseline needs at least 8 subcarriers"));
    }
    if opts.delay_grid.oversample < 16 {
        return Err(Error::domain("ML delay grid needs at least 16 points per subcarrier"));
    }
    let grid = opts.delay_grid;
    let step = grid.step(cfg.l, cfg.delta_f);
    let mut failed = EstimationResult::failed(cfg.p_r * f64::NAN);

    let first = power_profile(&snap.r, cfg.delta_f, grid)?;
    let (k1, p1) = argmax(&first);
    let zeta_1 = refine_peak(&sqrt_all(&first), k1) * step;

    let phi_1 = phase_shift_vector(zeta_1, cfg.l, cfg.delta_f);
    let residual = cancel(&snap.r, &phi_1);
    let noncoherent = power_profile(&residual, cfg.delta_f, grid)?;
    let coherent = coherent_profile(&residual, cfg.delta_f, grid)?;
    // Both profiles have mean T L delta under noise alone. The non-coherent
    // one is a sum of T exponentials, the coherent one a single exponential
    // maximized over about L independent cells.
    let noise = (cfg.t * cfg.l) as f64 * cfg.delta;
    let t = cfg.t as f64;
    let thresholds = [
        noise * (1.0 + opts.noise_margin / t.sqrt()),
        noise * ((cfg.l as f64).ln() + opts.noise_margin),
    ];
    let mut pick: Option<(f64, usize, &Vec<f64>)> = None;
    for (profile, threshold) in [&noncoherent, &coherent].into_iter().zip(thresholds) {
        let (k, peak) = argmax(profile);
        let ratio = peak / threshold;
        let relative = peak / profile.iter().sum::<f64>().max(f64::MIN_POSITIVE) * profile.len() as f64;
        let clear = peak > opts.min_peak_ratio * p1 && (ratio > 1.0 || (noise == 0.0 && relative > 1.0));
        if clear && pick.is_none_or(|(best, _, _)| ratio > best) {
            pick = Some((ratio, k, profile));
        }
    }
    let Some((_, k2, profile)) = pick else {
        return Ok(failed);
    };
    let zeta_2 = refine_peak(&sqrt_all(profile), k2) * step;
    let (zeta_au, zeta_ru) = if zeta_1 <= zeta_2 { (zeta_1, zeta_2) } else { (zeta_2, zeta_1) };
    failed.zeta_au_hat = zeta_au;
    failed.zeta_ru_hat = zeta_ru;

    let phi_au = phase_shift_vector(zeta_au, cfg.l, cfg.delta_f);
    let phi_ru = phase_shift_vector(zeta_ru, cfg.l, cfg.delta_f);
    let Some(coeffs) = joint_coefficients(&snap.r, &phi_au, &phi_ru) else {
        return Ok(failed);
    };
    let c_au = coeffs.row(0).transpose();
    let c_ru = coeffs.row(1).transpose();

    let (theta, vartheta) = ap_angles(cfg)?;
    let responses = ris_response_rows(cfg, &snap.profile, theta, vartheta) * &dict.a;
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..responses.ncols() {
        let h = responses.column(j);
        let norm = h.norm();
        if norm <= 0.0 {
            continue;
        }
        let score = h.dotc(&c_ru).norm() / norm;
        if score > best.1 {
            best = (j, score);
        }
    }
    let j = best.0;
    let h = responses.column(j);
    let sp = cfg.p_w.sqrt();
    let alpha_ru = h.dotc(&c_ru) / (h.norm_squared() * sp);
    let alpha_au = c_au.sum() / (cfg.t as f64 * sp);
    let (psi, phi) = dict.angles(j);
    let u = unit_direction(psi, phi);
    let fit = solve_rho_numeric(zeta_au, zeta_ru, cfg.p_a, cfg.p_r, u, cfg.c);
    let p_u_hat = if fit.failed {
        cfg.p_r * f64::NAN
    } else {
        user_position(cfg.p_r, u, fit.rho)
    };
    Ok(EstimationResult {
        p_u_hat,
        zeta_au_hat: zeta_au,
        zeta_ru_hat: zeta_ru,
        psi_hat: psi,
        phi_hat: phi,
        alpha_au_hat: alpha_au,
        alpha_ru_hat: alpha_ru,
        support_index: dict.grid_index[j],
        rho_hat: fit.rho,
        failure_flag: fit.failed,
    })
}

/// `sum_t |phi(zeta_k)^H r_t|^2` over the delay grid.
fn power_profile(r: &CMatrix, delta_f: f64, grid: DelayGrid) -> Result<Vec<f64>> {
    let mut total = vec![0.0; grid.points(r.nrows())];
    for col in r.column_iter() {
        let profile = delay_profile(&col.into_owned(), delta_f, grid)?;
        for (acc, z) in total.iter_mut().zip(&profile) {
            *acc += z.norm_sqr();
        }
    }
    Ok(total)
}

/// `|phi(zeta_k)^H sum_t r_t|^2` over the delay grid.
fn coherent_profile(r: &CMatrix, delta_f: f64, grid: DelayGrid) -> Result<Vec<f64>> {
    let sum: CVector = r.column_sum();
    Ok(delay_profile(&sum, delta_f, grid)?.iter().map(|z| z.norm_sqr()).collect())
}

fn sqrt_all(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| x.sqrt()).collect()
}

/// Removes the least-squares fit of `phi` from every snapshot.
fn cancel(r: &CMatrix, phi: &CVector) -> CMatrix {
    let energy = phi.norm_squared();
    let mut out = r.clone();
    for mut col in out.column_iter_mut() {
        let g = phi.dotc(&col) / energy;
        col -= phi * g;
    }
    out
}

/// Per-snapshot least-squares gains of both paths, as a `2 x T` matrix.
fn joint_coefficients(r: &CMatrix, phi_au: &CVector, phi_ru: &CVector) -> Option<CMatrix> {
    let cross = phi_au.dotc(phi_ru);
    let gram = Matrix2::new(
        Complex64::new(phi_au.norm_squared(), 0.0),
        cross,
        cross.conj(),
        Complex64::new(phi_ru.norm_squared(), 0.0),
    );
    let inv = gram.try_inverse()?;
    let mut out = CMatrix::zeros(2, r.ncols());
    for (t, col) in r.column_iter().enumerate() {
        let b0 = phi_au.dotc(&col);
        let b1 = phi_ru.dotc(&col);
        out[(0, t)] = inv[(0, 0)] * b0 + inv[(0, 1)] * b1;
        out[(1, t)] = inv[(1, 0)] * b0 + inv[(1, 1)] * b1;
    }
    Some(out)
}
