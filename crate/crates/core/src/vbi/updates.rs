use num_complex::Complex64;
use statrs::function::gamma::digamma;

use super::woodbury::{gaussian_posterior, posterior_covariance, posterior_gain};
use super::{JcleOptions, Priors, RangeReadout, VariationalState, SLAB, SPIKE};
use crate::error::{Error, Result};
use crate::geometry::{
    ap_angles, path_delays, phase_shift_vector, ris_response_rows, unit_direction, CMatrix,
    CVector, ScenarioConfig, SnapshotSet, Vec3,
};
use crate::grid::AngularDictionary;
use crate::locate::{
    delay_variance, extract_delay, solve_rho_numeric, solve_rho_weighted, user_position,
    EstimationResult,
};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Read-only inputs shared by every update of one run.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    pub cfg: &'a ScenarioConfig,
    pub priors: &'a Priors,
    pub snap: &'a SnapshotSet,
    dict: AngularDictionary,
    /// `Upsilon A`, one row per snapshot.
    g: CMatrix,
    /// `R 1`
    r_sum: CVector,
}

impl<'a> Model<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        priors: &'a Priors,
        snap: &'a SnapshotSet,
        dict: &AngularDictionary,
    ) -> Result<Self> {
        snap.check(cfg)?;
        if dict.a.nrows() != cfg.elements() {
            return Err(Error::domain("dictionary rows do not match the RIS size"));
        }
        if priors.mu_phase_au.len() != cfg.l || priors.mu_phase_ru.len() != cfg.l {
            return Err(Error::domain("prior phase vectors must have length L"));
        }
        let (theta, vartheta) = ap_angles(cfg)?;
        let upsilon = ris_response_rows(cfg, &snap.profile, theta, vartheta);
        Ok(Self {
            cfg,
            priors,
            snap,
            g: upsilon * &dict.a,
            dict: dict.clone(),
            r_sum: snap.r.column_sum(),
        })
    }

    pub fn dict(&self) -> &AngularDictionary {
        &self.dict
    }

    /// `Upsilon A` (T x K).
    pub fn response(&self) -> &CMatrix {
        &self.g
    }

    fn sqrt_p(&self) -> f64 {
        self.cfg.p_w.sqrt()
    }

    fn t(&self) -> f64 {
        self.snap.r.ncols() as f64
    }
}

fn second_moment(mu: &CVector, sigma: &CMatrix) -> f64 {
    mu.norm_squared() + sigma.trace().re
}

/// Reflected-path coefficients `s = G mu_delta` and the variances `g_t Sigma g_t^H`.
fn reflected_parts(model: &Model, state: &VariationalState) -> (CVector, Vec<f64>) {
    let s = &model.g * &state.mu_delta;
    let gs = &model.g * &state.sigma_delta;
    let var = (0..s.len())
        .map(|t| {
            let quad: Complex64 = gs.row(t).iter().zip(model.g.row(t).iter()).map(|(a, b)| a * b.conj()).sum();
            quad.re.max(0.0)
        })
        .collect();
    (s, var)
}

/// Reflected-path coefficients `s = G mu_delta` and their second moments.
fn reflected(model: &Model, state: &VariationalState) -> (CVector, Vec<f64>) {
    let (s, var) = reflected_parts(model, state);
    let power = s.iter().zip(var).map(|(z, v)| z.norm_sqr() + v).collect();
    (s, power)
}

/// New `(mean, variance)` of the direct-path gain.
pub fn update_alpha_au(model: &Model, state: &VariationalState) -> (Complex64, f64) {
    let p = model.priors;
    let cfg = model.cfg;
    let sp = model.sqrt_p();
    let b_au = second_moment(&state.mu_phase_au, &state.sigma_phase_au);
    let gamma = model.t() * cfg.p_w * b_au / cfg.delta;
    let (s, _) = reflected(model, state);
    let s_sum: Complex64 = s.iter().sum();
    let beta = (state.mu_phase_au.dotc(&model.r_sum)
        - state.mu_phase_au.dotc(&state.mu_phase_ru) * s_sum * sp)
        * (sp / cfg.delta);
    let var = 1.0 / (gamma + 1.0 / p.delta_alpha_au);
    let mean = (p.mu_alpha_au / p.delta_alpha_au + beta) * var;
    (mean, var)
}

fn phase_posterior(prior_mean: &CVector, sigma_p: f64, gamma: f64, beta: CVector) -> (CVector, CMatrix) {
    let v = 1.0 / (gamma + 1.0 / sigma_p);
    let mean = (prior_mean / Complex64::new(sigma_p, 0.0) + beta) * Complex64::new(v, 0.0);
    let l = prior_mean.len();
    (mean, CMatrix::identity(l, l) * Complex64::new(v, 0.0))
}

/// New `(mean, covariance)` of the direct-path phase-shift vector.
pub fn update_phase_au(model: &Model, state: &VariationalState) -> (CVector, CMatrix) {
    let cfg = model.cfg;
    let sp = model.sqrt_p();
    let gamma = model.t() * cfg.p_w * (state.mu_alpha_au.norm_sqr() + state.var_alpha_au) / cfg.delta;
    let (s, _) = reflected(model, state);
    let s_sum: Complex64 = s.iter().sum();
    let resid = &model.r_sum - &state.mu_phase_ru * (s_sum * sp);
    let beta = resid * (state.mu_alpha_au.conj() * sp / cfg.delta);
    phase_posterior(&model.priors.mu_phase_au, model.priors.sigma_phase, gamma, beta)
}

/// New `(mean, covariance)` of the reflected-path phase-shift vector.
pub fn update_phase_ru(model: &Model, state: &VariationalState) -> (CVector, CMatrix) {
    let cfg = model.cfg;
    let sp = model.sqrt_p();
    let (s, power) = reflected(model, state);
    let gamma = cfg.p_w / cfg.delta * power.iter().sum::<f64>();
    let s_conj = s.map(|z| z.conj());
    let s_conj_sum: Complex64 = s_conj.iter().sum();
    let corr = &model.snap.r * &s_conj;
    let resid = corr - &state.mu_phase_au * (state.mu_alpha_au * sp * s_conj_sum);
    let beta = resid * Complex64::new(sp / cfg.delta, 0.0);
    phase_posterior(&model.priors.mu_phase_ru, model.priors.sigma_phase, gamma, beta)
}

/// New `(mean, covariance)` of the sparse reflected channel.
///
/// The covariance is formed in the snapshot space, so the cost is linear in
/// the number of dictionary columns.
pub fn update_delta(model: &Model, state: &VariationalState) -> Result<(CVector, CMatrix)> {
    let cfg = model.cfg;
    let sp = model.sqrt_p();
    let k = model.g.ncols();
    let omega = state.precisions();
    let means = model.priors.component_means();
    let prior_mean = CVector::from_fn(k, |i, _| {
        means[SLAB] * state.hbar[i][SLAB] + means[SPIKE] * state.hbar[i][SPIKE]
    });
    let b_ru = second_moment(&state.mu_phase_ru, &state.sigma_phase_ru);
    let scale = cfg.p_w * b_ru / cfg.delta;
    if !(scale > 0.0) {
        if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Conditioning("prior precisions must be positive".into()));
        }
        let cov = CMatrix::from_diagonal(&CVector::from_iterator(
            k,
            omega.iter().map(|w| Complex64::new(1.0 / w, 0.0)),
        ));
        return Ok((prior_mean, cov));
    }
    // c_t = mu_ru^H (r_t - sqrt(P) mu_alpha mu_au)
    let c = model.snap.r.tr_mul(&state.mu_phase_ru.map(|z| z.conj()))
        - CVector::from_element(
            model.snap.r.ncols(),
            state.mu_alpha_au * sp * state.mu_phase_ru.dotc(&state.mu_phase_au),
        );
    let f = &model.g * Complex64::new(scale.sqrt(), 0.0);
    let y = c / Complex64::new((b_ru * cfg.delta).sqrt(), 0.0);
    gaussian_posterior(&f, &omega, &y, &prior_mean)
}

/// Covariance of the sparse channel computed the same way as [`update_delta`].
pub fn delta_covariance(model: &Model, state: &VariationalState) -> Result<CMatrix> {
    let b_ru = second_moment(&state.mu_phase_ru, &state.sigma_phase_ru);
    let scale = model.cfg.p_w * b_ru / model.cfg.delta;
    posterior_covariance(&(&model.g * Complex64::new(scale.sqrt(), 0.0)), &state.precisions())
}

fn deviations(state: &VariationalState, priors: &Priors) -> Vec<[f64; 2]> {
    let means = priors.component_means();
    (0..state.mu_delta.len())
        .map(|i| {
            let var = state.sigma_delta[(i, i)].re.max(0.0);
            [
                (state.mu_delta[i] - means[0]).norm_sqr() + var,
                (state.mu_delta[i] - means[1]).norm_sqr() + var,
            ]
        })
        .collect()
}

/// New Gamma parameters `(a_post, b_post)` of the coefficient precisions.
///
/// `b_post` is a scale, so each precision point estimate is `a_post * b_post`.
pub fn update_w(state: &VariationalState, priors: &Priors) -> (Vec<f64>, Vec<f64>) {
    let dev = deviations(state, priors);
    let a_post = vec![priors.a + 0.5; dev.len()];
    let b_post = dev
        .iter()
        .zip(&state.hbar)
        .map(|(d, h)| {
            let varpi = 0.5 * (h[0] * d[0] + h[1] * d[1]);
            debug_assert!(varpi >= 0.0);
            1.0 / (1.0 / priors.b + varpi / 2.0)
        })
        .collect();
    (a_post, b_post)
}

/// New spike/slab indicator probabilities.
pub fn update_indicator(state: &VariationalState, priors: &Priors) -> Vec<[f64; 2]> {
    let dev = deviations(state, priors);
    let ln_chi = [priors.chi[0].ln(), priors.chi[1].ln()];
    dev.iter()
        .enumerate()
        .map(|(i, d)| {
            let (a, b) = (state.a_post[i], state.b_post[i]);
            let w = a * b;
            let base = 0.5 * digamma(a) + 0.5 * b.ln();
            let q = [
                base - 0.5 * d[0] * w + ln_chi[0],
                base - 0.5 * d[1] * w + ln_chi[1],
            ];
            let top = q[0].max(q[1]);
            let e = [(q[0] - top).exp(), (q[1] - top).exp()];
            let z = e[0] + e[1];
            [e[0] / z, e[1] / z]
        })
        .collect()
}

/// Initial state. With `greedy`, the column with the largest normalized
/// matched-filter response starts with the slab and spike probabilities swapped.
pub fn init_state(model: &Model, p_u_init: Vec3, greedy: bool) -> Result<VariationalState> {
    let cfg = model.cfg;
    let p = model.priors;
    let (zeta_au, zeta_ru) = path_delays(cfg.p_a, cfg.p_r, p_u_init, cfg.c);
    let mu_au = phase_shift_vector(zeta_au, cfg.l, cfg.delta_f);
    let mu_ru = phase_shift_vector(zeta_ru, cfg.l, cfg.delta_f);
    let eye_l = CMatrix::identity(cfg.l, cfg.l) * Complex64::new(p.sigma_phase, 0.0);
    let k = model.g.ncols();
    let los = p.mu_alpha_au * model.sqrt_p() * mu_ru.dotc(&mu_au);
    let c = model.snap.r.tr_mul(&mu_ru.map(|z| z.conj())) - CVector::from_element(model.snap.r.ncols(), los);
    let mut mu_delta = model.g.adjoint() * c;
    let peak = mu_delta.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak > 0.0 && peak.is_finite() {
        mu_delta *= Complex64::new(p.mu_delta_slab.norm() / peak, 0.0);
    } else {
        mu_delta.fill(ZERO);
    }
    let mut hbar = vec![p.chi; k];
    if greedy && peak > 0.0 {
        let score: Vec<f64> = (0..k)
            .map(|j| {
                let norm = model.g.column(j).norm();
                if norm > 0.0 { mu_delta[j].norm() / norm } else { 0.0 }
            })
            .collect();
        let j = crate::locate::argmax(&score).0;
        hbar[j] = [p.chi[SPIKE], p.chi[SLAB]];
    }
    Ok(VariationalState {
        mu_alpha_au: p.mu_alpha_au,
        var_alpha_au: p.delta_alpha_au,
        mu_phase_au: mu_au,
        sigma_phase_au: eye_l.clone(),
        mu_phase_ru: mu_ru,
        sigma_phase_ru: eye_l,
        mu_delta,
        sigma_delta: CMatrix::identity(k, k),
        a_post: vec![p.a; k],
        b_post: vec![p.b; k],
        hbar,
        iteration: 0,
    })
}

/// Scale that makes `mu` have unit gain at its matched-filter delay.
fn phase_gauge(mu: &CVector, model: &Model, opts: &JcleOptions) -> Result<Option<Complex64>> {
    let cfg = model.cfg;
    let zeta = extract_delay(mu, cfg.delta_f, opts.delay_grid)?;
    let c = phase_shift_vector(zeta, cfg.l, cfg.delta_f).dotc(mu) / cfg.l as f64;
    Ok((c.norm() > 0.0 && c.norm().is_finite()).then_some(c))
}

/// One full pass of the coordinate updates in their fixed order.
pub(crate) fn sweep(model: &Model, state: &mut VariationalState, opts: &JcleOptions, it: usize) -> Result<()> {
    let diverged = |what: &str| Error::Divergence {
        iteration: it,
        what: what.into(),
    };
    let (m, v) = update_alpha_au(model, state);
    state.mu_alpha_au = m;
    state.var_alpha_au = v;

    let (m, s) = update_phase_au(model, state);
    state.mu_phase_au = m;
    state.sigma_phase_au = s;
    if opts.gauge_fix {
        if let Some(c) = phase_gauge(&state.mu_phase_au, model, opts).map_err(|_| diverged("direct phase"))? {
            state.mu_phase_au /= c;
            state.sigma_phase_au /= Complex64::new(c.norm_sqr(), 0.0);
            state.mu_alpha_au *= c;
            state.var_alpha_au *= c.norm_sqr();
        }
    }

    let (m, s) = update_phase_ru(model, state);
    state.mu_phase_ru = m;
    state.sigma_phase_ru = s;
    if opts.gauge_fix {
        if let Some(c) = phase_gauge(&state.mu_phase_ru, model, opts).map_err(|_| diverged("reflected phase"))? {
            state.mu_phase_ru /= c;
            state.sigma_phase_ru /= Complex64::new(c.norm_sqr(), 0.0);
            state.mu_delta *= c;
            state.sigma_delta *= Complex64::new(c.norm_sqr(), 0.0);
        }
    }

    let (m, s) = update_delta(model, state).map_err(|e| match e {
        Error::Conditioning(msg) => Error::Conditioning(format!("iteration {it}: {msg}")),
        other => other,
    })?;
    state.mu_delta = m;
    state.sigma_delta = s;

    if opts.ridge_step {
        ridge_step(model, state);
    }

    let (a, b) = update_w(state, model.priors);
    state.a_post = a;
    state.b_post = b;
    state.hbar = update_indicator(state, model.priors);
    Ok(())
}

/// Exact line search along the direction that trades a snapshot-constant
/// part of the reflected path against the direct path.
///
/// When `Upsilon A` spans every snapshot vector the likelihood is flat along
/// this direction and only the priors fix the split, which coordinate-wise
/// updates resolve very slowly. The expected log joint is quadratic along the
/// line, so three symmetric probes give its maximizer.
pub fn ridge_step(model: &Model, state: &mut VariationalState) -> Complex64 {
    if state.mu_alpha_au.norm() <= 1e-12 * state.mu_delta.norm().max(1e-300) {
        return ZERO;
    }
    let b_ru = second_moment(&state.mu_phase_ru, &state.sigma_phase_ru);
    let prec = model.cfg.p_w * b_ru / model.cfg.delta;
    let ones = CVector::from_element(model.g.nrows(), Complex64::new(1.0, 0.0));
    let f = &model.g * Complex64::new(prec.sqrt(), 0.0);
    let Ok(d) = posterior_gain(&f, &state.precisions(), &ones) else {
        return ZERO;
    };
    let d = d * Complex64::new(prec.sqrt(), 0.0);
    let shift_au = &state.mu_phase_ru / state.mu_alpha_au;
    let at = |kappa: Complex64| {
        let mut probe = state.clone();
        probe.mu_delta -= &d * kappa;
        probe.mu_phase_au += &shift_au * kappa;
        expected_log_joint(model, &probe)
    };
    let f0 = at(ZERO);
    let (fp, fm) = (at(Complex64::new(1.0, 0.0)), at(Complex64::new(-1.0, 0.0)));
    let (fi, fmi) = (at(Complex64::new(0.0, 1.0)), at(Complex64::new(0.0, -1.0)));
    let curvature = -(fp + fm - 2.0 * f0) / 2.0;
    if !(curvature > 0.0 && curvature.is_finite()) {
        return ZERO;
    }
    let kappa = Complex64::new((fp - fm) / 4.0, (fi - fmi) / 4.0) / curvature;
    if !(kappa.re.is_finite() && kappa.im.is_finite()) {
        return ZERO;
    }
    state.mu_delta -= &d * kappa;
    state.mu_phase_au += &shift_au * kappa;
    kappa
}

/// Column with the largest slab probability, ties resolved by coefficient magnitude.
fn support(state: &VariationalState) -> usize {
    let mut best = 0;
    for i in 1..state.hbar.len() {
        let (hi, hb) = (state.hbar[i][SLAB], state.hbar[best][SLAB]);
        if hi > hb + 1e-12 || ((hi - hb).abs() <= 1e-12 && state.mu_delta[i].norm() > state.mu_delta[best].norm()) {
            best = i;
        }
    }
    best
}

/// Point estimates of every quantity of interest from the current state.
pub fn read_out(model: &Model, state: &VariationalState, opts: &JcleOptions) -> Result<EstimationResult> {
    let cfg = model.cfg;
    let dict = model.dict();
    let j = support(state);
    let full = dict.grid.len() as f64;
    let no_support = state.hbar.iter().all(|h| h[SLAB] < 1.0 / (full * full));
    let zeta_au = extract_delay(&state.mu_phase_au, cfg.delta_f, opts.delay_grid)?;
    let zeta_ru = extract_delay(&state.mu_phase_ru, cfg.delta_f, opts.delay_grid)?;
    let (psi, phi) = dict.angles(j);
    let u = unit_direction(psi, phi);
    let fit = match opts.range_readout {
        RangeReadout::Constraint => solve_rho_numeric(zeta_au, zeta_ru, cfg.p_a, cfg.p_r, u, cfg.c),
        RangeReadout::Weighted => {
            let var_au = delay_variance(&state.mu_phase_au, state.sigma_phase_au[(0, 0)].re, zeta_au, cfg.delta_f);
            let var_ru = delay_variance(&state.mu_phase_ru, state.sigma_phase_ru[(0, 0)].re, zeta_ru, cfg.delta_f);
            solve_rho_weighted(zeta_au, zeta_ru, var_au, var_ru, cfg.p_a, cfg.p_r, u, cfg.c)
        }
    };
    let failed = no_support || fit.failed;
    let p_u_hat = if failed {
        Vec3::from_element(f64::NAN)
    } else {
        user_position(cfg.p_r, u, fit.rho)
    };
    Ok(EstimationResult {
        p_u_hat,
        zeta_au_hat: zeta_au,
        zeta_ru_hat: zeta_ru,
        psi_hat: psi,
        phi_hat: phi,
        alpha_au_hat: state.mu_alpha_au,
        alpha_ru_hat: state.mu_delta[j],
        support_index: dict.grid_index[j],
        rho_hat: fit.rho,
        failure_flag: failed,
    })
}

/// Expectation of the log joint density under the mean-field posterior,
/// dropping every term that does not depend on a Gaussian factor.
pub fn expected_log_joint(model: &Model, state: &VariationalState) -> f64 {
    let cfg = model.cfg;
    let p = model.priors;
    let sp = model.sqrt_p();
    let (s, var) = reflected_parts(model, state);
    let tr_au = state.sigma_phase_au.trace().re;
    let tr_ru = state.sigma_phase_ru.trace().re;
    let b_ru = state.mu_phase_ru.norm_squared() + tr_ru;
    let ex = &state.mu_phase_au * (state.mu_alpha_au * sp);
    // Written as the residual of the mean signal plus variance terms, so it
    // stays at the noise scale when the fit is good.
    let var_au = cfg.p_w
        * (state.var_alpha_au * state.mu_phase_au.norm_squared()
            + (state.mu_alpha_au.norm_sqr() + state.var_alpha_au) * tr_au);
    let mut data = 0.0;
    for t in 0..model.snap.r.ncols() {
        let resid = model.snap.r.column(t) - &ex - &state.mu_phase_ru * (s[t] * sp);
        data += resid.norm_squared() + var_au + cfg.p_w * (tr_ru * s[t].norm_sqr() + b_ru * var[t]);
    }
    let alpha_prior = ((state.mu_alpha_au - p.mu_alpha_au).norm_sqr() + state.var_alpha_au) / p.delta_alpha_au;
    let phase_prior = ((&state.mu_phase_au - &p.mu_phase_au).norm_squared()
        + state.sigma_phase_au.trace().re
        + (&state.mu_phase_ru - &p.mu_phase_ru).norm_squared()
        + state.sigma_phase_ru.trace().re)
        / p.sigma_phase;
    let w = state.precisions();
    let delta_prior: f64 = deviations(state, p)
        .iter()
        .zip(&state.hbar)
        .zip(&w)
        .map(|((d, h), w)| w * (h[0] * d[0] + h[1] * d[1]))
        .sum();
    -data / cfg.delta - alpha_prior - phase_prior - delta_prior
}

fn relative(prev: f64, cur: f64, diff: f64) -> f64 {
    let scale = prev.max(cur);
    if scale > 0.0 {
        diff / scale
    } else {
        0.0
    }
}

/// Largest relative change of any variational mean between two states.
pub fn convergence_metric(prev: &VariationalState, cur: &VariationalState) -> f64 {
    let vec = |a: &CVector, b: &CVector| relative(a.norm(), b.norm(), (a - b).norm());
    let w_prev = prev.precisions();
    let w_cur = cur.precisions();
    let w_diff = w_prev.iter().zip(&w_cur).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let w_norm = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let h_diff = prev
        .hbar
        .iter()
        .zip(&cur.hbar)
        .map(|(a, b)| (a[0] - b[0]).abs())
        .fold(0.0, f64::max);
    let parts = [
        relative(
            prev.mu_alpha_au.norm(),
            cur.mu_alpha_au.norm(),
            (prev.mu_alpha_au - cur.mu_alpha_au).norm(),
        ),
        vec(&prev.mu_phase_au, &cur.mu_phase_au),
        vec(&prev.mu_phase_ru, &cur.mu_phase_ru),
        vec(&prev.mu_delta, &cur.mu_delta),
        relative(w_norm(&w_prev), w_norm(&w_cur), w_diff),
        h_diff,
    ];
    parts.into_iter().fold(0.0, f64::max)
}
