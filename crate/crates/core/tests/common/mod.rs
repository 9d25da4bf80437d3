#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use risloc::geometry::{
    noiseless_signal, phase_shift_vector, ris_response_rows, steering, unit_direction, vec3,
    CMatrix, CVector, ChannelTruth, FieldMode, RisProfile, ScenarioConfig, SignalParams, Vec3,
};
use risloc::grid::faces_ap;

pub fn cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cvector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| cn(rng))
}

pub fn random_cmatrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cn(rng))
}

/// Hermitian positive definite matrix with eigenvalues bounded below by `floor`.
pub fn random_pd<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64, floor: f64) -> CMatrix {
    let b = random_cmatrix(rng, n, n);
    let m = &b * b.adjoint() * Complex64::new(scale / n as f64, 0.0);
    m + CMatrix::identity(n, n) * Complex64::new(floor, 0.0)
}

/// Random direction on the access-point side of the RIS, away from the grid edges.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> (f64, f64) {
    loop {
        let psi = rng.gen_range(-1.4..1.4);
        let phi = rng.gen_range(0.2..1.4) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        if faces_ap(cfg, psi, phi) {
            return (psi, phi);
        }
    }
}

/// Small random scenario with the access point on the +y side of the RIS.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, mode: FieldMode) -> ScenarioConfig {
    let p_r = vec3(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(0.0..15.0));
    let p_a = p_r + vec3(rng.gen_range(-80.0..80.0), rng.gen_range(10.0..80.0), rng.gen_range(-10.0..30.0));
    ScenarioConfig {
        p_a,
        p_r,
        p_u_true: p_r,
        m: rng.gen_range(3..7),
        n: rng.gen_range(3..7),
        l: rng.gen_range(8..25),
        t: rng.gen_range(3..9),
        delta: rng.gen_range(1e-3..1e-1),
        field_mode: mode,
        ..ScenarioConfig::default()
    }
}

pub fn random_user<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> Vec3 {
    let (psi, phi) = random_direction(rng, cfg);
    let range = match cfg.field_mode {
        FieldMode::FarField => rng.gen_range(5.0..40.0),
        FieldMode::NearField => rng.gen_range(20.0..100.0) * cfg.lambda,
    };
    cfg.p_r + range * unit_direction(psi, phi)
}

pub fn random_gain<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
}

/// Noiseless snapshot `t` evaluated directly from channel parameters.
#[allow(clippy::too_many_arguments)]
pub fn snapshot_from_channel(
    cfg: &ScenarioConfig,
    truth: &ChannelTruth,
    profile: &RisProfile,
    t: usize,
    zeta_au: f64,
    zeta_ru: f64,
    psi: f64,
    phi: f64,
    rho: f64,
    alpha_au: Complex64,
    alpha_ru: Complex64,
) -> CVector {
    let upsilon = ris_response_rows(cfg, profile, truth.theta, truth.vartheta);
    let range = if cfg.field_mode == FieldMode::NearField { rho } else { 0.0 };
    let params = SignalParams {
        alpha_au,
        phase_au: phase_shift_vector(zeta_au, cfg.l, cfg.delta_f),
        phase_ru: phase_shift_vector(zeta_ru, cfg.l, cfg.delta_f),
        reflected: upsilon * steering(cfg, psi, phi, range) * alpha_ru,
    };
    noiseless_signal(cfg, &params).expect("consistent params").column(t).into_owned()
}

pub fn snapshot_from_position(
    cfg: &ScenarioConfig,
    truth: &ChannelTruth,
    profile: &RisProfile,
    t: usize,
    p_u: Vec3,
) -> CVector {
    let moved = ChannelTruth::from_geometry(cfg, p_u, truth.alpha_au, truth.alpha_ru).expect("valid position");
    let params = SignalParams::from_truth(cfg, &moved, profile);
    noiseless_signal(cfg, &params).expect("consistent params").column(t).into_owned()
}

/// Central finite-difference Jacobian of snapshot `t`, in the column order of
/// `risloc::bcrb::JACOBIAN_LABELS`.
pub fn fd_jacobian(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile, t: usize) -> CMatrix {
    let p_u = truth.position(cfg);
    let mut jac = CMatrix::zeros(cfg.l, 12);
    let rel = 1e-6;
    let h_pos = rel * (p_u - cfg.p_r).norm();
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = h_pos;
        let d = (snapshot_from_position(cfg, truth, profile, t, p_u + e)
            - snapshot_from_position(cfg, truth, profile, t, p_u - e))
            / Complex64::new(2.0 * h_pos, 0.0);
        jac.set_column(i, &d);
    }
    let base = [truth.zeta_au, truth.zeta_ru, truth.psi, truth.phi, truth.rho];
    let steps = [rel * truth.zeta_ru, rel * truth.zeta_ru, rel, rel, rel * truth.rho];
    let eval = |x: [f64; 5], a_au: Complex64, a_ru: Complex64| {
        snapshot_from_channel(cfg, truth, profile, t, x[0], x[1], x[2], x[3], x[4], a_au, a_ru)
    };
    for (k, h) in steps.iter().enumerate() {
        let (mut plus, mut minus) = (base, base);
        plus[k] += h;
        minus[k] -= h;
        let d = (eval(plus, truth.alpha_au, truth.alpha_ru) - eval(minus, truth.alpha_au, truth.alpha_ru))
            / Complex64::new(2.0 * h, 0.0);
        jac.set_column(3 + k, &d);
    }
    let h = rel;
    for (k, dir) in [
        (8, (Complex64::new(h, 0.0), Complex64::new(0.0, 0.0))),
        (9, (Complex64::new(0.0, h), Complex64::new(0.0, 0.0))),
        (10, (Complex64::new(0.0, 0.0), Complex64::new(h, 0.0))),
        (11, (Complex64::new(0.0, 0.0), Complex64::new(0.0, h))),
    ] {
        let d = (eval(base, truth.alpha_au + dir.0, truth.alpha_ru + dir.1)
            - eval(base, truth.alpha_au - dir.0, truth.alpha_ru - dir.1))
            / Complex64::new(2.0 * h, 0.0);
        jac.set_column(k, &d);
    }
    jac
}

/// Worst column-wise relative mismatch between two Jacobians. Columns that
/// vanish analytically are compared against the largest column norm.
pub fn jacobian_mismatch(analytic: &CMatrix, numeric: &CMatrix) -> f64 {
    let largest = (0..analytic.ncols()).map(|j| analytic.column(j).norm()).fold(0.0, f64::max);
    (0..analytic.ncols())
        .map(|j| {
            let a = analytic.column(j);
            let diff = (a - numeric.column(j)).norm();
            let scale = a.norm();
            if scale > 1e-9 * largest {
                diff / scale
            } else {
                diff / largest
            }
        })
        .fold(0.0, f64::max)
}
