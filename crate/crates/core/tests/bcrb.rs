mod common;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risloc::bcrb::{bcrb_position, channel_transform, fim, fim_channel, position_bound, JACOBIAN_LABELS};
use risloc::geometry::{
    noiseless_signal, vec3, ChannelTruth, FieldMode, RisProfile, ScenarioConfig, SignalParams,
};
use risloc::Error;

use common::*;

fn case(seed: u64, mode: FieldMode) -> (ScenarioConfig, ChannelTruth, RisProfile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = random_scenario(&mut rng, mode);
    let p_u = random_user(&mut rng, &cfg);
    cfg.p_u_true = p_u;
    let truth = ChannelTruth::from_geometry(&cfg, p_u, random_gain(&mut rng), random_gain(&mut rng)).unwrap();
    let profile = RisProfile::random(&cfg, &mut rng);
    (cfg, truth, profile)
}

/// `||R - Xi(x)||^2 / delta` with `R` the noiseless signal at the truth and
/// `x = (p_u, Re/Im alpha_au, Re/Im alpha_ru)`.
fn misfit(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile, x: &[f64; 7]) -> f64 {
    let r = noiseless_signal(cfg, &SignalParams::from_truth(cfg, truth, profile)).unwrap();
    let params = SignalParams::from_position(
        cfg,
        profile,
        vec3(x[0], x[1], x[2]),
        Complex64::new(x[3], x[4]),
        Complex64::new(x[5], x[6]),
    )
    .unwrap();
    let xi = noiseless_signal(cfg, &params).unwrap();
    (r - xi).norm_squared() / cfg.delta
}

#[test]
fn information_equals_misfit_hessian() {
    for (seed, mode) in [(1, FieldMode::FarField), (2, FieldMode::NearField), (3, FieldMode::FarField)] {
        let (cfg, truth, profile) = case(seed, mode);
        let p = truth.position(&cfg);
        let x0 = [p.x, p.y, p.z, truth.alpha_au.re, truth.alpha_au.im, truth.alpha_ru.re, truth.alpha_ru.im];
        let scale = (p - cfg.p_r).norm();
        let h: Vec<f64> = (0..7).map(|i| if i < 3 { 1e-4 * scale } else { 1e-4 }).collect();
        let j = fim(&cfg, &truth, &profile).unwrap().j;
        let f = |x: &[f64; 7]| misfit(&cfg, &truth, &profile, x);
        let mut worst: f64 = 0.0;
        for a in 0..7 {
            for b in 0..7 {
                let shifted = |sa: f64, sb: f64| {
                    let mut x = x0;
                    x[a] += sa * h[a];
                    x[b] += sb * h[b];
                    f(&x)
                };
                // At zero residual the misfit Hessian is 2 Re(J^H J) / delta.
                let hess = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                    / (4.0 * h[a] * h[b]);
                let denom = (j[(a, a)] * j[(b, b)]).sqrt();
                worst = worst.max((hess - j[(a, b)]).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "seed {seed}: Hessian mismatch {worst:e}");
    }
}

#[test]
fn position_information_is_the_channel_information_pulled_back() {
    for (seed, mode) in [(4, FieldMode::FarField), (5, FieldMode::NearField)] {
        let (cfg, truth, profile) = case(seed, mode);
        let j = fim(&cfg, &truth, &profile).unwrap().j;
        let jc = fim_channel(&cfg, &truth, &profile).unwrap().j;
        let t = channel_transform(&cfg, &truth);
        let pulled = t.transpose() * jc * &t;
        assert!((&pulled - &j).norm() < 1e-8 * j.norm(), "seed {seed}");
    }
}

#[test]
fn bound_scales_with_noise_standard_deviation() {
    let (mut cfg, truth, profile) = case(6, FieldMode::FarField);
    let b1 = position_bound(&cfg, &truth, &profile).unwrap().bound_m;
    cfg.delta *= 4.0;
    let b4 = position_bound(&cfg, &truth, &profile).unwrap().bound_m;
    assert!((b4 / b1 - 2.0).abs() < 1e-9);
}

#[test]
fn bound_shrinks_with_more_snapshots() {
    let (cfg, truth, _) = case(7, FieldMode::FarField);
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let long = ScenarioConfig { t: cfg.t * 4, ..cfg.clone() };
    let profile_long = RisProfile::random(&long, &mut rng);
    let profile_short = RisProfile {
        omega: profile_long.omega.rows(0, cfg.t).into_owned(),
    };
    let short = position_bound(&cfg, &truth, &profile_short).unwrap().bound_m;
    let more = position_bound(&long, &truth, &profile_long).unwrap().bound_m;
    assert!(more < short);
}

#[test]
fn labels_and_singular_information() {
    assert_eq!(JACOBIAN_LABELS.len(), 12);
    assert_eq!(&JACOBIAN_LABELS[..3], &["x", "y", "z"]);
    let (cfg, truth, profile) = case(8, FieldMode::FarField);
    let mut info = fim(&cfg, &truth, &profile).unwrap();
    assert_eq!(info.index_of("x"), Some(0));
    for k in 0..info.j.ncols() {
        info.j[(0, k)] = 0.0;
        info.j[(k, 0)] = 0.0;
    }
    match bcrb_position(&info) {
        Err(Error::SingularFim { direction }) => assert!(direction[0].abs() > 0.99),
        other => panic!("expected a singular information error, got {other:?}"),
    }
}
