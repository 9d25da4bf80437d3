use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{ml_localize, pso_search, PsoConfig};
use crate::bcrb::position_bound;
use crate::error::Result;
use crate::geometry::{
    noise_variance_for_snr, synthesize, unit_direction, vec3, ChannelTruth, CVector, FieldMode,
    RisProfile, ScenarioConfig, SignalParams, SnapshotSet, Vec3,
};
use crate::grid::{build_dictionary, build_grid, faces_ap, grid_angles, nearest_index, AngularDictionary, AngularGrid};
use crate::locate::EstimationResult;
use crate::vbi::{run_jcle_traced, Priors, TraceRecord};

use super::experiment::{Algorithm, ExperimentSpec};

/// One algorithm's outcome in one trial; one row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub run_id: u64,
    pub algo: Algorithm,
    pub sweep_value: f64,
    pub seed: u64,
    /// Position error in meters; the bound itself for BCRB rows; NaN when failed.
    pub pos_error_m: f64,
    pub delta_err: f64,
    pub support_correct: bool,
    pub angle_err_psi: f64,
    pub angle_err_phi: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failed: bool,
    /// Checksum of the measurement matrix the algorithm consumed.
    pub snap_checksum: u64,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Everything drawn for one trial before any algorithm runs.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub seed: u64,
    pub cfg: ScenarioConfig,
    pub truth: ChannelTruth,
    pub snap: SnapshotSet,
    pub p_init: Vec3,
    pub grid: AngularGrid,
    pub dict: AngularDictionary,
    pub priors: Priors,
    /// True direction with `psi` in `[-pi/2, pi/2]`.
    pub true_angles: (f64, f64),
    /// Grid index nearest to the true direction.
    pub true_index: usize,
    pub delta_true: CVector,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn trial_seed(master_seed: u64, sweep_value: f64, trial_index: u64) -> u64 {
    splitmix(master_seed ^ splitmix(sweep_value.to_bits() ^ splitmix(trial_index)))
}

const PSO_STREAM: u64 = 0x5053_4f5f_5041_5254;

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, mean: Complex64, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    mean + Complex64::new(s * n.sample(rng), s * n.sample(rng))
}

fn draw_direction<R: Rng + ?Sized>(
    spec: &ExperimentSpec,
    cfg: &ScenarioConfig,
    grid: &AngularGrid,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if spec.experiment.on_grid_truth {
        let far = ScenarioConfig {
            field_mode: FieldMode::FarField,
            ..cfg.clone()
        };
        let front = build_dictionary(&far, grid, None)?.front_facing(&far)?;
        let j = rng.gen_range(0..front.columns());
        return Ok(front.angles(j));
    }
    let half = std::f64::consts::FRAC_PI_2;
    loop {
        let psi = rng.gen_range(-half..half);
        let phi = rng.gen_range(-half..half);
        if faces_ap(cfg, psi, phi) {
            return Ok((psi, phi));
        }
    }
}

/// Draws the truth, synthesizes the measurements and builds the dictionary.
pub fn prepare_trial(spec: &ExperimentSpec, sweep_value: f64, trial_index: u64) -> Result<TrialSetup> {
    let seed = trial_seed(spec.experiment.master_seed, sweep_value, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = spec.scenario_at(sweep_value);
    cfg.rng_seed = seed;
    cfg.validate()?;
    let grid = build_grid(spec.grid.p, spec.grid.q)?;

    let (psi, phi) = draw_direction(spec, &cfg, &grid, &mut rng)?;
    let p_u = cfg.p_r + spec.user_range() * unit_direction(psi, phi);
    cfg.p_u_true = p_u;
    let alpha_au = complex_normal(&mut rng, spec.priors.alpha_mean(), spec.priors.delta_alpha_au);
    let alpha_ru = complex_normal(&mut rng, spec.priors.slab_mean(), spec.priors.slab_variance());
    let truth = ChannelTruth::from_geometry(&cfg, p_u, alpha_au, alpha_ru)?;
    let profile = RisProfile::random(&cfg, &mut rng);
    if let Some(snr) = spec.snr_at(sweep_value) {
        let params = SignalParams::from_truth(&cfg, &truth, &profile);
        cfg.delta = noise_variance_for_snr(&cfg, &params, snr)?;
    }
    let snap = synthesize(&cfg, &truth, &profile, &mut rng)?;

    let std = spec.init_bias_std();
    let bias = Normal::new(0.0, std.max(f64::MIN_POSITIVE)).expect("bias normal");
    let offset = if std > 0.0 {
        vec3(bias.sample(&mut rng), bias.sample(&mut rng), bias.sample(&mut rng))
    } else {
        Vec3::zeros()
    };
    let p_init = p_u + offset;

    let focus = match cfg.field_mode {
        FieldMode::FarField => None,
        FieldMode::NearField => Some((p_init - cfg.p_r).norm()),
    };
    let mut dict = build_dictionary(&cfg, &grid, focus)?;
    if spec.grid.front_only {
        dict = dict.front_facing(&cfg)?;
    }
    let priors = Priors::new(&spec.priors, &cfg, p_init, grid.len())?;
    let true_index = nearest_index(&grid, psi, phi)?;
    let mut delta_true = CVector::zeros(grid.len());
    delta_true[true_index] = truth.alpha_ru;

    Ok(TrialSetup {
        seed,
        cfg,
        truth,
        snap,
        p_init,
        grid,
        dict,
        priors,
        true_angles: (psi, phi),
        true_index,
        delta_true,
    })
}

pub fn run_trial(spec: &ExperimentSpec, sweep_value: f64, trial_index: u64) -> Result<Vec<TrialRecord>> {
    run_trial_traced(spec, sweep_value, trial_index, &mut |_| {})
}

/// Runs every requested algorithm on one shared measurement set.
///
/// Algorithm errors become failed records.
pub fn run_trial_traced(
    spec: &ExperimentSpec,
    sweep_value: f64,
    trial_index: u64,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<Vec<TrialRecord>> {
    let setup = prepare_trial(spec, sweep_value, trial_index)?;
    let value_index = spec
        .experiment
        .sweep_values
        .iter()
        .position(|v| v.to_bits() == sweep_value.to_bits())
        .unwrap_or(0) as u64;
    let run_id = value_index * spec.experiment.trials as u64 + trial_index;
    let mut records = Vec::with_capacity(spec.experiment.algorithms.len());
    for &algo in &spec.experiment.algorithms {
        let start = Instant::now();
        let mut rec = match algo {
            Algorithm::Jcle => jcle_record(spec, &setup, trace),
            Algorithm::Pso => pso_record(spec, &setup),
            Algorithm::Ml => ml_localize(&setup.cfg, &setup.snap, &setup.dict)
                .map(|est| estimate_record(&setup, &est, 0, true)),
            Algorithm::Bcrb => bcrb_record(&setup),
        }
        .unwrap_or_else(|_| failed_record());
        rec.run_id = run_id;
        rec.algo = algo;
        rec.sweep_value = sweep_value;
        rec.seed = setup.seed;
        rec.snap_checksum = setup.snap.checksum();
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(rec);
    }
    Ok(records)
}

fn blank() -> TrialRecord {
    TrialRecord {
        run_id: 0,
        algo: Algorithm::Jcle,
        sweep_value: 0.0,
        seed: 0,
        pos_error_m: f64::NAN,
        delta_err: f64::NAN,
        support_correct: false,
        angle_err_psi: f64::NAN,
        angle_err_phi: f64::NAN,
        iterations: 0,
        converged: false,
        failed: false,
        snap_checksum: 0,
        wall_ms: 0.0,
    }
}

fn failed_record() -> TrialRecord {
    TrialRecord {
        failed: true,
        ..blank()
    }
}

fn relative_error(estimate: &CVector, truth: &CVector) -> f64 {
    (estimate - truth).norm() / truth.norm()
}

fn estimate_record(setup: &TrialSetup, est: &EstimationResult, iterations: usize, converged: bool) -> TrialRecord {
    let error = (est.p_u_hat - setup.truth.position(&setup.cfg)).norm();
    let failed = est.failure_flag || !error.is_finite();
    let (psi_hat, phi_hat) = grid_angles(est.psi_hat, est.phi_hat);
    let mut sparse = CVector::zeros(setup.grid.len());
    if est.support_index < sparse.len() && est.alpha_ru_hat.norm().is_finite() {
        sparse[est.support_index] = est.alpha_ru_hat;
    }
    TrialRecord {
        pos_error_m: if failed { f64::NAN } else { error },
        delta_err: relative_error(&sparse, &setup.delta_true),
        support_correct: !failed && est.support_index == setup.true_index,
        angle_err_psi: (psi_hat - setup.true_angles.0).abs(),
        angle_err_phi: (phi_hat - setup.true_angles.1).abs(),
        iterations,
        converged,
        failed,
        ..blank()
    }
}

fn jcle_record(
    spec: &ExperimentSpec,
    setup: &TrialSetup,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<TrialRecord> {
    let opts = spec.jcle.options();
    let (state, est, report) =
        run_jcle_traced(&setup.cfg, &setup.priors, &setup.snap, &setup.dict, setup.p_init, &opts, trace)?;
    let mut rec = estimate_record(setup, &est, report.iterations_run, report.converged);
    rec.delta_err = relative_error(&setup.dict.expand(&state.mu_delta), &setup.delta_true);
    Ok(rec)
}

fn pso_record(spec: &ExperimentSpec, setup: &TrialSetup) -> Result<TrialRecord> {
    let s = &spec.pso;
    let pso = PsoConfig {
        particles: s.particles,
        iterations: s.iterations,
        inertia: s.inertia,
        cognitive: s.cognitive,
        social: s.social,
        ..PsoConfig::centered(setup.p_init, s.box_half_width)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ PSO_STREAM);
    let gains = (setup.priors.mu_alpha_au, setup.priors.mu_delta_slab);
    let out = pso_search(&setup.cfg, &setup.snap, &setup.dict, &pso, gains, &mut rng)?;
    Ok(estimate_record(setup, &out.estimate, s.iterations, true))
}

fn bcrb_record(setup: &TrialSetup) -> Result<TrialRecord> {
    let bound = position_bound(&setup.cfg, &setup.truth, &setup.snap.profile)?;
    Ok(TrialRecord {
        pos_error_m: bound.bound_m,
        converged: true,
        ..blank()
    })
}
