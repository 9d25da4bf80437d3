mod common;

use risloc::bcrb::position_bound;
use risloc::harness::{prepare_trial, ExperimentSpec, TrialSetup};
use risloc::vbi::{expected_log_joint, init_state, ridge_step, run_jcle, run_jcle_traced, JcleOptions, Model};
use risloc::geometry::{FieldMode, SnapshotSet};

fn setup(spec: &ExperimentSpec, value: f64, trial: u64) -> TrialSetup {
    prepare_trial(spec, value, trial).unwrap()
}

fn ci_spec(snr: f64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::desk();
    spec.scenario.m = 8;
    spec.scenario.n = 8;
    spec.scenario.l = 32;
    spec.scenario.t = 24;
    spec.experiment.sweep_values = vec![snr];
    spec
}

#[test]
fn recovers_support_and_position_at_high_snr() {
    let spec = ci_spec(40.0);
    for trial in 0..6 {
        let s = setup(&spec, 40.0, trial);
        let (_, est, report) = run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, s.p_init, &JcleOptions::default()).unwrap();
        assert!(!est.failure_flag);
        assert_eq!(est.support_index, s.true_index, "trial {trial}");
        let err = (est.p_u_hat - s.truth.position(&s.cfg)).norm();
        assert!(err < 0.05, "trial {trial}: error {err}");
        assert!(report.converged);
    }
}

#[test]
fn trace_reports_every_iteration() {
    let spec = ci_spec(15.0);
    let s = setup(&spec, 15.0, 1);
    let mut seen = Vec::new();
    let (state, _, report) = run_jcle_traced(
        &s.cfg,
        &s.priors,
        &s.snap,
        &s.dict,
        s.p_init,
        &JcleOptions::default(),
        &mut |r| seen.push((r.iteration, r.metric)),
    )
    .unwrap();
    assert_eq!(seen.len(), report.iterations_run);
    assert_eq!(state.iteration, report.iterations_run);
    let metrics: Vec<f64> = seen.iter().map(|s| s.1).collect();
    assert_eq!(metrics, report.metric_trace);
    assert!(seen.iter().enumerate().all(|(i, s)| s.0 == i + 1));
    assert!(state.check_invariants().is_ok());
}

#[test]
fn ridge_step_never_lowers_the_objective() {
    let spec = ci_spec(15.0);
    for trial in 0..5 {
        let s = setup(&spec, 15.0, trial);
        let model = Model::new(&s.cfg, &s.priors, &s.snap, &s.dict).unwrap();
        let mut state = init_state(&model, s.p_init, true).unwrap();
        let before = expected_log_joint(&model, &state);
        ridge_step(&model, &mut state);
        let after = expected_log_joint(&model, &state);
        assert!(after >= before - 1e-9 * before.abs(), "trial {trial}: {before} -> {after}");
        let again = ridge_step(&model, &mut state);
        assert!(again.norm() < 1e-6, "second step should be negligible, got {again}");
    }
}

#[test]
fn options_without_heuristics_still_run() {
    let spec = ci_spec(20.0);
    let s = setup(&spec, 20.0, 2);
    let opts = JcleOptions {
        ridge_step: false,
        greedy_init: false,
        gauge_fix: false,
        max_iter: 5,
        ..JcleOptions::default()
    };
    let (_, _, report) = run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, s.p_init, &opts).unwrap();
    assert!(report.iterations_run <= 5);
}

#[test]
fn rejects_bad_inputs() {
    let spec = ci_spec(15.0);
    let s = setup(&spec, 15.0, 0);
    let bad_tol = JcleOptions {
        tol: 0.0,
        ..JcleOptions::default()
    };
    assert!(run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, s.p_init, &bad_tol).is_err());
    let nan = s.p_init * f64::NAN;
    assert!(run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, nan, &JcleOptions::default()).is_err());
    let short = SnapshotSet {
        r: s.snap.r.columns(0, 3).into_owned(),
        profile: s.snap.profile.clone(),
    };
    assert!(run_jcle(&s.cfg, &s.priors, &short, &s.dict, s.p_init, &JcleOptions::default()).is_err());
}

#[test]
fn near_field_high_snr_recovery() {
    let mut spec = ci_spec(40.0);
    spec.scenario.field_mode = FieldMode::NearField;
    for trial in 0..4 {
        let s = setup(&spec, 40.0, trial);
        assert!(s.dict.focus_range.is_some());
        let (_, est, _) = run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, s.p_init, &JcleOptions::default()).unwrap();
        assert_eq!(est.support_index, s.true_index, "trial {trial}");
        let err = (est.p_u_hat - s.truth.position(&s.cfg)).norm();
        let bound = position_bound(&s.cfg, &s.truth, &s.snap.profile).unwrap().bound_m;
        assert!(err < 10.0 * bound, "trial {trial}: error {err}, bound {bound}");
    }
}
