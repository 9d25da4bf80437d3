//! Mean-field variational inference for joint channel estimation and localization.
//!
//! The latent variables are the direct-path gain, the two phase-shift
//! vectors, the sparse reflected channel over the angular dictionary, its
//! per-coefficient precisions and spike/slab indicators. Every factor is
//! updated in closed form; [`run_jcle`] cycles through them and reads out
//! the user position.

mod updates;
pub mod woodbury;

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{path_delays, phase_shift_vector, CMatrix, CVector, ScenarioConfig, SnapshotSet, Vec3};
use crate::grid::AngularDictionary;
use crate::locate::{DelayGrid, EstimationResult};

pub use updates::{
    convergence_metric, delta_covariance, expected_log_joint, init_state, read_out, update_alpha_au,
    update_delta,
    ridge_step, update_indicator, update_phase_au, update_phase_ru, update_w, Model,
};

/// Slab (nonzero) component index in indicator rows.
pub const SLAB: usize = 0;
/// Spike (zero-mean) component index in indicator rows.
pub const SPIKE: usize = 1;

/// Scalar prior hyperparameters, as read from a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mu_alpha_au: [f64; 2],
    pub delta_alpha_au: f64,
    pub sigma_phase: f64,
    pub mu_delta_slab: [f64; 2],
    pub a: f64,
    pub b: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mu_alpha_au: [0.2, 0.2],
            delta_alpha_au: 0.01,
            sigma_phase: 1e3,
            mu_delta_slab: [0.5, 0.5],
            a: 1e5,
            b: 1e-3,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_alpha_au", self.delta_alpha_au),
            ("sigma_phase", self.sigma_phase),
            ("a", self.a),
            ("b", self.b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("prior {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn alpha_mean(&self) -> Complex64 {
        Complex64::new(self.mu_alpha_au[0], self.mu_alpha_au[1])
    }

    pub fn slab_mean(&self) -> Complex64 {
        Complex64::new(self.mu_delta_slab[0], self.mu_delta_slab[1])
    }

    /// Variance of the slab component at the prior precision.
    pub fn slab_variance(&self) -> f64 {
        1.0 / (self.a * self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub mu_alpha_au: Complex64,
    pub delta_alpha_au: f64,
    pub mu_phase_au: CVector,
    pub mu_phase_ru: CVector,
    pub sigma_phase: f64,
    pub mu_delta_slab: Complex64,
    pub mu_delta_spike: Complex64,
    pub a: f64,
    pub b: f64,
    /// `(slab, spike)` prior probabilities.
    pub chi: [f64; 2],
}

impl Priors {
    /// Priors centred on the delays implied by `p_u_init`, for a grid of `grid_len` pairs.
    pub fn new(
        prior: &PriorConfig,
        cfg: &ScenarioConfig,
        p_u_init: Vec3,
        grid_len: usize,
    ) -> Result<Self> {
        prior.validate()?;
        if grid_len < 2 {
            return Err(Error::domain("the angular grid needs at least two pairs"));
        }
        let (zeta_au, zeta_ru) = path_delays(cfg.p_a, cfg.p_r, p_u_init, cfg.c);
        let chi1 = 1.0 / grid_len as f64;
        Ok(Self {
            mu_alpha_au: prior.alpha_mean(),
            delta_alpha_au: prior.delta_alpha_au,
            mu_phase_au: phase_shift_vector(zeta_au, cfg.l, cfg.delta_f),
            mu_phase_ru: phase_shift_vector(zeta_ru, cfg.l, cfg.delta_f),
            sigma_phase: prior.sigma_phase,
            mu_delta_slab: prior.slab_mean(),
            mu_delta_spike: Complex64::new(0.0, 0.0),
            a: prior.a,
            b: prior.b,
            chi: [chi1, 1.0 - chi1],
        })
    }

    pub fn component_means(&self) -> [Complex64; 2] {
        [self.mu_delta_slab, self.mu_delta_spike]
    }

    /// Number of grid pairs the indicator prior was built for.
    pub fn grid_len(&self) -> usize {
        (1.0 / self.chi[SLAB]).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu_alpha_au: Complex64,
    pub var_alpha_au: f64,
    pub mu_phase_au: CVector,
    pub sigma_phase_au: CMatrix,
    pub mu_phase_ru: CVector,
    pub sigma_phase_ru: CMatrix,
    pub mu_delta: CVector,
    pub sigma_delta: CMatrix,
    pub a_post: Vec<f64>,
    pub b_post: Vec<f64>,
    /// Rows are `(slab, spike)` probabilities per dictionary column.
    pub hbar: Vec<[f64; 2]>,
    pub iteration: usize,
}

impl VariationalState {
    /// Point estimate of each coefficient precision, `a_post * b_post`.
    pub fn precisions(&self) -> Vec<f64> {
        self.a_post.iter().zip(&self.b_post).map(|(a, b)| a * b).collect()
    }

    /// Checks the structural invariants of every factor.
    pub fn check_invariants(&self) -> Result<()> {
        for (name, m) in [
            ("sigma_phase_au", &self.sigma_phase_au),
            ("sigma_phase_ru", &self.sigma_phase_ru),
            ("sigma_delta", &self.sigma_delta),
        ] {
            let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            for i in 0..m.nrows() {
                let d = m[(i, i)];
                if d.im.abs() > 1e-9 * scale || d.re < -1e-9 * scale {
                    return Err(Error::Conditioning(format!("{name} diagonal {i} is {d}")));
                }
            }
            if (m - m.adjoint()).iter().any(|z| z.norm() > 1e-8 * scale) {
                return Err(Error::Conditioning(format!("{name} is not Hermitian")));
            }
        }
        if !(self.var_alpha_au >= 0.0) {
            return Err(Error::Conditioning("negative gain variance".into()));
        }
        for row in &self.hbar {
            if (row[0] + row[1] - 1.0).abs() > 1e-10 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::Conditioning(format!("indicator row {row:?}")));
            }
        }
        if self.a_post.iter().chain(&self.b_post).any(|x| !(*x > 0.0)) {
            return Err(Error::Conditioning("nonpositive Gamma parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn all_finite(&self) -> bool {
        let c = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        c(&self.mu_alpha_au)
            && self.var_alpha_au.is_finite()
            && self.mu_phase_au.iter().all(c)
            && self.mu_phase_ru.iter().all(c)
            && self.mu_delta.iter().all(c)
            && self.sigma_delta.iter().all(c)
            && self.sigma_phase_au.iter().all(c)
            && self.sigma_phase_ru.iter().all(c)
            && self.a_post.iter().chain(&self.b_post).all(|x| x.is_finite())
            && self.hbar.iter().all(|r| r[0].is_finite() && r[1].is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations_run: usize,
    pub metric_trace: Vec<f64>,
    pub converged: bool,
}

/// One line of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub metric: f64,
    pub p_u_hat: Vec3,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} metric={:.3e} p_u=[{:.4}, {:.4}, {:.4}]",
            self.iteration, self.metric, self.p_u_hat.x, self.p_u_hat.y, self.p_u_hat.z
        )
    }
}

/// How the RIS-to-user range is obtained from the two delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RangeReadout {
    /// Precision-weighted fit of both delays.
    #[default]
    Weighted,
    /// Root of the path-difference constraint only.
    Constraint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcleOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Re-normalize each phase vector to unit gain at its delay estimate after
    /// every update, moving the scale into the matching gain factor.
    pub gauge_fix: bool,
    pub delay_grid: DelayGrid,
    pub range_readout: RangeReadout,
    /// Rebuild a near-field dictionary at the current range estimate whenever
    /// it drifts from the focus range by more than `REFOCUS_DRIFT`, at most `MAX_REFOCUS` times.
    pub refocus_near_field: bool,
    /// Line search along the direct/reflected trade-off after each sparse update.
    pub ridge_step: bool,
    /// Seed the indicator of the strongest matched-filter column with the slab.
    pub greedy_init: bool,
}

impl Default for JcleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            gauge_fix: true,
            delay_grid: DelayGrid::default(),
            range_readout: RangeReadout::Weighted,
            refocus_near_field: true,
            ridge_step: true,
            greedy_init: true,
        }
    }
}

/// Runs the coordinate-ascent loop to convergence and reads out the estimates.
pub const MAX_REFOCUS: usize = 5;

/// Relative range drift that triggers a near-field refocus.
pub const REFOCUS_DRIFT: f64 = 0.01;

pub fn run_jcle(
    cfg: &ScenarioConfig,
    priors: &Priors,
    snap: &SnapshotSet,
    dict: &AngularDictionary,
    p_u_init: Vec3,
    opts: &JcleOptions,
) -> Result<(VariationalState, EstimationResult, ConvergenceReport)> {
    run_jcle_traced(cfg, priors, snap, dict, p_u_init, opts, &mut |_| {})
}

/// [`run_jcle`] with a callback invoked after every iteration.
pub fn run_jcle_traced(
    cfg: &ScenarioConfig,
    priors: &Priors,
    snap: &SnapshotSet,
    dict: &AngularDictionary,
    p_u_init: Vec3,
    opts: &JcleOptions,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<(VariationalState, EstimationResult, ConvergenceReport)> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::domain("tol must be positive and max_iter at least 1"));
    }
    if !p_u_init.iter().all(|x| x.is_finite()) {
        return Err(Error::domain("initial position is not finite"));
    }
    let mut model = Model::new(cfg, priors, snap, dict)?;
    let mut state = init_state(&model, p_u_init, opts.greedy_init)?;
    let mut metric_trace = Vec::new();
    let mut converged = false;
    let mut refocuses = 0;
    let mut estimate = EstimationResult::failed(p_u_init);
    for it in 1..=opts.max_iter {
        let prev = state.clone();
        updates::sweep(&model, &mut state, opts, it)?;
        state.iteration = it;
        if !state.all_finite() {
            return Err(Error::Divergence {
                iteration: it,
                what: "variational state".into(),
            });
        }
        state.check_invariants()?;
        estimate = read_out(&model, &state, opts)?;
        let metric = convergence_metric(&prev, &state);
        if !metric.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                what: "convergence metric".into(),
            });
        }
        metric_trace.push(metric);
        trace(&TraceRecord {
            iteration: it,
            metric,
            p_u_hat: estimate.p_u_hat,
        });
        if let (Some(focus), false) = (model.dict().focus_range, estimate.failure_flag) {
            let drift = ((estimate.rho_hat - focus) / focus).abs();
            if opts.refocus_near_field && refocuses < MAX_REFOCUS && drift > REFOCUS_DRIFT {
                refocuses += 1;
                let refocused_dict = model.dict().refocus(cfg, estimate.rho_hat)?;
                model = Model::new(cfg, priors, snap, &refocused_dict)?;
                continue;
            }
        }
        if metric < opts.tol {
            converged = true;
            break;
        }
    }
    let report = ConvergenceReport {
        iterations_run: metric_trace.len(),
        metric_trace,
        converged,
    };
    Ok((state, estimate, report))
}
