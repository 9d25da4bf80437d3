use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angles_and_range, ap_angles, path_delays, phase_shift_vector, ris_response_rows, steering,
    vec3, CMatrix, FieldMode, ScenarioConfig, SnapshotSet, Vec3,
};
use crate::grid::{grid_angles, nearest_index, AngularDictionary};
use crate::locate::EstimationResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub particles: usize,
    /// Swarm generations including the initial one.
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Lower and upper corner of the search box.
    pub search_box: (Vec3, Vec3),
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 200,
            iterations: 100,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            search_box: (vec3(15.0, 40.0, 0.0), vec3(45.0, 70.0, 30.0)),
        }
    }
}

impl PsoConfig {
    /// Cube of half-width `half` around `center`.
    pub fn centered(center: Vec3, half: f64) -> Self {
        let h = vec3(half, half, half);
        Self {
            search_box: (center - h, center + h),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.search_box;
        if self.particles < 2 {
            return Err(Error::domain("PSO needs at least two particles"));
        }
        if self.iterations < 1 {
            return Err(Error::domain("PSO needs at least one iteration"));
        }
        if !(0..3).all(|i| lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
            return Err(Error::domain("PSO search box is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub estimate: EstimationResult,
    /// Global-best log-likelihood after each generation.
    pub gbest_trace: Vec<f64>,
    pub evaluations: usize,
}

/// Log-likelihood of a candidate position with the gains held fixed.
struct Surface<'a> {
    cfg: &'a ScenarioConfig,
    snap: &'a SnapshotSet,
    upsilon: CMatrix,
    alpha_au: Complex64,
    alpha_ru: Complex64,
}

impl Surface<'_> {
    fn value(&self, p_u: Vec3) -> f64 {
        let Ok((psi, phi, rho)) = angles_and_range(self.cfg.p_r, p_u) else {
            return f64::NEG_INFINITY;
        };
        let cfg = self.cfg;
        let (zeta_au, zeta_ru) = path_delays(cfg.p_a, cfg.p_r, p_u, cfg.c);
        let sp = cfg.p_w.sqrt();
        let los = phase_shift_vector(zeta_au, cfg.l, cfg.delta_f) * (self.alpha_au * sp);
        let ru = phase_shift_vector(zeta_ru, cfg.l, cfg.delta_f);
        let range = match cfg.field_mode {
            FieldMode::FarField => 0.0,
            FieldMode::NearField => rho,
        };
        let reflected = &self.upsilon * steering(cfg, psi, phi, range) * (self.alpha_ru * sp);
        let mut residual = 0.0;
        for t in 0..cfg.t {
            for l in 0..cfg.l {
                residual += (self.snap.r[(l, t)] - los[l] - ru[l] * reflected[t]).norm_sqr();
            }
        }
        -residual / cfg.delta
    }
}

/// Global-best particle swarm over the user position.
///
/// The dictionary only supplies the grid used to report a support index.
/// Gains stay at `gain_means = (alpha_au, alpha_ru)`; delays and angles follow
/// from each candidate. Particles that leave the box are reflected back in.
pub fn pso_search<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    snap: &SnapshotSet,
    dict: &AngularDictionary,
    pso: &PsoConfig,
    gain_means: (Complex64, Complex64),
    rng: &mut R,
) -> Result<PsoOutcome> {
    pso.validate()?;
    snap.check(cfg)?;
    let (theta, vartheta) = ap_angles(cfg)?;
    let surface = Surface {
        cfg,
        snap,
        upsilon: ris_response_rows(cfg, &snap.profile, theta, vartheta),
        alpha_au: gain_means.0,
        alpha_ru: gain_means.1,
    };
    let (lo, hi) = pso.search_box;
    let width = hi - lo;
    let vmax = 0.5 * width;

    let mut x: Vec<Vec3> = (0..pso.particles)
        .map(|_| lo + width.component_mul(&vec3(rng.gen(), rng.gen(), rng.gen())))
        .collect();
    let mut v: Vec<Vec3> = (0..pso.particles)
        .map(|_| {
            let r = vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            0.1 * width.component_mul(&r)
        })
        .collect();
    let mut pbest = x.clone();
    let mut pbest_val: Vec<f64> = x.iter().map(|p| surface.value(*p)).collect();
    let mut evaluations = pso.particles;
    let mut g = best_of(&pbest_val);
    let mut trace = vec![pbest_val[g]];

    for _ in 1..pso.iterations {
        for i in 0..pso.particles {
            let r1 = vec3(rng.gen(), rng.gen(), rng.gen());
            let r2 = vec3(rng.gen(), rng.gen(), rng.gen());
            let mut vi = pso.inertia * v[i]
                + pso.cognitive * r1.component_mul(&(pbest[i] - x[i]))
                + pso.social * r2.component_mul(&(pbest[g] - x[i]));
            for k in 0..3 {
                vi[k] = vi[k].clamp(-vmax[k], vmax[k]);
            }
            let mut xi = x[i] + vi;
            for k in 0..3 {
                if xi[k] < lo[k] {
                    xi[k] = 2.0 * lo[k] - xi[k];
                    vi[k] = -vi[k];
                } else if xi[k] > hi[k] {
                    xi[k] = 2.0 * hi[k] - xi[k];
                    vi[k] = -vi[k];
                }
                xi[k] = xi[k].clamp(lo[k], hi[k]);
            }
            x[i] = xi;
            v[i] = vi;
            let val = surface.value(xi);
            evaluations += 1;
            if val > pbest_val[i] {
                pbest_val[i] = val;
                pbest[i] = xi;
            }
        }
        g = best_of(&pbest_val);
        trace.push(pbest_val[g]);
    }

    let estimate = describe(cfg, dict, pbest[g], gain_means, pbest_val[g].is_finite());
    Ok(PsoOutcome {
        estimate,
        gbest_trace: trace,
        evaluations,
    })
}

pub fn pso_localize<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    snap: &SnapshotSet,
    dict: &AngularDictionary,
    pso: &PsoConfig,
    gain_means: (Complex64, Complex64),
    rng: &mut R,
) -> Result<EstimationResult> {
    Ok(pso_search(cfg, snap, dict, pso, gain_means, rng)?.estimate)
}

fn best_of(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn describe(cfg: &ScenarioConfig, dict: &AngularDictionary, p: Vec3, gains: (Complex64, Complex64), ok: bool) -> EstimationResult {
    let (zeta_au, zeta_ru) = path_delays(cfg.p_a, cfg.p_r, p, cfg.c);
    let Ok((psi, phi, rho)) = angles_and_range(cfg.p_r, p) else {
        return EstimationResult::failed(p);
    };
    let (psi, phi) = grid_angles(psi, phi);
    EstimationResult {
        p_u_hat: p,
        zeta_au_hat: zeta_au,
        zeta_ru_hat: zeta_ru,
        psi_hat: psi,
        phi_hat: phi,
        alpha_au_hat: gains.0,
        alpha_ru_hat: gains.1,
        support_index: nearest_index(&dict.grid, psi, phi).unwrap_or(0),
        rho_hat: rho,
        failure_flag: !ok,
    }
}
