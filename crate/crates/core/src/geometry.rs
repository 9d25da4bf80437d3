//! Scenario geometry, channel synthesis and the measurement likelihood.
//!
//! Angles follow one convention throughout the crate: `phi` is the polar
//! angle from +z, `psi` the azimuth from +x, and the unit direction is
//! `u = [sin(phi)cos(psi), sin(phi)sin(psi), cos(phi)]`. The RIS lies in
//! the x-z plane, element `(m, n)` at `p_r + [(m-1)d, 0, (n-1)d]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AngularDictionary;

pub type Vec3 = Vector3<f64>;
pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 2.9979e8;
pub const DEFAULT_CARRIER_HZ: f64 = 28e9;
pub const DEFAULT_SUBCARRIER_SPACING_HZ: f64 = 240e3;

pub fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldMode {
    #[default]
    FarField,
    NearField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub p_a: Vec3,
    pub p_r: Vec3,
    pub p_u_true: Vec3,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub t: usize,
    pub delta_f: f64,
    pub lambda: f64,
    pub d: f64,
    pub p_w: f64,
    pub delta: f64,
    pub c: f64,
    pub field_mode: FieldMode,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let lambda = SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ;
        let p_r = vec3(10.0, 40.0, 10.0);
        Self {
            p_a: vec3(100.0, 100.0, 30.0),
            p_r,
            p_u_true: p_r + 20.0 * unit_direction(PI / 6.0, 5.0 * PI / 18.0),
            m: 20,
            n: 20,
            l: 128,
            t: 80,
            delta_f: DEFAULT_SUBCARRIER_SPACING_HZ,
            lambda,
            d: lambda / 2.0,
            p_w: 1.0,
            delta: 0.01,
            c: SPEED_OF_LIGHT,
            field_mode: FieldMode::FarField,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Reduced-size scenario used for tests and quick sweeps.
    pub fn desk() -> Self {
        Self {
            m: 10,
            n: 10,
            l: 64,
            t: 40,
            ..Self::default()
        }
    }

    pub fn elements(&self) -> usize {
        self.m * self.n
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda
    }

    /// Distance from the AP to the RIS origin.
    pub fn d_ar(&self) -> f64 {
        (self.p_a - self.p_r).norm()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.l == 0 || self.t == 0 {
            return Err(Error::domain("M, N, L and T must be at least 1"));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("d", self.d),
            ("lambda", self.lambda),
            ("delta_f", self.delta_f),
            ("c", self.c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.p_w >= 0.0 && self.p_w.is_finite()) {
            return Err(Error::domain("P_w must be nonnegative"));
        }
        for (name, p) in [("p_a", self.p_a), ("p_r", self.p_r), ("p_u_true", self.p_u_true)] {
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::domain(format!("{name} has non-finite components")));
            }
        }
        if self.p_r == self.p_a {
            return Err(Error::domain("p_r coincides with p_a"));
        }
        if self.p_r == self.p_u_true {
            return Err(Error::domain("p_r coincides with p_u_true"));
        }
        Ok(())
    }
}

/// Per-snapshot RIS phase profiles, row `t` holds `omega_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfile {
    pub omega: CMatrix,
}

impl RisProfile {
    pub fn random<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Self {
        let omega = CMatrix::from_fn(cfg.t, cfg.elements(), |_, _| {
            Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
        });
        Self { omega }
    }

    pub fn identity(cfg: &ScenarioConfig) -> Self {
        Self {
            omega: CMatrix::from_element(cfg.t, cfg.elements(), Complex64::new(1.0, 0.0)),
        }
    }

    pub fn snapshots(&self) -> usize {
        self.omega.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTruth {
    pub alpha_au: Complex64,
    pub alpha_ru: Complex64,
    pub zeta_au: f64,
    pub zeta_ru: f64,
    pub psi: f64,
    pub phi: f64,
    /// RIS-to-user range, needed by the near-field steering vector.
    pub rho: f64,
    pub theta: f64,
    pub vartheta: f64,
}

impl ChannelTruth {
    /// Delays and angles implied by placing the user at `p_u`.
    pub fn from_geometry(
        cfg: &ScenarioConfig,
        p_u: Vec3,
        alpha_au: Complex64,
        alpha_ru: Complex64,
    ) -> Result<Self> {
        let (zeta_au, zeta_ru) = path_delays(cfg.p_a, cfg.p_r, p_u, cfg.c);
        let (psi, phi, rho) = angles_and_range(cfg.p_r, p_u)?;
        let (theta, vartheta) = ap_angles(cfg)?;
        Ok(Self {
            alpha_au,
            alpha_ru,
            zeta_au,
            zeta_ru,
            psi,
            phi,
            rho,
            theta,
            vartheta,
        })
    }

    pub fn position(&self, cfg: &ScenarioConfig) -> Vec3 {
        cfg.p_r + self.rho * unit_direction(self.psi, self.phi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub r: CMatrix,
    pub profile: RisProfile,
}

impl SnapshotSet {
    pub fn check(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.r.nrows() != cfg.l || self.r.ncols() != cfg.t {
            return Err(Error::domain(format!(
                "measurement matrix is {}x{}, expected {}x{}",
                self.r.nrows(),
                self.r.ncols(),
                cfg.l,
                cfg.t
            )));
        }
        if self.profile.omega.nrows() != cfg.t || self.profile.omega.ncols() != cfg.elements() {
            return Err(Error::domain("RIS profile dimensions do not match the scenario"));
        }
        Ok(())
    }

    /// Order-sensitive checksum of the measurement matrix.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for z in self.r.iter() {
            for bits in [z.re.to_bits(), z.im.to_bits()] {
                h ^= bits;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// 1-based element indices.
pub fn element_position(cfg: &ScenarioConfig, m: usize, n: usize) -> Result<Vec3> {
    if m == 0 || m > cfg.m || n == 0 || n > cfg.n {
        return Err(Error::domain(format!(
            "element ({m}, {n}) outside a {}x{} array",
            cfg.m, cfg.n
        )));
    }
    Ok(cfg.p_r + vec3((m - 1) as f64 * cfg.d, 0.0, (n - 1) as f64 * cfg.d))
}

/// Element offsets from the RIS origin in dictionary order (m outer, n inner).
pub fn element_offsets(cfg: &ScenarioConfig) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(cfg.elements());
    for m in 0..cfg.m {
        for n in 0..cfg.n {
            out.push(vec3(m as f64 * cfg.d, 0.0, n as f64 * cfg.d));
        }
    }
    out
}

pub fn path_delays(p_a: Vec3, p_r: Vec3, p_u: Vec3, c: f64) -> (f64, f64) {
    let zeta_au = (p_a - p_u).norm() / c;
    let zeta_ru = ((p_a - p_r).norm() + (p_r - p_u).norm()) / c;
    (zeta_au, zeta_ru)
}

pub fn unit_direction(psi: f64, phi: f64) -> Vec3 {
    let (sp, cp) = phi.sin_cos();
    let (ss, cs) = psi.sin_cos();
    vec3(sp * cs, sp * ss, cp)
}

/// Returns `(psi, phi, rho)` of `p_u` seen from `p_r`.
pub fn angles_and_range(p_r: Vec3, p_u: Vec3) -> Result<(f64, f64, f64)> {
    let v = p_u - p_r;
    let rho = v.norm();
    if !(rho > 0.0) {
        return Err(Error::domain("zero range between RIS and user"));
    }
    let psi = v.y.atan2(v.x);
    let phi = (v.z / rho).clamp(-1.0, 1.0).acos();
    Ok((psi, phi, rho))
}

/// AP direction seen from the RIS, as `(theta, vartheta)` = (azimuth, polar).
pub fn ap_angles(cfg: &ScenarioConfig) -> Result<(f64, f64)> {
    let (theta, vartheta, _) = angles_and_range(cfg.p_r, cfg.p_a)?;
    Ok((theta, vartheta))
}

pub fn phase_shift_vector(zeta: f64, l: usize, delta_f: f64) -> CVector {
    CVector::from_fn(l, |i, _| {
        Complex64::from_polar(1.0, -2.0 * PI * i as f64 * zeta * delta_f)
    })
}

pub fn steering_far(cfg: &ScenarioConfig, psi: f64, phi: f64) -> CVector {
    let u = unit_direction(psi, phi);
    let k = cfg.wavenumber();
    let offsets = element_offsets(cfg);
    CVector::from_iterator(
        offsets.len(),
        offsets.iter().map(|o| Complex64::from_polar(1.0, k * u.dot(o))),
    )
}

/// Fresnel-corrected steering vector toward the user at `p_u`.
pub fn steering_near(cfg: &ScenarioConfig, p_u: Vec3) -> Result<CVector> {
    let (psi, phi, rho) = angles_and_range(cfg.p_r, p_u)?;
    Ok(steering_near_at(cfg, psi, phi, rho))
}

/// Fresnel-corrected steering vector for direction `(psi, phi)` at range `rho`.
pub fn steering_near_at(cfg: &ScenarioConfig, psi: f64, phi: f64, rho: f64) -> CVector {
    let u = unit_direction(psi, phi);
    let k = cfg.wavenumber();
    let curvature = if rho > 0.0 { 0.5 / rho } else { 0.0 };
    let offsets = element_offsets(cfg);
    CVector::from_iterator(
        offsets.len(),
        offsets.iter().map(|o| {
            let fresnel: f64 = (0..3).map(|i| (1.0 - u[i] * u[i]) * o[i] * o[i]).sum();
            Complex64::from_polar(1.0, k * (u.dot(o) - curvature * fresnel))
        }),
    )
}

/// Steering vector under the scenario's field mode.
pub fn steering(cfg: &ScenarioConfig, psi: f64, phi: f64, rho: f64) -> CVector {
    match cfg.field_mode {
        FieldMode::FarField => steering_far(cfg, psi, phi),
        FieldMode::NearField => steering_near_at(cfg, psi, phi, rho),
    }
}

/// The `T x MN` matrix whose row `t` is `a(theta, vartheta)^T` times `diag(omega_t)`.
pub fn ris_response_rows(
    cfg: &ScenarioConfig,
    profile: &RisProfile,
    theta: f64,
    vartheta: f64,
) -> CMatrix {
    let a = steering_far(cfg, theta, vartheta);
    let mut rows = profile.omega.clone();
    for mut row in rows.row_iter_mut() {
        for (x, ak) in row.iter_mut().zip(a.iter()) {
            *x *= ak;
        }
    }
    rows
}

/// Everything needed to evaluate the noiseless signal.
///
/// `reflected[t]` is the reflected-path coefficient of snapshot `t`, that is
/// `alpha_ru * Upsilon_t a(psi, phi)` or equivalently `Upsilon_t A Delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalParams {
    pub alpha_au: Complex64,
    pub phase_au: CVector,
    pub phase_ru: CVector,
    pub reflected: CVector,
}

impl SignalParams {
    pub fn from_truth(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile) -> Self {
        let upsilon = ris_response_rows(cfg, profile, truth.theta, truth.vartheta);
        let a = steering(cfg, truth.psi, truth.phi, truth.rho);
        Self {
            alpha_au: truth.alpha_au,
            phase_au: phase_shift_vector(truth.zeta_au, cfg.l, cfg.delta_f),
            phase_ru: phase_shift_vector(truth.zeta_ru, cfg.l, cfg.delta_f),
            reflected: (upsilon * a) * truth.alpha_ru,
        }
    }

    pub fn from_position(
        cfg: &ScenarioConfig,
        profile: &RisProfile,
        p_u: Vec3,
        alpha_au: Complex64,
        alpha_ru: Complex64,
    ) -> Result<Self> {
        let truth = ChannelTruth::from_geometry(cfg, p_u, alpha_au, alpha_ru)?;
        Ok(Self::from_truth(cfg, &truth, profile))
    }

    pub fn from_sparse(
        cfg: &ScenarioConfig,
        profile: &RisProfile,
        dict: &AngularDictionary,
        alpha_au: Complex64,
        phase_au: CVector,
        phase_ru: CVector,
        delta: &CVector,
    ) -> Result<Self> {
        if delta.len() != dict.a.ncols() {
            return Err(Error::domain("sparse vector length does not match the dictionary"));
        }
        let (theta, vartheta) = ap_angles(cfg)?;
        let upsilon = ris_response_rows(cfg, profile, theta, vartheta);
        Ok(Self {
            alpha_au,
            phase_au,
            phase_ru,
            reflected: upsilon * (&dict.a * delta),
        })
    }

    fn check(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.phase_au.len() != cfg.l || self.phase_ru.len() != cfg.l {
            return Err(Error::domain("phase-shift vectors must have length L"));
        }
        if self.reflected.len() != cfg.t {
            return Err(Error::domain("reflected coefficients must have length T"));
        }
        Ok(())
    }
}

/// The `L x T` noiseless signal.
pub fn noiseless_signal(cfg: &ScenarioConfig, params: &SignalParams) -> Result<CMatrix> {
    params.check(cfg)?;
    let sp = cfg.p_w.sqrt();
    let los = &params.phase_au * (params.alpha_au * sp);
    Ok(CMatrix::from_fn(cfg.l, cfg.t, |l, t| {
        los[l] + params.phase_ru[l] * params.reflected[t] * sp
    }))
}

/// Mean entrywise power of the noiseless signal divided by the noise variance, in dB.
pub fn snr_db(cfg: &ScenarioConfig, params: &SignalParams) -> Result<f64> {
    let power = mean_power(&noiseless_signal(cfg, params)?);
    Ok(10.0 * (power / cfg.delta).log10())
}

/// Noise variance that yields `snr_db` for the given noiseless signal.
pub fn noise_variance_for_snr(
    cfg: &ScenarioConfig,
    params: &SignalParams,
    snr_db: f64,
) -> Result<f64> {
    let power = mean_power(&noiseless_signal(cfg, params)?);
    Ok(power / 10f64.powf(snr_db / 10.0))
}

fn mean_power(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64
}

pub fn synthesize<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    truth: &ChannelTruth,
    profile: &RisProfile,
    rng: &mut R,
) -> Result<SnapshotSet> {
    let params = SignalParams::from_truth(cfg, truth, profile);
    let mut r = noiseless_signal(cfg, &params)?;
    let noise = Normal::new(0.0, (cfg.delta / 2.0).sqrt())
        .map_err(|e| Error::domain(format!("noise variance: {e}")))?;
    for z in r.iter_mut() {
        *z += Complex64::new(noise.sample(rng), noise.sample(rng));
    }
    Ok(SnapshotSet {
        r,
        profile: profile.clone(),
    })
}

/// `-(1/delta) * sum_t ||r_t - Xi_t||^2`.
pub fn log_likelihood(cfg: &ScenarioConfig, snap: &SnapshotSet, params: &SignalParams) -> Result<f64> {
    snap.check(cfg)?;
    let model = noiseless_signal(cfg, params)?;
    let residual: f64 = snap
        .r
        .iter()
        .zip(model.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(-residual / cfg.delta)
}
