//! Fisher information of the measurement model and the position Cramér–Rao bound.
//!
//! The direct-path and reflected delays, the angles and the near-field range
//! are all functions of the user position, so the bound is taken over the
//! position and the two complex gains. The channel-parameter information is
//! also available for cross-checking through the parameter transform.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{
    element_offsets, phase_shift_vector, ris_response_rows, steering, unit_direction, CMatrix,
    ChannelTruth, FieldMode, RisProfile, ScenarioConfig, Vec3,
};

/// Column labels of [`signal_jacobian`].
pub const JACOBIAN_LABELS: [&str; 12] = [
    "x", "y", "z", "zeta_au", "zeta_ru", "psi", "phi", "rho", "re_alpha_au", "im_alpha_au",
    "re_alpha_ru", "im_alpha_ru",
];

const POSITION: [usize; 3] = [0, 1, 2];
const GAINS: [usize; 4] = [8, 9, 10, 11];

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub j: DMatrix<f64>,
    pub labels: Vec<&'static str>,
}

impl FisherMatrix {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }
}

/// Derivatives of the array phase, in radians, with respect to the direction
/// and range parameters, for every element.
struct PhaseDerivatives {
    psi: Vec<f64>,
    phi: Vec<f64>,
    rho: Vec<f64>,
    position: Vec<Vec3>,
}

fn phase_derivatives(cfg: &ScenarioConfig, psi: f64, phi: f64, rho: f64) -> PhaseDerivatives {
    let k = cfg.wavenumber();
    let u = unit_direction(psi, phi);
    let (sp, cp) = phi.sin_cos();
    let (ss, cs) = psi.sin_cos();
    let du_dpsi = Vec3::new(-sp * ss, sp * cs, 0.0);
    let du_dphi = Vec3::new(cp * cs, cp * ss, -sp);
    let near = cfg.field_mode == FieldMode::NearField;
    let proj = (nalgebra::Matrix3::identity() - u * u.transpose()) / rho;
    let offsets = element_offsets(cfg);
    let mut out = PhaseDerivatives {
        psi: Vec::with_capacity(offsets.len()),
        phi: Vec::with_capacity(offsets.len()),
        rho: Vec::with_capacity(offsets.len()),
        position: Vec::with_capacity(offsets.len()),
    };
    for o in &offsets {
        let o2 = o.component_mul(o);
        let mut d_psi = du_dpsi.dot(o);
        let mut d_phi = du_dphi.dot(o);
        let mut d_rho = 0.0;
        let mut d_pos = proj * o;
        if near {
            let fresnel: f64 = (0..3).map(|i| (1.0 - u[i] * u[i]) * o2[i]).sum();
            let weighted = u.component_mul(&o2);
            d_psi += weighted.dot(&du_dpsi) / rho;
            d_phi += weighted.dot(&du_dphi) / rho;
            d_rho = fresnel / (2.0 * rho * rho);
            d_pos += u * d_rho + proj * weighted / rho;
        }
        out.psi.push(k * d_psi);
        out.phi.push(k * d_phi);
        out.rho.push(k * d_rho);
        out.position.push(k * d_pos);
    }
    out
}

struct JacobianContext {
    phase_au: Vec<Complex64>,
    phase_ru: Vec<Complex64>,
    ramp: Vec<Complex64>,
    upsilon: CMatrix,
    a: Vec<Complex64>,
    deriv: PhaseDerivatives,
    grad_zeta_au: Vec3,
    grad_zeta_ru: Vec3,
}

fn context(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile) -> JacobianContext {
    let p_u = truth.position(cfg);
    let d_au = p_u - cfg.p_a;
    let d_ru = p_u - cfg.p_r;
    JacobianContext {
        phase_au: phase_shift_vector(truth.zeta_au, cfg.l, cfg.delta_f).iter().copied().collect(),
        phase_ru: phase_shift_vector(truth.zeta_ru, cfg.l, cfg.delta_f).iter().copied().collect(),
        ramp: (0..cfg.l)
            .map(|l| Complex64::new(0.0, -2.0 * std::f64::consts::PI * l as f64 * cfg.delta_f))
            .collect(),
        upsilon: ris_response_rows(cfg, profile, truth.theta, truth.vartheta),
        a: steering(cfg, truth.psi, truth.phi, truth.rho).iter().copied().collect(),
        deriv: phase_derivatives(cfg, truth.psi, truth.phi, truth.rho),
        grad_zeta_au: if d_au.norm() > 0.0 { d_au / (cfg.c * d_au.norm()) } else { Vec3::zeros() },
        grad_zeta_ru: d_ru / (cfg.c * d_ru.norm()),
    }
}

fn jacobian_from(cfg: &ScenarioConfig, truth: &ChannelTruth, ctx: &JacobianContext, t: usize) -> CMatrix {
    let sp = cfg.p_w.sqrt();
    let j = Complex64::new(0.0, 1.0);
    let row = ctx.upsilon.row(t);
    let project = |w: &dyn Fn(usize) -> Complex64| -> Complex64 {
        row.iter().enumerate().map(|(k, y)| y * ctx.a[k] * w(k)).sum()
    };
    let s = project(&|_| Complex64::new(1.0, 0.0));
    let s_psi = project(&|k| j * ctx.deriv.psi[k]);
    let s_phi = project(&|k| j * ctx.deriv.phi[k]);
    let s_rho = project(&|k| j * ctx.deriv.rho[k]);
    let s_pos: Vec<Complex64> = (0..3).map(|i| project(&|k| j * ctx.deriv.position[k][i])).collect();
    let mut jac = CMatrix::zeros(cfg.l, JACOBIAN_LABELS.len());
    for l in 0..cfg.l {
        let fa = ctx.phase_au[l] * sp;
        let fr = ctx.phase_ru[l] * sp;
        let d_zeta_au = truth.alpha_au * ctx.ramp[l] * fa;
        let d_zeta_ru = truth.alpha_ru * ctx.ramp[l] * fr * s;
        for i in 0..3 {
            jac[(l, i)] = d_zeta_au * ctx.grad_zeta_au[i]
                + d_zeta_ru * ctx.grad_zeta_ru[i]
                + truth.alpha_ru * fr * s_pos[i];
        }
        jac[(l, 3)] = d_zeta_au;
        jac[(l, 4)] = d_zeta_ru;
        jac[(l, 5)] = truth.alpha_ru * fr * s_psi;
        jac[(l, 6)] = truth.alpha_ru * fr * s_phi;
        jac[(l, 7)] = truth.alpha_ru * fr * s_rho;
        jac[(l, 8)] = fa;
        jac[(l, 9)] = j * fa;
        jac[(l, 10)] = fr * s;
        jac[(l, 11)] = j * fr * s;
    }
    jac
}

/// Derivatives of the noiseless snapshot `t` with respect to every parameter
/// in [`JACOBIAN_LABELS`] (`L x 12`).
pub fn signal_jacobian(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile, t: usize) -> Result<CMatrix> {
    if t >= profile.snapshots() {
        return Err(Error::domain(format!("snapshot {t} out of range")));
    }
    Ok(jacobian_from(cfg, truth, &context(cfg, truth, profile), t))
}

fn information(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile, cols: &[usize]) -> Result<FisherMatrix> {
    if !(cfg.delta > 0.0) {
        return Err(Error::domain("noise variance must be positive"));
    }
    let ctx = context(cfg, truth, profile);
    let n = cols.len();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for t in 0..profile.snapshots() {
        let full = jacobian_from(cfg, truth, &ctx, t);
        let sub = full.select_columns(cols);
        acc += (sub.adjoint() * &sub).map(|z| z.re);
    }
    let j = (&acc + acc.transpose()) * (1.0 / cfg.delta);
    Ok(FisherMatrix {
        j,
        labels: cols.iter().map(|&c| JACOBIAN_LABELS[c]).collect(),
    })
}

/// Information over the user position and the two complex gains.
pub fn fim(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile) -> Result<FisherMatrix> {
    let cols: Vec<usize> = POSITION.iter().chain(GAINS.iter()).copied().collect();
    information(cfg, truth, profile, &cols)
}

/// Information over delays, angles, (near-field) range and the two gains.
pub fn fim_channel(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile) -> Result<FisherMatrix> {
    let mut cols = vec![3, 4, 5, 6];
    if cfg.field_mode == FieldMode::NearField {
        cols.push(7);
    }
    cols.extend(GAINS);
    information(cfg, truth, profile, &cols)
}

/// Jacobian of the channel parameters of [`fim_channel`] with respect to the
/// parameters of [`fim`].
pub fn channel_transform(cfg: &ScenarioConfig, truth: &ChannelTruth) -> DMatrix<f64> {
    let p_u = truth.position(cfg);
    let d_au = p_u - cfg.p_a;
    let rho = truth.rho;
    let (sp, cp) = truth.phi.sin_cos();
    let (ss, cs) = truth.psi.sin_cos();
    let mut rows: Vec<[f64; 3]> = vec![
        (d_au / (cfg.c * d_au.norm())).into(),
        (unit_direction(truth.psi, truth.phi) / cfg.c).into(),
        [-ss / (rho * sp), cs / (rho * sp), 0.0],
        [cp * cs / rho, cp * ss / rho, -sp / rho],
    ];
    if cfg.field_mode == FieldMode::NearField {
        rows.push(unit_direction(truth.psi, truth.phi).into());
    }
    let n_ch = rows.len() + 4;
    let mut t = DMatrix::<f64>::zeros(n_ch, 7);
    for (i, r) in rows.iter().enumerate() {
        for k in 0..3 {
            t[(i, k)] = r[k];
        }
    }
    for g in 0..4 {
        t[(rows.len() + g, 3 + g)] = 1.0;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// `sqrt(trace)` of the position block of the inverse information, meters.
    pub bound_m: f64,
    /// Same bound through the Schur complement of the nuisance block.
    pub schur_bound_m: f64,
    pub condition: f64,
    pub regularized: bool,
}

impl BoundReport {
    pub fn relative_disagreement(&self) -> f64 {
        (self.bound_m - self.schur_bound_m).abs() / self.bound_m
    }
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    nalgebra::Cholesky::new(sym).map(|c| c.inverse())
}

/// Position bound from an information matrix whose first three parameters are `x, y, z`.
pub fn bcrb_position(fim: &FisherMatrix) -> Result<BoundReport> {
    let n = fim.j.nrows();
    if n < 3 || fim.labels.len() != n || fim.labels[..3] != ["x", "y", "z"] {
        return Err(Error::domain("information matrix must start with the x, y, z block"));
    }
    let eig = SymmetricEigen::new((&fim.j + fim.j.transpose()) * 0.5);
    let (imin, lmin) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
    let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) || lmin <= n as f64 * f64::EPSILON * lmax {
        return Err(Error::SingularFim {
            direction: eig.eigenvectors.column(imin).iter().copied().collect(),
        });
    }
    let condition = lmax / lmin;
    let regularized = condition > 1e14;
    let mut j = fim.j.clone();
    if regularized {
        for i in 0..n {
            j[(i, i)] += 1e-12 * lmax;
        }
    }
    let inv = spd_inverse(&j).ok_or_else(|| Error::Conditioning("information matrix is not positive definite".into()))?;
    let bound = (0..3).map(|i| inv[(i, i)]).sum::<f64>().sqrt();
    let schur = if n == 3 {
        bound
    } else {
        let j11 = j.view((0, 0), (3, 3)).into_owned();
        let j12 = j.view((0, 3), (3, n - 3)).into_owned();
        let j22 = j.view((3, 3), (n - 3, n - 3)).into_owned();
        let j22_inv = spd_inverse(&j22).ok_or_else(|| Error::Conditioning("nuisance block is singular".into()))?;
        let eff = j11 - &j12 * j22_inv * j12.transpose();
        let eff_inv = spd_inverse(&eff).ok_or_else(|| Error::Conditioning("effective position information is singular".into()))?;
        eff_inv.trace().sqrt()
    };
    Ok(BoundReport {
        bound_m: bound,
        schur_bound_m: schur,
        condition,
        regularized,
    })
}

/// Position bound for the given ground truth and RIS profile.
pub fn position_bound(cfg: &ScenarioConfig, truth: &ChannelTruth, profile: &RisProfile) -> Result<BoundReport> {
    bcrb_position(&fim(cfg, truth, profile)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_position_block() {
        let sigma = 0.3;
        let mut j = DMatrix::<f64>::identity(5, 5);
        for i in 0..3 {
            j[(i, i)] = 1.0 / (sigma * sigma);
        }
        let f = FisherMatrix {
            j,
            labels: vec!["x", "y", "z", "a", "b"],
        };
        let r = bcrb_position(&f).unwrap();
        assert!((r.bound_m - 3f64.sqrt() * sigma).abs() < 1e-12);
        assert!(r.relative_disagreement() < 1e-12);
    }

    #[test]
    fn singular_matrix_reports_null_direction() {
        let mut j = DMatrix::<f64>::identity(4, 4);
        j[(2, 2)] = 0.0;
        let f = FisherMatrix {
            j,
            labels: vec!["x", "y", "z", "a"],
        };
        match bcrb_position(&f) {
            Err(Error::SingularFim { direction }) => assert!((direction[2].abs() - 1.0).abs() < 1e-12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }
}
