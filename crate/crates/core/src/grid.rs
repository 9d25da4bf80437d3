//! Angular grid, steering dictionary and the one-sparse reflected channel.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{steering, unit_direction, CMatrix, CVector, FieldMode, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    pub p: usize,
    pub q: usize,
    pub psi_points: Vec<f64>,
    pub phi_points: Vec<f64>,
}

impl AngularGrid {
    pub fn len(&self) -> usize {
        self.p * self.q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 0-based `(p, q)` of vectorized index `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        (k / self.q, k % self.q)
    }

    pub fn index(&self, p: usize, q: usize) -> usize {
        p * self.q + q
    }

    pub fn angles(&self, k: usize) -> (f64, f64) {
        let (p, q) = self.pair(k);
        (self.psi_points[p], self.phi_points[q])
    }
}

fn span(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    let step = 2.0 * FRAC_PI_2 / (count - 1) as f64;
    (0..count).map(|i| -FRAC_PI_2 + i as f64 * step).collect()
}

pub fn build_grid(p: usize, q: usize) -> Result<AngularGrid> {
    if p == 0 || q == 0 {
        return Err(Error::domain("grid sizes must be at least 1"));
    }
    Ok(AngularGrid {
        p,
        q,
        psi_points: span(p),
        phi_points: span(q),
    })
}

/// The pair with `psi` in `[-pi/2, pi/2]` that describes the same direction.
///
/// `(psi, phi)` and `(psi +- pi, -phi)` give the same unit vector.
pub fn grid_angles(psi: f64, phi: f64) -> (f64, f64) {
    let psi = (psi + PI).rem_euclid(2.0 * PI) - PI;
    if psi > FRAC_PI_2 + 1e-12 {
        (psi - PI, -phi)
    } else if psi < -FRAC_PI_2 - 1e-12 {
        (psi + PI, -phi)
    } else {
        (psi, phi)
    }
}

/// Grid pair closest to `(psi, phi)` in the max-norm, ties to the lower index.
pub fn nearest_index(grid: &AngularGrid, psi: f64, phi: f64) -> Result<usize> {
    let tol = 1e-12;
    let inside = |x: f64| x.is_finite() && (-FRAC_PI_2 - tol..=FRAC_PI_2 + tol).contains(&x);
    if !inside(psi) || !inside(phi) {
        return Err(Error::domain(format!(
            "angles ({psi}, {phi}) outside the grid span"
        )));
    }
    let mut best = (0, f64::INFINITY);
    for k in 0..grid.len() {
        let (gp, gq) = grid.angles(k);
        let dist = (psi - gp).abs().max((phi - gq).abs());
        if dist < best.1 {
            best = (k, dist);
        }
    }
    Ok(best.0)
}

/// Steering dictionary over (a subset of) the angular grid.
///
/// Column `j` is the steering vector at grid pair `grid_index[j]`. A full
/// dictionary has `grid_index[j] == j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDictionary {
    pub a: CMatrix,
    pub grid: AngularGrid,
    pub field_mode: FieldMode,
    /// Range used for the near-field columns.
    pub focus_range: Option<f64>,
    pub grid_index: Vec<usize>,
}

/// Full `MN x PQ` dictionary. Near-field columns are evaluated at `focus_range`.
pub fn build_dictionary(
    cfg: &ScenarioConfig,
    grid: &AngularGrid,
    focus_range: Option<f64>,
) -> Result<AngularDictionary> {
    build_columns(cfg, grid, focus_range, (0..grid.len()).collect())
}

fn build_columns(
    cfg: &ScenarioConfig,
    grid: &AngularGrid,
    focus_range: Option<f64>,
    grid_index: Vec<usize>,
) -> Result<AngularDictionary> {
    let rho = match cfg.field_mode {
        FieldMode::FarField => 0.0,
        FieldMode::NearField => match focus_range {
            Some(r) if r > 0.0 && r.is_finite() => r,
            _ => {
                return Err(Error::domain(
                    "near-field dictionary needs a positive focus range",
                ))
            }
        },
    };
    let mut a = CMatrix::zeros(cfg.elements(), grid_index.len());
    for (j, &k) in grid_index.iter().enumerate() {
        let (psi, phi) = grid.angles(k);
        a.set_column(j, &steering(cfg, psi, phi, rho));
    }
    Ok(AngularDictionary {
        a,
        grid: grid.clone(),
        field_mode: cfg.field_mode,
        focus_range: match cfg.field_mode {
            FieldMode::FarField => None,
            FieldMode::NearField => Some(rho),
        },
        grid_index,
    })
}

impl AngularDictionary {
    pub fn columns(&self) -> usize {
        self.grid_index.len()
    }

    pub fn angles(&self, j: usize) -> (f64, f64) {
        self.grid.angles(self.grid_index[j])
    }

    pub fn local_index(&self, grid_k: usize) -> Option<usize> {
        self.grid_index.iter().position(|&k| k == grid_k)
    }

    /// Scatter a coefficient vector over this dictionary's columns onto the full grid.
    pub fn expand(&self, coeffs: &CVector) -> CVector {
        let mut full = CVector::zeros(self.grid.len());
        for (j, &k) in self.grid_index.iter().enumerate() {
            full[k] = coeffs[j];
        }
        full
    }

    /// Grid pairs whose direction lies on the AP side of the RIS plane, one per direction.
    ///
    /// The array lies in the x-z plane, so directions mirrored through it
    /// produce identical columns and cannot be told apart from the data.
    pub fn front_facing(&self, cfg: &ScenarioConfig) -> Result<AngularDictionary> {
        let mut keep: Vec<usize> = Vec::new();
        let mut seen: Vec<[f64; 3]> = Vec::new();
        for &k in &self.grid_index {
            let (psi, phi) = self.grid.angles(k);
            if !faces_ap(cfg, psi, phi) {
                continue;
            }
            let u = unit_direction(psi, phi);
            let dup = seen.iter().any(|s| {
                (s[0] - u.x).abs() < 1e-9 && (s[1] - u.y).abs() < 1e-9 && (s[2] - u.z).abs() < 1e-9
            });
            if !dup {
                seen.push([u.x, u.y, u.z]);
                keep.push(k);
            }
        }
        if keep.is_empty() {
            return Err(Error::domain("no grid direction faces the access point"));
        }
        let cfg = ScenarioConfig { field_mode: self.field_mode, ..cfg.clone() };
        build_columns(&cfg, &self.grid, self.focus_range, keep)
    }

    /// Same columns rebuilt at a new near-field focus range.
    pub fn refocus(&self, cfg: &ScenarioConfig, range: f64) -> Result<AngularDictionary> {
        build_columns(cfg, &self.grid, Some(range), self.grid_index.clone())
    }
}

/// Whether direction `(psi, phi)` from the RIS points to the access-point side of its plane.
pub fn faces_ap(cfg: &ScenarioConfig, psi: f64, phi: f64) -> bool {
    let side = if cfg.p_a.y - cfg.p_r.y < 0.0 { -1.0 } else { 1.0 };
    side * unit_direction(psi, phi).y >= -1e-12
}

/// One-sparse reflected channel over the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChannel {
    pub delta_ru: CVector,
    pub support_index: usize,
}

impl SparseChannel {
    pub fn new(grid: &AngularGrid, support_index: usize, gain: Complex64) -> Result<Self> {
        if support_index >= grid.len() {
            return Err(Error::domain("support index outside the grid"));
        }
        let mut delta_ru = CVector::zeros(grid.len());
        delta_ru[support_index] = gain;
        Ok(Self {
            delta_ru,
            support_index,
        })
    }
}
