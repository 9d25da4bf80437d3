//! Gaussian posterior for `x` with prior precision `diag(omega)` and
//! likelihood precision `F^H F`, computed in the `T`-dimensional row space of `F`.

use faer::{c64, Mat};
use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{CMatrix, CVector};

fn check_omega(omega: &[f64]) -> Result<()> {
    if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Conditioning(
            "prior precisions must be positive and finite".into(),
        ));
    }
    Ok(())
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

struct Factored {
    /// `F diag(omega)^-1`
    x: CMatrix,
    chol: Cholesky<Complex64, nalgebra::Dyn>,
}

fn factor(f: &CMatrix, omega: &[f64]) -> Result<Factored> {
    check_omega(omega)?;
    if f.ncols() != omega.len() {
        return Err(Error::domain("precision vector does not match the column count"));
    }
    let mut x = f.clone();
    for (j, w) in omega.iter().enumerate() {
        x.column_mut(j).scale_mut(1.0 / w);
    }
    let mut m = &x * f.adjoint();
    for i in 0..m.nrows() {
        m[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let chol = Cholesky::new(hermitian_part(&m))
        .ok_or_else(|| Error::Conditioning("row-space system is not positive definite".into()))?;
    Ok(Factored { x, chol })
}

/// `(F^H F + diag(omega))^-1` through the matrix inversion lemma.
pub fn woodbury_covariance(f: &CMatrix, omega: &[f64]) -> Result<CMatrix> {
    let Factored { x, chol } = factor(f, omega)?;
    let y = chol.solve(&x);
    let mut cov = -(x.adjoint() * y);
    for (j, w) in omega.iter().enumerate() {
        cov[(j, j)] += Complex64::new(1.0 / w, 0.0);
    }
    Ok(hermitian_part(&cov))
}

/// `(F^H F + diag(omega))^-1` by a direct factorization of the `K x K` matrix.
pub fn direct_covariance(f: &CMatrix, omega: &[f64]) -> Result<CMatrix> {
    check_omega(omega)?;
    let mut s = f.adjoint() * f;
    for (j, w) in omega.iter().enumerate() {
        s[(j, j)] += Complex64::new(*w, 0.0);
    }
    let chol = Cholesky::new(hermitian_part(&s))
        .ok_or_else(|| Error::Conditioning("precision matrix is not positive definite".into()))?;
    Ok(hermitian_part(&chol.inverse()))
}

/// Singular-value form of the row-space system, `F diag(omega)^-1/2 = U S V^H`.
///
/// Both Woodbury terms are expressed through `S`, so nothing cancels when
/// `F^H F` dwarfs the prior precision.
struct RowSpace {
    inv_sqrt_omega: Vec<f64>,
    u: CMatrix,
    s: Vec<f64>,
    v_t: CMatrix,
}

fn row_space(f: &CMatrix, omega: &[f64]) -> Result<RowSpace> {
    check_omega(omega)?;
    if f.ncols() != omega.len() {
        return Err(Error::domain("precision vector does not match the column count"));
    }
    let inv_sqrt_omega: Vec<f64> = omega.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut b = f.clone();
    for (j, r) in inv_sqrt_omega.iter().enumerate() {
        b.column_mut(j).scale_mut(*r);
    }
    if !b.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Conditioning("row-space system is not finite".into()));
    }
    let svd = Mat::<c64>::from_fn(b.nrows(), b.ncols(), |i, j| c64::new(b[(i, j)].re, b[(i, j)].im))
        .thin_svd()
        .map_err(|e| Error::Conditioning(format!("row-space decomposition failed: {e:?}")))?;
    let (u, sv, v) = (svd.U(), svd.S(), svd.V());
    let rank = sv.dim();
    Ok(RowSpace {
        inv_sqrt_omega,
        u: CMatrix::from_fn(u.nrows(), rank, |i, j| Complex64::new(u[(i, j)].re, u[(i, j)].im)),
        s: (0..rank).map(|i| sv[i].re).collect(),
        v_t: CMatrix::from_fn(rank, v.nrows(), |i, j| Complex64::new(v[(j, i)].re, -v[(j, i)].im)),
    })
}

impl RowSpace {
    /// `(F^H F + diag(omega))^-1 F^H v`
    fn gain(&self, v: &CVector) -> CVector {
        let mut c = self.u.adjoint() * v;
        for (ci, s) in c.iter_mut().zip(&self.s) {
            *ci *= s / (1.0 + s * s);
        }
        let mut x = self.v_t.adjoint() * c;
        for (xi, r) in x.iter_mut().zip(&self.inv_sqrt_omega) {
            *xi *= r;
        }
        x
    }

    fn covariance(&self) -> CMatrix {
        let k = self.inv_sqrt_omega.len();
        let mut shrunk = self.v_t.clone();
        for (mut row, s) in shrunk.row_iter_mut().zip(&self.s) {
            row.scale_mut(s * s / (1.0 + s * s));
        }
        let mut cov = CMatrix::identity(k, k) - self.v_t.adjoint() * shrunk;
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] *= self.inv_sqrt_omega[i] * self.inv_sqrt_omega[j];
            }
        }
        hermitian_part(&cov)
    }
}

/// `(F^H F + diag(omega))^-1` from the singular-value form of the row space.
pub fn posterior_covariance(f: &CMatrix, omega: &[f64]) -> Result<CMatrix> {
    Ok(row_space(f, omega)?.covariance())
}

/// `(F^H F + diag(omega))^-1 F^H v` without forming the covariance.
pub fn posterior_gain(f: &CMatrix, omega: &[f64], v: &CVector) -> Result<CVector> {
    Ok(row_space(f, omega)?.gain(v))
}

/// Posterior mean and covariance for prior `CN(m, diag(omega)^-1)` and
/// observation `y = F x + noise` with unit noise variance.
pub fn gaussian_posterior(
    f: &CMatrix,
    omega: &[f64],
    y: &CVector,
    m: &CVector,
) -> Result<(CVector, CMatrix)> {
    let rs = row_space(f, omega)?;
    let mean = m + rs.gain(&(y - f * m));
    Ok((mean, rs.covariance()))
}
