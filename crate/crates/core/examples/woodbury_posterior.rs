//! Gaussian posterior of a wide sparse-dictionary problem through the
//! inversion lemma and through its singular-value form.
//!
//! `F = U diag(s) V^H` with unit prior precision has the exact covariance
//! `I - V diag(s^2 / (1 + s^2)) V^H`, so both can be checked as the spread of
//! singular values grows.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risloc::vbi::woodbury::{direct_covariance, posterior_covariance, woodbury_covariance};

fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    a.qr().q()
}

fn main() -> risloc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t, k) = (8, 120);
    let omega = vec![1.0; k];
    println!("largest s   inversion lemma  singular-value form  direct K x K");
    for top in [1e1_f64, 1e4, 1e8] {
        let s = DVector::from_fn(t, |i, _| top.powf(1.0 - i as f64 / (t - 1) as f64));
        let u = orthonormal(&mut rng, t, t);
        let v = orthonormal(&mut rng, k, t);
        let f = &u * DMatrix::from_diagonal(&s.map(|x| Complex64::new(x, 0.0))) * v.adjoint();
        let shrink = s.map(|x| Complex64::new(x * x / (1.0 + x * x), 0.0));
        let exact = DMatrix::identity(k, k) - &v * DMatrix::from_diagonal(&shrink) * v.adjoint();
        let err = |c: DMatrix<Complex64>| (c - &exact).norm() / exact.norm();
        println!(
            "{top:<11.0e} {:<16.2e} {:<20.2e} {:.2e}",
            err(woodbury_covariance(&f, &omega)?),
            err(posterior_covariance(&f, &omega)?),
            err(direct_covariance(&f, &omega)?)
        );
    }
    Ok(())
}
