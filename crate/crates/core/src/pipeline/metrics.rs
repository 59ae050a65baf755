//! Distortion and distribution metrics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::latent::LatentVec;

/// Jitter added to rank-deficient covariances before taking square roots.
pub const FRECHET_JITTER: f64 = 1e-8;

/// Mean squared error per coordinate.
pub fn mse(a: &LatentVec, b: &LatentVec) -> Result<f64> {
    crate::latent::same_dim(a, b)?;
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let s: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(s / a.dim() as f64)
}

/// `10·log10(peak² / mse)`; infinite when `mse` is zero.
pub fn psnr(mse: f64, peak: f64) -> f64 {
    10.0 * (peak * peak / mse).log10()
}

fn moments(batch: &[LatentVec]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = batch[0].dim();
    if batch.iter().any(|v| v.dim() != d) {
        return Err(Error::contract("batch vectors differ in length"));
    }
    let n = batch.len() as f64;
    let mut mean = DVector::zeros(d);
    for v in batch {
        mean += DVector::from_column_slice(v.as_slice());
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for v in batch {
        let c = DVector::from_column_slice(v.as_slice()) - &mean;
        cov += &c * c.transpose();
    }
    Ok((mean, cov / (n - 1.0)))
}

fn regularize(cov: &mut DMatrix<f64>) {
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.min() < FRECHET_JITTER {
        for i in 0..cov.nrows() {
            cov[(i, i)] += FRECHET_JITTER;
        }
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut v = eig.eigenvectors.clone();
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    &v * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two batches:
/// `‖μ_a−μ_b‖² + tr(Σ_a + Σ_b − 2(Σ_a Σ_b)^{1/2})`.
pub fn frechet_gauss(batch_a: &[LatentVec], batch_b: &[LatentVec]) -> Result<f64> {
    let d = batch_a.first().map_or(0, LatentVec::dim);
    if d == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    if batch_a.len() < d + 1 || batch_b.len() < d + 1 {
        return Err(Error::Domain(format!(
            "Fréchet distance needs at least {} vectors per batch, got {} and {}",
            d + 1,
            batch_a.len(),
            batch_b.len()
        )));
    }
    let (ma, mut ca) = moments(batch_a)?;
    let (mb, mut cb) = moments(batch_b)?;
    if mb.len() != d {
        return Err(Error::contract("batches have different dimensions"));
    }
    regularize(&mut ca);
    regularize(&mut cb);
    let ra = psd_sqrt(&ca);
    let inner = &ra * &cb * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok((ma - mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross)
}
