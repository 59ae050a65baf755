//! Warm start, residual-noise forward process and clean-latent recovery.

use rand::Rng;

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::latent::{same_dim, LatentVec};
use crate::rng::normal_vec;

/// Noised copy of the decoded latent at the warm-start step.
///
/// Returns the initial state together with the Gaussian draw used.
pub fn warm_start<R: Rng + ?Sized>(
    z_c: &LatentVec,
    warm_start: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(LatentVec, LatentVec)> {
    if warm_start == 0 {
        return Err(Error::config("warm-start step must be >= 1"));
    }
    sched.check_step(warm_start)?;
    let eps = normal_vec(rng, z_c.dim());
    let z = warm_start_with(z_c, &eps, sched.alpha_bar(warm_start))?;
    Ok((z, eps))
}

/// `√ᾱ·z_c + √(1-ᾱ)·ε` for a given draw.
pub fn warm_start_with(z_c: &LatentVec, eps: &LatentVec, alpha_bar: f64) -> Result<LatentVec> {
    z_c.combine(alpha_bar.sqrt(), eps, (1.0 - alpha_bar).sqrt())
}

/// `z_t = √ᾱ_t·z0 + √(1-ᾱ_t)·(γ·(z_c - z0) + ε)`.
pub fn residual_forward(
    z0: &LatentVec,
    z_c: &LatentVec,
    t: usize,
    gamma: f64,
    eps: &LatentVec,
    sched: &NoiseSchedule,
) -> Result<LatentVec> {
    same_dim(z0, z_c)?;
    same_dim(z0, eps)?;
    sched.check_step(t)?;
    let sa = sched.alpha_bar(t).sqrt();
    let sn = (1.0 - sched.alpha_bar(t)).sqrt();
    let values = z0
        .as_slice()
        .iter()
        .zip(z_c.as_slice())
        .zip(eps.as_slice())
        .map(|((x0, xc), e)| sa * x0 + sn * (gamma * (xc - x0) + e))
        .collect();
    Ok(LatentVec::new(values))
}

/// The factor `√ᾱ_t - √(1-ᾱ_t)·γ` multiplying z0 in the forward process.
///
/// It vanishes exactly at the warm-start step when γ is the matching
/// residual weight.
pub fn recovery_denominator(alpha_bar: f64, gamma: f64) -> f64 {
    alpha_bar.sqrt() - (1.0 - alpha_bar).sqrt() * gamma
}

/// Inverts the forward process for z0 given a noise estimate.
///
/// When the recovery denominator is within `guard` of zero the state holds
/// no information about z0 beyond `z_c`, which is returned instead.
pub fn predict_z0(
    z_t: &LatentVec,
    z_c: &LatentVec,
    eps_hat: &LatentVec,
    t: usize,
    gamma: f64,
    sched: &NoiseSchedule,
    guard: f64,
) -> Result<LatentVec> {
    same_dim(z_t, z_c)?;
    same_dim(z_t, eps_hat)?;
    sched.check_step(t)?;
    Ok(predict_z0_with(z_t, z_c, eps_hat, sched.alpha_bar(t), gamma, guard).unwrap_or_else(|| z_c.clone()))
}

/// Raw inversion; `None` when the step is singular.
pub(crate) fn predict_z0_with(
    z_t: &LatentVec,
    z_c: &LatentVec,
    eps_hat: &LatentVec,
    alpha_bar: f64,
    gamma: f64,
    guard: f64,
) -> Option<LatentVec> {
    let denom = recovery_denominator(alpha_bar, gamma);
    if denom.abs() <= guard {
        return None;
    }
    let sn = (1.0 - alpha_bar).sqrt();
    let values = z_t
        .as_slice()
        .iter()
        .zip(z_c.as_slice())
        .zip(eps_hat.as_slice())
        .map(|((zt, zc), e)| (zt - sn * (gamma * zc + e)) / denom)
        .collect();
    Some(LatentVec::new(values))
}
