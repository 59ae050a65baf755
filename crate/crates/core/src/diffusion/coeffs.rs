//! Closed-form coefficients of the deterministic residual-noise update.
//!
//! With σ = 0 the update `z_prev = a·z_t + b·ẑ₀` must keep the marginal
//! `√ᾱ·z0 + √(1-ᾱ)·(γ·ε_res + ε)` at both ends of a step, which pins
//! `a·√ᾱ_t + b = √ᾱ_prev`, `a²(1-ᾱ_t) = 1-ᾱ_prev` and a γ that does not
//! change along the trajectory.

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// Update weights for one reverse step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateCoeffs {
    /// Weight on the current state.
    pub a: f64,
    /// Weight on the predicted clean latent.
    pub b: f64,
}

/// Residual weight γ = √ᾱ / √(1-ᾱ) evaluated at the warm-start ᾱ.
pub fn gamma_from_alpha_bar(alpha_bar: f64) -> Result<f64> {
    if alpha_bar >= 1.0 {
        return Err(Error::Domain(
            "residual weight undefined when alpha_bar = 1 (warm-start step 0)".into(),
        ));
    }
    Ok(alpha_bar.sqrt() / (1.0 - alpha_bar).sqrt())
}

pub fn gamma_for(warm_start: usize, sched: &NoiseSchedule) -> Result<f64> {
    if warm_start == 0 {
        return Err(Error::Domain("warm-start step must be >= 1".into()));
    }
    sched.check_step(warm_start)?;
    gamma_from_alpha_bar(sched.alpha_bar(warm_start))
}

/// Coefficients from the two ᾱ values directly.
pub fn coeffs_from_alpha_bars(alpha_bar_prev: f64, alpha_bar_t: f64) -> Result<UpdateCoeffs> {
    if alpha_bar_t >= 1.0 {
        return Err(Error::Domain("update undefined when alpha_bar_t = 1".into()));
    }
    let denom = (1.0 - alpha_bar_t).sqrt();
    let a = (1.0 - alpha_bar_prev).sqrt() / denom;
    let b = alpha_bar_prev.sqrt() - (alpha_bar_t * (1.0 - alpha_bar_prev)).sqrt() / denom;
    Ok(UpdateCoeffs { a, b })
}

pub fn update_coeffs(t_prev: usize, t: usize, sched: &NoiseSchedule) -> Result<UpdateCoeffs> {
    check_pair(t_prev, t, sched)?;
    coeffs_from_alpha_bars(sched.alpha_bar(t_prev), sched.alpha_bar(t))
}

/// DDIM standard deviation for stochasticity `eta`.
pub fn sigma_from_alpha_bars(alpha_bar_prev: f64, alpha_bar_t: f64, eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let ratio = ((1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t)).sqrt();
    let gap = (1.0 - alpha_bar_t / alpha_bar_prev).max(0.0).sqrt();
    eta * ratio * gap
}

pub fn ddim_sigma(t_prev: usize, t: usize, eta: f64, sched: &NoiseSchedule) -> Result<f64> {
    check_pair(t_prev, t, sched)?;
    if eta < 0.0 {
        return Err(Error::config(format!("eta must be >= 0, got {eta}")));
    }
    Ok(sigma_from_alpha_bars(
        sched.alpha_bar(t_prev),
        sched.alpha_bar(t),
        eta,
    ))
}

fn check_pair(t_prev: usize, t: usize, sched: &NoiseSchedule) -> Result<()> {
    sched.check_step(t)?;
    if t_prev >= t {
        return Err(Error::config(format!(
            "step pair must satisfy t_prev < t, got ({t_prev}, {t})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleParams;

    #[test]
    fn gamma_examples() {
        assert!((gamma_from_alpha_bar(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_from_alpha_bar(0.8).unwrap() - 2.0).abs() < 1e-14);
        assert!(gamma_from_alpha_bar(1.0).is_err());
    }

    #[test]
    fn gamma_default_schedule() {
        // mpmath: sqrt(ab500) / sqrt(1 - ab500)
        let s = ScheduleParams::default().build().unwrap();
        let g = gamma_for(500, &s).unwrap();
        assert!((g - 0.2920444220707474098890233).abs() < 1e-12);
        assert!(gamma_for(0, &s).is_err());
    }

    #[test]
    fn coeff_examples() {
        let c = coeffs_from_alpha_bars(0.7, 0.7).unwrap();
        assert!((c.a - 1.0).abs() < 1e-15 && c.b.abs() < 1e-15);
        let c = coeffs_from_alpha_bars(0.8, 0.5).unwrap();
        assert!((c.a - 0.632456).abs() < 1e-6);
        assert!((c.b - 0.447214).abs() < 1e-6);
        assert!(coeffs_from_alpha_bars(0.8, 1.0).is_err());
    }

    #[test]
    fn first_identity_on_schedule() {
        let s = ScheduleParams::default().build().unwrap();
        for (tp, t) in [(0, 1), (0, 100), (250, 500), (999, 1000)] {
            let c = update_coeffs(tp, t, &s).unwrap();
            let lhs = c.a * s.alpha_bar(t).sqrt() + c.b;
            assert!((lhs - s.alpha_bar(tp).sqrt()).abs() < 1e-12);
        }
        assert!(update_coeffs(5, 5, &s).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_from_alpha_bars(0.8, 0.5, 0.0), 0.0);
        assert!((sigma_from_alpha_bars(0.8, 0.5, 1.0) - 0.387298).abs() < 1e-6);
        assert_eq!(sigma_from_alpha_bars(0.6, 0.6, 1.0), 0.0);
        let s = ScheduleParams::default().build().unwrap();
        assert!(ddim_sigma(100, 200, -1.0, &s).is_err());
        assert_eq!(ddim_sigma(100, 200, 0.0, &s).unwrap(), 0.0);
    }
}
