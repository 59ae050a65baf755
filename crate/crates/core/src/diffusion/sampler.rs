//! Deterministic warm-start sampler with classifier-free guidance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coeffs::{gamma_for, update_coeffs};
use super::forward::{predict_z0_with, warm_start};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::latent::{same_dim, LatentVec};
use crate::prompt::PromptClass;

/// Noise predictor ε_θ(z_t, z_c, o, t).
///
/// Implementations must be pure: identical arguments give identical outputs.
pub trait EpsilonPredictor: Sync {
    fn predict(
        &self,
        z_t: &LatentVec,
        z_c: &LatentVec,
        prompt: Option<PromptClass>,
        t: usize,
    ) -> Result<LatentVec>;

    /// Clean-latent estimate used when the recovery denominator vanishes.
    ///
    /// At that step the state carries no information about z0 beyond `z_c`,
    /// so the default is `z_c` itself. Predictors with privileged knowledge of
    /// z0 (test oracles) may return it instead.
    fn singular_estimate(&self, z_c: &LatentVec, _prompt: Option<PromptClass>) -> LatentVec {
        z_c.clone()
    }
}

impl<P: EpsilonPredictor + ?Sized> EpsilonPredictor for &P {
    fn predict(
        &self,
        z_t: &LatentVec,
        z_c: &LatentVec,
        prompt: Option<PromptClass>,
        t: usize,
    ) -> Result<LatentVec> {
        (**self).predict(z_t, z_c, prompt, t)
    }

    fn singular_estimate(&self, z_c: &LatentVec, prompt: Option<PromptClass>) -> LatentVec {
        (**self).singular_estimate(z_c, prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Number of denoising steps N.
    pub steps: usize,
    /// Warm-start step N_s. `None` defers to the CBR lookup table.
    pub warm_start: Option<usize>,
    /// Guidance scale ω.
    pub omega: f64,
    /// DDIM stochasticity; only 0 is supported.
    pub eta: f64,
    /// Threshold below which the z0 recovery is treated as singular.
    pub singular_guard: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            steps: 5,
            warm_start: None,
            omega: 3.0,
            eta: 0.0,
            singular_guard: 1e-8,
        }
    }
}

impl SamplerConfig {
    /// Checks the configuration and returns the effective warm-start step.
    pub fn validate(&self, sched: &NoiseSchedule) -> Result<usize> {
        let ns = self
            .warm_start
            .ok_or_else(|| Error::config("warm-start step N_s not resolved"))?;
        if self.steps == 0 {
            return Err(Error::config("number of denoising steps N must be >= 1"));
        }
        if ns == 0 || ns > sched.steps() {
            return Err(Error::config(format!(
                "warm-start step N_s = {ns} must lie in 1..={}",
                sched.steps()
            )));
        }
        if self.steps > ns {
            return Err(Error::config(format!(
                "denoising steps N = {} exceed warm-start step N_s = {ns} (need N <= N_s)",
                self.steps
            )));
        }
        if self.eta != 0.0 {
            return Err(Error::config(format!(
                "eta = {} not supported; the closed-form coefficients assume eta = 0",
                self.eta
            )));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::config(format!("guidance scale must be >= 0, got {}", self.omega)));
        }
        if !(self.singular_guard > 0.0) {
            return Err(Error::config("singular_guard must be > 0"));
        }
        Ok(ns)
    }
}

/// Step indices `[t_N, ..., t_1, t_0 = 0]` with `t_i = round(N_s·i/N)`.
pub fn step_grid(steps: usize, warm_start: usize) -> Result<Vec<usize>> {
    if steps == 0 {
        return Err(Error::config("number of denoising steps N must be >= 1"));
    }
    let grid: Vec<usize> = (0..=steps)
        .rev()
        // round-half-up in integer arithmetic
        .map(|i| (2 * warm_start * i + steps) / (2 * steps))
        .collect();
    if grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::config(format!(
            "step grid for N = {steps}, N_s = {warm_start} is not strictly decreasing"
        )));
    }
    Ok(grid)
}

/// `ε_uncond + ω·(ε_cond - ε_uncond)`.
pub fn cfg_combine(eps_uncond: &LatentVec, eps_cond: &LatentVec, omega: f64) -> Result<LatentVec> {
    same_dim(eps_uncond, eps_cond)?;
    Ok(LatentVec::new(
        eps_uncond
            .as_slice()
            .iter()
            .zip(eps_cond.as_slice())
            .map(|(u, c)| u + omega * (c - u))
            .collect(),
    ))
}

// the recovery is linear in ε, so guidance carries over to the estimates
fn singular_guided<P: EpsilonPredictor + ?Sized>(
    predictor: &P,
    z_c: &LatentVec,
    prompt: Option<PromptClass>,
    omega: f64,
) -> Result<LatentVec> {
    let cond = predictor.singular_estimate(z_c, prompt);
    if omega == 1.0 {
        return Ok(cond);
    }
    cfg_combine(&predictor.singular_estimate(z_c, None), &cond, omega)
}

/// `a·z_t + b·ẑ₀` for the step `t -> t_prev`.
pub fn reverse_step(
    z_t: &LatentVec,
    z0_hat: &LatentVec,
    t_prev: usize,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentVec> {
    let c = update_coeffs(t_prev, t, sched)?;
    z_t.combine(c.a, z0_hat, c.b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    /// State entering this step.
    pub z_t: LatentVec,
    pub z0_hat: LatentVec,
    pub eps_hat: LatentVec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleTrace {
    /// Gaussian draw used by the warm start.
    pub init_noise: LatentVec,
    pub gamma: f64,
    pub steps: Vec<TraceStep>,
}

/// Runs the full warm-start sampler from the decoded latent `z_c`.
pub fn sample<P, R>(
    z_c: &LatentVec,
    predictor: &P,
    prompt: Option<PromptClass>,
    cfg: &SamplerConfig,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(LatentVec, SampleTrace)>
where
    P: EpsilonPredictor + ?Sized,
    R: Rng + ?Sized,
{
    let ns = cfg.validate(sched)?;
    let (z_init, eps) = warm_start(z_c, ns, sched, rng)?;
    sample_from(z_init, eps, z_c, predictor, prompt, cfg, sched)
}

/// Deterministic part of [`sample`], starting from a given warm-start state.
pub fn sample_from<P>(
    z_init: LatentVec,
    init_noise: LatentVec,
    z_c: &LatentVec,
    predictor: &P,
    prompt: Option<PromptClass>,
    cfg: &SamplerConfig,
    sched: &NoiseSchedule,
) -> Result<(LatentVec, SampleTrace)>
where
    P: EpsilonPredictor + ?Sized,
{
    let ns = cfg.validate(sched)?;
    same_dim(&z_init, z_c)?;
    let gamma = gamma_for(ns, sched)?;
    let grid = step_grid(cfg.steps, ns)?;
    let mut trace = SampleTrace {
        init_noise,
        gamma,
        steps: Vec::with_capacity(cfg.steps),
    };
    let mut z = z_init;
    for pair in grid.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let eps_cond = predictor.predict(&z, z_c, prompt, t)?;
        let eps_hat = if cfg.omega == 1.0 {
            eps_cond
        } else {
            let eps_uncond = predictor.predict(&z, z_c, None, t)?;
            cfg_combine(&eps_uncond, &eps_cond, cfg.omega)?
        };
        same_dim(&eps_hat, z_c)?;
        let z0_hat = predict_z0_with(&z, z_c, &eps_hat, sched.alpha_bar(t), gamma, cfg.singular_guard)
            .map_or_else(|| singular_guided(predictor, z_c, prompt, cfg.omega), Ok)?;
        let next = reverse_step(&z, &z0_hat, t_prev, t, sched)?;
        trace.steps.push(TraceStep {
            t,
            z_t: std::mem::replace(&mut z, next),
            z0_hat,
            eps_hat,
        });
    }
    Ok((z, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleParams;
    use crate::rng::{normal_vec, seeded};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        cond: AtomicUsize,
        uncond: AtomicUsize,
    }

    impl EpsilonPredictor for Counting {
        fn predict(&self, z_t: &LatentVec, _: &LatentVec, p: Option<PromptClass>, _: usize) -> Result<LatentVec> {
            match p {
                Some(_) => self.cond.fetch_add(1, Ordering::Relaxed),
                None => self.uncond.fetch_add(1, Ordering::Relaxed),
            };
            Ok(z_t.scaled(0.1))
        }
    }

    fn cfg(ns: usize, omega: f64) -> SamplerConfig {
        SamplerConfig {
            warm_start: Some(ns),
            omega,
            ..Default::default()
        }
    }

    #[test]
    fn grid_examples() {
        assert_eq!(step_grid(5, 500).unwrap(), vec![500, 400, 300, 200, 100, 0]);
        assert_eq!(step_grid(3, 10).unwrap(), vec![10, 7, 3, 0]);
        assert_eq!(step_grid(1, 1).unwrap(), vec![1, 0]);
        assert!(step_grid(4, 2).is_err());
        assert!(step_grid(0, 2).is_err());
    }

    #[test]
    fn cfg_identities() {
        let u = LatentVec::new(vec![0.5, -1.0]);
        let c = LatentVec::new(vec![2.0, 3.0]);
        assert_eq!(cfg_combine(&u, &c, 1.0).unwrap(), c);
        assert_eq!(cfg_combine(&u, &c, 0.0).unwrap(), u);
        let z = LatentVec::zeros(2);
        assert_eq!(cfg_combine(&z, &c, 2.0).unwrap(), c.scaled(2.0));
        assert!(cfg_combine(&z, &LatentVec::zeros(3), 1.0).is_err());
    }

    #[test]
    fn evaluation_counts() {
        let s = ScheduleParams::default().build().unwrap();
        let zc = normal_vec(&mut seeded(1), 4);
        for (omega, uncond) in [(3.0, 5), (1.0, 0)] {
            let p = Counting { cond: AtomicUsize::new(0), uncond: AtomicUsize::new(0) };
            let (_, trace) = sample(&zc, &p, Some(PromptClass(0)), &cfg(500, omega), &s, &mut seeded(2)).unwrap();
            assert_eq!(p.cond.load(Ordering::Relaxed), 5);
            assert_eq!(p.uncond.load(Ordering::Relaxed), uncond);
            let ts: Vec<usize> = trace.steps.iter().map(|s| s.t).collect();
            assert_eq!(ts, vec![500, 400, 300, 200, 100]);
        }
    }

    #[test]
    fn config_validation() {
        let s = ScheduleParams::default().build().unwrap();
        assert!(cfg(500, 3.0).validate(&s).is_ok());
        assert!(SamplerConfig { steps: 6, ..cfg(5, 3.0) }.validate(&s).is_err());
        assert!(SamplerConfig { eta: 0.5, ..cfg(500, 3.0) }.validate(&s).is_err());
        assert!(cfg(1001, 3.0).validate(&s).is_err());
        assert!(cfg(500, -1.0).validate(&s).is_err());
        assert!(SamplerConfig::default().validate(&s).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let s = ScheduleParams::default().build().unwrap();
        let zc = normal_vec(&mut seeded(1), 4);
        let p = Counting { cond: AtomicUsize::new(0), uncond: AtomicUsize::new(0) };
        let a = sample(&zc, &p, None, &cfg(400, 3.0), &s, &mut seeded(9)).unwrap().0;
        let b = sample(&zc, &p, None, &cfg(400, 3.0), &s, &mut seeded(9)).unwrap().0;
        assert_eq!(a, b);
    }
}
