use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How β is interpolated between its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// β interpolated uniformly.
    #[default]
    Linear,
    /// √β interpolated uniformly, then squared.
    ScaledLinear,
}

/// Forward-process variance schedule.
///
/// `betas[t - 1]` holds β_t for t in 1..=T; `alpha_bars[t]` holds ᾱ_t for t
/// in 0..=T with ᾱ_0 = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(steps: usize, beta_min: f64, beta_max: f64, kind: BetaSchedule) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("schedule needs at least one step"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::config(format!(
                "beta bounds must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let frac = |t: usize| {
            if steps == 1 {
                0.0
            } else {
                t as f64 / (steps - 1) as f64
            }
        };
        let betas = (0..steps)
            .map(|i| match kind {
                BetaSchedule::Linear => beta_min + (beta_max - beta_min) * frac(i),
                BetaSchedule::ScaledLinear => {
                    let (lo, hi) = (beta_min.sqrt(), beta_max.sqrt());
                    let s = lo + (hi - lo) * frac(i);
                    s * s
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Builds a schedule from explicit β_1..β_T.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::config("schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    /// Total number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::config(format!(
                "step {t} beyond schedule length {}",
                self.steps()
            )));
        }
        Ok(())
    }
}

/// Parameters of a schedule, as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub kind: BetaSchedule,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            kind: BetaSchedule::Linear,
        }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.steps, self.beta_min, self.beta_max, self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let s = NoiseSchedule::build(1, 0.1, 0.1, BetaSchedule::Linear).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn default_linear_terminal_value() {
        // mpmath product of (1 - beta_t) at 40 digits
        let s = ScheduleParams::default().build().unwrap();
        let expected = 4.035829765375683314817635e-5;
        assert!(((s.alpha_bar(1000) - expected) / expected).abs() < 1e-10);
        let expected_500 = 0.07858724288177823734328983;
        assert!(((s.alpha_bar(500) - expected_500) / expected_500).abs() < 1e-10);
    }

    #[test]
    fn scaled_linear_terminal_value() {
        let s = NoiseSchedule::build(1000, 1e-4, 0.02, BetaSchedule::ScaledLinear).unwrap();
        let expected = 7.334124595808149081625554e-4;
        assert!(((s.alpha_bar(1000) - expected) / expected).abs() < 1e-10);
    }

    #[test]
    fn invariants_hold() {
        for kind in [BetaSchedule::Linear, BetaSchedule::ScaledLinear] {
            let s = NoiseSchedule::build(1000, 1e-4, 0.02, kind).unwrap();
            assert_eq!(s.alpha_bar(0), 1.0);
            for t in 1..=s.steps() {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                let rel = (s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() / s.alpha_bar(t);
                assert!(rel <= 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(NoiseSchedule::build(10, 0.0, 0.1, BetaSchedule::Linear).is_err());
        assert!(NoiseSchedule::build(10, 0.2, 0.1, BetaSchedule::Linear).is_err());
        assert!(NoiseSchedule::build(10, 0.1, 1.0, BetaSchedule::Linear).is_err());
        assert!(NoiseSchedule::build(0, 0.1, 0.2, BetaSchedule::Linear).is_err());
    }
}
