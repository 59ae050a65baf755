//! Minibatch training of the MLP denoiser.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{draw_noise, mlp_loss_and_grad, LossBreakdown, LossWeights, PixelTerms, TrainingSample};
use super::mlp::MlpDenoiser;
use crate::diffusion::{gamma_for, NoiseSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub dropout_rate: f64,
    pub lambda_d: f64,
    pub lambda_m: f64,
    pub lambda_l: f64,
    pub stage: u8,
    pub optimizer: OptimizerKind,
    /// Warm-start step the forward process is trained for.
    pub warm_start: usize,
    /// Samples with a smaller recovery denominator skip the pixel terms.
    pub pixel_min_denominator: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            steps: 5000,
            dropout_rate: 0.10,
            lambda_d: 1.0,
            lambda_m: 0.0,
            lambda_l: 0.0,
            stage: 1,
            optimizer: OptimizerKind::Sgd,
            warm_start: 500,
            pixel_min_denominator: 0.1,
            seed: 0x7261_696e,
        }
    }
}

impl TrainConfig {
    /// Second-stage weights (λ_M = 10, λ_L = λ_D = 1).
    pub fn stage2() -> Self {
        let w = LossWeights::stage2();
        TrainConfig {
            stage: 2,
            lambda_d: w.lambda_d,
            lambda_m: w.lambda_m,
            lambda_l: w.lambda_l,
            ..Default::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_d: self.lambda_d,
            lambda_m: self.lambda_m,
            lambda_l: self.lambda_l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.stage != 1 && self.stage != 2 {
            return Err(Error::config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.stage == 1 && (self.lambda_m != 0.0 || self.lambda_l != 0.0) {
            return Err(Error::config("stage 1 requires lambda_m = lambda_l = 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.warm_start == 0 {
            return Err(Error::config("warm_start must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Runs `cfg.steps` optimizer steps on minibatches drawn with replacement
/// from `data`. Returns the minibatch loss before each step.
///
/// `pixel` is only consulted in stage 2.
pub fn train<R: Rng + ?Sized>(
    model: &mut MlpDenoiser,
    data: &[TrainingSample],
    cfg: &TrainConfig,
    sched: &NoiseSchedule,
    pixel: Option<&PixelTerms<'_>>,
    rng: &mut R,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if cfg.stage == 2 && pixel.is_none() && (cfg.lambda_m != 0.0 || cfg.lambda_l != 0.0) {
        return Err(Error::config("stage 2 needs a toy decoder for the pixel terms"));
    }
    let gamma = gamma_for(cfg.warm_start, sched)?;
    let weights = cfg.weights();
    let pixel = if cfg.stage == 2 { pixel } else { None };
    let mut adam = (cfg.optimizer == OptimizerKind::Adam).then(|| Adam::new(model.num_params()));
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<TrainingSample> = (0..cfg.batch_size)
            .map(|_| data[rng.random_range(0..data.len())].clone())
            .collect();
        let draws = draw_noise(&batch, cfg.warm_start, cfg.dropout_rate, rng);
        let (loss, grad) = mlp_loss_and_grad(model, &batch, &draws, sched, gamma, &weights, pixel)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training {
                step,
                detail: format!(
                    "non-finite loss {} (diffusion {}, pixel {})",
                    loss.total, loss.diffusion, loss.pixel_mse
                ),
            });
        }
        history.push(LossRecord { step, loss });
        match adam.as_mut() {
            Some(a) => a.step(model.params_mut(), &grad, cfg.learning_rate),
            None => model
                .params_mut()
                .iter_mut()
                .zip(&grad)
                .for_each(|(p, g)| *p -= cfg.learning_rate * g),
        }
    }
    Ok(history)
}

/// Writes the loss history as CSV with a header row.
pub fn write_loss_csv<W: Write>(history: &[LossRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "total", "diffusion", "latent_mse", "pixel_mse", "perceptual"])
        .map_err(csv_err)?;
    for r in history {
        let l = &r.loss;
        out.write_record([
            r.step.to_string(),
            format!("{:.16e}", l.total),
            format!("{:.16e}", l.diffusion),
            format!("{:.16e}", l.latent_mse),
            format!("{:.16e}", l.pixel_mse),
            format!("{:.16e}", l.perceptual),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::mlp::MlpShape;
    use crate::diffusion::ScheduleParams;
    use crate::latent::LatentVec;
    use crate::prompt::PromptClass;
    use crate::rng::seeded;

    fn tiny_data() -> Vec<TrainingSample> {
        (0..8)
            .map(|i| TrainingSample {
                z0: LatentVec::new(vec![i as f64 * 0.1, 0.5]),
                z_c: LatentVec::new(vec![i as f64 * 0.1, 0.4]),
                class: PromptClass(i % 2),
            })
            .collect()
    }

    #[test]
    fn zero_steps_leave_model_unchanged() {
        let s = ScheduleParams::default().build().unwrap();
        let mut m = MlpDenoiser::new(MlpShape::new(2, 2), 1).unwrap();
        let before = m.clone();
        let cfg = TrainConfig { steps: 0, ..Default::default() };
        let h = train(&mut m, &tiny_data(), &cfg, &s, None, &mut seeded(1)).unwrap();
        assert!(h.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn divergence_is_reported() {
        let s = ScheduleParams::default().build().unwrap();
        let mut m = MlpDenoiser::new(MlpShape::new(2, 2), 1).unwrap();
        let cfg = TrainConfig {
            steps: 200,
            learning_rate: 1e6,
            ..Default::default()
        };
        let err = train(&mut m, &tiny_data(), &cfg, &s, None, &mut seeded(1)).unwrap_err();
        assert!(matches!(err, Error::Training { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { dropout_rate: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { stage: 3, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda_m: 10.0, ..Default::default() }.validate().is_err());
        TrainConfig::stage2().validate().unwrap();
        assert_eq!(TrainConfig::stage2().lambda_m, 10.0);
    }

    #[test]
    fn loss_csv_layout() {
        let h = vec![LossRecord { step: 0, loss: LossBreakdown { total: 1.5, ..Default::default() } }];
        let mut buf = Vec::new();
        write_loss_csv(&h, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,total,diffusion,latent_mse,pixel_mse,perceptual\n0,1.5000000000000000e0,"));
    }
}
