//! Training objectives: the noise-prediction loss and the two staged
//! objectives built on it.
//!
//! Randomness (time step, noise, prompt dropout) is drawn up front into
//! [`NoiseDraw`]s so every loss here is a deterministic function of its
//! inputs. That keeps finite-difference checks and predictor comparisons on
//! identical draws straightforward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::MlpDenoiser;
use crate::diffusion::{recovery_denominator, residual_forward, EpsilonPredictor, NoiseSchedule};
use crate::error::{Error, Result};
use crate::latent::LatentVec;
use crate::prompt::PromptClass;
use crate::rng::{normal_vec, seeded, standard_normal};

/// One `(z0, z_c, class)` training triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub z0: LatentVec,
    pub z_c: LatentVec,
    pub class: PromptClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: LatentVec,
    pub drop_prompt: bool,
}

/// Bernoulli prompt dropout.
pub fn drop_prompt<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> bool {
    rng.random::<f64>() < rate
}

/// Draws `t ~ U{1..warm_start}`, `ε ~ N(0, I)` and the dropout flag for each
/// sample.
pub fn draw_noise<R: Rng + ?Sized>(
    batch: &[TrainingSample],
    warm_start: usize,
    dropout_rate: f64,
    rng: &mut R,
) -> Vec<NoiseDraw> {
    batch
        .iter()
        .map(|s| NoiseDraw {
            t: rng.random_range(1..=warm_start),
            eps: normal_vec(rng, s.z0.dim()),
            drop_prompt: drop_prompt(rng, dropout_rate),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_d: f64,
    pub lambda_m: f64,
    pub lambda_l: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::stage1()
    }
}

impl LossWeights {
    /// λ_D = 1, λ_M = λ_L = 0.
    pub fn stage1() -> Self {
        LossWeights {
            lambda_d: 1.0,
            lambda_m: 0.0,
            lambda_l: 0.0,
        }
    }

    /// λ_D = λ_L = 1, λ_M = 10.
    pub fn stage2() -> Self {
        LossWeights {
            lambda_d: 1.0,
            lambda_m: 10.0,
            lambda_l: 1.0,
        }
    }
}

/// Per-term batch means; `total` is the weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub diffusion: f64,
    pub latent_mse: f64,
    pub pixel_mse: f64,
    pub perceptual: f64,
}

/// Perceptual distance between toy images, with its gradient in the second
/// argument.
pub trait PerceptualLoss: Sync {
    fn loss(&self, s: &[f64], s_tilde: &[f64]) -> f64;
    fn grad(&self, s: &[f64], s_tilde: &[f64]) -> Vec<f64>;
}

/// Placeholder perceptual term that is identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPerceptual;

impl PerceptualLoss for NoPerceptual {
    fn loss(&self, _s: &[f64], _s_tilde: &[f64]) -> f64 {
        0.0
    }

    fn grad(&self, _s: &[f64], s_tilde: &[f64]) -> Vec<f64> {
        vec![0.0; s_tilde.len()]
    }
}

/// Fixed seeded linear map from a latent to a `4d`-dimensional toy image.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDecoder {
    dim: usize,
    matrix: Vec<f64>,
}

impl ToyDecoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let s = 1.0 / (dim as f64).sqrt();
        let matrix = (0..4 * dim * dim).map(|_| s * standard_normal(&mut rng)).collect();
        ToyDecoder { dim, matrix }
    }

    pub fn latent_dim(&self) -> usize {
        self.dim
    }

    pub fn pixel_dim(&self) -> usize {
        4 * self.dim
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Dᵀ·g` for a pixel-space vector `g`.
    pub fn transpose_apply(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (row, gi) in self.matrix.chunks_exact(self.dim).zip(g) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * gi;
            }
        }
        out
    }
}

/// Mean squared error between two equal-length slices.
pub fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Extra inputs of the second-stage objective.
#[derive(Clone, Copy)]
pub struct PixelTerms<'a> {
    pub decoder: &'a ToyDecoder,
    pub perceptual: &'a dyn PerceptualLoss,
    /// Samples whose recovery denominator is smaller than this skip the
    /// pixel terms; the ẑ₀ estimate there is dominated by 1/denominator.
    pub min_denominator: f64,
}

struct Prepared {
    z_t: LatentVec,
    prompt: Option<PromptClass>,
}

fn prepare(sample: &TrainingSample, draw: &NoiseDraw, sched: &NoiseSchedule, gamma: f64) -> Result<Prepared> {
    Ok(Prepared {
        z_t: residual_forward(&sample.z0, &sample.z_c, draw.t, gamma, &draw.eps, sched)?,
        prompt: (!draw.drop_prompt).then_some(sample.class),
    })
}

/// Loss terms of one sample and ∂(weighted total)/∂ε̂.
fn sample_terms(
    eps_hat: &[f64],
    sample: &TrainingSample,
    draw: &NoiseDraw,
    z_t: &LatentVec,
    sched: &NoiseSchedule,
    gamma: f64,
    weights: &LossWeights,
    pixel: Option<&PixelTerms<'_>>,
) -> (LossBreakdown, Vec<f64>) {
    let eps = draw.eps.as_slice();
    let diffusion: f64 = eps_hat.iter().zip(eps).map(|(a, b)| (a - b).powi(2)).sum();
    let mut d_eps: Vec<f64> = eps_hat.iter().zip(eps).map(|(a, b)| 2.0 * (a - b)).collect();
    let latent_mse = mean_sq_diff(sample.z0.as_slice(), sample.z_c.as_slice());
    let mut terms = LossBreakdown {
        total: 0.0,
        diffusion,
        latent_mse,
        pixel_mse: 0.0,
        perceptual: 0.0,
    };
    if let Some(px) = pixel.filter(|_| weights.lambda_m != 0.0 || weights.lambda_l != 0.0) {
        let ab = sched.alpha_bar(draw.t);
        let sn = (1.0 - ab).sqrt();
        let c = recovery_denominator(ab, gamma);
        if c.abs() >= px.min_denominator {
            let z0_hat: Vec<f64> = z_t
                .as_slice()
                .iter()
                .zip(sample.z_c.as_slice())
                .zip(eps_hat)
                .map(|((zt, zc), e)| (zt - sn * gamma * zc - sn * e) / c)
                .collect();
            let s = px.decoder.decode(sample.z0.as_slice());
            let s_tilde = px.decoder.decode(&z0_hat);
            terms.pixel_mse = mean_sq_diff(&s, &s_tilde);
            terms.perceptual = px.perceptual.loss(&s, &s_tilde);
            let p = s.len() as f64;
            let pg = px.perceptual.grad(&s, &s_tilde);
            let g_pixel: Vec<f64> = s_tilde
                .iter()
                .zip(&s)
                .zip(&pg)
                .map(|((a, b), g)| weights.lambda_m * 2.0 * (a - b) / p + weights.lambda_l * g)
                .collect();
            let g_z0 = px.decoder.transpose_apply(&g_pixel);
            for (d, g) in d_eps.iter_mut().zip(g_z0) {
                *d += g * (-sn / c);
            }
        }
    }
    terms.total = terms.diffusion
        + weights.lambda_d * terms.latent_mse
        + weights.lambda_m * terms.pixel_mse
        + weights.lambda_l * terms.perceptual;
    (terms, d_eps)
}

fn check_batch(batch: &[TrainingSample], draws: &[NoiseDraw]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::contract("loss needs a nonempty batch"));
    }
    if batch.len() != draws.len() {
        return Err(Error::contract("batch and noise draws differ in length"));
    }
    Ok(())
}

fn accumulate(acc: &mut LossBreakdown, t: &LossBreakdown, n: f64) {
    acc.total += t.total / n;
    acc.diffusion += t.diffusion / n;
    acc.latent_mse += t.latent_mse / n;
    acc.pixel_mse += t.pixel_mse / n;
    acc.perceptual += t.perceptual / n;
}

/// Staged objective for any predictor. With `pixel = None` (or zero λ_M and
/// λ_L) this is the first-stage loss; with zero weights throughout it is the
/// plain noise-prediction loss.
pub fn staged_loss<P: EpsilonPredictor + ?Sized>(
    predictor: &P,
    batch: &[TrainingSample],
    draws: &[NoiseDraw],
    sched: &NoiseSchedule,
    gamma: f64,
    weights: &LossWeights,
    pixel: Option<&PixelTerms<'_>>,
) -> Result<LossBreakdown> {
    check_batch(batch, draws)?;
    let n = batch.len() as f64;
    let mut acc = LossBreakdown::default();
    for (sample, draw) in batch.iter().zip(draws) {
        let p = prepare(sample, draw, sched, gamma)?;
        let eps_hat = predictor.predict(&p.z_t, &sample.z_c, p.prompt, draw.t)?;
        let (terms, _) = sample_terms(eps_hat.as_slice(), sample, draw, &p.z_t, sched, gamma, weights, pixel);
        accumulate(&mut acc, &terms, n);
    }
    Ok(acc)
}

/// Batch mean of ‖ε − ε̂‖².
pub fn loss_diffusion<P: EpsilonPredictor + ?Sized>(
    predictor: &P,
    batch: &[TrainingSample],
    draws: &[NoiseDraw],
    sched: &NoiseSchedule,
    gamma: f64,
) -> Result<f64> {
    let w = LossWeights {
        lambda_d: 0.0,
        lambda_m: 0.0,
        lambda_l: 0.0,
    };
    Ok(staged_loss(predictor, batch, draws, sched, gamma, &w, None)?.total)
}

/// Noise-prediction loss plus λ_D times the (constant) latent distortion.
pub fn loss_stage1<P: EpsilonPredictor + ?Sized>(
    predictor: &P,
    batch: &[TrainingSample],
    draws: &[NoiseDraw],
    sched: &NoiseSchedule,
    gamma: f64,
    lambda_d: f64,
) -> Result<LossBreakdown> {
    let w = LossWeights {
        lambda_d,
        lambda_m: 0.0,
        lambda_l: 0.0,
    };
    staged_loss(predictor, batch, draws, sched, gamma, &w, None)
}

pub fn loss_stage2<P: EpsilonPredictor + ?Sized>(
    predictor: &P,
    batch: &[TrainingSample],
    draws: &[NoiseDraw],
    sched: &NoiseSchedule,
    gamma: f64,
    weights: &LossWeights,
    pixel: &PixelTerms<'_>,
) -> Result<LossBreakdown> {
    staged_loss(predictor, batch, draws, sched, gamma, weights, Some(pixel))
}

/// Staged loss of the MLP together with its parameter gradient.
pub fn mlp_loss_and_grad(
    model: &MlpDenoiser,
    batch: &[TrainingSample],
    draws: &[NoiseDraw],
    sched: &NoiseSchedule,
    gamma: f64,
    weights: &LossWeights,
    pixel: Option<&PixelTerms<'_>>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_batch(batch, draws)?;
    let n = batch.len() as f64;
    let mut acc = LossBreakdown::default();
    let mut grad = vec![0.0; model.num_params()];
    for (sample, draw) in batch.iter().zip(draws) {
        let p = prepare(sample, draw, sched, gamma)?;
        let cache = model.forward(&p.z_t, &sample.z_c, p.prompt, draw.t)?;
        let (terms, d_eps) = sample_terms(&cache.output, sample, draw, &p.z_t, sched, gamma, weights, pixel);
        accumulate(&mut acc, &terms, n);
        let g: Vec<f64> = d_eps.iter().map(|v| v / n).collect();
        model.backward(&cache, &g, &mut grad);
    }
    Ok((acc, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{gamma_for, ScheduleParams};

    struct Zero;
    impl EpsilonPredictor for Zero {
        fn predict(&self, z_t: &LatentVec, _: &LatentVec, _: Option<PromptClass>, _: usize) -> Result<LatentVec> {
            Ok(LatentVec::zeros(z_t.dim()))
        }
    }

    fn batch(n: usize, d: usize, seed: u64) -> Vec<TrainingSample> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|i| {
                let z0 = normal_vec(&mut rng, d);
                let noise = normal_vec(&mut rng, d).scaled(0.1);
                TrainingSample {
                    z_c: z0.combine(1.0, &noise, 1.0).unwrap(),
                    z0,
                    class: PromptClass(i % 3),
                }
            })
            .collect()
    }

    #[test]
    fn zero_predictor_loss_is_dimension() {
        let s = ScheduleParams::default().build().unwrap();
        let g = gamma_for(500, &s).unwrap();
        let b = batch(20_000, 4, 1);
        let draws = draw_noise(&b, 500, 0.1, &mut seeded(2));
        let l = loss_diffusion(&Zero, &b, &draws, &s, g).unwrap();
        assert!((l - 4.0).abs() < 0.1, "{l}");
    }

    #[test]
    fn stage_reductions() {
        let s = ScheduleParams::default().build().unwrap();
        let g = gamma_for(500, &s).unwrap();
        let b = batch(16, 4, 3);
        let draws = draw_noise(&b, 500, 0.1, &mut seeded(4));
        let diff = loss_diffusion(&Zero, &b, &draws, &s, g).unwrap();
        let s1 = loss_stage1(&Zero, &b, &draws, &s, g, 0.0).unwrap();
        assert_eq!(s1.total, diff);
        let s1 = loss_stage1(&Zero, &b, &draws, &s, g, 1.0).unwrap();
        assert!(s1.latent_mse > 0.0);
        assert!((s1.total - diff - s1.latent_mse).abs() < 1e-12);

        let dec = ToyDecoder::new(4, 9);
        let px = PixelTerms {
            decoder: &dec,
            perceptual: &NoPerceptual,
            min_denominator: 0.1,
        };
        let no_pixel = LossWeights::stage1();
        assert_eq!(loss_stage2(&Zero, &b, &draws, &s, g, &no_pixel, &px).unwrap(), s1);
        let s2 = loss_stage2(&Zero, &b, &draws, &s, g, &LossWeights::stage2(), &px).unwrap();
        assert!(s2.pixel_mse > 0.0);
        assert_eq!(s2.perceptual, 0.0);
    }

    #[test]
    fn dropout_frequency() {
        let mut rng = seeded(5);
        let n = 100_000;
        let dropped = (0..n).filter(|_| drop_prompt(&mut rng, 0.1)).count();
        let f = dropped as f64 / n as f64;
        assert!((f - 0.1).abs() < 0.01, "{f}");
    }

    #[test]
    fn toy_decoder_adjoint() {
        let d = ToyDecoder::new(3, 1);
        let mut rng = seeded(2);
        let z = normal_vec(&mut rng, 3);
        let g = normal_vec(&mut rng, 12);
        let lhs: f64 = d.decode(z.as_slice()).iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = d.transpose_apply(g.as_slice()).iter().zip(z.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
