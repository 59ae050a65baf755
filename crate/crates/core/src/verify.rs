//! Self-checks of the numerical invariants, each returning a pass/fail
//! [`Check`]. `gencomm verify` runs them; the acceptance tests run the
//! full-size variants.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    mmse_equalize, normalize_power, pack_complex, transmit, unpack_complex, zf_equalize, ChannelConfig, ChannelKind,
};
use crate::denoiser::{
    draw_noise, drop_prompt, mlp_loss_and_grad, staged_loss, train, AnalyticPredictor, ExactOracle, GaussianWorld,
    LinearObservation, LossWeights, MlpDenoiser, MlpShape, NoPerceptual, PixelTerms, ToyDecoder, TrainConfig,
    WorldConfig,
};
use crate::diffusion::{
    gamma_for, predict_z0, recovery_denominator, residual_forward, reverse_step, sample, sample_from, step_grid,
    update_coeffs, warm_start_with, EpsilonPredictor, NoiseSchedule, SamplerConfig, ScheduleParams,
};
use crate::error::Result;
use crate::latent::LatentVec;
use crate::pipeline::{
    metadata, ns_for_cbr, sweep, training_set, write_rows_csv, Axis, ExperimentConfig, NsTable, PredictorKind,
    TrialContext,
};
use crate::prompt::PromptClass;
use crate::rng::{normal_vec, seeded, trial_stream};
use crate::sidechannel::{ac_decode, ac_encode, measure_ber, LdpcCode, SideChannel, SideChannelConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String, start: Instant) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn failed(name: &str, err: crate::error::Error, start: Instant) -> Self {
        Check::new(name, false, format!("error: {err}"), start)
    }

    /// `PASS name: detail (1.23 s)`.
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn wrap(name: &str, f: impl FnOnce(Instant) -> Result<Check>) -> Check {
    let start = Instant::now();
    f(start).unwrap_or_else(|e| Check::failed(name, e, start))
}

/// Problem sizes of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Reduced sample sizes, a few seconds in total.
    Quick,
    /// Full sample sizes; takes minutes.
    Full,
}

/// Runs every check of `suite`.
pub fn run(suite: Suite, seed: u64) -> Vec<Check> {
    let full = suite == Suite::Full;
    let mut out = vec![
        coefficient_identities(),
        warm_start_coincidence(seed, 1000),
        exact_oracle_recovery(seed, 100),
        ddim_reduction(seed, 1000),
        bayes_refinement(seed, if full { 1000 } else { 200 }),
        guidance(seed, 100_000),
        mlp_gradient(seed, 20),
    ];
    if full {
        out.push(mlp_training(seed, 5000));
    }
    out.push(channel_statistics(seed, if full { 1_000_000 } else { 100_000 }));
    out.push(source_coding(seed, if full { 10_000 } else { 1000 }));
    out.push(ldpc_ber(seed, if full { 1_000_000 } else { 50_000 }));
    out.push(prompt_frames(seed, if full { 1000 } else { 100 }));
    out.push(ns_table());
    out.push(sweep_determinism(seed, if full { 50 } else { 5 }));
    if full {
        out.push(trial_timing(seed));
    }
    out
}

/// Update-coefficient identities on every grid step for N = 1..10 and
/// N_s = 100..900.
pub fn coefficient_identities() -> Check {
    const NAME: &str = "coefficient identities";
    wrap(NAME, |start| {
        let sched = ScheduleParams::default().build()?;
        let mut worst = 0f64;
        let mut pairs = 0usize;
        for n in 1..=10 {
            for ns in (100..=900).step_by(100) {
                let gamma = gamma_for(ns, &sched)?;
                worst = worst.max(recovery_denominator(sched.alpha_bar(ns), gamma).abs());
                for w in step_grid(n, ns)?.windows(2) {
                    let (t, tp) = (w[0], w[1]);
                    let c = update_coeffs(tp, t, &sched)?;
                    let (at, ap) = (sched.alpha_bar(t), sched.alpha_bar(tp));
                    let e1 = (c.a * at.sqrt() + c.b - ap.sqrt()).abs();
                    let e2 = (c.a * c.a * (1.0 - at) - (1.0 - ap)).abs();
                    // residual weight carried unchanged to t_prev
                    let e3 = (c.a * (1.0 - at).sqrt() * gamma - (1.0 - ap).sqrt() * gamma).abs();
                    worst = worst.max(e1).max(e2).max(e3);
                    pairs += 1;
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        Ok(Check::new(
            NAME,
            worst <= 1e-12 && secs < 1.0,
            format!("{pairs} steps, max error {worst:.2e}, {secs:.3} s"),
            start,
        ))
    })
}

/// The warm start equals the residual forward process at N_s.
pub fn warm_start_coincidence(seed: u64, draws: usize) -> Check {
    const NAME: &str = "warm-start coincidence";
    wrap(NAME, |start| {
        let sched = ScheduleParams::default().build()?;
        let mut rng = seeded(seed ^ 0x7773);
        let mut worst = 0f64;
        for _ in 0..draws {
            let d = rng.random_range(1..=16);
            let ns = rng.random_range(1..=sched.steps());
            let (z0, z_c, eps) = (normal_vec(&mut rng, d), normal_vec(&mut rng, d), normal_vec(&mut rng, d));
            let a = warm_start_with(&z_c, &eps, sched.alpha_bar(ns))?;
            let b = residual_forward(&z0, &z_c, ns, gamma_for(ns, &sched)?, &eps, &sched)?;
            worst = worst.max(a.max_abs_diff(&b));
        }
        Ok(Check::new(NAME, worst <= 1e-12, format!("{draws} draws, max error {worst:.2e}"), start))
    })
}

/// The exact-noise oracle recovers z0 and follows the frozen-noise
/// trajectory at every intermediate step.
pub fn exact_oracle_recovery(seed: u64, cases: usize) -> Check {
    const NAME: &str = "exact-oracle recovery";
    wrap(NAME, |start| {
        let sched = ScheduleParams::default().build()?;
        let ns = 500;
        let cfg = SamplerConfig {
            steps: 5,
            warm_start: Some(ns),
            ..Default::default()
        };
        let gamma = gamma_for(ns, &sched)?;
        let mut rng = seeded(seed ^ 0x6f72);
        let (mut final_err, mut path_err) = (0f64, 0f64);
        for _ in 0..cases {
            let d = rng.random_range(2..=16);
            let z0 = normal_vec(&mut rng, d);
            let z_c = z0.combine(1.0, &normal_vec(&mut rng, d), 0.5)?;
            let oracle = ExactOracle::new(z0.clone(), &sched, ns)?;
            let (z, trace) = sample(&z_c, &oracle, Some(PromptClass(0)), &cfg, &sched, &mut rng)?;
            final_err = final_err.max(z.max_abs_diff(&z0));
            for step in &trace.steps {
                let expect = residual_forward(&z0, &z_c, step.t, gamma, &trace.init_noise, &sched)?;
                path_err = path_err.max(step.z_t.max_abs_diff(&expect)).max(step.z0_hat.max_abs_diff(&z0));
            }
        }
        Ok(Check::new(
            NAME,
            final_err <= 1e-9 && path_err <= 1e-9,
            format!("{cases} cases, final error {final_err:.2e}, trajectory error {path_err:.2e}"),
            start,
        ))
    })
}

/// With γ = 0 one update equals a deterministic DDIM step.
pub fn ddim_reduction(seed: u64, states: usize) -> Check {
    const NAME: &str = "DDIM reduction";
    wrap(NAME, |start| {
        let sched = ScheduleParams::default().build()?;
        let mut rng = seeded(seed ^ 0x6464);
        let mut worst = 0f64;
        for _ in 0..states {
            let t = rng.random_range(1..=sched.steps());
            let tp = rng.random_range(0..t);
            let (z_t, eps) = (normal_vec(&mut rng, 8), normal_vec(&mut rng, 8));
            let z0_hat = predict_z0(&z_t, &LatentVec::zeros(8), &eps, t, 0.0, &sched, 0.0)?;
            let ours = reverse_step(&z_t, &z0_hat, tp, t, &sched)?;
            let (at, ap) = (sched.alpha_bar(t), sched.alpha_bar(tp));
            let textbook: Vec<f64> = z_t
                .as_slice()
                .iter()
                .zip(eps.as_slice())
                .map(|(z, e)| {
                    let x0 = (z - (1.0 - at).sqrt() * e) / at.sqrt();
                    ap.sqrt() * x0 + (1.0 - ap).sqrt() * e
                })
                .collect();
            worst = worst.max(ours.max_abs_diff(&LatentVec::new(textbook)));
        }
        Ok(Check::new(NAME, worst <= 1e-12, format!("{states} states, max error {worst:.2e}"), start))
    })
}

/// Configuration of the Bayes refinement check.
pub fn refinement_config(trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.world.dim = 8;
    cfg.codec.k_prime = 4;
    cfg.codec.k = 1;
    cfg.channel = ChannelConfig {
        kind: ChannelKind::Awgn,
        snr_db: 10.0,
    };
    cfg.predictor = PredictorKind::Analytic;
    cfg.sampler.steps = 5;
    cfg.sampler.warm_start = Some(500);
    cfg.trials = trials;
    cfg
}

/// Refinement with the analytic predictor does not increase the mean error.
pub fn bayes_refinement(seed: u64, trials: usize) -> Check {
    const NAME: &str = "Bayes refinement";
    wrap(NAME, |start| {
        let mut cfg = refinement_config(trials);
        cfg.seed = seed;
        let ctx = TrialContext::new(cfg)?;
        let point = ctx.points(Axis::Single)?[0];
        let outcomes = (0..trials as u32)
            .into_par_iter()
            .map(|t| ctx.run_trial(&point, t))
            .collect::<Result<Vec<_>>>()?;
        let n = trials as f64;
        let coarse = outcomes.iter().map(|o| o.row.mse_coarse).sum::<f64>() / n;
        let refined = outcomes.iter().map(|o| o.row.mse_refined).sum::<f64>() / n;
        let post = outcomes.iter().filter_map(|o| o.posterior_var).sum::<f64>() / n;
        let secs = start.elapsed().as_secs_f64();
        Ok(Check::new(
            NAME,
            refined <= coarse && secs < 30.0,
            format!(
                "{trials} trials, mse coarse {coarse:.4}, refined {refined:.4}, posterior variance {post:.4}, \
                 refined/posterior {:.3}",
                refined / post
            ),
            start,
        ))
    })
}

fn small_world() -> Result<(GaussianWorld, LinearObservation)> {
    let world = GaussianWorld::new(&WorldConfig {
        dim: 4,
        ..Default::default()
    })?;
    let mut obs = LinearObservation::identity(4);
    obs.noise_cov.fill_diagonal(0.5);
    Ok((world, obs))
}

// sampler loop using one prompt throughout, without guidance
fn plain_sampling<P: EpsilonPredictor>(
    z_init: &LatentVec,
    z_c: &LatentVec,
    p: &P,
    prompt: Option<PromptClass>,
    cfg: &SamplerConfig,
    sched: &NoiseSchedule,
) -> Result<LatentVec> {
    let ns = cfg.warm_start.unwrap_or(1);
    let gamma = gamma_for(ns, sched)?;
    let mut z = z_init.clone();
    for w in step_grid(cfg.steps, ns)?.windows(2) {
        let (t, tp) = (w[0], w[1]);
        let eps = p.predict(&z, z_c, prompt, t)?;
        let z0 = if recovery_denominator(sched.alpha_bar(t), gamma).abs() <= cfg.singular_guard {
            p.singular_estimate(z_c, prompt)
        } else {
            predict_z0(&z, z_c, &eps, t, gamma, sched, cfg.singular_guard)?
        };
        z = reverse_step(&z, &z0, tp, t, sched)?;
    }
    Ok(z)
}

/// ω = 1 is pure conditional sampling, ω = 0 unconditional, and prompt
/// dropout fires at its nominal rate.
pub fn guidance(seed: u64, dropout_draws: usize) -> Check {
    const NAME: &str = "classifier-free guidance";
    wrap(NAME, |start| {
        let sched = ScheduleParams::default().build()?;
        let ns = 500;
        let (world, obs) = small_world()?;
        let p = AnalyticPredictor::new(&world, &obs, &sched, ns)?;
        let mut rng = seeded(seed ^ 0x6366);
        let (mut cond_ok, mut uncond_ok) = (true, true);
        for _ in 0..50 {
            let (class, z0) = world.sample(&mut rng);
            let z_c = z0.combine(1.0, &normal_vec(&mut rng, 4), 0.7)?;
            let eps = normal_vec(&mut rng, 4);
            let z_init = warm_start_with(&z_c, &eps, sched.alpha_bar(ns))?;
            for omega in [1.0, 0.0] {
                let cfg = SamplerConfig {
                    steps: 5,
                    warm_start: Some(ns),
                    omega,
                    ..Default::default()
                };
                let (got, _) = sample_from(z_init.clone(), eps.clone(), &z_c, &p, Some(class), &cfg, &sched)?;
                if omega == 1.0 {
                    let want = plain_sampling(&z_init, &z_c, &p, Some(class), &cfg, &sched)?;
                    cond_ok &= got.as_slice().iter().zip(want.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
                } else {
                    let want = plain_sampling(&z_init, &z_c, &p, None, &cfg, &sched)?;
                    uncond_ok &= got.max_abs_diff(&want) == 0.0;
                }
            }
        }
        let dropped = (0..dropout_draws).filter(|_| drop_prompt(&mut rng, 0.10)).count();
        let freq = dropped as f64 / dropout_draws as f64;
        let freq_ok = (freq - 0.10).abs() <= 0.01;
        Ok(Check::new(
            NAME,
            cond_ok && uncond_ok && freq_ok,
            format!(
                "omega=1 bitwise conditional: {cond_ok}, omega=0 unconditional: {uncond_ok}, \
                 dropout frequency {freq:.4} over {dropout_draws}"
            ),
            start,
        ))
    })
}

/// Loss gradient of the MLP against central differences on random
/// parameters, with all loss terms active.
pub fn mlp_gradient(seed: u64, probes: usize) -> Check {
    const NAME: &str = "MLP gradient";
    wrap(NAME, |start| {
        let sched = ScheduleParams::default().build()?;
        let ns = 500;
        let gamma = gamma_for(ns, &sched)?;
        let world = GaussianWorld::new(&WorldConfig::default())?;
        let mut rng = seeded(seed ^ 0x6772);
        let batch: Vec<_> = (0..4)
            .map(|_| {
                let (class, z0) = world.sample(&mut rng);
                let z_c = z0.combine(1.0, &normal_vec(&mut rng, 16), 0.3).unwrap();
                crate::denoiser::TrainingSample { z0, z_c, class }
            })
            .collect();
        let draws = draw_noise(&batch, ns, 0.1, &mut rng);
        let decoder = ToyDecoder::new(16, seed);
        let pixel = PixelTerms {
            decoder: &decoder,
            perceptual: &NoPerceptual,
            min_denominator: 0.1,
        };
        let weights = LossWeights::stage2();
        let mut model = MlpDenoiser::new(MlpShape::new(16, world.classes()), seed)?;
        let (_, grad) = mlp_loss_and_grad(&model, &batch, &draws, &sched, gamma, &weights, Some(&pixel))?;
        let h = 1e-5;
        let mut worst = 0f64;
        for _ in 0..probes {
            let i = rng.random_range(0..model.num_params());
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let up = staged_loss(&model, &batch, &draws, &sched, gamma, &weights, Some(&pixel))?.total;
            model.params_mut()[i] = orig - h;
            let down = staged_loss(&model, &batch, &draws, &sched, gamma, &weights, Some(&pixel))?.total;
            model.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / (1.0 + fd.abs().max(grad[i].abs())));
        }
        Ok(Check::new(NAME, worst < 1e-4, format!("{probes} probes, max relative error {worst:.2e}"), start))
    })
}

/// First-stage training on the default d = 16 world halves the loss.
pub fn mlp_training(seed: u64, steps: usize) -> Check {
    const NAME: &str = "MLP training";
    wrap(NAME, |start| {
        let ctx = TrialContext::new(ExperimentConfig::default())?;
        let data = training_set(&ctx, 2000, 10.0, seed)?;
        let cfg = TrainConfig {
            steps,
            seed,
            ..Default::default()
        };
        let gamma = gamma_for(cfg.warm_start, ctx.schedule())?;
        let mut rng = seeded(seed ^ 0x6576);
        let eval: Vec<_> = data.iter().take(512).cloned().collect();
        let draws = draw_noise(&eval, cfg.warm_start, 0.0, &mut rng);
        let weights = cfg.weights();
        let mut model = MlpDenoiser::new(MlpShape::new(16, ctx.world().classes()), seed)?;
        let before = staged_loss(&model, &eval, &draws, ctx.schedule(), gamma, &weights, None)?.total;
        train(&mut model, &data, &cfg, ctx.schedule(), None, &mut seeded(cfg.seed))?;
        let after = staged_loss(&model, &eval, &draws, ctx.schedule(), gamma, &weights, None)?.total;
        Ok(Check::new(
            NAME,
            after <= 0.5 * before,
            format!("{steps} steps, loss {before:.3} -> {after:.3} (ratio {:.3})", after / before),
            start,
        ))
    })
}

/// Measured SNR, Rayleigh gain power, and MMSE against zero forcing.
pub fn channel_statistics(seed: u64, symbols: usize) -> Check {
    const NAME: &str = "channel statistics";
    wrap(NAME, |start| {
        let mut rng = seeded(seed ^ 0x6368);
        let (x, _) = normalize_power(normal_vec(&mut rng, 2 * symbols).as_slice())?;
        let xs = pack_complex(&x)?;
        let mut details = Vec::new();
        let mut ok = true;
        for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
            let cfg = ChannelConfig { kind, snr_db: 10.0 };
            let (y, h) = transmit(&xs, &cfg, &mut rng);
            let (mut sig, mut noise, mut gain) = (0.0, 0.0, 0.0);
            for i in 0..symbols {
                let hx_re = h.re[i] * xs.re[i] - h.im[i] * xs.im[i];
                let hx_im = h.re[i] * xs.im[i] + h.im[i] * xs.re[i];
                sig += hx_re * hx_re + hx_im * hx_im;
                noise += (y.re[i] - hx_re).powi(2) + (y.im[i] - hx_im).powi(2);
                gain += h.re[i] * h.re[i] + h.im[i] * h.im[i];
            }
            let snr = 10.0 * (sig / noise).log10();
            let gain = gain / symbols as f64;
            ok &= (snr - 10.0).abs() <= 0.1;
            if kind == ChannelKind::Rayleigh {
                ok &= (gain - 1.0).abs() <= 0.01;
                details.push(format!("rayleigh snr {snr:.3} dB, E|h|^2 {gain:.4}"));
            } else {
                details.push(format!("awgn snr {snr:.3} dB"));
            }
        }
        let m = symbols.min(100_000);
        let xm = pack_complex(&x[..2 * m].iter().chain(&x[symbols..symbols + m]).copied().collect::<Vec<_>>())?;
        let cfg = ChannelConfig {
            kind: ChannelKind::Rayleigh,
            snr_db: 10.0,
        };
        let sigma2 = cfg.sigma2();
        let (y, h) = transmit(&xm, &cfg, &mut rng);
        let truth = unpack_complex(&xm);
        let err = |e: Vec<f64>| e.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64;
        let (mmse, zf) = (err(mmse_equalize(&y, &h, sigma2)), err(zf_equalize(&y, &h)));
        ok &= mmse <= zf;
        details.push(format!("mmse {mmse:.4} vs zf {zf:.4} over {m}"));
        Ok(Check::new(NAME, ok, format!("{symbols} symbols, {}", details.join(", ")), start))
    })
}

const CORPUS: &str = "\
a photo of a red bicycle leaning on a brick wall
a portrait of an old fisherman at dawn, oil painting
aerial view of a river delta with green fields and small villages
a cat sleeping on a stack of books next to a window
city street at night in the rain, neon reflections on wet asphalt
close-up of a honeybee on a sunflower, shallow depth of field
a snowy mountain cabin with smoke rising from the chimney
two children flying a kite on a windy beach in late afternoon
a bowl of ramen with a soft boiled egg and spring onions
an empty train platform under a glass roof, morning light
The quick brown fox jumps over the lazy dog. 0123456789 !?,.;:'\"()[]{}
";

/// Arithmetic-coding round trips on random byte strings and a text corpus.
pub fn source_coding(seed: u64, strings: usize) -> Check {
    const NAME: &str = "source coding round trip";
    wrap(NAME, |start| {
        let failures = (0..strings as u32)
            .into_par_iter()
            .map(|i| -> Result<usize> {
                let mut rng = trial_stream(seed, 0x6163, i);
                let len = rng.random_range(0..=256);
                let s: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                Ok(usize::from(ac_decode(&ac_encode(&s)?)? != s))
            })
            .sum::<Result<usize>>()?;
        let mut corpus_ok = true;
        let mut coded = 0;
        for line in CORPUS.lines().chain(std::iter::once(CORPUS)) {
            let enc = ac_encode(line.as_bytes())?;
            coded += enc.len();
            corpus_ok &= ac_decode(&enc)? == line.as_bytes();
        }
        Ok(Check::new(
            NAME,
            failures == 0 && corpus_ok,
            format!(
                "{strings} random strings, {failures} failures, corpus ok: {corpus_ok} ({} -> {coded} bytes)",
                2 * CORPUS.len()
            ),
            start,
        ))
    })
}

/// BER of the n = 1024 code with 50 BP iterations.
pub fn ldpc_ber(seed: u64, bits: usize) -> Check {
    const NAME: &str = "LDPC bit error rate";
    wrap(NAME, |start| {
        let code = LdpcCode::regular(1024, SideChannelConfig::default().code_seed)?;
        let mut pts = Vec::new();
        for ebn0 in [0.0, 2.0, 3.0, 4.0] {
            pts.push(measure_ber(&code, ebn0, bits, 50, seed)?);
        }
        let ber: Vec<f64> = pts.iter().map(|p| p.ber()).collect();
        let at3 = ber[2];
        let monotone = ber[0] >= ber[1] && ber[1] >= ber[3] && ber[0] > ber[3];
        let secs = start.elapsed().as_secs_f64();
        Ok(Check::new(
            NAME,
            at3 < 1e-3 && monotone && secs < 120.0,
            format!(
                "{} bits per point, BER 0 dB {:.2e}, 2 dB {:.2e}, 3 dB {:.2e}, 4 dB {:.2e}",
                pts[0].info_bits, ber[0], ber[1], ber[2], ber[3]
            ),
            start,
        ))
    })
}

/// 100-byte prompts through the full side channel at 6 dB.
pub fn prompt_frames(seed: u64, frames: usize) -> Check {
    const NAME: &str = "prompt frame delivery";
    wrap(NAME, |start| {
        let link = SideChannel::from_config(&SideChannelConfig::default())?;
        let reports = (0..frames as u32)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_stream(seed, 0x6672, i);
                let text: Vec<u8> = (0..100).map(|_| b"abcdefghijklmnopqrstuvwxyz "[rng.random_range(0..27)]).collect();
                let r = link.send_bytes(&text, 6.0, &mut rng)?;
                Ok((r.decoded.as_deref() == Some(&text[..]), r.k_o))
            })
            .collect::<Result<Vec<_>>>()?;
        let ok = reports.iter().filter(|r| r.0).count();
        let rate = ok as f64 / frames as f64;
        let k_o = reports.iter().map(|r| r.1).max().unwrap_or(0);
        Ok(Check::new(
            NAME,
            rate >= 0.99,
            format!("{ok}/{frames} frames at 6 dB, k_o up to {k_o}"),
            start,
        ))
    })
}

/// The CBR to N_s lookup reproduces the reference points.
pub fn ns_table() -> Check {
    const NAME: &str = "N_s lookup";
    wrap(NAME, |start| {
        let table = NsTable::default();
        let want = [(0.0020, 600), (0.0033, 500), (0.0059, 400), (0.011, 300)];
        let mut ok = true;
        let mut got = Vec::new();
        for (c, ns) in want {
            let v = ns_for_cbr(c, &table)?;
            ok &= v == ns;
            got.push(format!("{c}->{v}"));
        }
        Ok(Check::new(NAME, ok, got.join(", "), start))
    })
}

fn sweep_csv(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::error::Error::Io(std::io::Error::other(e)))?;
    pool.install(|| {
        let ctx = TrialContext::new(cfg.clone())?;
        let out = sweep(&ctx, Axis::Snr, cfg.trials)?;
        let mut buf = Vec::new();
        write_rows_csv(&out.rows, &metadata(cfg, Axis::Snr, cfg.trials)?, &mut buf)?;
        Ok(buf)
    })
}

/// An SNR sweep gives byte-identical output on repeated runs and on 1 and 4
/// threads.
pub fn sweep_determinism(seed: u64, trials: usize) -> Check {
    const NAME: &str = "sweep determinism";
    wrap(NAME, |start| {
        let cfg = ExperimentConfig {
            seed,
            trials,
            ..Default::default()
        };
        let a = sweep_csv(&cfg, 1)?;
        let b = sweep_csv(&cfg, 1)?;
        let c = sweep_csv(&cfg, 4)?;
        Ok(Check::new(
            NAME,
            a == b && a == c,
            format!("{} bytes, repeat identical: {}, 1 vs 4 threads identical: {}", a.len(), a == b, a == c),
            start,
        ))
    })
}

/// Wall time of MLP trials and of a 5-point SNR sweep with 200 trials, on
/// one thread.
pub fn trial_timing(seed: u64) -> Check {
    const NAME: &str = "trial timing";
    wrap(NAME, |start| {
        let cfg = ExperimentConfig {
            seed,
            trials: 200,
            predictor: PredictorKind::Mlp,
            ..Default::default()
        };
        let model = MlpDenoiser::new(MlpShape::new(cfg.world.dim, cfg.world.classes), seed)?;
        let ctx = TrialContext::new(cfg)?.with_mlp(model)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| crate::error::Error::Io(std::io::Error::other(e)))?;
        pool.install(|| {
            let point = ctx.points(Axis::Single)?[0];
            let t = Instant::now();
            let n = 100;
            for i in 0..n {
                ctx.run_trial(&point, i)?;
            }
            let per_trial = t.elapsed().as_secs_f64() / n as f64;
            let t = Instant::now();
            let out = sweep(&ctx, Axis::Snr, 200)?;
            let sweep_secs = t.elapsed().as_secs_f64();
            Ok(Check::new(
                NAME,
                per_trial < 0.010 && sweep_secs < 60.0 && out.points.len() == 5,
                format!(
                    "{:.3} ms per trial, {}-point sweep x 200 trials in {sweep_secs:.2} s",
                    per_trial * 1e3,
                    out.points.len()
                ),
                start,
            ))
        })
    })
}
