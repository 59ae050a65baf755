//! One end-to-end transmission.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PredictorKind};
use super::metrics::{mse, psnr};
use super::ns::ns_for_cbr;
use crate::channel::{mmse_equalize, mmse_statistics, pack_complex, transmit};
use crate::denoiser::{AnalyticPredictor, ExactOracle, GaussianWorld, LinearObservation, MlpDenoiser};
use crate::diffusion::{sample, NoiseSchedule, SampleTrace, SamplerConfig};
use crate::error::{Error, Result};
use crate::jscc::{cbr, decode, encode, CodecConfig, LatentCodec, LinearCodec};
use crate::latent::LatentVec;
use crate::prompt::PromptClass;
use crate::rng::trial_stream;
use crate::sidechannel::SideChannel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// The single operating point of the configuration.
    Single,
    Snr,
    Cbr,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Single => "single",
            Axis::Snr => "snr",
            Axis::Cbr => "cbr",
        }
    }
}

/// Fully resolved operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: u32,
    pub snr_db: f64,
    pub cbr: f64,
    pub k: usize,
    pub n_s: usize,
}

/// One row of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub axis_index: u32,
    pub trial: u32,
    #[serde(with = "super::results::float_repr")]
    pub snr_db: f64,
    #[serde(with = "super::results::float_repr")]
    pub cbr: f64,
    pub n_s: usize,
    pub k: usize,
    pub k_o: usize,
    #[serde(with = "super::results::float_repr")]
    pub mse_coarse: f64,
    #[serde(with = "super::results::float_repr")]
    pub mse_refined: f64,
    #[serde(with = "super::results::float_repr")]
    pub psnr_coarse: f64,
    #[serde(with = "super::results::float_repr")]
    pub psnr_refined: f64,
    /// Batch-level value shared by all rows of an operating point.
    #[serde(with = "super::results::opt_float_repr")]
    pub frechet_gauss: Option<f64>,
    pub prompt_ok: bool,
    pub error: Option<String>,
    /// Seconds spent in the trial; kept out of result files.
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunResult {
    pub(crate) fn failed(point: &SweepPoint, trial: u32, err: &Error) -> Self {
        RunResult {
            axis_index: point.index,
            trial,
            snr_db: point.snr_db,
            cbr: point.cbr,
            n_s: point.n_s,
            k: point.k,
            k_o: 0,
            mse_coarse: f64::NAN,
            mse_refined: f64::NAN,
            psnr_coarse: f64::NAN,
            psnr_refined: f64::NAN,
            frechet_gauss: None,
            prompt_ok: false,
            error: Some(err.to_string()),
            wall_time: 0.0,
        }
    }
}

/// A trial's row together with the vectors it produced.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub row: RunResult,
    pub class: PromptClass,
    pub z0: LatentVec,
    pub z_c: LatentVec,
    pub z_hat: LatentVec,
    pub trace: SampleTrace,
    /// Per-dimension trace of Cov(z0 | z_c, prompt); analytic predictor only.
    pub posterior_var: Option<f64>,
}

/// Immutable state shared by all trials of an experiment.
#[derive(Debug, Clone)]
pub struct TrialContext {
    cfg: ExperimentConfig,
    sched: NoiseSchedule,
    world: GaussianWorld,
    codecs: BTreeMap<usize, LinearCodec>,
    link: SideChannel,
    mlp: Option<MlpDenoiser>,
}

impl TrialContext {
    /// Builds the shared state. An MLP checkpoint named in the config is
    /// loaded here.
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let sched = cfg.schedule.build()?;
        let world = GaussianWorld::new(&cfg.world)?;
        let link = SideChannel::from_config(&cfg.side_channel)?;
        // codecs for sweep points that do not fit k' are left out; asking
        // for those points reports the error
        let mut codecs = BTreeMap::new();
        codecs.insert(cfg.codec.k, LinearCodec::new(&cfg.codec)?);
        for &c in &cfg.sweep.cbr {
            let cc = CodecConfig { k: crate::jscc::k_for_cbr(c, &cfg.codec), ..cfg.codec };
            if cc.validate().is_ok() && !codecs.contains_key(&cc.k) {
                codecs.insert(cc.k, LinearCodec::new(&cc)?);
            }
        }
        let mut ctx = TrialContext {
            cfg,
            sched,
            world,
            codecs,
            link,
            mlp: None,
        };
        if ctx.cfg.predictor == PredictorKind::Mlp {
            if let Some(path) = ctx.cfg.mlp_checkpoint.clone() {
                let model = MlpDenoiser::load(&path).map_err(|e| match e {
                    Error::Io(io) => Error::config(format!("cannot read checkpoint {}: {io}", path.display())),
                    other => other,
                })?;
                ctx = ctx.with_mlp(model)?;
            }
        }
        Ok(ctx)
    }

    /// Installs the MLP predictor.
    pub fn with_mlp(mut self, model: MlpDenoiser) -> Result<Self> {
        let s = model.shape();
        if s.dim != self.world.dim() || s.classes != self.world.classes() {
            return Err(Error::config(format!(
                "MLP shape (dim {}, classes {}) does not match the world (dim {}, classes {})",
                s.dim,
                s.classes,
                self.world.dim(),
                self.world.classes()
            )));
        }
        self.mlp = Some(model);
        Ok(self)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    pub fn world(&self) -> &GaussianWorld {
        &self.world
    }

    pub fn side_channel(&self) -> &SideChannel {
        &self.link
    }

    pub fn codec(&self, k: usize) -> Result<&LinearCodec> {
        self.codecs
            .get(&k)
            .ok_or_else(|| Error::config(format!("no codec prepared for k = {k}")))
    }

    fn point(&self, index: u32, snr_db: f64, k: usize, cbr_value: f64) -> Result<SweepPoint> {
        let n_s = match self.cfg.sampler.warm_start {
            Some(ns) => ns,
            None => ns_for_cbr(cbr_value, &self.cfg.ns_table)?,
        };
        let sampler = SamplerConfig {
            warm_start: Some(n_s),
            ..self.cfg.sampler
        };
        sampler.validate(&self.sched)?;
        if !self.codecs.contains_key(&k) {
            CodecConfig { k, ..self.cfg.codec }.validate()?;
            self.codec(k)?;
        }
        Ok(SweepPoint {
            index,
            snr_db,
            cbr: cbr_value,
            k,
            n_s,
        })
    }

    /// Operating points of an axis, with N_s resolved and validated.
    pub fn points(&self, axis: Axis) -> Result<Vec<SweepPoint>> {
        let base_cbr = cbr(&self.cfg.codec);
        let pts = match axis {
            Axis::Single => vec![self.point(0, self.cfg.channel.snr_db, self.cfg.codec.k, base_cbr)?],
            Axis::Snr => self
                .cfg
                .sweep
                .snr_db
                .iter()
                .enumerate()
                .map(|(i, &s)| self.point(i as u32, s, self.cfg.codec.k, base_cbr))
                .collect::<Result<_>>()?,
            Axis::Cbr => self
                .cfg
                .sweep
                .cbr
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let k = crate::jscc::k_for_cbr(c, &self.cfg.codec);
                    self.point(i as u32, self.cfg.channel.snr_db, k, c)
                })
                .collect::<Result<_>>()?,
        };
        if pts.is_empty() {
            return Err(Error::config(format!("sweep axis {} is empty", axis.name())));
        }
        Ok(pts)
    }

    /// Runs trial `trial` at `point`; the random stream depends only on the
    /// master seed, the point index and the trial id.
    pub fn run_trial(&self, point: &SweepPoint, trial: u32) -> Result<TrialOutcome> {
        let start = Instant::now();
        self.run_inner(point, trial, start)
            .map_err(|e| Error::Trial {
                trial: trial as u64,
                source: Box::new(e),
            })
    }

    fn run_inner(&self, point: &SweepPoint, trial: u32, start: Instant) -> Result<TrialOutcome> {
        let cfg = &self.cfg;
        let mut rng = trial_stream(cfg.seed, point.index, trial);

        let class = match &cfg.prompt {
            Some(text) => PromptClass::from_text(text, self.world.classes()),
            None => PromptClass(rand::Rng::random_range(&mut rng, 0..self.world.classes())),
        };
        let z0 = self.world.sample_class(class, &mut rng);

        let codec = self.codec(point.k)?;
        let channel = crate::channel::ChannelConfig {
            snr_db: point.snr_db,
            ..cfg.channel
        };
        let sigma2 = channel.sigma2();
        let enc = encode(codec, z0.as_slice())?;
        let (y, h) = transmit(&pack_complex(&enc.x)?, &channel, &mut rng);
        let x_hat = mmse_equalize(&y, &h, sigma2);
        let z_c = LatentVec::new(decode(codec, &x_hat, enc.scale, sigma2)?);

        let text = cfg.prompt.clone().unwrap_or_else(|| class.to_text());
        let sc_snr = cfg.side_channel.snr_db.unwrap_or(point.snr_db);
        let report = self.link.send_prompt(&text, sc_snr, &mut rng)?;
        let received = report
            .decoded_text()
            .map(|t| PromptClass::from_text(t, self.world.classes()));

        let sampler = SamplerConfig {
            warm_start: Some(point.n_s),
            ..cfg.sampler
        };
        let mut posterior_var = None;
        let (z_hat, trace) = match cfg.predictor {
            PredictorKind::Analytic => {
                let (gains, vars) = mmse_statistics(&h, sigma2);
                let gains: Vec<f64> = gains.iter().chain(&gains).copied().collect();
                let vars: Vec<f64> = vars.iter().chain(&vars).copied().collect();
                let shrink = 1.0 / (1.0 + codec.tikhonov_lambda() * sigma2);
                let obs = LinearObservation::linear_link(
                    codec.matrix(),
                    codec.channel_len(),
                    codec.latent_len(),
                    &gains,
                    &vars,
                    enc.scale,
                    shrink,
                )?;
                let p = AnalyticPredictor::new(&self.world, &obs, &self.sched, point.n_s)?;
                let s = p.posterior(received)?.cov();
                posterior_var = Some(s.trace() / s.nrows() as f64);
                sample(&z_c, &p, received, &sampler, &self.sched, &mut rng)?
            }
            PredictorKind::ExactOracle => {
                let p = ExactOracle::new(z0.clone(), &self.sched, point.n_s)?;
                sample(&z_c, &p, received, &sampler, &self.sched, &mut rng)?
            }
            PredictorKind::Mlp => {
                let p = self
                    .mlp
                    .as_ref()
                    .ok_or_else(|| Error::config("predictor \"mlp\" needs mlp_checkpoint"))?;
                sample(&z_c, p, received, &sampler, &self.sched, &mut rng)?
            }
        };
        if !z_hat.is_finite() {
            return Err(Error::Domain("sampler produced a non-finite latent".into()));
        }

        let mse_coarse = mse(&z0, &z_c)?;
        let mse_refined = mse(&z0, &z_hat)?;
        let peak = cfg.metrics.psnr_peak;
        let row = RunResult {
            axis_index: point.index,
            trial,
            snr_db: point.snr_db,
            cbr: point.cbr,
            n_s: point.n_s,
            k: point.k,
            k_o: report.k_o,
            mse_coarse,
            mse_refined,
            psnr_coarse: psnr(mse_coarse, peak),
            psnr_refined: psnr(mse_refined, peak),
            frechet_gauss: None,
            prompt_ok: report.ok(),
            error: None,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok(TrialOutcome {
            row,
            class,
            z0,
            z_c,
            z_hat,
            trace,
            posterior_var,
        })
    }
}
