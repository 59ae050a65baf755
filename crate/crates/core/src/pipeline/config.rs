//! Experiment configuration, read from TOML.
//!
//! Every section is optional and falls back to its defaults, but the file must
//! carry `spec_version` so that stale configurations are rejected rather than
//! silently reinterpreted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ns::NsTable;
use crate::channel::ChannelConfig;
use crate::denoiser::{TrainConfig, WorldConfig};
use crate::diffusion::{SamplerConfig, ScheduleParams};
use crate::error::{Error, Result};
use crate::jscc::CodecConfig;
use crate::sidechannel::SideChannelConfig;

/// Configuration schema version understood by this build.
pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Analytic,
    Mlp,
    ExactOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub snr_db: Vec<f64>,
    pub cbr: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        SweepAxes {
            snr_db: vec![1.0, 4.0, 7.0, 10.0, 13.0],
            cbr: vec![0.0020, 0.0033, 0.0059, 0.011],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Dynamic range used for PSNR.
    pub psnr_peak: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { psnr_peak: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub spec_version: u32,
    pub seed: u64,
    pub trials: usize,
    pub predictor: PredictorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp_checkpoint: Option<PathBuf>,
    /// Fixed prompt text; by default each trial sends its own class label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub world: WorldConfig,
    pub codec: CodecConfig,
    pub channel: ChannelConfig,
    pub schedule: ScheduleParams,
    pub sampler: SamplerConfig,
    pub side_channel: SideChannelConfig,
    pub ns_table: NsTable,
    pub sweep: SweepAxes,
    pub metrics: MetricsConfig,
    pub train: TrainConfig,
    /// Size of the generated training set.
    pub train_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spec_version: SPEC_VERSION,
            seed: 0,
            trials: 100,
            predictor: PredictorKind::Analytic,
            mlp_checkpoint: None,
            prompt: None,
            world: WorldConfig::default(),
            codec: CodecConfig::default(),
            channel: ChannelConfig::default(),
            schedule: ScheduleParams::default(),
            sampler: SamplerConfig::default(),
            side_channel: SideChannelConfig::default(),
            ns_table: NsTable::default(),
            sweep: SweepAxes::default(),
            metrics: MetricsConfig::default(),
            train: TrainConfig::default(),
            train_samples: 2000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        if !value.contains_key("spec_version") {
            return Err(Error::config("config file lacks the spec_version field"));
        }
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(p) = cfg.mlp_checkpoint.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::config(format!(
                "spec_version {} is not supported (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        self.codec.validate()?;
        if self.world.dim != 2 * self.codec.k_prime {
            return Err(Error::config(format!(
                "world.dim = {} must equal 2·codec.k_prime = {}",
                self.world.dim,
                2 * self.codec.k_prime
            )));
        }
        self.schedule.build()?;
        self.ns_table.validate()?;
        if self.side_channel.max_iters == 0 {
            return Err(Error::config("side_channel.max_iters must be >= 1"));
        }
        self.train.validate()?;
        if self.train_samples == 0 {
            return Err(Error::config("train_samples must be >= 1"));
        }
        if !(self.metrics.psnr_peak > 0.0) {
            return Err(Error::config("metrics.psnr_peak must be > 0"));
        }
        if self.channel.snr_db.is_nan() || self.sweep.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::config("SNR values must not be NaN"));
        }
        if self.sweep.cbr.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::config("sweep CBR values must be > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let cfg = ExperimentConfig::from_toml_str("spec_version = 1\nseed = 9\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.trials, 100);
    }

    #[test]
    fn version_required_and_checked() {
        assert!(ExperimentConfig::from_toml_str("seed = 9\n").unwrap_err().is_config());
        assert!(ExperimentConfig::from_toml_str("spec_version = 2\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentConfig::from_toml_str("spec_version = 1\n[codec]\nkk = 3\n").unwrap_err();
        assert!(e.is_config(), "{e}");
    }

    #[test]
    fn nested_sections() {
        let text = r#"
spec_version = 1
predictor = "exact_oracle"
[codec]
k_prime = 4
k = 1
[world]
dim = 8
[channel]
kind = "rayleigh"
snr_db = 5.0
[sampler]
warm_start = 500
omega = 1.0
[ns_table]
entries = [[0.001, 700], [0.01, 200]]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.predictor, PredictorKind::ExactOracle);
        assert_eq!(cfg.sampler.warm_start, Some(500));
        assert_eq!(cfg.ns_table.entries[1], (0.01, 200));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn inconsistent_dims() {
        let e = ExperimentConfig::from_toml_str("spec_version = 1\n[world]\ndim = 6\n").unwrap_err();
        assert!(e.is_config());
    }
}
