//! Desk-scale simulator of diffusion-refined semantic transmission: a linear
//! latent codec over AWGN or Rayleigh channels, a warm-start residual-noise
//! sampler with classifier-free guidance, and a coded side channel for the
//! text prompt.

pub mod channel;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod jscc;
pub mod latent;
pub mod pipeline;
pub mod prompt;
pub mod rng;
pub mod sidechannel;
pub mod verify;

pub use channel::{ChannelConfig, ChannelKind};
pub use denoiser::{MlpDenoiser, TrainConfig, WorldConfig};
pub use diffusion::{NoiseSchedule, SamplerConfig, ScheduleParams};
pub use error::{Error, Result};
pub use jscc::{CodecConfig, LinearCodec};
pub use latent::LatentVec;
pub use pipeline::{Axis, ExperimentConfig, OutputFormat, PredictorKind, RunResult, SweepOutput, TrialContext};
pub use prompt::PromptClass;
pub use sidechannel::{LdpcCode, SideChannelConfig};
