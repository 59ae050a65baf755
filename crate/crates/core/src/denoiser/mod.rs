//! Noise predictors: the closed-form predictor of the Gaussian toy world, a
//! test oracle, and a trainable MLP with its staged objectives.

pub mod loss;
pub mod mlp;
pub mod train;
pub mod world;

pub use loss::{
    draw_noise, drop_prompt, loss_diffusion, loss_stage1, loss_stage2, mlp_loss_and_grad, staged_loss,
    LossBreakdown, LossWeights, NoPerceptual, NoiseDraw, PerceptualLoss, PixelTerms, ToyDecoder,
    TrainingSample,
};
pub use mlp::{time_embedding, MlpDenoiser, MlpShape};
pub use train::{train, write_loss_csv, LossRecord, OptimizerKind, TrainConfig};
pub use world::{
    analytic_epsilon, AnalyticPredictor, ExactOracle, GaussianWorld, LinearObservation, PosteriorModel,
    WorldConfig,
};
