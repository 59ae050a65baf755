//! Benchmark fixtures shared by the criterion targets.

use gencomm::denoiser::MlpShape;
use gencomm::{ExperimentConfig, MlpDenoiser, PredictorKind, Result, TrialContext};

/// Default experiment with an untrained MLP installed; trial cost does not
/// depend on the weights.
pub fn mlp_context() -> Result<TrialContext> {
    let cfg = ExperimentConfig {
        predictor: PredictorKind::Mlp,
        ..Default::default()
    };
    let model = MlpDenoiser::new(MlpShape::new(cfg.world.dim, cfg.world.classes), 1)?;
    TrialContext::new(cfg)?.with_mlp(model)
}

pub fn analytic_context() -> Result<TrialContext> {
    TrialContext::new(ExperimentConfig::default())
}
