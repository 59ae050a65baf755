//! Noise schedule, warm-start residual-noise forward process and the
//! deterministic guided sampler.

mod coeffs;
mod forward;
mod sampler;
mod schedule;

pub use coeffs::{
    coeffs_from_alpha_bars, ddim_sigma, gamma_for, gamma_from_alpha_bar, sigma_from_alpha_bars,
    update_coeffs, UpdateCoeffs,
};
pub use forward::{
    predict_z0, recovery_denominator, residual_forward, warm_start, warm_start_with,
};
pub use sampler::{
    cfg_combine, reverse_step, sample, sample_from, step_grid, EpsilonPredictor, SampleTrace,
    SamplerConfig, TraceStep,
};
pub use schedule::{BetaSchedule, NoiseSchedule, ScheduleParams};
