//! Training pairs drawn through the same encode / channel / decode chain
//! as a trial.

use rand::Rng;

use super::trial::TrialContext;
use crate::channel::{mmse_equalize, pack_complex, transmit, ChannelConfig};
use crate::denoiser::TrainingSample;
use crate::error::{Error, Result};
use crate::jscc::{decode, encode};
use crate::latent::LatentVec;
use crate::prompt::PromptClass;
use crate::rng::trial_stream;

const DATASET_AXIS: u32 = u32::MAX - 1;

/// `n` samples (z0, z_c, class) at `snr_db`, using the base codec of the
/// context. Sample `i` depends only on `seed` and `i`.
pub fn training_set(ctx: &TrialContext, n: usize, snr_db: f64, seed: u64) -> Result<Vec<TrainingSample>> {
    if n == 0 {
        return Err(Error::config("training set size must be >= 1"));
    }
    let cfg = ctx.config();
    let codec = ctx.codec(cfg.codec.k)?;
    let channel = ChannelConfig { snr_db, ..cfg.channel };
    let sigma2 = channel.sigma2();
    let world = ctx.world();
    (0..n)
        .map(|i| {
            let mut rng = trial_stream(seed, DATASET_AXIS, i as u32);
            let class = PromptClass(rng.random_range(0..world.classes()));
            let z0 = world.sample_class(class, &mut rng);
            let enc = encode(codec, z0.as_slice())?;
            let (y, h) = transmit(&pack_complex(&enc.x)?, &channel, &mut rng);
            let z_c = LatentVec::new(decode(codec, &mmse_equalize(&y, &h, sigma2), enc.scale, sigma2)?);
            Ok(TrainingSample { z0, z_c, class })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ExperimentConfig;

    #[test]
    fn deterministic_and_sized() {
        let ctx = TrialContext::new(ExperimentConfig::default()).unwrap();
        let a = training_set(&ctx, 5, 10.0, 3).unwrap();
        let b = training_set(&ctx, 5, 10.0, 3).unwrap();
        assert_eq!(a.len(), 5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.z0, y.z0);
            assert_eq!(x.z_c, y.z_c);
        }
        assert_eq!(a[0].z0.dim(), ctx.world().dim());
        assert!(training_set(&ctx, 0, 10.0, 3).is_err());
    }
}
