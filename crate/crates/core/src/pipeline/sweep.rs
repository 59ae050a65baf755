//! Trial grids over an axis and their aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::frechet_gauss;
use super::results::{float_repr, opt_float_repr};
use super::trial::{Axis, RunResult, SweepPoint, TrialContext};
use crate::error::Result;
use crate::latent::LatentVec;

/// Mean and spread of the rows at one operating point. Failed trials are
/// counted but excluded from the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub axis_index: u32,
    #[serde(with = "float_repr")]
    pub snr_db: f64,
    #[serde(with = "float_repr")]
    pub cbr: f64,
    pub n_s: usize,
    pub k: usize,
    pub trials: usize,
    pub failures: usize,
    #[serde(with = "float_repr")]
    pub k_o_mean: f64,
    #[serde(with = "float_repr")]
    pub mse_coarse_mean: f64,
    #[serde(with = "float_repr")]
    pub mse_coarse_std: f64,
    #[serde(with = "float_repr")]
    pub mse_refined_mean: f64,
    #[serde(with = "float_repr")]
    pub mse_refined_std: f64,
    #[serde(with = "float_repr")]
    pub psnr_coarse_mean: f64,
    #[serde(with = "float_repr")]
    pub psnr_refined_mean: f64,
    #[serde(with = "opt_float_repr")]
    pub frechet_gauss: Option<f64>,
    #[serde(with = "float_repr")]
    pub prompt_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
    pub rows: Vec<RunResult>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates the rows of one point.
pub fn aggregate(point: &SweepPoint, rows: &[RunResult], frechet: Option<f64>) -> AggregateRow {
    let ok: Vec<&RunResult> = rows.iter().filter(|r| r.error.is_none()).collect();
    let col = |f: fn(&RunResult) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let (mc, sc) = mean_std(&col(|r| r.mse_coarse));
    let (mr, sr) = mean_std(&col(|r| r.mse_refined));
    AggregateRow {
        axis_index: point.index,
        snr_db: point.snr_db,
        cbr: point.cbr,
        n_s: point.n_s,
        k: point.k,
        trials: rows.len(),
        failures: rows.len() - ok.len(),
        k_o_mean: mean_std(&col(|r| r.k_o as f64)).0,
        mse_coarse_mean: mc,
        mse_coarse_std: sc,
        mse_refined_mean: mr,
        mse_refined_std: sr,
        psnr_coarse_mean: mean_std(&col(|r| r.psnr_coarse)).0,
        psnr_refined_mean: mean_std(&col(|r| r.psnr_refined)).0,
        frechet_gauss: frechet,
        prompt_success: if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().filter(|r| r.prompt_ok).count() as f64 / ok.len() as f64
        },
    }
}

/// Runs `trials` trials at every point of `axis`.
///
/// Trials run on the current rayon pool. Failed trials become rows carrying
/// the error message; only configuration problems abort the sweep. Output
/// order is by (point, trial) regardless of scheduling.
pub fn sweep(ctx: &TrialContext, axis: Axis, trials: usize) -> Result<SweepOutput> {
    let points = ctx.points(axis)?;
    let jobs: Vec<(usize, u32)> = (0..points.len())
        .flat_map(|p| (0..trials as u32).map(move |t| (p, t)))
        .collect();
    let outcomes: Vec<(RunResult, Option<(LatentVec, LatentVec)>)> = jobs
        .par_iter()
        .map(|&(p, t)| match ctx.run_trial(&points[p], t) {
            Ok(o) => (o.row, Some((o.z0, o.z_hat))),
            Err(e) => (RunResult::failed(&points[p], t, &e), None),
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut aggregates = Vec::with_capacity(points.len());
    for (p, chunk) in outcomes.chunks(trials.max(1)).enumerate() {
        let (clean, refined): (Vec<LatentVec>, Vec<LatentVec>) =
            chunk.iter().filter_map(|(_, v)| v.clone()).unzip();
        let frechet = frechet_gauss(&refined, &clean).ok();
        let mut point_rows: Vec<RunResult> = chunk.iter().map(|(r, _)| r.clone()).collect();
        for r in &mut point_rows {
            r.frechet_gauss = frechet;
        }
        aggregates.push(aggregate(&points[p], &point_rows, frechet));
        rows.extend(point_rows);
    }
    rows.sort_by_key(|r| (r.axis_index, r.trial));
    Ok(SweepOutput {
        axis,
        points,
        rows,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
        assert!(mean_std(&[]).0.is_nan());
    }
}
