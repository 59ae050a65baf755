//! Jointly Gaussian toy world and the predictors that are exact in it.
//!
//! The clean latent follows a class-conditional Gaussian prior and the decoded
//! latent is a linear-Gaussian observation of it, `z_c = M·z0 + w`. Under that
//! model E[ε | z_t, z_c] has a closed form, which makes [`AnalyticPredictor`]
//! the Bayes-optimal noise predictor for the training objective.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{gamma_for, recovery_denominator, EpsilonPredictor, NoiseSchedule};
use crate::error::{Error, Result};
use crate::latent::{same_dim, LatentVec};
use crate::prompt::PromptClass;
use crate::rng::{seeded, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Latent dimension d = 2k'.
    pub dim: usize,
    pub classes: usize,
    /// Rank of the shared low-rank part of the class covariance.
    pub prior_rank: usize,
    /// Isotropic variance added to the low-rank part.
    pub floor_var: f64,
    /// Per-coordinate standard deviation carried by the low-rank part.
    pub factor_scale: f64,
    /// Per-coordinate standard deviation of the class means.
    pub mean_scale: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dim: 16,
            classes: 4,
            prior_rank: 2,
            floor_var: 0.01,
            factor_scale: 1.0,
            mean_scale: 1.0,
            seed: 0x0077_6f72_6c64,
        }
    }
}

/// Mixture of equal-weight Gaussians `N(μ_c, Σ0)` with a shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWorld {
    means: Vec<DVector<f64>>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianWorld {
    pub fn new(cfg: &WorldConfig) -> Result<Self> {
        if cfg.dim == 0 || cfg.classes == 0 {
            return Err(Error::config("world needs dim >= 1 and classes >= 1"));
        }
        if cfg.prior_rank > cfg.dim {
            return Err(Error::config(format!(
                "prior rank {} exceeds dimension {}",
                cfg.prior_rank, cfg.dim
            )));
        }
        if !(cfg.floor_var >= 0.0 && cfg.factor_scale >= 0.0 && cfg.mean_scale >= 0.0) {
            return Err(Error::config("world variances and scales must be >= 0"));
        }
        let d = cfg.dim;
        let mut rng = seeded(cfg.seed);
        let means = (0..cfg.classes)
            .map(|_| DVector::from_fn(d, |_, _| cfg.mean_scale * standard_normal(&mut rng)))
            .collect();
        let mut cov = DMatrix::identity(d, d) * cfg.floor_var;
        if cfg.prior_rank > 0 {
            let s = cfg.factor_scale / (cfg.prior_rank as f64).sqrt();
            let b = DMatrix::from_fn(d, cfg.prior_rank, |_, _| s * standard_normal(&mut rng));
            cov += &b * b.transpose();
        }
        Self::from_parts(means, cov)
    }

    /// Builds a world from explicit class means and a PSD covariance.
    pub fn from_parts(means: Vec<DVector<f64>>, cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if means.is_empty() || cov.ncols() != d || means.iter().any(|m| m.len() != d) {
            return Err(Error::config("world means and covariance have inconsistent shapes"));
        }
        let factor = psd_sqrt(&cov)?;
        Ok(GaussianWorld { means, cov, factor })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn class_mean(&self, class: usize) -> &DVector<f64> {
        &self.means[class]
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Prior of z0 given the class; `None` gives the moment-matched mixture.
    pub fn prior(&self, class: Option<PromptClass>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match class {
            Some(PromptClass(c)) => {
                let mean = self.means.get(c).ok_or_else(|| {
                    Error::contract(format!("class {c} outside world with {} classes", self.classes()))
                })?;
                Ok((mean.clone(), self.cov.clone()))
            }
            None => {
                let n = self.classes() as f64;
                let mean = self.means.iter().fold(DVector::zeros(self.dim()), |a, m| a + m) / n;
                let mut cov = self.cov.clone();
                for m in &self.means {
                    let dm = m - &mean;
                    cov += &dm * dm.transpose() / n;
                }
                Ok((mean, cov))
            }
        }
    }

    /// Draws a class uniformly and then z0 from that class.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (PromptClass, LatentVec) {
        let class = PromptClass(rng.random_range(0..self.classes()));
        let z = self.sample_class(class, rng);
        (class, z)
    }

    /// Draws z0 from one class; out-of-range classes wrap around.
    pub fn sample_class<R: Rng + ?Sized>(&self, class: PromptClass, rng: &mut R) -> LatentVec {
        let xi = DVector::from_fn(self.factor.ncols(), |_, _| standard_normal(rng));
        let z = &self.means[class.0 % self.classes()] + &self.factor * xi;
        LatentVec::new(z.as_slice().to_vec())
    }
}

/// `V·√Λ` for a symmetric PSD matrix, so that `F·Fᵀ` reproduces it.
fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let tol = psd_tolerance(&eig.eigenvalues);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::NumericalRank("covariance is not positive semidefinite".into()));
    }
    let mut f = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

fn psd_tolerance(eigenvalues: &DVector<f64>) -> f64 {
    let max = eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    1e-12 * max.max(1e-300) * eigenvalues.len() as f64
}

/// Moore–Penrose inverse of a symmetric PSD matrix via eigendecomposition.
fn psd_pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let tol = psd_tolerance(&eig.eigenvalues);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::NumericalRank("observation covariance is not positive semidefinite".into()));
    }
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol {
            let v = eig.eigenvectors.column(j);
            out += v * v.transpose() / l;
        }
    }
    Ok(out)
}

/// `z_c = gain·z0 + w` with `w ~ N(0, noise_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation {
    pub gain: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl LinearObservation {
    /// Noise-free identity observation.
    pub fn identity(dim: usize) -> Self {
        LinearObservation {
            gain: DMatrix::identity(dim, dim),
            noise_cov: DMatrix::zeros(dim, dim),
        }
    }

    /// Observation produced by projecting with `p` (row-major, `rows × cols`),
    /// scaling by `scale`, passing each real channel value through gain
    /// `gains[i]` with noise variance `noise_vars[i]`, and back-projecting with
    /// `shrink / scale`.
    pub fn linear_link(
        p: &[f64],
        rows: usize,
        cols: usize,
        gains: &[f64],
        noise_vars: &[f64],
        scale: f64,
        shrink: f64,
    ) -> Result<Self> {
        if p.len() != rows * cols || gains.len() != rows || noise_vars.len() != rows {
            return Err(Error::contract("link model shapes disagree"));
        }
        if !(scale > 0.0) {
            return Err(Error::contract("link model needs a positive power scale"));
        }
        let p = DMatrix::from_row_slice(rows, cols, p);
        let pt = p.transpose();
        let g = DMatrix::from_diagonal(&DVector::from_column_slice(gains));
        let v = DMatrix::from_diagonal(&DVector::from_column_slice(noise_vars));
        let w = shrink / scale;
        Ok(LinearObservation {
            gain: &pt * g * &p * shrink,
            noise_cov: &pt * v * &p * (w * w),
        })
    }
}

/// Gaussian posterior of z0 given z_c under one prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorModel {
    prior_mean: DVector<f64>,
    obs_gain: DMatrix<f64>,
    kalman: DMatrix<f64>,
    cov: DMatrix<f64>,
}

impl PosteriorModel {
    pub fn new(prior_mean: DVector<f64>, prior_cov: &DMatrix<f64>, obs: &LinearObservation) -> Result<Self> {
        let d = prior_mean.len();
        if prior_cov.shape() != (d, d) || obs.gain.shape() != (d, d) || obs.noise_cov.shape() != (d, d) {
            return Err(Error::contract("posterior model shapes disagree"));
        }
        let sm_t = prior_cov * obs.gain.transpose();
        let innov = &obs.gain * &sm_t + &obs.noise_cov;
        let innov = (&innov + innov.transpose()) * 0.5;
        let kalman = &sm_t * psd_pinv(&innov)?;
        let cov = prior_cov - &kalman * sm_t.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(PosteriorModel {
            prior_mean,
            obs_gain: obs.gain.clone(),
            kalman,
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    /// E[z0 | z_c].
    pub fn mean(&self, z_c: &[f64]) -> DVector<f64> {
        let zc = DVector::from_column_slice(z_c);
        &self.prior_mean + &self.kalman * (zc - &self.obs_gain * &self.prior_mean)
    }

    /// Cov(z0 | z_c).
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// E[ε | z_t, z_c] at step `t` for residual weight `gamma`.
    pub fn epsilon(&self, z_t: &LatentVec, z_c: &LatentVec, alpha_bar: f64, gamma: f64) -> Result<LatentVec> {
        same_dim(z_t, z_c)?;
        if z_t.dim() != self.dim() {
            return Err(Error::contract("latent dimension does not match the world"));
        }
        if !(alpha_bar < 1.0) {
            return Err(Error::contract("analytic epsilon needs t >= 1"));
        }
        let sn = (1.0 - alpha_bar).sqrt();
        let c = recovery_denominator(alpha_bar, gamma);
        let m = self.mean(z_c.as_slice());
        // z_t = c·z0 + sn·γ·z_c + sn·ε, so u = c·z0 + sn·ε
        let u = DVector::from_iterator(
            self.dim(),
            z_t.as_slice().iter().zip(z_c.as_slice()).map(|(a, b)| a - sn * gamma * b),
        );
        let mut a = &self.cov * (c * c);
        for i in 0..self.dim() {
            a[(i, i)] += 1.0 - alpha_bar;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::NumericalRank("conditional covariance of z_t is singular".into()))?;
        let resid = &u - &m * c;
        let z0 = &m + &self.cov * chol.solve(&resid) * c;
        let eps = (u - z0 * c) / sn;
        Ok(LatentVec::new(eps.as_slice().to_vec()))
    }
}

/// Closed-form E[ε | z_t, z_c] for the posterior implied by `prior` and `obs`.
pub fn analytic_epsilon(
    posterior: &PosteriorModel,
    z_t: &LatentVec,
    z_c: &LatentVec,
    t: usize,
    gamma: f64,
    sched: &NoiseSchedule,
) -> Result<LatentVec> {
    if t == 0 || t > sched.steps() {
        return Err(Error::Domain(format!("step {t} outside 1..={}", sched.steps())));
    }
    posterior.epsilon(z_t, z_c, sched.alpha_bar(t), gamma)
}

/// Bayes-optimal predictor for one observation model.
#[derive(Debug, Clone)]
pub struct AnalyticPredictor<'a> {
    cond: Vec<PosteriorModel>,
    uncond: PosteriorModel,
    sched: &'a NoiseSchedule,
    gamma: f64,
}

impl<'a> AnalyticPredictor<'a> {
    pub fn new(
        world: &GaussianWorld,
        obs: &LinearObservation,
        sched: &'a NoiseSchedule,
        warm_start: usize,
    ) -> Result<Self> {
        let cond = (0..world.classes())
            .map(|c| {
                let (m, s) = world.prior(Some(PromptClass(c)))?;
                PosteriorModel::new(m, &s, obs)
            })
            .collect::<Result<_>>()?;
        let (m, s) = world.prior(None)?;
        Ok(AnalyticPredictor {
            cond,
            uncond: PosteriorModel::new(m, &s, obs)?,
            sched,
            gamma: gamma_for(warm_start, sched)?,
        })
    }

    pub fn posterior(&self, prompt: Option<PromptClass>) -> Result<&PosteriorModel> {
        match prompt {
            None => Ok(&self.uncond),
            Some(PromptClass(c)) => self
                .cond
                .get(c)
                .ok_or_else(|| Error::contract(format!("prompt class {c} unknown to the world"))),
        }
    }
}

impl EpsilonPredictor for AnalyticPredictor<'_> {
    fn predict(
        &self,
        z_t: &LatentVec,
        z_c: &LatentVec,
        prompt: Option<PromptClass>,
        t: usize,
    ) -> Result<LatentVec> {
        analytic_epsilon(self.posterior(prompt)?, z_t, z_c, t, self.gamma, self.sched)
    }

    /// The posterior mean, which is all the singular step can know.
    fn singular_estimate(&self, z_c: &LatentVec, prompt: Option<PromptClass>) -> LatentVec {
        match self.posterior(prompt) {
            Ok(p) if z_c.dim() == p.dim() => LatentVec::new(p.mean(z_c.as_slice()).as_slice().to_vec()),
            _ => z_c.clone(),
        }
    }
}

/// Test oracle that knows the true z0 and returns the exact noise.
#[derive(Debug, Clone)]
pub struct ExactOracle<'a> {
    z0: LatentVec,
    sched: &'a NoiseSchedule,
    gamma: f64,
}

impl<'a> ExactOracle<'a> {
    pub fn new(z0: LatentVec, sched: &'a NoiseSchedule, warm_start: usize) -> Result<Self> {
        Ok(ExactOracle {
            z0,
            sched,
            gamma: gamma_for(warm_start, sched)?,
        })
    }
}

impl EpsilonPredictor for ExactOracle<'_> {
    fn predict(
        &self,
        z_t: &LatentVec,
        z_c: &LatentVec,
        _prompt: Option<PromptClass>,
        t: usize,
    ) -> Result<LatentVec> {
        same_dim(z_t, &self.z0)?;
        same_dim(z_c, &self.z0)?;
        if t == 0 || t > self.sched.steps() {
            return Err(Error::Domain(format!("step {t} outside 1..={}", self.sched.steps())));
        }
        let ab = self.sched.alpha_bar(t);
        let sn = (1.0 - ab).sqrt();
        let c = recovery_denominator(ab, self.gamma);
        let values = z_t
            .as_slice()
            .iter()
            .zip(self.z0.as_slice())
            .zip(z_c.as_slice())
            .map(|((zt, x0), xc)| (zt - c * x0 - sn * self.gamma * xc) / sn)
            .collect();
        Ok(LatentVec::new(values))
    }

    fn singular_estimate(&self, _z_c: &LatentVec, _prompt: Option<PromptClass>) -> LatentVec {
        self.z0.clone()
    }
}
