// Closed-form ε prediction against a Monte Carlo least-squares regression of
// ε on (z_t, z_c). For one class everything is jointly Gaussian, so the
// conditional mean is affine and the regression converges to it.

use gencomm::denoiser::{AnalyticPredictor, GaussianWorld, LinearObservation, WorldConfig};
use gencomm::diffusion::{gamma_for, residual_forward, EpsilonPredictor, ScheduleParams};
use gencomm::rng::{normal_vec, seeded};
use gencomm::{LatentVec, PromptClass};
use nalgebra::{DMatrix, DVector};

#[test]
fn analytic_epsilon_matches_regression() {
    let d = 4;
    let world = GaussianWorld::new(&WorldConfig {
        dim: d,
        classes: 2,
        ..Default::default()
    })
    .unwrap();
    let mut obs = LinearObservation::identity(d);
    obs.noise_cov.fill_diagonal(0.5);
    let sched = ScheduleParams::default().build().unwrap();
    let (ns, t) = (500, 200);
    let gamma = gamma_for(ns, &sched).unwrap();
    let pred = AnalyticPredictor::new(&world, &obs, &sched, ns).unwrap();

    let mut rng = seeded(11);
    let features = 1 + 2 * d;
    let mut xtx = DMatrix::<f64>::zeros(features, features);
    let mut xty = DMatrix::<f64>::zeros(features, d);
    let n = 200_000;
    for _ in 0..n {
        let z0 = world.sample_class(PromptClass(0), &mut rng);
        let w = normal_vec(&mut rng, d).scaled(0.5f64.sqrt());
        let z_c = z0.combine(1.0, &w, 1.0).unwrap();
        let eps = normal_vec(&mut rng, d);
        let z_t = residual_forward(&z0, &z_c, t, gamma, &eps, &sched).unwrap();
        let mut x = vec![1.0];
        x.extend_from_slice(z_t.as_slice());
        x.extend_from_slice(z_c.as_slice());
        let x = DVector::from_vec(x);
        let y = DVector::from_column_slice(eps.as_slice());
        xtx += &x * x.transpose();
        xty += &x * y.transpose();
    }
    let beta = xtx.cholesky().unwrap().solve(&xty);

    for _ in 0..5 {
        let z0 = world.sample_class(PromptClass(0), &mut rng);
        let z_c = z0.combine(1.0, &normal_vec(&mut rng, d), 0.5f64.sqrt()).unwrap();
        let z_t = residual_forward(&z0, &z_c, t, gamma, &normal_vec(&mut rng, d), &sched).unwrap();
        let mut x = vec![1.0];
        x.extend_from_slice(z_t.as_slice());
        x.extend_from_slice(z_c.as_slice());
        let mc = beta.transpose() * DVector::from_vec(x);
        let exact = pred.predict(&z_t, &z_c, Some(PromptClass(0)), t).unwrap();
        let diff = exact.max_abs_diff(&LatentVec::new(mc.as_slice().to_vec()));
        assert!(diff < 0.03, "analytic vs regression differ by {diff}");
    }
}

