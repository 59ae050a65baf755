//! Flat real latent vectors.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real latent vector (clean latent, decoded latent, noise draws, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVec(Vec<f64>);

impl LatentVec {
    pub fn new(values: Vec<f64>) -> Self {
        LatentVec(values)
    }

    pub fn zeros(dim: usize) -> Self {
        LatentVec(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &LatentVec) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `alpha * self + beta * other`, element-wise.
    pub fn combine(&self, alpha: f64, other: &LatentVec, beta: f64) -> Result<LatentVec> {
        same_dim(self, other)?;
        Ok(LatentVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        ))
    }

    pub fn scaled(&self, alpha: f64) -> LatentVec {
        LatentVec(self.0.iter().map(|v| alpha * v).collect())
    }
}

impl From<Vec<f64>> for LatentVec {
    fn from(v: Vec<f64>) -> Self {
        LatentVec(v)
    }
}

impl Index<usize> for LatentVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn same_dim(a: &LatentVec, b: &LatentVec) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}
