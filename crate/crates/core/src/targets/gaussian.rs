use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Density, TargetSpec};
use crate::error::{Error, Result};
use crate::particles::Point;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Multivariate normal with a symmetric positive definite covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    // row-major D×D
    precision: Vec<f64>,
    chol_lower: Vec<f64>,
    log_det: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::config("gaussian mean must be non-empty"));
        }
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::config(format!("gaussian covariance must be {d}×{d}")));
        }
        if mean.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::config("gaussian parameters must be finite"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + m.abs().max()) {
            return Err(Error::config("gaussian covariance must be symmetric"));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::config("gaussian covariance must be positive definite"))?;
        let l = chol.l();
        let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let inv = chol.inverse();
        let precision = (0..d * d).map(|k| inv[(k / d, k % d)]).collect();
        let chol_lower = (0..d * d).map(|k| l[(k / d, k % d)]).collect();
        Ok(Self {
            mean,
            cov,
            precision,
            chol_lower,
            log_det,
        })
    }

    pub fn from_params(p: GaussianParams) -> Result<Self> {
        Self::new(p.mean, p.cov)
    }

    pub fn standard(dim: usize) -> Self {
        let cov = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(vec![0.0; dim], cov).expect("identity covariance")
    }

    pub fn params(&self) -> GaussianParams {
        GaussianParams {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[Vec<f64>] {
        &self.cov
    }

    /// Same covariance, mean moved by `c`.
    pub fn shifted(&self, c: &[f64]) -> Self {
        let mut g = self.clone();
        for (m, ci) in g.mean.iter_mut().zip(c) {
            *m += ci;
        }
        g
    }

    /// −½ (z−μ)ᵀ Σ⁻¹ (z−μ), without normalizer.
    pub(crate) fn quad_form(&self, z: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut acc = 0.0;
        for i in 0..d {
            let di = z[i] - self.mean[i];
            let row = &self.precision[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * (z[j] - self.mean[j]);
            }
            acc += di * s;
        }
        -0.5 * acc
    }

    /// Log-density up to the shared −D/2·log 2π constant.
    pub(crate) fn log_density_with_det(&self, z: &[f64]) -> f64 {
        self.quad_form(z) - 0.5 * self.log_det
    }

    pub(crate) fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.mean.len();
        let eps: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        (0..d)
            .map(|i| {
                let row = &self.chol_lower[i * d..(i + 1) * d];
                self.mean[i] + (0..=i).map(|j| row[j] * eps[j]).sum::<f64>()
            })
            .collect()
    }
}

impl Density for Gaussian {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_unnorm(&self, z: &[f64]) -> f64 {
        self.quad_form(z)
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        for i in 0..d {
            let row = &self.precision[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * (z[j] - self.mean[j]);
            }
            out[i] = -s;
        }
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        (0..n).map(|_| Point::new(self.draw(rng))).collect()
    }

    fn to_spec(&self) -> Option<TargetSpec> {
        Some(TargetSpec {
            variant: "gaussian".into(),
            parameters: serde_json::to_value(self.params()).ok()?,
        })
    }
}
