//! Mixture of rings: p(z) ∝ Σ_k exp(−(‖z − c_k‖ − r_k)² / (2w²)).

use serde::{Deserialize, Serialize};

use super::{log_sum_exp, rejection_sample, Density, SamplingBox, TargetSpec};
use crate::error::{Error, Result};
use crate::particles::Point;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingsParams {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub sampling_box: SamplingBox,
}

#[derive(Debug, Clone)]
pub struct MixtureOfRings {
    p: RingsParams,
}

impl MixtureOfRings {
    pub fn new(centers: Vec<Vec<f64>>, radii: Vec<f64>, width: f64) -> Result<Self> {
        Self::from_params(RingsParams {
            centers,
            radii,
            width,
            sampling_box: SamplingBox::default(),
        })
    }

    pub fn from_params(p: RingsParams) -> Result<Self> {
        if p.centers.is_empty() || p.centers.len() != p.radii.len() {
            return Err(Error::config("rings need matching, non-empty centers and radii"));
        }
        let d = p.centers[0].len();
        if d == 0 || p.centers.iter().any(|c| c.len() != d || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::config("ring centers must share a positive dimension"));
        }
        if p.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("ring radii must be > 0"));
        }
        if !(p.width > 0.0 && p.width.is_finite()) {
            return Err(Error::config("ring width must be > 0"));
        }
        if !(p.sampling_box.hi > p.sampling_box.lo) {
            return Err(Error::config("sampling box must have hi > lo"));
        }
        Ok(Self { p })
    }

    pub fn params(&self) -> &RingsParams {
        &self.p
    }

    fn ring_log(&self, k: usize, z: &[f64]) -> f64 {
        let rho = dist(z, &self.p.centers[k]);
        let dev = rho - self.p.radii[k];
        -dev * dev / (2.0 * self.p.width * self.p.width)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Density for MixtureOfRings {
    fn name(&self) -> &str {
        "mixture_of_rings"
    }

    fn dim(&self) -> usize {
        self.p.centers[0].len()
    }

    fn log_density_unnorm(&self, z: &[f64]) -> f64 {
        let logs: Vec<f64> = (0..self.p.radii.len()).map(|k| self.ring_log(k, z)).collect();
        log_sum_exp(&logs)
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) {
        let logs: Vec<f64> = (0..self.p.radii.len()).map(|k| self.ring_log(k, z)).collect();
        let norm = log_sum_exp(&logs);
        let w2 = self.p.width * self.p.width;
        out.fill(0.0);
        for (k, l) in logs.iter().enumerate() {
            let resp = (l - norm).exp();
            let c = &self.p.centers[k];
            let rho = dist(z, c);
            // the radial direction is undefined exactly at the center
            if rho == 0.0 || resp == 0.0 {
                continue;
            }
            let coef = -resp * (rho - self.p.radii[k]) / (w2 * rho);
            for ((o, zi), ci) in out.iter_mut().zip(z).zip(c) {
                *o += coef * (zi - ci);
            }
        }
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        rejection_sample(self, self.p.sampling_box, n, rng)
    }

    fn to_spec(&self) -> Option<TargetSpec> {
        Some(TargetSpec {
            variant: "mixture_of_rings".into(),
            parameters: serde_json::to_value(&self.p).ok()?,
        })
    }
}
