//! Two moons built from half-plane-truncated rings:
//!
//! p(z) ∝ Σ_{s=±1} exp(−(‖z − (0, s·sep)‖ − R)² / (2w²) − relu(−s·z₁·κ)²)
//!
//! The ring centered above the origin keeps its upper half, the lower one its
//! lower half. `moon_width` is the sharpness κ of the half-plane cutoff.

use serde::{Deserialize, Serialize};

use super::{log_sum_exp, rejection_sample, Density, SamplingBox, TargetSpec};
use crate::error::{Error, Result};
use crate::particles::Point;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoMoonParams {
    pub radius: f64,
    pub radial_width: f64,
    pub separation: f64,
    pub moon_width: f64,
    #[serde(default)]
    pub sampling_box: SamplingBox,
}

#[derive(Debug, Clone, Copy)]
pub struct TwoMoon {
    p: TwoMoonParams,
}

const SIDES: [f64; 2] = [1.0, -1.0];

impl TwoMoon {
    pub fn new(radius: f64, radial_width: f64, separation: f64, moon_width: f64) -> Result<Self> {
        Self::from_params(TwoMoonParams {
            radius,
            radial_width,
            separation,
            moon_width,
            sampling_box: SamplingBox::default(),
        })
    }

    pub fn from_params(p: TwoMoonParams) -> Result<Self> {
        for (name, v) in [
            ("radius", p.radius),
            ("radial_width", p.radial_width),
            ("separation", p.separation),
            ("moon_width", p.moon_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("two-moon {name} must be > 0")));
            }
        }
        if !(p.sampling_box.hi > p.sampling_box.lo) {
            return Err(Error::config("sampling box must have hi > lo"));
        }
        Ok(Self { p })
    }

    pub fn params(&self) -> TwoMoonParams {
        self.p
    }

    fn side_log(&self, s: f64, z: &[f64]) -> (f64, f64) {
        let cy = s * self.p.separation;
        let rho = (z[0] * z[0] + (z[1] - cy) * (z[1] - cy)).sqrt();
        let dev = rho - self.p.radius;
        let cut = (-s * z[1] * self.p.moon_width).max(0.0);
        (
            -dev * dev / (2.0 * self.p.radial_width * self.p.radial_width) - cut * cut,
            rho,
        )
    }
}

impl Density for TwoMoon {
    fn name(&self) -> &str {
        "two_moon"
    }

    fn dim(&self) -> usize {
        2
    }

    fn log_density_unnorm(&self, z: &[f64]) -> f64 {
        let logs = SIDES.map(|s| self.side_log(s, z).0);
        log_sum_exp(&logs)
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) {
        let parts = SIDES.map(|s| self.side_log(s, z));
        let norm = log_sum_exp(&parts.map(|p| p.0));
        let w2 = self.p.radial_width * self.p.radial_width;
        let kappa = self.p.moon_width;
        out.fill(0.0);
        for (s, (l, rho)) in SIDES.iter().zip(parts) {
            let resp = (l - norm).exp();
            if resp == 0.0 {
                continue;
            }
            let cy = s * self.p.separation;
            if rho > 0.0 {
                let coef = -(rho - self.p.radius) / (w2 * rho);
                out[0] += resp * coef * z[0];
                out[1] += resp * coef * (z[1] - cy);
            }
            let cut = (-s * z[1] * kappa).max(0.0);
            out[1] += resp * 2.0 * s * kappa * cut;
        }
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        rejection_sample(self, self.p.sampling_box, n, rng)
    }

    fn to_spec(&self) -> Option<TargetSpec> {
        Some(TargetSpec {
            variant: "two_moon".into(),
            parameters: serde_json::to_value(self.p).ok()?,
        })
    }
}
