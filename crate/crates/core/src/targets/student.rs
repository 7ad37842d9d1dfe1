//! Location-scale Student-t in one dimension.
//!
//! With r = z − μ, log p(z) = −(ν+1)/2 · log(1 + r²/(νσ²)) + const, so
//! d/dz log p = −(ν+1)/2 · 2r/(νσ²) / (1 + r²/(νσ²)) = −(ν+1) r / (νσ² + r²).

use serde::{Deserialize, Serialize};

use super::{Density, TargetSpec};
use crate::error::{Error, Result};
use crate::particles::Point;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams {
    pub dof: f64,
    pub loc: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    p: StudentTParams,
}

impl StudentT {
    pub fn new(dof: f64, loc: f64, scale: f64) -> Result<Self> {
        Self::from_params(StudentTParams { dof, loc, scale })
    }

    pub fn from_params(p: StudentTParams) -> Result<Self> {
        if !(p.dof > 0.0 && p.dof.is_finite()) {
            return Err(Error::config("student-t degrees of freedom must be > 0"));
        }
        if !(p.scale > 0.0 && p.scale.is_finite()) {
            return Err(Error::config("student-t scale must be > 0"));
        }
        if !p.loc.is_finite() {
            return Err(Error::config("student-t location must be finite"));
        }
        Ok(Self { p })
    }

    pub fn params(&self) -> StudentTParams {
        self.p
    }
}

impl Density for StudentT {
    fn name(&self) -> &str {
        "student_t"
    }

    fn dim(&self) -> usize {
        1
    }

    fn log_density_unnorm(&self, z: &[f64]) -> f64 {
        let StudentTParams { dof, loc, scale } = self.p;
        let r = z[0] - loc;
        -0.5 * (dof + 1.0) * (r * r / (dof * scale * scale)).ln_1p()
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) {
        let StudentTParams { dof, loc, scale } = self.p;
        let r = z[0] - loc;
        out[0] = -(dof + 1.0) * r / (dof * scale * scale + r * r);
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        let StudentTParams { dof, loc, scale } = self.p;
        (0..n)
            .map(|_| {
                let g = rng.normal();
                let c = rng.chi_square(dof);
                Point::new(vec![loc + scale * g / (c / dof).sqrt()])
            })
            .collect()
    }

    fn to_spec(&self) -> Option<TargetSpec> {
        Some(TargetSpec {
            variant: "student_t".into(),
            parameters: serde_json::to_value(self.p).ok()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::score;

    #[test]
    fn mode_at_location() {
        let t = StudentT::new(9.0, 1.5, 0.5).unwrap();
        let at_mode = t.log_density_unnorm(&[1.5]);
        for k in -200..=200 {
            let z = 1.5 + k as f64 * 0.01;
            assert!(t.log_density_unnorm(&[z]) <= at_mode);
        }
        assert_eq!(score(&t, &[1.5]).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn invalid_parameters() {
        assert!(StudentT::new(0.0, 0.0, 1.0).is_err());
        assert!(StudentT::new(3.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn samples_centered() {
        let t = StudentT::new(9.0, 1.5, 0.5).unwrap();
        let xs = t.sample(40_000, &mut Rng::new(2)).unwrap();
        let mut v: Vec<f64> = xs.iter().map(|p| p[0]).collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        assert!((median - 1.5).abs() < 0.02, "median {median}");
    }
}
