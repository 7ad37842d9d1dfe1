//! Benchmark target densities.
//!
//! Every target exposes an unnormalized log-density and its analytic score
//! (gradient of the log-density). Normalizing constants are never computed;
//! the flow and the discrepancy only need the score.

mod gaussian;
mod gmm;
mod moons;
mod rings;
mod student;

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::particles::Point;
use crate::registry::Registry;
use crate::rng::Rng;

pub use gaussian::Gaussian;
pub use gmm::Gmm;
pub use moons::TwoMoon;
pub use rings::MixtureOfRings;
pub use student::StudentT;

/// An unnormalized density on R^D with an analytic score.
///
/// Implementations may assume `z.len() == self.dim()`; the free functions in
/// this module check dimensions before dispatching.
pub trait Density: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn log_density_unnorm(&self, z: &[f64]) -> f64;

    /// Write ∇_z log p(z) into `out`.
    fn score_into(&self, z: &[f64], out: &mut [f64]);

    /// Exact i.i.d. draws, when the target supports them.
    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        let _ = (n, rng);
        Err(Error::Sampler(format!(
            "target `{}` has no exact sampler",
            self.name()
        )))
    }

    /// Parameter document in the `{variant, parameters}` layout, if any.
    fn to_spec(&self) -> Option<TargetSpec> {
        None
    }
}

fn check_dim(t: &dyn Density, z: &[f64]) -> Result<()> {
    if z.len() != t.dim() {
        return Err(Error::input(format!(
            "point has dimension {}, target `{}` has dimension {}",
            z.len(),
            t.name(),
            t.dim()
        )));
    }
    Ok(())
}

pub fn log_density_unnorm(t: &dyn Density, z: &[f64]) -> Result<f64> {
    check_dim(t, z)?;
    Ok(t.log_density_unnorm(z))
}

pub fn score(t: &dyn Density, z: &[f64]) -> Result<Point> {
    check_dim(t, z)?;
    let mut out = vec![0.0; z.len()];
    t.score_into(z, &mut out);
    Point::new(out)
}

/// Central-difference gradient of the log-density, one coordinate at a time.
pub fn finite_diff_score(t: &dyn Density, z: &[f64], step: f64) -> Result<Point> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::input(format!("finite-difference step must be > 0, got {step}")));
    }
    check_dim(t, z)?;
    let mut probe = z.to_vec();
    let mut out = vec![0.0; z.len()];
    for k in 0..z.len() {
        probe[k] = z[k] + step;
        let up = t.log_density_unnorm(&probe);
        probe[k] = z[k] - step;
        let down = t.log_density_unnorm(&probe);
        probe[k] = z[k];
        out[k] = (up - down) / (2.0 * step);
    }
    Point::new(out)
}

pub fn sample_exact(t: &dyn Density, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    t.sample(n, rng)
}

/// `log Σ exp(v)` ignoring `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Axis-aligned box used by the rejection samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0 }
    }
}

const BOX_GRID: usize = 400;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Maximum of the log-density over a 400×400 grid of a 2D box.
pub(crate) fn grid_log_max(t: &dyn Density, bx: SamplingBox) -> Result<f64> {
    if t.dim() != 2 {
        return Err(Error::Sampler(format!(
            "rejection sampling supports 2D targets, `{}` is {}D",
            t.name(),
            t.dim()
        )));
    }
    let step = (bx.hi - bx.lo) / (BOX_GRID - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    for a in 0..BOX_GRID {
        for b in 0..BOX_GRID {
            let z = [bx.lo + a as f64 * step, bx.lo + b as f64 * step];
            best = best.max(t.log_density_unnorm(&z));
        }
    }
    Ok(best)
}

/// Rejection sampling from the uniform proposal on a 2D box.
pub(crate) fn rejection_sample(
    t: &dyn Density,
    bx: SamplingBox,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Point>> {
    let log_max = grid_log_max(t, bx)?;
    let mut out = Vec::with_capacity(n);
    let mut proposals: u64 = 0;
    while out.len() < n {
        let z = [rng.uniform_range(bx.lo, bx.hi), rng.uniform_range(bx.lo, bx.hi)];
        proposals += 1;
        if rng.uniform() < (t.log_density_unnorm(&z) - log_max).exp() {
            out.push(Point::new(z.to_vec())?);
        }
        if proposals >= 100_000 && (out.len() as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(Error::Sampler(format!(
                "acceptance rate {} below {MIN_ACCEPTANCE} for `{}`; check the sampling box",
                out.len() as f64 / proposals as f64,
                t.name()
            )));
        }
    }
    Ok(out)
}

/// JSON document for a target: `{"variant": ..., "parameters": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub variant: String,
    #[serde(default)]
    pub parameters: Value,
}

impl TargetSpec {
    pub fn build(&self) -> Result<Box<dyn Density>> {
        target_registry().build(&self.variant, &self.parameters)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn params<T: serde::de::DeserializeOwned>(p: &Value) -> Result<T> {
    serde_json::from_value(p.clone()).map_err(|e| Error::config(format!("bad target parameters: {e}")))
}

/// Builtin target variants keyed by their JSON `variant` name.
pub fn target_registry() -> &'static Registry<dyn Density> {
    static REG: OnceLock<Registry<dyn Density>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Density>::new("target")
            .with("gaussian", "multivariate Gaussian N(mean, cov)", |p| {
                Ok(Box::new(Gaussian::from_params(params(p)?)?))
            })
            .with("student_t", "1D location-scale Student-t St(dof, loc, scale)", |p| {
                Ok(Box::new(StudentT::from_params(params(p)?)?))
            })
            .with("gmm", "Gaussian mixture with full covariances", |p| {
                Ok(Box::new(Gmm::from_params(params(p)?)?))
            })
            .with("mixture_of_rings", "sum of radial Gaussian ridges around ring centers", |p| {
                Ok(Box::new(MixtureOfRings::from_params(params(p)?)?))
            })
            .with("two_moon", "two half-plane-truncated rings", |p| {
                Ok(Box::new(TwoMoon::from_params(params(p)?)?))
            })
    })
}

/// Named target presets used by the experiments.
pub mod presets {
    use super::*;

    /// N(−3, 0.5²).
    pub fn gauss_minus3() -> Gaussian {
        Gaussian::new(vec![-3.0], vec![vec![0.25]]).unwrap()
    }

    /// St(9, 1.5, 0.5).
    pub fn student() -> StudentT {
        StudentT::new(9.0, 1.5, 0.5).unwrap()
    }

    /// ½N(−2, 0.5²) + ½N(2, 0.5²).
    pub fn gmm_symmetric() -> Gmm {
        Gmm::new(
            vec![0.5, 0.5],
            vec![
                Gaussian::new(vec![-2.0], vec![vec![0.25]]).unwrap(),
                Gaussian::new(vec![2.0], vec![vec![0.25]]).unwrap(),
            ],
        )
        .unwrap()
    }

    /// Six equal-weight components on a circle of radius 3, σ = 0.5.
    pub fn mog() -> Gmm {
        let comps = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 6.0;
                Gaussian::new(
                    vec![3.0 * a.cos(), 3.0 * a.sin()],
                    vec![vec![0.25, 0.0], vec![0.0, 0.25]],
                )
                .unwrap()
            })
            .collect();
        Gmm::new(vec![1.0 / 6.0; 6], comps).unwrap()
    }

    pub fn mor() -> MixtureOfRings {
        MixtureOfRings::new(vec![vec![-2.0, 0.0], vec![2.0, 0.0]], vec![1.5, 1.5], 0.2).unwrap()
    }

    pub fn tm() -> TwoMoon {
        TwoMoon::new(2.0, 0.3, 1.0, 3.0).unwrap()
    }

    /// 1D presets by CLI name.
    pub fn one_d(name: &str) -> Option<Box<dyn Density>> {
        match name {
            "gauss-3" => Some(Box::new(gauss_minus3())),
            "student" => Some(Box::new(student())),
            "gmm-sym" => Some(Box::new(gmm_symmetric())),
            _ => None,
        }
    }

    pub const ONE_D: [&str; 3] = ["gauss-3", "student", "gmm-sym"];

    /// 2D presets by CLI name, each with the fixed kernel bandwidth used
    /// when comparing approximations of it.
    pub fn two_d(name: &str) -> Option<(Box<dyn Density>, f64)> {
        match name {
            "mog" => Some((Box::new(mog()), 0.5)),
            "mor" => Some((Box::new(mor()), 1.0)),
            "tm" => Some((Box::new(tm()), 0.5)),
            _ => None,
        }
    }

    pub const TWO_D: [&str; 3] = ["mog", "mor", "tm"];

    pub fn by_name(name: &str) -> Option<Box<dyn Density>> {
        one_d(name).or_else(|| two_d(name).map(|(t, _)| t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Flat;
    impl Density for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn dim(&self) -> usize {
            2
        }
        fn log_density_unnorm(&self, _z: &[f64]) -> f64 {
            1.5
        }
        fn score_into(&self, _z: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn finite_diff_of_constant_is_zero() {
        let g = finite_diff_score(&Flat, &[0.3, -2.0], 1e-5).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn finite_diff_rejects_zero_step() {
        assert!(matches!(finite_diff_score(&Flat, &[0.0, 0.0], 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn finite_diff_standard_normal() {
        let n = Gaussian::standard(1);
        let g = finite_diff_score(&n, &[1.0], 1e-5).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(log_density_unnorm(&Flat, &[0.0]), Err(Error::Input(_))));
        assert!(matches!(score(&Flat, &[0.0, 1.0, 2.0]), Err(Error::Input(_))));
    }

    #[test]
    fn no_sampler_is_an_error() {
        assert!(matches!(sample_exact(&Flat, 3, &mut Rng::new(0)), Err(Error::Sampler(_))));
        assert!(matches!(sample_exact(&Flat, 0, &mut Rng::new(0)), Err(Error::Input(_))));
    }

    #[test]
    fn lse_handles_neg_inf() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[derive(Debug)]
    struct Spike;
    impl Density for Spike {
        fn name(&self) -> &str {
            "spike"
        }
        fn dim(&self) -> usize {
            2
        }
        fn log_density_unnorm(&self, z: &[f64]) -> f64 {
            -1e6 * (z[0] * z[0] + z[1] * z[1])
        }
        fn score_into(&self, z: &[f64], out: &mut [f64]) {
            out[0] = -2e6 * z[0];
            out[1] = -2e6 * z[1];
        }
    }

    #[test]
    fn low_acceptance_is_a_sampler_error() {
        let err = rejection_sample(&Spike, SamplingBox::default(), 10, &mut Rng::new(1));
        assert!(matches!(err, Err(Error::Sampler(_))));
    }

    #[test]
    fn spec_round_trip() {
        let spec = TargetSpec::from_json(
            r#"{"variant": "student_t", "parameters": {"dof": 9, "loc": 1.5, "scale": 0.5}}"#,
        )
        .unwrap();
        let t = spec.build().unwrap();
        assert_eq!(t.dim(), 1);
        assert_eq!(t.to_spec().unwrap().build().unwrap().log_density_unnorm(&[0.2]), t.log_density_unnorm(&[0.2]));
        let bad = TargetSpec::from_json(r#"{"variant": "banana", "parameters": {}}"#).unwrap();
        assert!(matches!(bad.build(), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn preset_json_matches_builtins() {
        for t in [
            Box::new(presets::mog()) as Box<dyn Density>,
            Box::new(presets::mor()),
            Box::new(presets::tm()),
        ] {
            let rebuilt = t.to_spec().unwrap().build().unwrap();
            for z in [[0.1, 0.2], [-2.0, 1.3], [3.0, -0.4]] {
                assert_eq!(rebuilt.log_density_unnorm(&z), t.log_density_unnorm(&z));
            }
        }
    }
}
