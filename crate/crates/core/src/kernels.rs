//! RBF kernel K(z, z') = exp(−‖z − z'‖² / (2h)) and bandwidth selection.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::particles::ParticleSet;
use crate::registry::Registry;

/// RBF kernel with bandwidth `h` (a squared-length scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    h: f64,
}

impl KernelSpec {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("kernel bandwidth must be finite and > 0, got {h}")));
        }
        Ok(Self { h })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (-sq_dist(a, b) / (2.0 * self.h)).exp()
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "kernel arguments differ in dimension ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn rbf(k: KernelSpec, z: &[f64], z_prime: &[f64]) -> Result<f64> {
    check_pair(z, z_prime)?;
    Ok(k.eval(z, z_prime))
}

/// ∇_{z'} K(z', z) = K(z', z) · (z − z') / h.
pub fn grad_first(k: KernelSpec, z_prime: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    check_pair(z, z_prime)?;
    let kv = k.eval(z_prime, z);
    Ok(z.iter()
        .zip(z_prime)
        .map(|(a, b)| kv * (a - b) / k.h)
        .collect())
}

fn pair_values(points: &ParticleSet, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let m = points.len();
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        let a = points.point(i);
        for j in i + 1..m {
            out.push(f(sq_dist(a, points.point(j))));
        }
    }
    out
}

fn lower_median(mut values: Vec<f64>) -> f64 {
    let mid = (values.len() - 1) / 2;
    let (_, v, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *v
}

/// Fallback bandwidth when every particle coincides.
pub const DEGENERATE_BANDWIDTH: f64 = 1.0;

/// Lower median of the pairwise squared distances over i < j.
pub fn median_bandwidth(points: &ParticleSet) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::input("median bandwidth needs at least two particles"));
    }
    let med = lower_median(pair_values(points, |d2| d2));
    Ok(if med > 0.0 { med } else { DEGENERATE_BANDWIDTH })
}

/// Lower median of the pairwise (unsquared) distances.
pub fn median_distance_bandwidth(points: &ParticleSet) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::input("median bandwidth needs at least two particles"));
    }
    let med = lower_median(pair_values(points, f64::sqrt));
    Ok(if med > 0.0 { med } else { DEGENERATE_BANDWIDTH })
}

/// Symmetric M×M Gram matrix with unit diagonal.
pub fn kernel_matrix(k: KernelSpec, points: &ParticleSet) -> DMatrix<f64> {
    let m = points.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let a = points.point(i);
            (0..m).map(|j| k.eval(a, points.point(j))).collect()
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// How the bandwidth is chosen for the current cloud.
pub trait BandwidthPolicy: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn bandwidth(&self, points: &ParticleSet) -> Result<f64>;

    /// True when the bandwidth never depends on the cloud.
    fn is_fixed(&self) -> bool {
        false
    }

    fn kernel(&self, points: &ParticleSet) -> Result<KernelSpec> {
        KernelSpec::new(self.bandwidth(points)?)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MedianSquared;

impl BandwidthPolicy for MedianSquared {
    fn name(&self) -> &str {
        "median"
    }
    fn bandwidth(&self, points: &ParticleSet) -> Result<f64> {
        median_bandwidth(points)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MedianDistance;

impl BandwidthPolicy for MedianDistance {
    fn name(&self) -> &str {
        "median-dist"
    }
    fn bandwidth(&self, points: &ParticleSet) -> Result<f64> {
        median_distance_bandwidth(points)
    }
}

/// h_med / log(M + 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct MedianLogScaled;

impl BandwidthPolicy for MedianLogScaled {
    fn name(&self) -> &str {
        "median-log"
    }
    fn bandwidth(&self, points: &ParticleSet) -> Result<f64> {
        Ok(median_bandwidth(points)? / ((points.len() + 1) as f64).ln())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Fixed(pub f64);

impl BandwidthPolicy for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }
    fn bandwidth(&self, _points: &ParticleSet) -> Result<f64> {
        Ok(self.0)
    }
    fn is_fixed(&self) -> bool {
        true
    }
}

pub fn bandwidth_registry() -> &'static Registry<dyn BandwidthPolicy> {
    static REG: OnceLock<Registry<dyn BandwidthPolicy>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn BandwidthPolicy>::new("bandwidth policy")
            .with("median", "lower median of pairwise squared distances", |_| {
                Ok(Box::new(MedianSquared))
            })
            .with("median-dist", "lower median of pairwise distances", |_| {
                Ok(Box::new(MedianDistance))
            })
            .with("median-log", "squared-distance median divided by log(M+1)", |_| {
                Ok(Box::new(MedianLogScaled))
            })
            .with("fixed", "constant bandwidth `fixed:<h>`", |p| {
                let h = p
                    .as_f64()
                    .ok_or_else(|| Error::config("fixed bandwidth needs a value, e.g. fixed:0.5"))?;
                KernelSpec::new(h)?;
                Ok(Box::new(Fixed(h)))
            })
    })
}

/// Parse `median`, `median-dist`, `median-log` or `fixed:<h>`.
pub fn parse_bandwidth(flag: &str) -> Result<Box<dyn BandwidthPolicy>> {
    match flag.split_once(':') {
        Some((name, value)) => {
            let h: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad bandwidth value `{value}`")))?;
            bandwidth_registry().build(name, &Value::from(h))
        }
        None => bandwidth_registry().build(flag, &Value::Null),
    }
}
