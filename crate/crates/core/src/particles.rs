//! Uniformly weighted particle clouds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::targets::Density;

/// A latent coordinate vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::input("point must have at least one coordinate"));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::numeric(format!("non-finite coordinate at index {k}")));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// M particles in D dimensions, stored row-major, plus the step counter.
///
/// Particle `i` keeps its index across every operation in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    coords: Vec<f64>,
    dim: usize,
    time_step: usize,
}

impl ParticleSet {
    pub fn from_flat(coords: Vec<f64>, dim: usize, time_step: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("particle dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(Error::config("particle set must hold at least one particle"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "{} coordinates do not split into rows of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite coordinate in particle {}",
                k / dim
            )));
        }
        Ok(Self {
            coords,
            dim,
            time_step,
        })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::config("particle set must hold at least one particle"))?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::input(format!(
                    "particle {i} has dimension {}, expected {dim}",
                    p.dim()
                )));
            }
            coords.extend_from_slice(p.as_slice());
        }
        Self::from_flat(coords, dim, 0)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time_step(&self) -> usize {
        self.time_step
    }

    pub fn with_time_step(mut self, t: usize) -> Self {
        self.time_step = t;
        self
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.iter().map(|p| Point(p.to_vec())).collect()
    }

    /// Apply `f` to every coordinate row, keeping order and step counter.
    pub fn map_points(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut coords = vec![0.0; self.coords.len()];
        for (src, dst) in self
            .coords
            .chunks_exact(self.dim)
            .zip(coords.chunks_exact_mut(self.dim))
        {
            f(src, dst);
        }
        Self::from_flat(coords, self.dim, self.time_step)
    }
}

/// Source distribution for the initial cloud.
#[derive(Clone, Copy)]
pub enum Initializer<'a> {
    StandardNormal,
    Target(&'a dyn Density),
}

pub fn init_particles(init: Initializer<'_>, m: usize, dim: usize, rng: &mut Rng) -> Result<ParticleSet> {
    if m == 0 {
        return Err(Error::config("number of particles must be positive"));
    }
    if dim == 0 {
        return Err(Error::config("latent dimension must be positive"));
    }
    match init {
        Initializer::StandardNormal => {
            let coords = (0..m * dim).map(|_| rng.normal()).collect();
            ParticleSet::from_flat(coords, dim, 0)
        }
        Initializer::Target(t) => {
            if t.dim() != dim {
                return Err(Error::input(format!(
                    "initializer has dimension {}, requested {dim}",
                    t.dim()
                )));
            }
            ParticleSet::from_points(&t.sample(m, rng)?)
        }
    }
}

/// Arithmetic mean and unbiased covariance (M−1 denominator, zero for M=1).
pub fn cloud_moments(ps: &ParticleSet) -> (Point, DMatrix<f64>) {
    let m = ps.len();
    let d = ps.dim();
    let mut mean = vec![0.0; d];
    for p in ps.iter() {
        for (acc, v) in mean.iter_mut().zip(p) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= m as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    if m > 1 {
        for p in ps.iter() {
            for a in 0..d {
                let da = p[a] - mean[a];
                for b in a..d {
                    cov[(a, b)] += da * (p[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / (m - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
    }
    (Point(mean), cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_1d(xs: &[f64]) -> ParticleSet {
        ParticleSet::from_flat(xs.to_vec(), 1, 0).unwrap()
    }

    #[test]
    fn zero_particles_rejected() {
        let mut rng = Rng::new(0);
        assert!(matches!(
            init_particles(Initializer::StandardNormal, 0, 1, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_particles(Initializer::StandardNormal, 3, 0, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = Rng::new(7);
        let ps = init_particles(Initializer::StandardNormal, 10_000, 1, &mut rng).unwrap();
        let (mean, cov) = cloud_moments(&ps);
        assert!(mean[0].abs() < 0.05, "mean {}", mean[0]);
        assert!((cov[(0, 0)] - 1.0).abs() < 0.05, "var {}", cov[(0, 0)]);
        assert_eq!(ps.time_step(), 0);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_particles(Initializer::StandardNormal, 3, 2, &mut Rng::new(42)).unwrap();
        let b = init_particles(Initializer::StandardNormal, 3, 2, &mut Rng::new(42)).unwrap();
        let bits = |p: &ParticleSet| p.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn moments_two_points() {
        let (mean, cov) = cloud_moments(&set_1d(&[1.0, 3.0]));
        assert_eq!(mean.as_slice(), &[2.0]);
        assert_eq!(cov[(0, 0)], 2.0);
    }

    #[test]
    fn moments_single_point_zero_cov() {
        let ps = ParticleSet::from_flat(vec![5.0, 5.0], 2, 0).unwrap();
        let (mean, cov) = cloud_moments(&ps);
        assert_eq!(mean.as_slice(), &[5.0, 5.0]);
        assert!(cov.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn moments_equal_points_zero_cov() {
        let (_, cov) = cloud_moments(&set_1d(&[0.3; 6]));
        assert_eq!(cov[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ParticleSet::from_flat(vec![0.0, f64::NAN], 1, 0).is_err());
        assert!(Point::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn ragged_points_rejected() {
        let pts = vec![Point::zeros(2), Point::zeros(3)];
        assert!(ParticleSet::from_points(&pts).is_err());
    }
}
