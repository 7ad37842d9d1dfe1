use serde::{Deserialize, Serialize};

use super::gaussian::GaussianParams;
use super::{log_sum_exp, Density, Gaussian, TargetSpec};
use crate::error::{Error, Result};
use crate::particles::Point;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianParams>,
}

/// Finite Gaussian mixture. The score is the responsibility-weighted sum of
/// component scores; all mixture sums go through log-sum-exp.
#[derive(Debug, Clone)]
pub struct Gmm {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::config("mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::config("mixture weights and components differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("mixture weights sum to {total}, expected 1")));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::config("mixture components differ in dimension"));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    pub fn from_params(p: GmmParams) -> Result<Self> {
        let comps = p
            .components
            .into_iter()
            .map(Gaussian::from_params)
            .collect::<Result<Vec<_>>>()?;
        Self::new(p.weights, comps)
    }

    pub fn params(&self) -> GmmParams {
        GmmParams {
            weights: self.weights.clone(),
            components: self.components.iter().map(Gaussian::params).collect(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn shifted(&self, c: &[f64]) -> Self {
        Self {
            weights: self.weights.clone(),
            log_weights: self.log_weights.clone(),
            components: self.components.iter().map(|g| g.shifted(c)).collect(),
        }
    }

    /// Per-component log w_k + log N_k(z) (shared 2π constant dropped).
    pub(crate) fn component_logs(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.components
                .iter()
                .zip(&self.log_weights)
                .map(|(c, lw)| lw + c.log_density_with_det(z)),
        );
    }

    /// Posterior component probabilities at `z`.
    pub fn responsibilities(&self, z: &[f64]) -> Vec<f64> {
        let mut logs = Vec::with_capacity(self.components.len());
        self.component_logs(z, &mut logs);
        let norm = log_sum_exp(&logs);
        logs.iter().map(|l| (l - norm).exp()).collect()
    }
}

impl Density for Gmm {
    fn name(&self) -> &str {
        "gmm"
    }

    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_density_unnorm(&self, z: &[f64]) -> f64 {
        let mut logs = Vec::with_capacity(self.components.len());
        self.component_logs(z, &mut logs);
        log_sum_exp(&logs)
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) {
        let resp = self.responsibilities(z);
        out.fill(0.0);
        let mut comp = vec![0.0; z.len()];
        for (r, c) in resp.iter().zip(&self.components) {
            if *r == 0.0 {
                continue;
            }
            c.score_into(z, &mut comp);
            for (o, g) in out.iter_mut().zip(&comp) {
                *o += r * g;
            }
        }
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        (0..n)
            .map(|_| {
                let k = rng.categorical(&self.weights);
                Point::new(self.components[k].draw(rng))
            })
            .collect()
    }

    fn to_spec(&self) -> Option<TargetSpec> {
        Some(TargetSpec {
            variant: "gmm".into(),
            parameters: serde_json::to_value(self.params()).ok()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{presets, sample_exact, score};

    #[test]
    fn symmetric_mixture_is_even() {
        let g = presets::gmm_symmetric();
        for a in [0.1, 0.7, 2.0, 3.3] {
            assert_eq!(g.log_density_unnorm(&[a]), g.log_density_unnorm(&[-a]));
        }
        assert_eq!(score(&g, &[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn degenerate_weights_route_to_first() {
        let g = Gmm::new(
            vec![1.0, 0.0],
            vec![
                Gaussian::new(vec![-10.0], vec![vec![0.01]]).unwrap(),
                Gaussian::new(vec![10.0], vec![vec![0.01]]).unwrap(),
            ],
        )
        .unwrap();
        let xs = sample_exact(&g, 2000, &mut Rng::new(5)).unwrap();
        assert!(xs.iter().all(|p| p[0] < -9.0));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let c = || Gaussian::standard(1);
        assert!(Gmm::new(vec![0.5, 0.4], vec![c(), c()]).is_err());
        assert!(Gmm::new(vec![1.5, -0.5], vec![c(), c()]).is_err());
    }

    #[test]
    fn far_points_do_not_overflow() {
        let g = presets::mog();
        for z in [[100.0, 0.0], [-70.0, 70.0], [0.0, -100.0]] {
            assert!(g.log_density_unnorm(&z).is_finite());
            let s = score(&g, &z).unwrap();
            assert!(s.as_slice().iter().all(|v| v.is_finite()));
        }
    }
}
