//! Fixed-family approximations (single Gaussian, Gaussian mixture) fitted
//! to exact target samples, and the approximation-method registry that pits
//! them against the particle flow.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::Value;

use crate::config::RunConfig;
use crate::discrepancy::ksd;
use crate::error::{Error, Result};
use crate::inference::run_info;
use crate::kernels::KernelSpec;
use crate::particles::{init_particles, Initializer, ParticleSet, Point};
use crate::registry::Registry;
use crate::rng::Rng;
use crate::targets::{log_sum_exp, sample_exact, Density, Gaussian, Gmm, TargetSpec};

pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_GMM_COMPONENTS: usize = 8;

#[derive(Debug, Clone)]
pub enum FittedApprox {
    Gaussian(Gaussian),
    Gmm(Gmm),
}

impl FittedApprox {
    pub fn density(&self) -> &dyn Density {
        match self {
            FittedApprox::Gaussian(g) => g,
            FittedApprox::Gmm(g) => g,
        }
    }

    /// Same `{variant, parameters}` document as the matching target.
    pub fn to_spec(&self) -> TargetSpec {
        self.density().to_spec().expect("gaussian families serialize")
    }
}

fn check_samples(samples: &[Point], min: usize) -> Result<usize> {
    if samples.len() < min {
        return Err(Error::input(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].dim();
    if samples.iter().any(|p| p.dim() != d) {
        return Err(Error::input("samples differ in dimension"));
    }
    Ok(d)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Weighted mean and (divide-by-total-weight) covariance.
fn weighted_moments(samples: &[Point], weights: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let d = samples[0].dim();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    for (p, w) in samples.iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(p.as_slice()) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut cov = DMatrix::zeros(d, d);
    for (p, w) in samples.iter().zip(weights) {
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += w * da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Sample mean and MLE covariance plus 1e−6·I.
pub fn fit_gaussian_mle(samples: &[Point]) -> Result<FittedApprox> {
    let d = check_samples(samples, 2)?;
    let (mean, mut cov) = weighted_moments(samples, &vec![1.0; samples.len()]);
    for a in 0..d {
        cov[(a, a)] += COVARIANCE_FLOOR;
    }
    Ok(FittedApprox::Gaussian(Gaussian::new(mean, to_rows(&cov))?))
}

/// Clamp eigenvalues from below at the covariance floor.
fn floor_covariance(cov: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().all(|l| *l >= COVARIANCE_FLOOR) {
        return cov;
    }
    let lam = eig.eigenvalues.map(|l| l.max(COVARIANCE_FLOOR));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&lam) * v.transpose();
    // re-symmetrize roundoff
    (&out + out.transpose()) * 0.5
}

/// k-means++ seeding: first center uniform, then proportional to D².
fn seed_means(samples: &[Point], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut means = vec![samples[rng.index(samples.len())].as_slice().to_vec()];
    let mut d2: Vec<f64> = samples
        .iter()
        .map(|p| crate::kernels::sq_dist(p.as_slice(), &means[0]))
        .collect();
    while means.len() < k {
        let idx = if d2.iter().sum::<f64>() > 0.0 {
            rng.categorical(&d2)
        } else {
            rng.index(samples.len())
        };
        let c = samples[idx].as_slice().to_vec();
        for (dd, p) in d2.iter_mut().zip(samples) {
            *dd = dd.min(crate::kernels::sq_dist(p.as_slice(), &c));
        }
        means.push(c);
    }
    means
}

/// Result of [`fit_gmm_em_traced`].
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub approx: FittedApprox,
    /// Mean per-sample log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
}

const GMM_TOLERANCE: f64 = 1e-8;
// components whose total responsibility falls below this are reseeded
const EMPTY_COMPONENT: f64 = 1e-8;

fn log_norm_const(d: usize) -> f64 {
    -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn fit_gmm_em(samples: &[Point], k: usize, iters: usize, rng: &mut Rng) -> Result<FittedApprox> {
    Ok(fit_gmm_em_traced(samples, k, iters, rng)?.approx)
}

/// EM for a full-covariance Gaussian mixture.
pub fn fit_gmm_em_traced(samples: &[Point], k: usize, iters: usize, rng: &mut Rng) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::input("mixture needs at least one component"));
    }
    let d = check_samples(samples, k.max(2))?;
    let n = samples.len();
    let (_, global_cov) = weighted_moments(samples, &vec![1.0; n]);
    let global_cov = floor_covariance(global_cov);

    let mut weights = vec![1.0 / k as f64; k];
    let mut comps: Vec<Gaussian> = seed_means(samples, k, rng)
        .into_iter()
        .map(|m| Gaussian::new(m, to_rows(&global_cov)))
        .collect::<Result<_>>()?;

    let mut trace = Vec::new();
    let mut resp = vec![0.0; n * k];
    let mut logs = Vec::with_capacity(k);
    let cst = log_norm_const(d);
    for _ in 0..iters.max(1) {
        // E-step
        let mixture = Gmm::new(weights.clone(), comps.clone())?;
        let mut ll = 0.0;
        for (i, p) in samples.iter().enumerate() {
            mixture.component_logs(p.as_slice(), &mut logs);
            let norm = log_sum_exp(&logs);
            ll += norm + cst;
            for (r, l) in resp[i * k..(i + 1) * k].iter_mut().zip(&logs) {
                *r = (l - norm).exp();
            }
        }
        let ll = ll / n as f64;
        if !ll.is_finite() {
            return Err(Error::numeric("mixture log-likelihood is not finite"));
        }
        let converged = trace.last().is_some_and(|prev: &f64| ll - prev < GMM_TOLERANCE);
        trace.push(ll);
        if converged {
            break;
        }
        // M-step
        let mut new_comps = Vec::with_capacity(k);
        let mut new_weights = Vec::with_capacity(k);
        for c in 0..k {
            let w: Vec<f64> = (0..n).map(|i| resp[i * k + c]).collect();
            let nk: f64 = w.iter().sum();
            if nk < EMPTY_COMPONENT {
                let m = samples[rng.index(n)].as_slice().to_vec();
                new_comps.push(Gaussian::new(m, to_rows(&global_cov))?);
                new_weights.push(1.0 / n as f64);
                continue;
            }
            let (mean, cov) = weighted_moments(samples, &w);
            new_comps.push(Gaussian::new(mean, to_rows(&floor_covariance(cov)))?);
            new_weights.push(nk / n as f64);
        }
        let total: f64 = new_weights.iter().sum();
        weights = new_weights.iter().map(|w| w / total).collect();
        // exact renormalization so the simplex check holds to 1e-12
        let drift = 1.0 - weights.iter().sum::<f64>();
        weights[0] += drift;
        comps = new_comps;
    }
    Ok(GmmFit {
        approx: FittedApprox::Gmm(Gmm::new(weights, comps)?),
        log_likelihood: trace,
    })
}

pub fn sample_fitted(f: &FittedApprox, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
    sample_exact(f.density(), n, rng)
}

/// KSD of `m` draws from the fitted approximation against the target.
pub fn baseline_ksd(
    target: &dyn Density,
    f: &FittedApprox,
    m: usize,
    k: KernelSpec,
    rng: &mut Rng,
) -> Result<f64> {
    let cloud = ParticleSet::from_points(&sample_fitted(f, m, rng)?)?;
    ksd(&cloud, target, k)
}

/// Produces an M-particle approximation of a target.
pub trait Approximator: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn approximate(&self, target: &dyn Density, config: &RunConfig, rng: &mut Rng) -> Result<ParticleSet>;
}

/// Particle flow from a standard-normal start.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowApprox;

impl Approximator for FlowApprox {
    fn name(&self) -> &str {
        "info"
    }

    fn approximate(&self, target: &dyn Density, config: &RunConfig, rng: &mut Rng) -> Result<ParticleSet> {
        let init = init_particles(Initializer::StandardNormal, config.num_particles, target.dim(), rng)?;
        let cfg = RunConfig {
            snapshot_stride: 0,
            ..config.clone()
        };
        Ok(run_info(&cfg, target, &init)?.cloud)
    }
}

/// Number of exact target samples the fixed-family baselines are fitted to.
pub const BASELINE_FIT_SAMPLES: usize = 5000;

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussApprox;

impl Approximator for GaussApprox {
    fn name(&self) -> &str {
        "gauss"
    }

    fn approximate(&self, target: &dyn Density, config: &RunConfig, rng: &mut Rng) -> Result<ParticleSet> {
        let fit = fit_gaussian_mle(&sample_exact(target, BASELINE_FIT_SAMPLES, rng)?)?;
        ParticleSet::from_points(&sample_fitted(&fit, config.num_particles, rng)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmmApprox {
    pub components: usize,
    pub iters: usize,
}

impl Default for GmmApprox {
    fn default() -> Self {
        Self {
            components: DEFAULT_GMM_COMPONENTS,
            iters: 500,
        }
    }
}

impl Approximator for GmmApprox {
    fn name(&self) -> &str {
        "gmm"
    }

    fn approximate(&self, target: &dyn Density, config: &RunConfig, rng: &mut Rng) -> Result<ParticleSet> {
        let samples = sample_exact(target, BASELINE_FIT_SAMPLES, rng)?;
        let fit = fit_gmm_em(&samples, self.components, self.iters, rng)?;
        ParticleSet::from_points(&sample_fitted(&fit, config.num_particles, rng)?)
    }
}

pub fn approximator_registry() -> &'static Registry<dyn Approximator> {
    static REG: OnceLock<Registry<dyn Approximator>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Approximator>::new("approximation method")
            .with("info", "particle flow from a standard-normal cloud", |_| {
                Ok(Box::new(FlowApprox))
            })
            .with("gauss", "maximum-likelihood Gaussian fitted to exact samples", |_| {
                Ok(Box::new(GaussApprox))
            })
            .with("gmm", "EM-fitted Gaussian mixture (k=8 unless `components` is given)", |p: &Value| {
                let mut g = GmmApprox::default();
                if let Some(k) = p.get("components").and_then(Value::as_u64) {
                    g.components = k as usize;
                }
                Ok(Box::new(g))
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts_1d(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|x| Point::new(vec![*x]).unwrap()).collect()
    }

    #[test]
    fn gaussian_mle_two_points() {
        let FittedApprox::Gaussian(g) = fit_gaussian_mle(&pts_1d(&[0.0, 2.0])).unwrap() else {
            panic!()
        };
        assert_eq!(g.mean(), &[1.0]);
        assert_eq!(g.cov()[0][0], 1.0 + 1e-6);
    }

    #[test]
    fn gaussian_mle_equal_points() {
        let FittedApprox::Gaussian(g) = fit_gaussian_mle(&pts_1d(&[3.0; 4])).unwrap() else {
            panic!()
        };
        assert_eq!(g.cov()[0][0], 1e-6);
        assert!(fit_gaussian_mle(&pts_1d(&[1.0])).is_err());
    }

    #[test]
    fn gaussian_mle_consistent() {
        let truth = Gaussian::new(vec![2.0, -1.0], vec![vec![1.5, 0.3], vec![0.3, 0.5]]).unwrap();
        let xs = sample_exact(&truth, 20_000, &mut Rng::new(1)).unwrap();
        let FittedApprox::Gaussian(g) = fit_gaussian_mle(&xs).unwrap() else {
            panic!()
        };
        assert!((g.mean()[0] - 2.0).abs() < 0.05 && (g.mean()[1] + 1.0).abs() < 0.05);
        assert!((g.cov()[0][0] - 1.5).abs() < 0.06);
        assert!((g.cov()[0][1] - 0.3).abs() < 0.04);
        assert!((g.cov()[1][1] - 0.5).abs() < 0.03);
    }

    #[test]
    fn single_component_is_gaussian_mle() {
        let truth = Gaussian::new(vec![0.5], vec![vec![2.0]]).unwrap();
        let xs = sample_exact(&truth, 500, &mut Rng::new(2)).unwrap();
        let FittedApprox::Gaussian(a) = fit_gaussian_mle(&xs).unwrap() else {
            panic!()
        };
        let FittedApprox::Gmm(b) = fit_gmm_em(&xs, 1, 50, &mut Rng::new(3)).unwrap() else {
            panic!()
        };
        let c = &b.components()[0];
        assert!((a.mean()[0] - c.mean()[0]).abs() < 1e-12);
        assert!((a.cov()[0][0] - c.cov()[0][0]).abs() <= 1e-6 + 1e-12);
    }

    #[test]
    fn two_clusters_recovered() {
        let truth = Gmm::new(
            vec![0.5, 0.5],
            vec![
                Gaussian::new(vec![-4.0, 0.0], vec![vec![0.3, 0.0], vec![0.0, 0.3]]).unwrap(),
                Gaussian::new(vec![4.0, 1.0], vec![vec![0.3, 0.0], vec![0.0, 0.3]]).unwrap(),
            ],
        )
        .unwrap();
        let xs = sample_exact(&truth, 4000, &mut Rng::new(5)).unwrap();
        let fit = fit_gmm_em_traced(&xs, 2, 200, &mut Rng::new(6)).unwrap();
        let FittedApprox::Gmm(g) = &fit.approx else { panic!() };
        let mut found = [false, false];
        for (w, c) in g.weights().iter().zip(g.components()) {
            assert!((w - 0.5).abs() < 0.05);
            for (slot, center) in found.iter_mut().zip([[-4.0, 0.0], [4.0, 1.0]]) {
                if (c.mean()[0] - center[0]).abs() < 0.1 && (c.mean()[1] - center[1]).abs() < 0.1 {
                    *slot = true;
                }
            }
        }
        assert_eq!(found, [true, true]);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn em_ascent_on_rings() {
        let xs = sample_exact(&crate::targets::presets::mor(), 2000, &mut Rng::new(7)).unwrap();
        let fit = fit_gmm_em_traced(&xs, 8, 300, &mut Rng::new(8)).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fitted_sampling_deterministic_and_degenerate() {
        let g = Gmm::new(
            vec![0.0, 1.0],
            vec![Gaussian::standard(1), Gaussian::new(vec![50.0], vec![vec![1.0]]).unwrap()],
        )
        .unwrap();
        let f = FittedApprox::Gmm(g);
        let a = sample_fitted(&f, 300, &mut Rng::new(1)).unwrap();
        let b = sample_fitted(&f, 300, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p[0] > 40.0));
    }

    #[test]
    fn fitted_gaussian_sampling_moments() {
        let f = FittedApprox::Gaussian(Gaussian::new(vec![-1.0], vec![vec![4.0]]).unwrap());
        let xs = sample_fitted(&f, 40_000, &mut Rng::new(3)).unwrap();
        let m = xs.iter().map(|p| p[0]).sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|p| (p[0] - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m + 1.0).abs() < 0.04 && (v - 4.0).abs() < 0.12);
    }

    #[test]
    fn baseline_single_particle_at_mode() {
        let t = Gaussian::standard(1);
        let f = FittedApprox::Gaussian(Gaussian::new(vec![0.0], vec![vec![1e-300]]).unwrap_or_else(|_| {
            Gaussian::new(vec![0.0], vec![vec![1e-30]]).unwrap()
        }));
        let k = KernelSpec::new(1.0).unwrap();
        let v = baseline_ksd(&t, &f, 1, k, &mut Rng::new(0)).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn spec_layout_matches_targets() {
        let f = fit_gaussian_mle(&pts_1d(&[0.0, 1.0, 3.0])).unwrap();
        let spec = f.to_spec();
        assert_eq!(spec.variant, "gaussian");
        assert!(spec.build().is_ok());
    }

    #[test]
    fn registry_names() {
        let reg = approximator_registry();
        assert_eq!(reg.names(), vec!["info", "gauss", "gmm"]);
        assert!(reg.build("vae", &Value::Null).is_err());
    }
}
