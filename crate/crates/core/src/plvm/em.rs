use nalgebra::DMatrix;
use rayon::prelude::*;

use super::data::Dataset;
use super::model::{grad_theta_loglik, loglik, ObservationMask, PlvmModel, PosteriorTarget};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::inference::run_info;
use crate::particles::{init_particles, Initializer, ParticleSet};
use crate::record::{RunRecord, Scalar};
use crate::rng::Rng;

/// How the M-step maximizes the particle objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MStep {
    /// Closed form for linear decoders, gradient ascent otherwise.
    #[default]
    Auto,
    Gradient,
    /// Least squares for W, b and the residual MLE for σ (linear only).
    ClosedForm,
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub epochs: usize,
    /// Gradient-ascent learning rate ξ.
    pub m_step_rate: f64,
    pub m_step_iters: usize,
    pub m_step: MStep,
    /// E-step flow settings; `inner.seed` keys the per-datapoint streams.
    pub inner: RunConfig,
    /// Start each epoch's E-step from the previous epoch's cloud.
    pub warm_start: bool,
    /// Lower bound on σ after every M-step; keeps noiseless data from
    /// collapsing the likelihood.
    pub min_sigma: f64,
    /// Cap the E-step size at `cap / stiffness` so the Euler scheme stays
    /// stable as σ shrinks. `None` uses `inner.step_size` as given.
    pub step_cap: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            m_step_rate: 1e-2,
            m_step_iters: 50,
            m_step: MStep::Auto,
            inner: RunConfig {
                num_particles: 32,
                horizon: 300,
                step_size: 0.01,
                snapshot_stride: 0,
                record_ksd: false,
                ..RunConfig::default()
            },
            warm_start: true,
            min_sigma: 1e-2,
            step_cap: Some(0.25),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("EM needs at least one epoch"));
        }
        if !(self.m_step_rate > 0.0 && self.m_step_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.m_step_rate)));
        }
        if !(self.min_sigma > 0.0) {
            return Err(Error::config("min_sigma must be > 0"));
        }
        if let Some(c) = self.step_cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config(format!("step cap must be > 0, got {c}")));
            }
        }
        self.inner.validate()
    }
}

/// `inner` with its step size lowered to `cap / stiffness` when needed.
pub fn stable_config(inner: &RunConfig, model: &PlvmModel, cap: Option<f64>) -> RunConfig {
    let mut cfg = inner.clone();
    if let Some(c) = cap {
        cfg.step_size = cfg.step_size.min(c / model.stiffness());
    }
    cfg
}

fn flow(model: &PlvmModel, x: &[f64], mask: Option<&ObservationMask>, inner: &RunConfig, init: &ParticleSet) -> Result<ParticleSet> {
    let target = PosteriorTarget::new(model, x, mask)?;
    let cfg = RunConfig {
        snapshot_stride: 0,
        ..inner.clone()
    };
    Ok(run_info(&cfg, &target, init)?.cloud.with_time_step(0))
}

fn fresh_cloud(model: &PlvmModel, inner: &RunConfig, index: u64) -> Result<ParticleSet> {
    let mut rng = Rng::derive(inner.seed, index);
    init_particles(Initializer::StandardNormal, inner.num_particles, model.d_lv(), &mut rng)
}

/// Particle approximation of p(z|x), started from N(0, I) drawn with `inner.seed`.
pub fn e_step(model: &PlvmModel, x: &[f64], inner: &RunConfig) -> Result<ParticleSet> {
    let init = fresh_cloud(model, inner, 0)?;
    e_step_from(model, x, None, inner, &init)
}

/// E-step from a given cloud, with the likelihood restricted by `mask`.
pub fn e_step_from(
    model: &PlvmModel,
    x: &[f64],
    mask: Option<&ObservationMask>,
    inner: &RunConfig,
    init: &ParticleSet,
) -> Result<ParticleSet> {
    flow(model, x, mask, inner, init)
}

fn check_pairs(model: &PlvmModel, pairs: &[(&[f64], &ParticleSet)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::input("M-step needs at least one datapoint"));
    }
    for (x, cloud) in pairs {
        if x.len() != model.d_obs() || cloud.dim() != model.d_lv() || cloud.is_empty() {
            return Err(Error::input("datapoint or cloud shape does not match the model"));
        }
    }
    Ok(())
}

/// Mean log-likelihood over every (datapoint, particle) pair.
pub fn expected_loglik(model: &PlvmModel, pairs: &[(&[f64], &ParticleSet)]) -> Result<f64> {
    check_pairs(model, pairs)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, cloud) in pairs {
        for z in cloud.iter() {
            total += loglik(model, x, z)?;
            count += 1;
        }
    }
    let v = total / count as f64;
    if !v.is_finite() {
        return Err(Error::numeric("expected log-likelihood is not finite"));
    }
    Ok(v)
}

fn mean_gradient(model: &PlvmModel, pairs: &[(&[f64], &ParticleSet)]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; model.num_params()];
    let mut count = 0usize;
    for (x, cloud) in pairs {
        for z in cloud.iter() {
            for (a, b) in g.iter_mut().zip(grad_theta_loglik(model, x, z)?) {
                *a += b;
            }
            count += 1;
        }
    }
    g.iter_mut().for_each(|v| *v /= count as f64);
    Ok(g)
}

/// `iters` steps of θ ← θ + ξ·(mean gradient of the log-likelihood).
pub fn m_step(model: &PlvmModel, pairs: &[(&[f64], &ParticleSet)], rate: f64, iters: usize) -> Result<PlvmModel> {
    check_pairs(model, pairs)?;
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::input(format!("learning rate must be >= 0, got {rate}")));
    }
    let mut m = model.clone();
    for _ in 0..iters {
        let g = mean_gradient(&m, pairs)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("M-step gradient is not finite"));
        }
        let theta: Vec<f64> = m.params().iter().zip(&g).map(|(t, d)| t + rate * d).collect();
        m = m.with_params(&theta).map_err(|e| Error::numeric(format!("M-step left the valid region: {e}")))?;
    }
    Ok(m)
}

/// Exact maximizer for a linear decoder: least squares for (W, b), then
/// σ² as the mean squared residual per coordinate, floored at `min_sigma`.
pub fn m_step_closed_form(model: &PlvmModel, pairs: &[(&[f64], &ParticleSet)], min_sigma: f64) -> Result<PlvmModel> {
    check_pairs(model, pairs)?;
    if model.kind() != "linear" {
        return Err(Error::config("closed-form M-step needs a linear decoder"));
    }
    let (d, l) = (model.d_obs(), model.d_lv());
    let mut gram = DMatrix::<f64>::zeros(l + 1, l + 1);
    let mut cross = DMatrix::<f64>::zeros(l + 1, d);
    let mut count = 0usize;
    let mut aug = vec![1.0; l + 1];
    for (x, cloud) in pairs {
        for z in cloud.iter() {
            aug[..l].copy_from_slice(z);
            for a in 0..=l {
                for b in 0..=l {
                    gram[(a, b)] += aug[a] * aug[b];
                }
                for (k, xk) in x.iter().enumerate() {
                    cross[(a, k)] += aug[a] * xk;
                }
            }
            count += 1;
        }
    }
    // coef is (L+1)×D: rows 0..L are Wᵀ, row L is bᵀ
    let coef = match gram.clone().cholesky() {
        Some(c) => c.solve(&cross),
        None => gram
            .svd(true, true)
            .solve(&cross, 1e-12)
            .map_err(|e| Error::numeric(format!("least squares failed: {e}")))?,
    };
    let w: Vec<f64> = (0..d).flat_map(|k| (0..l).map(move |j| (k, j))).map(|(k, j)| coef[(j, k)]).collect();
    let b: Vec<f64> = (0..d).map(|k| coef[(l, k)]).collect();
    let fitted = PlvmModel::linear(super::Matrix::from_row_major(d, l, w)?, b, 1.0)?;
    let mut sq = 0.0;
    for (x, cloud) in pairs {
        for z in cloud.iter() {
            sq += fitted.decode(z).iter().zip(x.iter()).map(|(y, xv)| (xv - y).powi(2)).sum::<f64>();
        }
    }
    let sigma = (sq / (count * d) as f64).sqrt().max(min_sigma);
    if !sigma.is_finite() {
        return Err(Error::numeric("closed-form M-step produced a non-finite noise scale"));
    }
    fitted.with_sigma(sigma)
}

#[derive(Debug, Clone)]
pub struct EmRun {
    pub model: PlvmModel,
    /// Expected log-likelihood per epoch, keyed by epoch number from 1.
    pub record: RunRecord,
    /// Final per-datapoint clouds.
    pub clouds: Vec<ParticleSet>,
}

impl EmRun {
    pub fn monitor(&self) -> Vec<f64> {
        self.record.series(Scalar::Loglik).into_iter().map(|(_, v)| v).collect()
    }
}

fn tag_error(e: Error, epoch: usize, index: usize) -> Error {
    match e {
        Error::Diverged { step, detail } => Error::Diverged {
            step,
            detail: format!("epoch {epoch}, datapoint {index}: {detail}"),
        },
        other => other,
    }
}

/// Alternate particle E-steps (one cloud per datapoint, run in parallel on
/// independent streams) with M-steps; the monitor is the mean
/// log-likelihood of the new parameters over all particles.
pub fn run_info_em(m0: &PlvmModel, data: &Dataset, cfg: &EmConfig) -> Result<EmRun> {
    cfg.validate()?;
    if data.dim() != m0.d_obs() {
        return Err(Error::input(format!(
            "dataset has {} columns, model expects {}",
            data.dim(),
            m0.d_obs()
        )));
    }
    let closed = match cfg.m_step {
        MStep::Auto => m0.kind() == "linear",
        MStep::Gradient => false,
        MStep::ClosedForm => true,
    };
    let mut model = m0.clone();
    let mut record = RunRecord::new();
    let mut clouds: Vec<ParticleSet> = (0..data.len())
        .map(|n| fresh_cloud(&model, &cfg.inner, n as u64))
        .collect::<Result<_>>()?;
    for epoch in 1..=cfg.epochs {
        let inner = stable_config(&cfg.inner, &model, cfg.step_cap);
        if epoch > 1 && !cfg.warm_start {
            clouds = (0..data.len())
                .map(|n| fresh_cloud(&model, &cfg.inner, n as u64))
                .collect::<Result<_>>()?;
        }
        clouds = clouds
            .par_iter()
            .enumerate()
            .map(|(n, init)| flow(&model, data.row(n), None, &inner, init).map_err(|e| tag_error(e, epoch, n)))
            .collect::<Result<_>>()?;
        let pairs: Vec<(&[f64], &ParticleSet)> = (0..data.len()).map(|n| (data.row(n), &clouds[n])).collect();
        model = if closed {
            m_step_closed_form(&model, &pairs, cfg.min_sigma)?
        } else {
            let m = m_step(&model, &pairs, cfg.m_step_rate, cfg.m_step_iters)?;
            let s = m.sigma().max(cfg.min_sigma);
            m.with_sigma(s)?
        };
        let monitor = expected_loglik(&model, &pairs)?;
        record = record.record_scalars(epoch, &[(Scalar::Loglik, monitor)])?;
    }
    Ok(EmRun { model, record, clouds })
}

/// Posterior-mean reconstruction of the unobserved dimensions of `x`.
///
/// Entries of `x` on hidden dimensions are ignored. The result lists the
/// hidden dimensions in ascending order.
pub fn predict(model: &PlvmModel, x: &[f64], mask: &ObservationMask, inner: &RunConfig) -> Result<Vec<f64>> {
    if mask.len() != model.d_obs() {
        return Err(Error::input(format!(
            "mask has {} entries, model has {} outputs",
            mask.len(),
            model.d_obs()
        )));
    }
    let hidden = mask.hidden();
    if hidden.is_empty() {
        return Err(Error::input("mask observes every dimension; nothing to predict"));
    }
    if hidden.len() == mask.len() {
        return Err(Error::input("mask observes no dimension"));
    }
    let init = fresh_cloud(model, inner, 0)?;
    let cloud = e_step_from(model, x, Some(mask), inner, &init)?;
    let mut out = vec![0.0; hidden.len()];
    for z in cloud.iter() {
        let y = model.decode(z);
        for (o, &d) in out.iter_mut().zip(&hidden) {
            *o += y[d];
        }
    }
    out.iter_mut().for_each(|v| *v /= cloud.len() as f64);
    Ok(out)
}
