//! Particle flow with a kernelized control drift.
//!
//! Each particle moves by forward Euler along
//!
//! z_i ← z_i + ε · { ∇ log p(z_i) + (1/M) Σ_j [ K(z_j, z_i) ∇ log p(z_j) + ∇_{z_j} K(z_j, z_i) ] }
//!
//! The bracketed empirical expectation is the RKHS ansatz for the control
//! term. It includes the self term j = i, whose kernel gradient is zero.
//! Drift rules are interchangeable through [`drift_registry`]: `info` is the
//! update above; `stein` drops the leading direct-score term and keeps only
//! the kernel expectation.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::discrepancy::{cloud_scores, ksd};
use crate::error::{Error, Result};
use crate::kernels::{sq_dist, KernelSpec};
use crate::particles::{ParticleSet, Point};
use crate::record::{RunRecord, Scalar};
use crate::registry::Registry;
use crate::targets::Density;

/// Coordinates beyond this magnitude abort a run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Per-particle velocity, same shape as the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    rows: Vec<f64>,
    dim: usize,
}

impl DriftField {
    pub fn new(rows: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::input("drift rows do not match the dimension"));
        }
        if let Some(k) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite drift at particle {}", k / dim)));
        }
        Ok(Self { rows, dim })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            rows: vec![0.0; len * dim],
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.rows
    }
}

/// (1/M) Σ_j [K(z_j, z) s_j + K(z_j, z)(z − z_j)/h] for one evaluation point.
fn ansatz_at(points: &ParticleSet, scores: &[f64], k: KernelSpec, z: &[f64], out: &mut [f64]) {
    let d = points.dim();
    let h = k.bandwidth();
    out.fill(0.0);
    for (j, zj) in points.iter().enumerate() {
        let kv = (-sq_dist(zj, z) / (2.0 * h)).exp();
        let sj = &scores[j * d..(j + 1) * d];
        for a in 0..d {
            out[a] += kv * sj[a] + kv * (z[a] - zj[a]) / h;
        }
    }
    let m = points.len() as f64;
    for v in out.iter_mut() {
        *v /= m;
    }
}

/// The kernel expectation evaluated at particle `i`.
pub fn ansatz(points: &ParticleSet, target: &dyn Density, k: KernelSpec, i: usize) -> Result<Point> {
    if i >= points.len() {
        return Err(Error::input(format!(
            "particle index {i} out of range for {} particles",
            points.len()
        )));
    }
    let scores = cloud_scores(points, target)?;
    let mut out = vec![0.0; points.dim()];
    ansatz_at(points, &scores, k, points.point(i), &mut out);
    Point::new(out)
}

fn kernel_drift(
    points: &ParticleSet,
    target: &dyn Density,
    k: KernelSpec,
    with_score: bool,
) -> Result<DriftField> {
    let scores = cloud_scores(points, target)?;
    let d = points.dim();
    let rows: Vec<Vec<f64>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; d];
            ansatz_at(points, &scores, k, points.point(i), &mut out);
            if with_score {
                for (o, s) in out.iter_mut().zip(&scores[i * d..(i + 1) * d]) {
                    *o += s;
                }
            }
            out
        })
        .collect();
    DriftField::new(rows.concat(), d)
}

/// Velocity field rule applied to the whole cloud.
pub trait DriftRule: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn drift(&self, points: &ParticleSet, target: &dyn Density, k: KernelSpec) -> Result<DriftField>;
}

/// Direct score plus the kernel ansatz.
#[derive(Debug, Clone, Copy, Default)]
pub struct InfoDrift;

impl DriftRule for InfoDrift {
    fn name(&self) -> &str {
        "info"
    }

    fn drift(&self, points: &ParticleSet, target: &dyn Density, k: KernelSpec) -> Result<DriftField> {
        kernel_drift(points, target, k, true)
    }
}

/// The kernel ansatz alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct SteinDrift;

impl DriftRule for SteinDrift {
    fn name(&self) -> &str {
        "stein"
    }

    fn drift(&self, points: &ParticleSet, target: &dyn Density, k: KernelSpec) -> Result<DriftField> {
        kernel_drift(points, target, k, false)
    }
}

pub fn drift_registry() -> &'static Registry<dyn DriftRule> {
    static REG: OnceLock<Registry<dyn DriftRule>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn DriftRule>::new("drift rule")
            .with("info", "score plus kernel ansatz", |_| Ok(Box::new(InfoDrift)))
            .with("stein", "kernel ansatz only", |_| Ok(Box::new(SteinDrift)))
    })
}

pub fn drift_rule(name: &str) -> Result<Arc<dyn DriftRule>> {
    Ok(Arc::from(drift_registry().build(name, &serde_json::Value::Null)?))
}

/// Row i = score(z_i) + ansatz(z_i).
pub fn drift(points: &ParticleSet, target: &dyn Density, k: KernelSpec) -> Result<DriftField> {
    InfoDrift.drift(points, target, k)
}

fn euler(points: &ParticleSet, field: &DriftField, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::input(format!("step size must be > 0, got {eps}")));
    }
    if field.len() != points.len() || field.dim() != points.dim() {
        return Err(Error::input(format!(
            "drift field is {}×{}, cloud is {}×{}",
            field.len(),
            field.dim(),
            points.len(),
            points.dim()
        )));
    }
    Ok(points
        .as_flat()
        .iter()
        .zip(field.as_flat())
        .map(|(z, v)| z + eps * v)
        .collect())
}

/// One forward-Euler step; the step counter advances by one.
pub fn step(points: &ParticleSet, field: &DriftField, eps: f64) -> Result<ParticleSet> {
    let coords = euler(points, field, eps)?;
    ParticleSet::from_flat(coords, points.dim(), points.time_step() + 1)
}

/// Final cloud plus the recorded trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoRun {
    pub cloud: ParticleSet,
    pub record: RunRecord,
}

fn record_row(
    record: RunRecord,
    cloud: &ParticleSet,
    target: &dyn Density,
    k: KernelSpec,
    with_ksd: bool,
) -> Result<RunRecord> {
    let mut scalars = vec![(Scalar::Bandwidth, k.bandwidth())];
    if with_ksd {
        scalars.insert(0, (Scalar::Ksd, ksd(cloud, target, k)?));
    }
    record.record_snapshot(cloud, &scalars)
}

/// T iterations of bandwidth update → drift → Euler step.
///
/// Rows are recorded at the starting step, every `snapshot_stride` steps
/// after it, and at the final step.
pub fn run_info(config: &RunConfig, target: &dyn Density, init: &ParticleSet) -> Result<InfoRun> {
    config.validate()?;
    if init.dim() != target.dim() {
        return Err(Error::input(format!(
            "initial cloud has dimension {}, target `{}` has dimension {}",
            init.dim(),
            target.name(),
            target.dim()
        )));
    }
    let stride = config.snapshot_stride;
    let start = init.time_step();
    let mut cloud = init.clone();
    let mut record = RunRecord::new();
    let mut kernel = config.bandwidth.kernel(&cloud)?;
    if stride > 0 {
        record = record_row(record, &cloud, target, kernel, config.record_ksd)?;
    }
    for t in 0..config.horizon {
        if t > 0 && !config.bandwidth.is_fixed() {
            kernel = config.bandwidth.kernel(&cloud)?;
        }
        let field = config.drift.drift(&cloud, target, kernel).map_err(|e| match e {
            Error::Numeric(detail) => Error::Diverged { step: t, detail },
            other => other,
        })?;
        let coords = euler(&cloud, &field, config.step_size)?;
        if let Some(k) = coords
            .iter()
            .position(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::Diverged {
                step: t + 1,
                detail: format!("particle {} left the finite region", k / cloud.dim()),
            });
        }
        cloud = ParticleSet::from_flat(coords, cloud.dim(), cloud.time_step() + 1)?;
        let done = t + 1;
        if stride > 0 && (done % stride == 0 || done == config.horizon) {
            if !config.bandwidth.is_fixed() {
                kernel = config.bandwidth.kernel(&cloud)?;
            }
            record = record_row(record, &cloud, target, kernel, config.record_ksd)?;
        }
    }
    debug_assert_eq!(cloud.time_step(), start + config.horizon);
    Ok(InfoRun { cloud, record })
}
