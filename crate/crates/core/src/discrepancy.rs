//! Kernelized Stein discrepancy (V-statistic) and a wild-bootstrap
//! goodness-of-fit test built on it.
//!
//! With the RBF kernel, d = z − z', r² = ‖d‖² and s = ∇ log p:
//!
//! V(z, z') = K · [ s(z)·s(z') + (s(z) − s(z'))·d / h + D/h − r²/h² ]
//!
//! which expands the four terms sᵀKs' + sᵀ∇_{z'}K + tr(∇_z∇_{z'}K) + (∇_zK)ᵀs'.
//! The bootstrap replicates are only valid for i.i.d. samples; particles from
//! an interacting flow are correlated, so a test on a flow's output is a
//! heuristic check rather than an exact-level test.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sq_dist, KernelSpec};
use crate::particles::ParticleSet;
use crate::rng::Rng;
use crate::targets::Density;

#[inline]
fn stein_pair(k: KernelSpec, z: &[f64], zp: &[f64], s: &[f64], sp: &[f64]) -> f64 {
    let h = k.bandwidth();
    let r2 = sq_dist(z, zp);
    let kv = (-r2 / (2.0 * h)).exp();
    let mut ss = 0.0;
    let mut cross = 0.0;
    for a in 0..z.len() {
        ss += s[a] * sp[a];
        cross += (s[a] - sp[a]) * (z[a] - zp[a]);
    }
    kv * (ss + cross / h + z.len() as f64 / h - r2 / (h * h))
}

/// Scores at every particle, failing on the first non-finite one.
pub(crate) fn cloud_scores(points: &ParticleSet, target: &dyn Density) -> Result<Vec<f64>> {
    if points.dim() != target.dim() {
        return Err(Error::input(format!(
            "cloud has dimension {}, target `{}` has dimension {}",
            points.dim(),
            target.name(),
            target.dim()
        )));
    }
    let d = points.dim();
    let mut scores = vec![0.0; points.as_flat().len()];
    for (i, (z, out)) in points.iter().zip(scores.chunks_exact_mut(d)).enumerate() {
        target.score_into(z, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite score at particle {i}")));
        }
    }
    Ok(scores)
}

pub fn stein_kernel(target: &dyn Density, k: KernelSpec, z: &[f64], z_prime: &[f64]) -> Result<f64> {
    if z.len() != z_prime.len() || z.len() != target.dim() {
        return Err(Error::input("stein kernel arguments must match the target dimension"));
    }
    let mut s = vec![0.0; z.len()];
    let mut sp = vec![0.0; z.len()];
    target.score_into(z, &mut s);
    target.score_into(z_prime, &mut sp);
    if s.iter().chain(&sp).any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite score in stein kernel"));
    }
    Ok(stein_pair(k, z, z_prime, &s, &sp))
}

/// Per-row sums Σ_j V(z_i, z_j), rows computed independently.
fn stein_row_sums(points: &ParticleSet, scores: &[f64], k: KernelSpec) -> Vec<f64> {
    let d = points.dim();
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let z = points.point(i);
            let s = &scores[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..points.len() {
                acc += stein_pair(k, z, points.point(j), s, &scores[j * d..(j + 1) * d]);
            }
            acc
        })
        .collect()
}

/// V-statistic (1/M²) Σ_i Σ_j V(z_i, z_j), diagonal included.
pub fn ksd(points: &ParticleSet, target: &dyn Density, k: KernelSpec) -> Result<f64> {
    let scores = cloud_scores(points, target)?;
    let m = points.len() as f64;
    let total: f64 = stein_row_sums(points, &scores, k).iter().sum();
    Ok(total / (m * m))
}

/// Full M×M Stein kernel matrix, row-major.
pub fn stein_matrix(points: &ParticleSet, target: &dyn Density, k: KernelSpec) -> Result<Vec<f64>> {
    let scores = cloud_scores(points, target)?;
    let d = points.dim();
    let m = points.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let z = points.point(i);
            let s = &scores[i * d..(i + 1) * d];
            (0..m)
                .map(|j| stein_pair(k, z, points.point(j), s, &scores[j * d..(j + 1) * d]))
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "accept_H0")]
    AcceptH0,
    #[serde(rename = "reject_H0")]
    RejectH0,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::AcceptH0 => "accept_H0",
            Decision::RejectH0 => "reject_H0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub decision: Decision,
    #[serde(rename = "B")]
    pub bootstrap_draws: usize,
}

pub const MIN_BOOTSTRAP: usize = 100;

const BOOTSTRAP_BLOCK: usize = 256;

/// Wild-bootstrap KSD test of H0: the cloud was drawn from `target`.
///
/// Replicate b uses Rademacher weights from the stream `base ⊕ b`, where
/// `base` is drawn once from `rng`.
pub fn gof_test(
    points: &ParticleSet,
    target: &dyn Density,
    k: KernelSpec,
    alpha: f64,
    draws: usize,
    rng: &mut Rng,
) -> Result<GofResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("significance level must lie in (0, 1), got {alpha}")));
    }
    if draws < MIN_BOOTSTRAP {
        return Err(Error::config(format!(
            "at least {MIN_BOOTSTRAP} bootstrap draws are required, got {draws}"
        )));
    }
    let m = points.len();
    if m < 2 {
        return Err(Error::input("goodness-of-fit test needs at least two particles"));
    }
    let h = stein_matrix(points, target, k)?;
    let norm = (m * m) as f64;
    let statistic = h.iter().sum::<f64>() / norm;

    let base = rng.next_u64();
    // Replicates are evaluated in blocks as H·W with one ±1 column per
    // replicate; H is symmetric so its row-major buffer is also column-major.
    let hm = DMatrix::from_column_slice(m, m, &h);
    let mut replicates = Vec::with_capacity(draws);
    for start in (0..draws).step_by(BOOTSTRAP_BLOCK) {
        let cols = BOOTSTRAP_BLOCK.min(draws - start);
        let signs: Vec<f64> = (0..cols)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut r = Rng::derive(base, (start + c) as u64);
                (0..m).map(move |_| r.sign())
            })
            .collect();
        let w = DMatrix::from_vec(m, cols, signs);
        let hw = &hm * &w;
        for c in 0..cols {
            replicates.push(w.column(c).dot(&hw.column(c)) / norm);
        }
    }
    replicates.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    let threshold = replicates[idx];
    let decision = if statistic > threshold {
        Decision::RejectH0
    } else {
        Decision::AcceptH0
    };
    Ok(GofResult {
        statistic,
        threshold,
        alpha,
        decision,
        bootstrap_draws: draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{sample_exact, Gaussian};

    fn std_normal() -> Gaussian {
        Gaussian::standard(1)
    }

    #[test]
    fn diagonal_at_mode() {
        let k = KernelSpec::new(1.0).unwrap();
        assert_eq!(stein_kernel(&std_normal(), k, &[0.0], &[0.0]).unwrap(), 1.0);
        let ps = ParticleSet::from_flat(vec![0.0], 1, 0).unwrap();
        assert_eq!(ksd(&ps, &std_normal(), k).unwrap(), 1.0);
    }

    #[test]
    fn one_zero_pair_by_finite_differences() {
        // V(z,z') = ∂_z∂_z' [p K p'] / (p p') for 1D, built from central
        // differences of the product f(z,z') = p(z) K(z,z') p(z').
        let k = KernelSpec::new(1.0).unwrap();
        let p = |x: f64| (-0.5 * x * x).exp();
        let f = |a: f64, b: f64| p(a) * (-(a - b) * (a - b) / 2.0).exp() * p(b);
        let (z, zp, e) = (1.0, 0.0, 1e-4);
        let mixed = (f(z + e, zp + e) - f(z + e, zp - e) - f(z - e, zp + e) + f(z - e, zp - e)) / (4.0 * e * e);
        let oracle = mixed / (p(z) * p(zp));
        let v = stein_kernel(&std_normal(), k, &[z], &[zp]).unwrap();
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn alpha_and_draws_validated() {
        let ps = ParticleSet::from_flat(vec![0.0, 1.0, -1.0], 1, 0).unwrap();
        let k = KernelSpec::new(1.0).unwrap();
        let mut rng = Rng::new(0);
        assert!(matches!(gof_test(&ps, &std_normal(), k, 0.0, 200, &mut rng), Err(Error::Config(_))));
        assert!(matches!(gof_test(&ps, &std_normal(), k, 1.0, 200, &mut rng), Err(Error::Config(_))));
        assert!(matches!(gof_test(&ps, &std_normal(), k, 0.05, 99, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn decision_consistent_with_threshold() {
        let xs = sample_exact(&std_normal(), 200, &mut Rng::new(3)).unwrap();
        let ps = ParticleSet::from_points(&xs).unwrap();
        let k = KernelSpec::new(crate::kernels::median_bandwidth(&ps).unwrap()).unwrap();
        let r = gof_test(&ps, &std_normal(), k, 0.05, 300, &mut Rng::new(9)).unwrap();
        assert!(r.statistic >= 0.0);
        assert_eq!(r.decision == Decision::RejectH0, r.statistic > r.threshold);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"B\":300"));
    }

    #[test]
    fn matrix_matches_ksd() {
        let ps = ParticleSet::from_flat(vec![0.3, -0.2, 1.4, 0.9], 2, 0).unwrap();
        let t = Gaussian::standard(2);
        let k = KernelSpec::new(0.6).unwrap();
        let h = stein_matrix(&ps, &t, k).unwrap();
        let v = ksd(&ps, &t, k).unwrap();
        assert!((h.iter().sum::<f64>() / 4.0 - v).abs() < 1e-14);
    }
}
