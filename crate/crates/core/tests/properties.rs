use infoflow::baselines::fit_gmm_em_traced;
use infoflow::discrepancy::{ksd, stein_kernel, stein_matrix};
use infoflow::inference::drift;
use infoflow::kernels::KernelSpec;
use infoflow::plvm::{grad_theta_loglik, loglik, posterior_score, Matrix, PlvmModel, PosteriorTarget};
use infoflow::targets::{finite_diff_score, presets, score, sample_exact, Density, Gaussian, Gmm, StudentT};
use infoflow::{ParticleSet, Point, Rng};
use proptest::prelude::*;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn assert_score_fd(t: &dyn Density, z: &[f64]) {
    let a = score(t, z).unwrap();
    let fd = finite_diff_score(t, z, 1e-5).unwrap();
    let e = rel_err(a.as_slice(), fd.as_slice());
    assert!(e < 1e-5, "{} at {z:?}: analytic {a:?} fd {fd:?} rel {e:e}", t.name());
}

fn random_gaussian(d: usize, rng: &mut Rng) -> Gaussian {
    let a: Vec<f64> = (0..d * d).map(|_| rng.normal()).collect();
    let cov = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    Gaussian::new((0..d).map(|_| rng.normal()).collect(), cov).unwrap()
}

fn cloud(m: usize, d: usize, scale: f64, rng: &mut Rng) -> ParticleSet {
    ParticleSet::from_flat((0..m * d).map(|_| scale * rng.normal()).collect(), d, 0).unwrap()
}

fn naive_drift(ps: &ParticleSet, t: &dyn Density, h: f64) -> Vec<Vec<f64>> {
    let s: Vec<Point> = ps.iter().map(|z| score(t, z).unwrap()).collect();
    let m = ps.len();
    (0..m)
        .map(|i| {
            let zi = ps.point(i);
            let mut v = s[i].as_slice().to_vec();
            for j in 0..m {
                let zj = ps.point(j);
                let r2: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
                let kv = (-r2 / (2.0 * h)).exp();
                for a in 0..zi.len() {
                    // ∇_{z_j} K(z_j, z_i) = −K (z_j − z_i)/h
                    v[a] += (kv * s[j][a] - kv * (zj[a] - zi[a]) / h) / m as f64;
                }
            }
            v
        })
        .collect()
}

fn naive_ksd(ps: &ParticleSet, t: &dyn Density, h: f64) -> f64 {
    let m = ps.len();
    let d = ps.dim() as f64;
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let (x, y) = (ps.point(i), ps.point(j));
            let (sx, sy) = (score(t, x).unwrap(), score(t, y).unwrap());
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            let kv = (-r2 / (2.0 * h)).exp();
            let ss: f64 = sx.as_slice().iter().zip(sy.as_slice()).map(|(a, b)| a * b).sum();
            let cross: f64 = (0..x.len()).map(|a| (sx[a] - sy[a]) * (x[a] - y[a])).sum();
            total += kv * (ss + cross / h + d / h - r2 / (h * h));
        }
    }
    total / (m * m) as f64
}

fn mlp_model(rng: &mut Rng) -> PlvmModel {
    let m = PlvmModel::init_mlp(4, 2, 6, &[0.0; 4], rng).unwrap();
    let theta: Vec<f64> = m.params().iter().map(|_| 0.7 * rng.normal()).collect();
    m.with_params(&theta).unwrap()
}

fn linear_model(rng: &mut Rng) -> PlvmModel {
    let w = Matrix::random(4, 2, 1.0, rng);
    let b = (0..4).map(|_| rng.normal()).collect();
    PlvmModel::linear(w, b, 0.3 + rng.uniform()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_score(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = Rng::new(seed);
        let g = random_gaussian(d, &mut rng);
        let z: Vec<f64> = (0..d).map(|_| 2.0 * rng.normal()).collect();
        assert_score_fd(&g, &z);
    }

    #[test]
    fn student_score(dof in 1.0f64..20.0, loc in -3.0f64..3.0, scale in 0.2f64..3.0, z in -10.0f64..10.0) {
        let t = StudentT::new(dof, loc, scale).unwrap();
        prop_assume!((z - loc).abs() > 1e-3);
        assert_score_fd(&t, &[z]);
    }

    #[test]
    fn mixture_score(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let k = 1 + rng.index(4);
        let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let drift = 1.0 - w.iter().sum::<f64>();
        w[0] += drift;
        let g = Gmm::new(w, (0..k).map(|_| random_gaussian(2, &mut rng)).collect()).unwrap();
        let z = [2.0 * rng.normal(), 2.0 * rng.normal()];
        assert_score_fd(&g, &z);
    }

    #[test]
    fn benchmark_2d_scores(x in -4.5f64..4.5, y in -4.5f64..4.5) {
        for t in [&presets::mog() as &dyn Density, &presets::mor(), &presets::tm()] {
            assert_score_fd(t, &[x, y]);
        }
    }

    #[test]
    fn posterior_scores(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        for m in [linear_model(&mut rng), mlp_model(&mut rng)] {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let z = [rng.normal(), rng.normal()];
            let t = PosteriorTarget::new(&m, &x, None).unwrap();
            assert_score_fd(&t, &z);
            let direct = posterior_score(&m, &x, &z, None).unwrap();
            prop_assert_eq!(direct, score(&t, &z).unwrap());
        }
    }

    #[test]
    fn decoder_parameter_gradients(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        for m in [linear_model(&mut rng), mlp_model(&mut rng)] {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let z = [rng.normal(), rng.normal()];
            let g = grad_theta_loglik(&m, &x, &z).unwrap();
            let theta = m.params();
            let fd: Vec<f64> = (0..theta.len())
                .map(|p| {
                    let mut up = theta.clone();
                    let mut dn = theta.clone();
                    up[p] += 1e-5;
                    dn[p] -= 1e-5;
                    let f = |t: &[f64]| loglik(&m.with_params(t).unwrap(), &x, &z).unwrap();
                    (f(&up) - f(&dn)) / 2e-5
                })
                .collect();
            prop_assert!(rel_err(&g, &fd) < 1e-5, "{} {:e}", m.kind(), rel_err(&g, &fd));
        }
    }

    #[test]
    fn drift_and_ksd_match_double_loops(seed in any::<u64>(), m in 1usize..20, d in 1usize..4, h in 0.1f64..5.0) {
        let mut rng = Rng::new(seed);
        let g = random_gaussian(d, &mut rng);
        let ps = cloud(m, d, 2.0, &mut rng);
        let k = KernelSpec::new(h).unwrap();
        let fast = drift(&ps, &g, k).unwrap();
        for (i, row) in naive_drift(&ps, &g, h).iter().enumerate() {
            for (a, b) in fast.row(i).iter().zip(row) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} vs {}", a, b);
            }
        }
        let v = ksd(&ps, &g, k).unwrap();
        let r = naive_ksd(&ps, &g, h);
        prop_assert!((v - r).abs() <= 1e-12 * (1.0 + r.abs()), "{} vs {}", v, r);
    }

    #[test]
    fn stein_kernel_symmetric_and_ksd_nonnegative(seed in any::<u64>(), m in 1usize..15, h in 0.05f64..5.0) {
        let mut rng = Rng::new(seed);
        let t = presets::mog();
        let ps = cloud(m, 2, 3.0, &mut rng);
        let k = KernelSpec::new(h).unwrap();
        let v = stein_matrix(&ps, &t, k).unwrap();
        for i in 0..m {
            for j in 0..m {
                prop_assert!((v[i * m + j] - v[j * m + i]).abs() <= 1e-12 * (1.0 + v[i * m + j].abs()));
            }
        }
        let a = stein_kernel(&t, k, ps.point(0), ps.point(m - 1)).unwrap();
        prop_assert!((a - v[m - 1]).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(ksd(&ps, &t, k).unwrap() >= -1e-10);
    }

    #[test]
    fn drift_is_permutation_equivariant(seed in any::<u64>(), m in 2usize..12) {
        let mut rng = Rng::new(seed);
        let t = presets::mor();
        let ps = cloud(m, 2, 2.0, &mut rng);
        let perm: Vec<usize> = (0..m).rev().collect();
        let swapped = ParticleSet::from_flat(perm.iter().flat_map(|&i| ps.point(i).to_vec()).collect(), 2, 0).unwrap();
        let k = KernelSpec::new(0.7).unwrap();
        let a = drift(&ps, &t, k).unwrap();
        let b = drift(&swapped, &t, k).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (x, y) in a.row(old_i).iter().zip(b.row(new_i)) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn drift_is_translation_equivariant(seed in any::<u64>(), m in 1usize..12, c in -5.0f64..5.0) {
        let mut rng = Rng::new(seed);
        let g = random_gaussian(2, &mut rng);
        let ps = cloud(m, 2, 1.5, &mut rng);
        let moved = ps.map_points(|z, out| { out[0] = z[0] + c; out[1] = z[1] - c; }).unwrap();
        let k = KernelSpec::new(1.3).unwrap();
        let a = drift(&ps, &g, k).unwrap();
        let b = drift(&moved, &g.shifted(&[c, -c]), k).unwrap();
        for (x, y) in a.as_flat().iter().zip(b.as_flat()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn mixture_em_never_decreases_likelihood() {
    for seed in 0..5 {
        let xs = sample_exact(&presets::mog(), 1500, &mut Rng::new(seed)).unwrap();
        let fit = fit_gmm_em_traced(&xs, 8, 200, &mut Rng::new(seed + 50)).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}
