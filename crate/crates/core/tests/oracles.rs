use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use goofd::icl::{batch_objective, build_encoders, DenominatorMode, IclConfig};
use goofd::linalg::mean_and_covariance;
use goofd::metrics::auroc;
use goofd::nn::{DenseNet, Mode};
use goofd::outlier::{quantile_threshold, GaussianStats};
use goofd::pca::fit_pca;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| gauss(rng))
}

fn param_mut(net: &mut DenseNet, mut idx: usize) -> &mut f64 {
    for slice in net.params_mut() {
        if idx < slice.len() {
            return &mut slice[idx];
        }
        idx -= slice.len();
    }
    panic!("parameter index out of range")
}

fn loss(f: &DenseNet, g: &DenseNet, x: &Array2<f64>, tau: f64, mode: DenominatorMode) -> f64 {
    let (mut f, mut g) = (f.clone(), g.clone());
    batch_objective(&mut f, &mut g, x.view(), 2, tau, mode)
        .unwrap()
        .loss
}

fn gradient_check(mode: DenominatorMode, seed: u64, coords: usize) -> f64 {
    let cfg = IclConfig {
        tau: 1.0,
        u: 8,
        embed_dim: 4,
        denominator_mode: mode,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut f, mut g) = build_encoders(&cfg, 6, &mut rng).unwrap();
    f.set_mode(Mode::Train);
    g.set_mode(Mode::Train);
    let x = normal_matrix(&mut rng, 8, 6);
    let analytic = batch_objective(&mut f.clone(), &mut g.clone(), x.view(), 2, 1.0, mode).unwrap();
    let fa: Vec<f64> = analytic.f_grads.slices().concat();
    let ga: Vec<f64> = analytic.g_grads.slices().concat();
    let (nf, ng) = (f.num_params(), g.num_params());
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let idx = rng.gen_range(0..nf + ng);
        let (a, numeric) = if idx < nf {
            let base = *param_mut(&mut f, idx);
            *param_mut(&mut f, idx) = base + h;
            let up = loss(&f, &g, &x, 1.0, mode);
            *param_mut(&mut f, idx) = base - h;
            let down = loss(&f, &g, &x, 1.0, mode);
            *param_mut(&mut f, idx) = base;
            (fa[idx], (up - down) / (2.0 * h))
        } else {
            let j = idx - nf;
            let base = *param_mut(&mut g, j);
            *param_mut(&mut g, j) = base + h;
            let up = loss(&f, &g, &x, 1.0, mode);
            *param_mut(&mut g, j) = base - h;
            let down = loss(&f, &g, &x, 1.0, mode);
            *param_mut(&mut g, j) = base;
            (ga[j], (up - down) / (2.0 * h))
        };
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn icl_gradients_match_central_differences() {
    for (mode, seed) in [
        (DenominatorMode::ExcludePositive, 1),
        (DenominatorMode::IncludePositive, 2),
    ] {
        let worst = gradient_check(mode, seed, 60);
        assert!(worst < 1e-4, "{mode:?}: worst relative error {worst:e}");
    }
}

fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> Array2<f64> {
    let a = normal_matrix(rng, k, k);
    a.dot(&a.t()) + Array2::<f64>::eye(k) * 0.5
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

#[test]
fn mahalanobis_matches_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..30 {
        let k = 1 + trial % 15;
        let cov = random_spd(&mut rng, k);
        let mu = Array1::from_shape_fn(k, |_| gauss(&mut rng));
        let stats = GaussianStats::from_parts(mu.clone(), cov.clone(), 0.0).unwrap();
        let inv = to_na(&cov).try_inverse().unwrap();
        for _ in 0..5 {
            let s = Array1::from_shape_fn(k, |_| 3.0 * gauss(&mut rng));
            let diff = DVector::from_iterator(k, (&s - &mu).iter().copied());
            let oracle = (diff.transpose() * &inv * &diff)[(0, 0)].sqrt();
            let got = stats.mahalanobis(s.view());
            assert!(
                (got - oracle).abs() <= 1e-8 * oracle.max(1e-300),
                "{got} vs {oracle}"
            );
        }
        assert_eq!(stats.mahalanobis(mu.view()), 0.0);
    }
}

#[test]
fn fitted_covariance_matches_sample_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = normal_matrix(&mut rng, 40, 5);
    let (mean, cov) = mean_and_covariance(x.view()).unwrap();
    let n = x.nrows() as f64;
    for i in 0..5 {
        let m = x.column(i).sum() / n;
        assert!((mean[i] - m).abs() < 1e-14);
        for j in 0..5 {
            let c = x
                .rows()
                .into_iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .sum::<f64>()
                / (n - 1.0);
            assert!((cov[[i, j]] - c).abs() < 1e-12);
        }
    }
}

#[test]
fn quantile_is_order_statistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [1usize, 2, 7, 10, 99, 1000] {
        let d: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        for q in 1..=100u64 {
            let rank = (q as usize * n).div_ceil(100).max(1);
            let theta = quantile_threshold(&d, q as f64).unwrap();
            assert_eq!(theta, sorted[rank - 1], "n={n} q={q}");
            let inliers = d.iter().filter(|&&v| v <= theta).count();
            assert!(inliers * 100 >= q as usize * n);
        }
    }
}

fn brute_auroc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    credit += 1.0;
                } else if scores[i] == scores[j] {
                    credit += 0.5;
                }
            }
        }
    }
    credit / pairs
}

#[test]
fn auroc_equals_all_pairs_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..40 {
        let n = 2 + rng.gen_range(0..300);
        let levels = 1 + trial % 6;
        let mut positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels * 3) as f64 * 0.1)
            .collect();
        assert_eq!(
            auroc(&scores, &positive).unwrap(),
            brute_auroc(&scores, &positive)
        );
    }
    let labels = [true, false, true, false];
    assert_eq!(auroc(&[1.0; 4], &labels).unwrap(), 0.5);
    assert_eq!(auroc(&[4.0, 1.0, 3.0, 2.0], &labels).unwrap(), 1.0);
}

#[test]
fn auroc_invariant_under_increasing_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
    let positive: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
    let t: Vec<f64> = scores.iter().map(|s| (5.0 * s).exp() + 2.0).collect();
    assert_eq!(
        auroc(&scores, &positive).unwrap(),
        auroc(&t, &positive).unwrap()
    );
}

#[test]
fn pca_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = normal_matrix(&mut rng, 10, 4) * &Array1::from(vec![3.0, 2.0, 1.0, 0.5]);
    let model = fit_pca(x.view(), 1.0, 98.0).unwrap();
    let (_, cov) = mean_and_covariance(x.view()).unwrap();
    let eig = SymmetricEigen::new(to_na(&cov));
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (c, &o) in order.iter().enumerate().take(model.components()) {
        assert!((model.eigenvalues()[c] - eig.eigenvalues[o]).abs() < 1e-8);
        let v = eig.eigenvectors.column(o);
        let dot: f64 = (0..4).map(|i| model.loadings()[[i, c]] * v[i]).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn spe_matches_explicit_projector() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = normal_matrix(&mut rng, 50, 6) * &Array1::from(vec![4.0, 3.0, 2.0, 1.0, 0.5, 0.2]);
    let model = fit_pca(x.view(), 0.8, 98.0).unwrap();
    let p = to_na(&model.loadings().to_owned());
    let projector = DMatrix::<f64>::identity(6, 6) - &p * p.transpose();
    for _ in 0..20 {
        let s = Array1::from_shape_fn(6, |_| 2.0 * gauss(&mut rng));
        let c = DVector::from_iterator(6, (&s - &model.mean()).iter().copied());
        let r = &projector * c;
        let oracle = r.dot(&r);
        assert!((model.spe_statistic(s.view()) - oracle).abs() < 1e-10 * oracle.max(1.0));
    }
}
