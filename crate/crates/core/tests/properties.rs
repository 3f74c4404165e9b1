use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use stegogeom::metrics::{energy_mmd, l2_cg};
use stegogeom::optimize::{propose, ParamBounds};
use stegogeom::stegodet::{evaluate_scores, RegretRecord};
use stegogeom::subspace::{nscd, pca_subspace, Subspace};
use stegogeom::{seeds, FeatureMatrix, PipelineParams, SourceId};

fn gaussian(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut r = seeds::rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn orthogonal(seed: u64, n: usize) -> DMatrix<f64> {
    gaussian(seed, n, n).qr().q()
}

fn to_features(m: &DMatrix<f64>) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    FeatureMatrix::from_rows(&rows).unwrap()
}

fn shifted(m: &DMatrix<f64>, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] + v[j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nscd_is_symmetric_bounded_and_rotation_invariant(seed in any::<u64>(), d in 2usize..9, k1 in 1usize..4, k2 in 1usize..4) {
        let (k1, k2) = (k1.min(d), k2.min(d));
        let a = gaussian(seed, d, k1);
        let b = gaussian(seed ^ 1, d, k2);
        let sa = Subspace::from_basis(a).unwrap();
        let sb = Subspace::from_basis(b).unwrap();
        let v = nscd(&sa, &sb).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - nscd(&sb, &sa).unwrap()).abs() < 1e-10);
        let ra = sa.rotated(&orthogonal(seed ^ 2, k1)).unwrap();
        let rb = sb.rotated(&orthogonal(seed ^ 3, k2)).unwrap();
        prop_assert!((v - nscd(&ra, &rb).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn nscd_of_pca_is_invariant_to_a_common_isometry(seed in any::<u64>()) {
        let (n, d) = (12, 6);
        let scale = DMatrix::from_fn(d, d, |i, j| if i == j { 3.0 / (1.0 + i as f64) } else { 0.0 });
        let x = gaussian(seed, n, d) * &scale;
        let y = gaussian(seed ^ 7, n, d) * &scale;
        let q = orthogonal(seed ^ 9, d);
        let before = nscd(&pca_subspace(&to_features(&x), 0.9).unwrap(), &pca_subspace(&to_features(&y), 0.9).unwrap()).unwrap();
        let after = nscd(
            &pca_subspace(&to_features(&(&x * &q)), 0.9).unwrap(),
            &pca_subspace(&to_features(&(&y * &q)), 0.9).unwrap(),
        )
        .unwrap();
        // f32 storage of the features bounds the agreement
        prop_assert!((before - after).abs() < 1e-4, "{before} vs {after}");
    }

    #[test]
    fn metrics_under_translation_and_permutation(seed in any::<u64>(), n in 2usize..8, m in 2usize..8) {
        let d = 3;
        let x = gaussian(seed, n, d);
        let y = gaussian(seed ^ 5, m, d);
        let v = [1.5, -0.5, 2.0];
        let (fx, fy) = (to_features(&x), to_features(&y));
        let mmd = energy_mmd(&fx, &fy).unwrap().value;
        let l2 = l2_cg(&fx, &fy).unwrap().value;
        let (sx, sy) = (to_features(&shifted(&x, &v)), to_features(&shifted(&y, &v)));
        prop_assert!((mmd - energy_mmd(&sx, &sy).unwrap().value).abs() < 1e-5);
        prop_assert!((l2 - l2_cg(&sx, &sy).unwrap().value).abs() < 1e-5);

        let rev: Vec<usize> = (0..n).rev().collect();
        let px = fx.select(&rev).unwrap();
        prop_assert!((mmd - energy_mmd(&px, &fy).unwrap().value).abs() < 1e-12 * (1.0 + mmd));
        prop_assert!((l2 - l2_cg(&px, &fy).unwrap().value).abs() < 1e-12 * (1.0 + l2));
    }

    #[test]
    fn shifting_one_of_two_equal_mean_sets_moves_l2_by_the_shift(seed in any::<u64>()) {
        let x = gaussian(seed, 6, 3);
        let centred = shifted(&x, &x.row_mean().iter().map(|c| -c).collect::<Vec<_>>());
        let v = [0.5, 2.0, -1.0];
        let got = l2_cg(&to_features(&centred), &to_features(&shifted(&centred, &v))).unwrap().value;
        let want = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((got - want).abs() < 1e-5);
    }

    #[test]
    fn p_e_is_invariant_to_monotone_score_maps(seed in any::<u64>(), n in 2usize..40) {
        let mut r = seeds::rng(seed);
        let c: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let s: Vec<f64> = (0..n).map(|_| 0.7 + r.sample::<f64, _>(StandardNormal)).collect();
        let base = evaluate_scores(&c, &s).unwrap().p_e;
        let f = |v: &[f64]| v.iter().map(|x| (0.5 * x).exp() * 3.0 - 1.0).collect::<Vec<_>>();
        prop_assert_eq!(base, evaluate_scores(&f(&c), &f(&s)).unwrap().p_e);
        prop_assert!(base <= 0.5);
    }

    #[test]
    fn clamped_regret_is_nonnegative(cross in 0.0f64..0.5, intrinsic in 0.0f64..0.5) {
        let r = RegretRecord::new(SourceId(0), SourceId(1), cross, intrinsic);
        prop_assert_eq!(r.regret, cross - intrinsic);
        prop_assert!(r.clamped() >= 0.0);
    }

    #[test]
    fn proposals_stay_in_bounds(seed in any::<u64>(), steps in 1usize..50) {
        let bounds = ParamBounds::default();
        let mut rng = seeds::rng(seed);
        let mut p = bounds.midpoint(&PipelineParams::default());
        for _ in 0..steps {
            let q = propose(&p, &bounds, &mut rng);
            prop_assert!(bounds.contains(&q));
            let changed = [
                q.denoise_sigma != p.denoise_sigma,
                q.resize_factor != p.resize_factor,
                q.sharpen_amount != p.sharpen_amount,
                q.resize_kernel != p.resize_kernel,
            ];
            prop_assert_eq!(changed.iter().filter(|c| **c).count(), 1);
            p = q;
        }
    }
}

#[test]
fn energy_mmd_grows_with_mean_gap() {
    let (n, d) = (500, 4);
    let gaps = [0.0, 1.0, 2.0, 4.0];
    let mut avg = [0.0; 4];
    for seed in 0..20u64 {
        let x = gaussian(100 + seed, n, d);
        let y = gaussian(200 + seed, n, d);
        for (i, g) in gaps.iter().enumerate() {
            let v = [*g, 0.0, 0.0, 0.0];
            avg[i] += energy_mmd(&to_features(&x), &to_features(&shifted(&y, &v))).unwrap().value / 20.0;
        }
    }
    assert!(avg.windows(2).all(|w| w[0] < w[1]), "{avg:?}");
}
