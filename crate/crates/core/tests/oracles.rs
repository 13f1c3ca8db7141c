//! Independent routes to the same numbers.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use divels::dualiv::{closed_form_feature_space, fit, naive_krr_fit, TripleDataset};
use divels::kernels::{FeatureMap, KernelSpec};
use divels::policy::{effective_dim, gamma_schedule, lambda_schedule, EpochSchedule, PolicyConfig};

fn data(n: usize, d_x: usize, seed: u64) -> TripleDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = TripleDataset::empty(d_x, d_x);
    for _ in 0..n {
        let z: Vec<f64> = (0..d_x).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: f64 = rng.random_range(-0.5..0.5);
        let x: Vec<f64> = z.iter().map(|z| 0.9 * z + 0.5 * e).collect();
        let y = x.iter().map(|v| v * v - v).sum::<f64>() + e;
        d.push(&x, y, &z).unwrap();
    }
    d
}

fn kernel(choice: u8) -> KernelSpec {
    match choice {
        0 => KernelSpec::Linear,
        1 => KernelSpec::polynomial(2, 1.0).unwrap(),
        _ => KernelSpec::polynomial(3, 0.5).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_and_feature_routes_agree(
        d_x in 1usize..=3,
        n in 3usize..40,
        choice in 0u8..3,
        lambda1 in 0.01f64..1.0,
        lambda2 in 0.01f64..1.0,
        seed in any::<u64>(),
    ) {
        let spec = kernel(choice);
        let d = data(n, d_x, seed);
        let model = fit(&d, &spec, &spec, lambda1, lambda2).unwrap();
        let w = closed_form_feature_space(
            &d,
            &FeatureMap::new(spec, d_x).unwrap(),
            &FeatureMap::new(spec, d_x + 1).unwrap(),
            lambda1,
            lambda2,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 1e-12;
        for _ in 0..20 {
            let x: Vec<f64> = (0..d_x).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, b) = (model.predict(&x).unwrap(), w.predict(&x).unwrap());
            diff = diff.max((a - b).abs());
            scale = scale.max(b.abs());
        }
        prop_assert!(diff / scale <= 1e-7, "relative error {}", diff / scale);
    }

    #[test]
    fn naive_ridge_matches_primal_ridge(d_x in 1usize..=3, n in 3usize..40, choice in 0u8..3, lambda in 0.01f64..1.0, seed in any::<u64>()) {
        let spec = kernel(choice);
        let d = data(n, d_x, seed);
        let model = naive_krr_fit(&d, &spec, lambda).unwrap();
        // primal: w = (Phi Phi^T + n lambda I)^-1 Phi y
        let phi = FeatureMap::new(spec, d_x).unwrap();
        let big_phi = phi.feature_matrix(d.xs()).unwrap();
        let mut gram = &big_phi * big_phi.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += n as f64 * lambda;
        }
        let rhs = &big_phi * DVector::from_column_slice(d.ys());
        let w = gram.lu().solve(&rhs).unwrap();
        let x: Vec<f64> = (0..d_x).map(|i| 0.3 - 0.2 * i as f64).collect();
        let primal = w.dot(&DVector::from_vec(phi.featurize(&x).unwrap()));
        let dual = model.predict(&x).unwrap();
        prop_assert!((primal - dual).abs() <= 1e-8 * (1.0 + primal.abs()));
    }
}

#[test]
fn dual_iv_matches_explicit_inverse_formula() {
    // theta = (M K + n lambda2 K)^+ M y with M = K (L + n lambda1 I)^-1 L,
    // evaluated by a pseudo-inverse instead of the production solve
    let d = data(25, 2, 9);
    let spec = KernelSpec::polynomial(2, 1.0).unwrap();
    let (l1, l2) = (0.2, 0.1);
    let n = d.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (d.xs().row(i), d.xs().row(j));
        (a[0] * b[0] + a[1] * b[1] + 1.0).powi(2)
    });
    let yz = d.yz_points();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (yz.row(i), yz.row(j));
        (a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() + 1.0).powi(2)
    });
    let reg = &l + DMatrix::identity(n, n) * (n as f64 * l1);
    let m = &k * reg.try_inverse().unwrap() * &l;
    let a = &m * &k + &k * (n as f64 * l2);
    let theta = a.pseudo_inverse(1e-10).unwrap() * (&m * DVector::from_column_slice(d.ys()));
    let model = fit(&d, &spec, &spec, l1, l2).unwrap();
    let x = [0.4, -0.7];
    let expected: f64 = (0..n)
        .map(|i| theta[i] * (d.xs().row(i)[0] * x[0] + d.xs().row(i)[1] * x[1] + 1.0).powi(2))
        .sum();
    let got = model.predict(&x).unwrap();
    assert!((got - expected).abs() <= 1e-7 * (1.0 + expected.abs()), "{got} vs {expected}");
}

#[test]
fn effective_dim_matches_feature_map_sizes() {
    let p = KernelSpec::polynomial(3, 1.0).unwrap();
    assert_eq!(FeatureMap::new(p, 4).unwrap().output_dim(), 35);
    assert_eq!(FeatureMap::new(p, 3).unwrap().output_dim(), 20);
    assert_eq!(effective_dim(&p, &p, 4, 3).unwrap(), 35);
    // with zero offset the lower-degree monomials carry zero weight
    let homogeneous = KernelSpec::polynomial(3, 0.0).unwrap();
    let live = FeatureMap::new(homogeneous, 4)
        .unwrap()
        .featurize(&[0.3, -0.7, 1.1, 0.5])
        .unwrap()
        .iter()
        .filter(|v| **v != 0.0)
        .count();
    assert_eq!(effective_dim(&homogeneous, &homogeneous, 4, 3).unwrap(), live);
}

#[test]
fn horizon_boundaries_match_log_domain_evaluation() {
    for q in [6u32, 8, 10, 12, 16] {
        let t = 1u64 << q;
        let mut expected = Vec::new();
        for m in 1..64 {
            // 2 T^(1 - 2^-m) = 2^(1 + q (1 - 2^-m))
            let e = 1.0 + q as f64 * (1.0 - 0.5f64.powi(m));
            let b = (e.exp2() + 1e-9).floor().min(t as f64) as u64;
            if expected.last() != Some(&b) {
                expected.push(b);
            }
            if b == t {
                break;
            }
        }
        assert_eq!(EpochSchedule::Horizon.boundaries(t), expected, "T = 2^{q}");
    }
}

#[test]
fn schedule_arithmetic() {
    let p = KernelSpec::polynomial(3, 1.0).unwrap();
    let c = PolicyConfig::finite_rank(1.0, p, p, 4, 3).unwrap();
    let (l1, l2) = lambda_schedule(&c, 512).unwrap();
    assert_eq!(l1, l2);
    assert!((l1 * l1 - 35.0 / 512.0).abs() < 1e-15);
    let g = gamma_schedule(&c, 4, 2, 2).unwrap();
    assert!((g * g - 8.0 / (35.0 * 80f64.ln())).abs() < 1e-15);
}
