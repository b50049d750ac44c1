mod common;

use nalgebra::DVector;
use newton_consensus::costs::{huber_curvature, huber_slope, huber_term, partition_dataset, CostFunction, QuadraticCost};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn quadratic_gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let q = QuadraticCost::new(random_spd(n, 0.01, 100.0, &mut rng), random_vector(n, -5.0, 5.0, &mut rng)).unwrap();
        let x = random_vector(n, -10.0, 10.0, &mut rng);
        assert!(gradient_fd_error(&q, &x, 1e-6) <= 1e-5);
        assert!(hessian_fd_error(&q, &x, 1e-6) <= 1e-4);
    }
}

#[test]
fn huber_gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shares = partition_dataset(&housing_rows(500), 15, &mut rng).unwrap();
    for beta in [0.5, 1.0, 30.0] {
        for k in 0..100 {
            let cost = huber(&shares[k % 15], beta, 1.0);
            let x = huber_point(&mut rng);
            let g = gradient_fd_error(cost.as_ref(), &x, 1e-6);
            let h = hessian_fd_error(cost.as_ref(), &x, 1e-6);
            assert!(g <= 1e-5, "beta {beta}: gradient error {g:e} at {x}");
            assert!(h <= 1e-4, "beta {beta}: Hessian error {h:e} at {x}");
        }
    }
}

#[test]
fn huber_term_second_derivative_continuous_across_zero() {
    for beta in [0.3, 1.0, 5.0] {
        let h = 1e-4;
        let fd = |r: f64| (huber_slope(r + h, beta) - huber_slope(r - h, beta)) / (2.0 * h);
        let left = fd(-2.0 * h);
        let right = fd(2.0 * h);
        assert!((left - 2.0 / beta).abs() < 1e-2 / beta, "{left}");
        assert!((right - 2.0 / beta).abs() < 1e-2 / beta, "{right}");
        assert!((huber_curvature(-1e-12, beta) - huber_curvature(1e-12, beta)).abs() < 1e-12);
    }
}

#[test]
fn huber_term_slope_matches_value_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (r, beta) = (rng.gen_range(-50.0..50.0), rng.gen_range(0.1..10.0));
        let h = 1e-6;
        let fd = (huber_term(r + h, beta) - huber_term(r - h, beta)) / (2.0 * h);
        assert!((fd - huber_slope(r, beta)).abs() <= 1e-6 * huber_slope(r, beta).abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn huber_hessian_symmetric_positive_definite(seed in any::<u64>(), beta in 0.1f64..100.0, gamma in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = housing_rows(60);
        let cost = huber(&rows, beta, gamma);
        let x = huber_point(&mut rng);
        let h = cost.hessian(&x).unwrap();
        prop_assert_eq!(&h, &h.transpose());
        prop_assert!(h.clone().cholesky().is_some());
        prop_assert!(cost.value(&x).unwrap() >= 0.0);
    }

    #[test]
    fn newton_terms_are_consistent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = random_quadratic(3, &mut rng);
        let x = random_vector(3, -5.0, 5.0, &mut rng);
        let (g, h) = cost.newton_terms(&x).unwrap();
        let expected: DVector<f64> = cost.hessian(&x).unwrap() * &x - cost.gradient(&x).unwrap();
        prop_assert!((g - expected).amax() <= 1e-12);
        prop_assert_eq!(h, cost.hessian(&x).unwrap());
    }
}
