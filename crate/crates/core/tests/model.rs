mod common;

use ddto::model::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quadrotor_jacobians_match_central_differences() {
    let err = common::quadrotor_jacobian_error(100, 11);
    assert!(err <= 1e-4, "relative error {err:e}");
}

#[test]
fn shooting_sensitivities_match_central_differences() {
    let err = common::shooting_jacobian_error(100, 12);
    assert!(err <= 1e-4, "relative error {err:e}");
}

#[test]
fn rk4_is_fourth_order_on_the_quadrotor() {
    for p in common::rk4_observed_order(8) {
        assert!(p >= 3.5, "observed order {p}");
    }
}

#[test]
fn exponential_over_one_unit() {
    let x = rk4(|x| x.to_vec(), &[1.0], 1.0, 20).unwrap();
    assert!((x[0] - std::f64::consts::E).abs() < 1e-6);
}

#[test]
fn zero_field_keeps_the_state() {
    let f = LinearField { a: DMatrix::zeros(2, 2), b: DMatrix::zeros(2, 1), c: DVector::zeros(2) };
    let xt = [1.5, -2.0, 0.0, 0.0];
    let ut = [3.0, 0.7];
    let (x1, ax, _) = linearize_step(&f, &xt, &ut, 0.25, 4).unwrap();
    assert_eq!(&x1[..2], &xt[..2]);
    // clock advances by s · span
    assert!((x1[3] - 0.175).abs() < 1e-15);
    assert!((ax - DMatrix::identity(4, 4)).amax() < 1e-15);
}

#[test]
fn linear_field_sensitivities_are_the_exact_discretization() {
    // ṙ = v, v̇ = u: exact step over h = s·span
    let f = LinearField {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        c: DVector::zeros(2),
    };
    let (s, span) = (2.0, 0.5);
    let h = s * span;
    let (_, ax, bu) = linearize_step(&f, &[0.3, -0.4, 0.0, 0.0], &[1.2, s], span, 3).unwrap();
    assert!((ax[(0, 1)] - h).abs() < 1e-12);
    assert!((bu[(0, 0)] - h * h / 2.0).abs() < 1e-12);
    assert!((bu[(1, 0)] - h).abs() < 1e-12);
}

#[test]
fn dilated_step_reproduces_the_affine_discretization() {
    let a = [0.0, 0.0, -9.806];
    let ct = LinearField::double_integrator(a);
    let dt = double_integrator_discrete(0.5, a);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let got = dilated_discrete_step(&ct, &x, &u, 0.5, 10).unwrap();
        let want = dt.step(&x, &u);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }
    assert!(dilated_discrete_step(&ct, &[0.0; 6], &[0.0; 3], 0.0, 10).is_err());
    let tiny = dilated_discrete_step(&ct, &[1.0; 6], &[0.0; 3], 1e-12, 10).unwrap();
    assert!(tiny.iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn clock_accumulates_dilation() {
    let q = common::drag_quadrotor();
    let mut xt = vec![0.0, 0.0, 30.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    for s in [0.3, 0.7] {
        xt = multiple_shooting_step(&q, &xt, &[0.0, 0.0, 9.806, s], 1.0, 10).unwrap();
    }
    assert!((xt[8] - 1.0).abs() < 1e-12);
}

#[test]
fn violation_integral_is_nondecreasing() {
    let q = common::drag_quadrotor();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (x, u) = common::random_point(&mut rng);
        let mut xt = x;
        xt.extend([0.0, 0.0]);
        let mut ut = u;
        ut.push(rng.gen_range(1.0..15.0));
        let samples = shooting_samples(&q, &xt, &ut, 0.05, 2, 5).unwrap();
        for w in samples.windows(2) {
            assert!(w[1][7] >= w[0][7]);
            assert!(w[1][8] > w[0][8]);
        }
    }
}

#[test]
fn cumulative_cost_equals_the_direct_sum() {
    let sys = double_integrator_discrete(0.5, [0.0, 0.0, -9.806]);
    let step = augment_cumulative_step(|x: &[f64], u: &[f64]| sys.step(x, u), input_energy);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut x = vec![0.0; 7];
    let mut direct = 0.0;
    for _ in 0..10 {
        let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
        direct += input_energy(&x, &u);
        x = step(&x, &u);
    }
    assert!((x[6] - direct).abs() <= 1e-12 * 10.0 * 1200.0);
}

#[test]
fn inactive_constraints_leave_y_flat() {
    let q = common::drag_quadrotor();
    // hover far from both obstacles, below the speed limit
    let xt = [20.0, -20.0, 5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let d = augmented_field(&q, &xt, &[0.0, 0.0, 9.806, 2.0]);
    assert_eq!(d[7], 0.0);
    assert_eq!(d[8], 2.0);
}
