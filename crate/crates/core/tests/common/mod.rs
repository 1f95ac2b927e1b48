//! Checks shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use ddto::model::{
    augmented_field, augmented_jacobians, linearize_step, rk4, ContinuousSystem, Ellipsoid, Quadrotor,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Table-2 vehicle.
pub fn drag_quadrotor() -> Quadrotor {
    Quadrotor {
        gravity: [0.0, 0.0, -9.806],
        drag: 0.01,
        v_max: 8.0,
        u_max: 20.0,
        u_min: 5.0,
        axis: [0.0, 0.0, 1.0],
        delta_max: 60f64.to_radians(),
        obstacles: vec![
            Ellipsoid::axis_aligned([0.2, 0.1, 0.2], [-5.0, 1.0, 10.0]),
            Ellipsoid::axis_aligned([0.1, 0.2, 0.2], [-10.0, 20.0, 10.0]),
        ],
        g_scale: vec![10.0, 10.0, 0.5, 0.025, 0.4, 0.025, 0.5],
    }
}

/// Central differences of `f` at `x`, one column per coordinate.
pub fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64]) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for c in 0..x.len() {
        let h = FD_STEP * x[c].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for r in 0..m {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// `max |a − b| / max(1, max |b|)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn random_point(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut x: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
    x.extend((0..3).map(|_| rng.gen_range(-10.0..10.0)));
    x.push(rng.gen_range(0.0..1000.0));
    let u = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
    (x, u)
}

/// Largest relative error of every analytic Jacobian of the quadrotor
/// against central differences over `points` random points.
pub fn quadrotor_jacobian_error(points: usize, seed: u64) -> f64 {
    let q = drag_quadrotor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let (x, u) = random_point(&mut rng);
        let (fx, fu) = q.jacobians(&x, &u);
        worst = worst.max(rel_err(&fx, &fd_jacobian(|xx| q.field(xx, &u), &x)));
        worst = worst.max(rel_err(&fu, &fd_jacobian(|uu| q.field(&x, uu), &u)));
        let (gx, gu) = q.g_jacobians(&x, &u);
        worst = worst.max(rel_err(&gx, &fd_jacobian(|xx| q.g(xx, &u), &x)));
        worst = worst.max(rel_err(&gu, &fd_jacobian(|uu| q.g(&x, uu), &u)));

        let mut xt = x.clone();
        xt.extend([rng.gen_range(0.0..1.0), rng.gen_range(0.0..10.0)]);
        let mut ut = u.clone();
        ut.push(rng.gen_range(1.0..15.0));
        let (ax, bu) = augmented_jacobians(&q, &xt, &ut);
        worst = worst.max(rel_err(&ax, &fd_jacobian(|v| augmented_field(&q, v, &ut), &xt)));
        worst = worst.max(rel_err(&bu, &fd_jacobian(|v| augmented_field(&q, &xt, v), &ut)));
    }
    worst
}

/// Same check for the shooting map and its variational sensitivities.
pub fn shooting_jacobian_error(points: usize, seed: u64) -> f64 {
    let q = drag_quadrotor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 1.0 / 11.0;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let (x, u) = random_point(&mut rng);
        let mut xt = x;
        xt.extend([0.0, rng.gen_range(0.0..10.0)]);
        let mut ut = u;
        ut.push(rng.gen_range(1.0..15.0));
        let (_, ax, bu) = linearize_step(&q, &xt, &ut, span, 10).unwrap();
        let step = |a: &[f64], b: &[f64]| ddto::model::multiple_shooting_step(&q, a, b, span, 10).unwrap();
        worst = worst.max(rel_err(&ax, &fd_jacobian(|v| step(v, &ut), &xt)));
        worst = worst.max(rel_err(&bu, &fd_jacobian(|v| step(&xt, v), &ut)));
    }
    worst
}

/// Observed order of RK4 on the quadrotor field from the errors at
/// `n`, `2n`, `4n` substeps against a reference 10× finer than the finest.
pub fn rk4_observed_order(n: usize) -> Vec<f64> {
    let mut q = drag_quadrotor();
    q.drag = 0.5;
    let x0 = [0.0, 0.0, 30.0, 6.0, -4.0, 3.0, 0.0];
    let u = [2.0, -1.0, 12.0];
    let span = 2.0;
    let f = |x: &[f64]| q.field(x, &u);
    let reference = rk4(f, &x0, span, 40 * n).unwrap();
    let errs: Vec<f64> = [n, 2 * n, 4 * n]
        .iter()
        .map(|&k| {
            let x = rk4(f, &x0, span, k).unwrap();
            x.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
