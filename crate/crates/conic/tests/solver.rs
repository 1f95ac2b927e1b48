use ddto_conic::budget::BudgetForm;
use ddto_conic::{
    check_feasible, solve, Admm, Backend, Feasibility, Ipm, LinExpr, ProgramBuilder, QuadBudget,
    Settings, SolveStatus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn examples_from_the_operation_contracts() {
    // min x s.t. x ≥ 0
    let mut b = ProgramBuilder::new();
    b.add_vars("x", 1);
    b.add_cost(0, 1.0);
    b.nonneg(LinExpr::var(0));
    let r = solve(&b.build().unwrap(), &Settings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.objective.abs() < 1e-7);

    // min x₁ s.t. ‖x‖ ≤ 1
    let mut b = ProgramBuilder::new();
    b.add_vars("x", 2);
    b.add_cost(0, 1.0);
    b.soc(vec![LinExpr::constant(1.0), LinExpr::var(0), LinExpr::var(1)]);
    let r = solve(&b.build().unwrap(), &Settings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective + 1.0).abs() < 1e-7);
    assert!(r.primal_residual < 1e-8 && r.gap < 1e-7);

    // {x ≥ 1, −x ≥ 0}
    let mut b = ProgramBuilder::new();
    b.add_vars("x", 1);
    b.nonneg(LinExpr::var(0).add_const(-1.0));
    b.nonneg(LinExpr::term(0, -1.0));
    let p = b.build().unwrap();
    let r = solve(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.certificate_residual <= 1e-8);
    assert_eq!(check_feasible(&p, &Settings::default()).unwrap(), Feasibility::Infeasible);

    // no constraints over three variables
    let mut b = ProgramBuilder::new();
    b.add_vars("x", 3);
    assert!(check_feasible(&b.build().unwrap(), &Settings::default()).unwrap().is_feasible());
}

/// Random LP `min cᵀx, a_iᵀx ≤ b_i, |x_j| ≤ 5` in up to three variables.
fn random_lp(rng: &mut ChaCha8Rng) -> (usize, Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.gen_range(1..=3);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut a = Vec::new();
    let mut bb = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        a.push((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>());
        bb.push(rng.gen_range(-1.5..2.0));
    }
    for j in 0..n {
        for sgn in [1.0, -1.0] {
            let mut row = vec![0.0; n];
            row[j] = sgn;
            a.push(row);
            bb.push(5.0);
        }
    }
    (n, c, a, bb)
}

fn gauss(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-9 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = m[i][col] / m[col][col];
                for k in 0..n {
                    m[i][k] -= f * m[col][k];
                }
                r[i] -= f * r[col];
            }
        }
    }
    Some((0..n).map(|i| r[i] / m[i][i]).collect())
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..m {
        for mut rest in combinations(m, k - 1) {
            if rest.iter().all(|&r| r > first) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
    }
    out
}

/// Minimum over feasible vertices, or `None` when there is none.
fn vertex_oracle(n: usize, c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for idx in combinations(a.len(), n) {
        let m: Vec<Vec<f64>> = idx.iter().map(|&i| a[i].clone()).collect();
        let r: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        if let Some(x) = gauss(m, r) {
            let ok = a.iter().zip(b).all(|(ai, bi)| {
                ai.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9
            });
            if ok {
                let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
    }
    best
}

fn lp_program(n: usize, c: &[f64], a: &[Vec<f64>], b: &[f64], row_scale: &[f64]) -> ddto_conic::ConicProgram {
    let mut pb = ProgramBuilder::new();
    pb.add_vars("x", n);
    for (j, &cj) in c.iter().enumerate() {
        pb.add_cost(j, cj);
    }
    for (i, (ai, bi)) in a.iter().zip(b).enumerate() {
        let k = row_scale[i];
        let mut e = LinExpr::constant(k * bi);
        for (j, &aij) in ai.iter().enumerate() {
            e.push(j, -k * aij);
        }
        pb.nonneg(e);
    }
    pb.build().unwrap()
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut feas, mut infeas) = (0, 0);
    for _ in 0..200 {
        let (n, c, a, b) = random_lp(&mut rng);
        let ones = vec![1.0; a.len()];
        let r = solve(&lp_program(n, &c, &a, &b, &ones), &Settings::default()).unwrap();
        match vertex_oracle(n, &c, &a, &b) {
            Some(v) => {
                feas += 1;
                assert_eq!(r.status, SolveStatus::Optimal);
                assert!((r.objective - v).abs() < 1e-6 * (1.0 + v.abs()), "{} vs {v}", r.objective);
            }
            None => {
                infeas += 1;
                assert_eq!(r.status, SolveStatus::Infeasible);
            }
        }
    }
    assert!(feas > 20 && infeas > 5, "{feas} {infeas}");
}

#[test]
fn status_is_invariant_under_positive_row_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (n, c, a, b) = random_lp(&mut rng);
        let ones = vec![1.0; a.len()];
        let scale: Vec<f64> = (0..a.len()).map(|_| 10f64.powf(rng.gen_range(-3.0..3.0))).collect();
        let r1 = solve(&lp_program(n, &c, &a, &b, &ones), &Settings::default()).unwrap();
        let r2 = solve(&lp_program(n, &c, &a, &b, &scale), &Settings::default()).unwrap();
        assert_eq!(r1.status, r2.status);
    }
}

#[test]
fn repeated_solves_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (n, c, a, b) = random_lp(&mut rng);
    let p = lp_program(n, &c, &a, &b, &vec![1.0; a.len()]);
    assert_eq!(solve(&p, &Settings::default()).unwrap(), solve(&p, &Settings::default()).unwrap());
    let s = Settings::admm();
    assert_eq!(Admm::default().solve(&p, &s).unwrap(), Admm::default().solve(&p, &s).unwrap());
}

#[test]
fn random_polytope_with_known_interior_point_is_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let n = rng.gen_range(1..6);
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut pb = ProgramBuilder::new();
        pb.add_vars("x", n);
        for _ in 0..rng.gen_range(1..12) {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
            let mut e = LinExpr::constant(ax + rng.gen_range(0.01..1.0));
            for (j, &aj) in a.iter().enumerate() {
                e.push(j, -aj);
            }
            pb.nonneg(e);
        }
        let p = pb.build().unwrap();
        assert!(check_feasible(&p, &Settings::default()).unwrap().is_feasible());
    }
}

#[test]
fn quadratic_budget_membership_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for form in [BudgetForm::Epigraph, BudgetForm::Stacked] {
        let mut agree = 0;
        for _ in 0..1000 {
            let u: Vec<Vec<f64>> =
                (0..3).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let l_max = rng.gen_range(0.0..20.0);
            let total: f64 = u.iter().flatten().map(|v| v * v).sum();
            if (total - l_max).abs() < 1e-6 * (1.0 + l_max) {
                continue;
            }
            let bud = QuadBudget::new(vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]], l_max, form);
            let mut pb = ProgramBuilder::new();
            pb.add_vars("u", 9);
            for (i, v) in u.iter().flatten().enumerate() {
                pb.eq(LinExpr::var(i).add_const(-v));
            }
            bud.emit(&mut pb, "tau");
            let f = check_feasible(&pb.build().unwrap(), &Settings::default()).unwrap();
            assert_eq!(f.is_feasible(), bud.contains(&u), "total {total} l_max {l_max}");
            agree += 1;
        }
        assert!(agree > 990);
    }
}

/// Minimize distance to a point over the intersection of two balls and a halfspace.
fn small_socp(rng: &mut ChaCha8Rng) -> ddto_conic::ConicProgram {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_vars("x", 3);
    let t = pb.add_vars("t", 1);
    pb.add_cost(t.start, 1.0);
    let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut rows = vec![LinExpr::var(t.start)];
    rows.extend((0..3).map(|i| LinExpr::var(x.start + i).add_const(-p[i])));
    pb.soc(rows);
    for _ in 0..2 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut rows = vec![LinExpr::constant(1.5)];
        rows.extend((0..3).map(|i| LinExpr::var(x.start + i).add_const(-q[i])));
        pb.soc(rows);
    }
    pb.nonneg(LinExpr::constant(0.5).add_term(0, -1.0));
    pb.eq(LinExpr::var(2).add_term(1, -0.3).add_const(-0.1));
    pb.build().unwrap()
}

#[test]
fn splitting_backend_agrees_with_interior_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        let p = small_socp(&mut rng);
        let r1 = Ipm.solve(&p, &Settings::default()).unwrap();
        let r2 = Admm::default().solve(&p, &Settings::admm()).unwrap();
        assert_eq!(r1.status, SolveStatus::Optimal);
        assert_eq!(r2.status, SolveStatus::Optimal);
        assert!((r1.objective - r2.objective).abs() < 1e-4, "{} {}", r1.objective, r2.objective);
    }
}

#[test]
fn triplet_dump_round_trip_preserves_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = small_socp(&mut rng);
    let mut buf = Vec::new();
    p.write_triplets(&mut buf).unwrap();
    let q = ddto_conic::ConicProgram::read_triplets(&buf[..]).unwrap();
    assert_eq!(solve(&p, &Settings::default()).unwrap(), solve(&q, &Settings::default()).unwrap());
}
