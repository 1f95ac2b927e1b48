//! A small second-order cone program solved by both backends.
//!
//! minimize  x + y + t
//! s.t.      ‖(x − 1, y − 2)‖ ≤ t,  x ≥ 0,  x + y = 4

use ddto_conic::{Admm, Backend, Ipm, LinExpr, ProgramBuilder, Settings};

fn main() -> Result<(), ddto_conic::ConicError> {
    let mut b = ProgramBuilder::new();
    let v = b.add_vars("v", 3);
    let (x, y, t) = (v.start, v.start + 1, v.start + 2);
    for i in v.clone() {
        b.add_cost(i, 1.0);
    }
    b.soc(vec![LinExpr::var(t), LinExpr::var(x).add_const(-1.0), LinExpr::var(y).add_const(-2.0)]);
    b.nonneg(LinExpr::var(x));
    b.eq(LinExpr::var(x).add_term(y, 1.0).add_const(-4.0));
    let prog = b.build()?;

    for (name, backend, settings) in [
        ("ipm", &Ipm as &dyn Backend, Settings::default()),
        ("admm", &Admm::default() as &dyn Backend, Settings::admm()),
    ] {
        let r = backend.solve(&prog, &settings)?;
        println!(
            "{name}: {:?} in {} iterations, objective {:.6}, x = {:.4?}, residuals {:.1e} / {:.1e}",
            r.status,
            r.iterations,
            r.objective,
            r.block(&prog, "v").unwrap(),
            r.primal_residual,
            r.dual_residual
        );
    }
    Ok(())
}
