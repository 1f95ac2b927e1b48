//! Quadrotor with drag, keep-out ellipsoids and free final times, solved by
//! sequential convex programming. Checks the result on a dense time grid.

use std::path::Path;

use ddto::io::ScenarioFile;
use ddto::scp::{run_ddto_scp, validate_continuous};

fn main() -> Result<(), ddto::DdtoError> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDTO_LOG", "info")).init();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/quad_nonconvex.json");
    let (sc, cfg) = ScenarioFile::load(&file)?.scp_problem()?;
    let out = run_ddto_scp(&sc, &cfg)?;

    for r in &out.rounds {
        println!(
            "reject {} after {} iterations on {} nodes, trunk time {:.3} s",
            r.rejected, r.iterations, r.nodes, r.trunk_time
        );
    }
    if let Some((r, e)) = &out.coincided {
        println!("round {r} failed ({e}); remaining targets branch together");
    }
    for (j, t) in &out.tree.branch_clock {
        println!("target {j} branches at t = {t:.3} s");
    }
    let rep = validate_continuous(&out.tree, &sc.system, 50, cfg.substeps)?;
    println!(
        "dense check: obstacle margin {:.4}, speed {:.4}, thrust [{:.3}, {:.3}], cost {:.2}",
        rep.min_obstacle_margin, rep.max_speed, rep.min_thrust, rep.max_thrust, rep.max_cost
    );
    Ok(())
}
