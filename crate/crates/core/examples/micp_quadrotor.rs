//! Same quadrotor as `qcvx_quadrotor`, but maximizing coincidence with the
//! first target through branch-and-bound over the big-M formulation.

use std::path::Path;
use std::time::Duration;

use ddto::io::ScenarioFile;
use ddto::micp::{branch_and_bound, build_micp, MicpConfig};

fn main() -> Result<(), ddto::DdtoError> {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/quad_convex.json");
    let sc = ScenarioFile::load(&file)?.scenario()?;
    let cfg = MicpConfig { big_m: Some(200.0), time_limit: Some(Duration::from_secs(60)), ..Default::default() };

    let inst = build_micp(&sc, 0, &cfg)?;
    let sol = branch_and_bound(&inst, &cfg)?;
    println!(
        "objective {} (bound {}), {} nodes, closed {}",
        sol.objective, sol.lower_bound, sol.nodes, sol.closed
    );
    println!("sum |J_k| = {}", sol.coincidence_count());
    for (k, set) in sol.sets.iter().enumerate() {
        let labels: Vec<usize> = set.iter().map(|j| j + 1).collect();
        println!("  J_{} = {labels:?}", k + 1);
    }
    Ok(())
}
