//! Convexified quadrotor with four landing sites, solved by the recursive
//! bisection method. Prints each round and the per-path costs.

use std::path::Path;

use ddto::io::ScenarioFile;
use ddto::qcvx::{run_ddto_qcvx, QcvxConfig};

fn main() -> Result<(), ddto::DdtoError> {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/quad_convex.json");
    let sc = ScenarioFile::load(&file)?.scenario()?;
    let out = run_ddto_qcvx(&sc, &QcvxConfig::default())?;

    for (r, round) in out.rounds.iter().enumerate() {
        println!(
            "round {}: retained {:?}, reject {} at k = {} after {} probes, budget {:.1}",
            r + 1,
            round.retained,
            round.rejected,
            round.branch_time,
            round.transcript.len(),
            round.budget
        );
    }
    for (j, p) in out.tree.paths() {
        println!("target {j}: branch time {}, cost {:.2}", out.tree.branch_times[&j], p.input_energy());
    }
    println!("dynamics defect {:.2e}", out.tree.dynamics_defect(&sc.system));
    Ok(())
}
