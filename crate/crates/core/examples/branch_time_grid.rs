//! Branch times of a small integrator grid, computed twice: by exact
//! enumeration and by bisection over the convex embedding.

use ddto::oracle::{embed_convex, integrator_instance};
use ddto::qcvx::{max_branch_time, QcvxConfig};

fn main() -> Result<(), ddto::DdtoError> {
    let sys = integrator_instance("line", 4, vec![vec![3], vec![-2], vec![1]], vec![0], 5);
    let tables = sys.reach_tables();
    let sc = embed_convex(&sys).expect("integrator instances embed");
    let cfg = QcvxConfig::default();

    for k in 1..=sys.horizon {
        let sets: Vec<Vec<usize>> = tables.lambda_sets(k).into_iter().map(|s| s.iter().map(|j| j + 1).collect()).collect();
        println!("k={k} lambda sets {sets:?}");
    }
    for set in [vec![0], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]] {
        let exact = tables.branch_time(&set)?;
        let bis = max_branch_time(&sc, &set, &sc.horizons, &sc.z0, sc.l_max, &cfg)?;
        let labels: Vec<usize> = set.iter().map(|j| j + 1).collect();
        println!("{labels:?}: enumeration {exact}, bisection {} ({} probes)", bis.k, bis.transcript.len());
    }
    Ok(())
}
